"""Small lattice geometries with ports, used by tests and demos.

Every builder returns ``(grid, ports)``. Lengths are in voxels; ``dx`` sets
the physical edge.
"""
from __future__ import annotations

import math

from .voxgrid import Box, Material, PortSpec, build_grid, build_nodes, terminal_nodes

NIOBIUM = Material(0.0, 9e-8, "nb")
COPPER = Material(5.8e7, math.inf, "cu")


def _port(grid, name, plus, minus):
    nodes = build_nodes(grid)
    return PortSpec(name, terminal_nodes(grid, nodes, *plus), terminal_nodes(grid, nodes, *minus))


def bar(n, w=1, t=1, dx=1e-7, material=NIOBIUM):
    """Straight bar along x, driven end to end."""
    g = build_grid([Box((0, 0, 0), (n, w, t), "m")], dx, {"m": material})
    return g, [_port(g, "bar", ("x", "+", (n - 1, 0, 0), (n, w, t)),
                     ("x", "-", (0, 0, 0), (1, w, t)))]


def plate(nx=16, ny=16, t=4, dx=1e-7, material=NIOBIUM):
    """Square plate driven across its x extent."""
    return bar(nx, ny, t, dx, material)


def parallel_plate(n, w, t=1, gap=2, dx=2.5e-8, material=NIOBIUM):
    """Strip of width ``w`` over an equal-width ground, shorted at the far end.

    The port sits between the two plates at ``x = 0``; the short closes the
    loop at ``x = n - 1``. Plates are ``t`` voxels thick and ``gap`` voxels
    apart.
    """
    top = t + gap
    boxes = [Box((0, 0, 0), (n, w, t), "m"),
             Box((0, 0, top), (n, w, top + t), "m"),
             Box((n - 1, 0, t), (n, w, top), "m")]
    g = build_grid(boxes, dx, {"m": material})
    return g, [_port(g, "line", ("x", "-", (0, 0, top), (1, w, top + t)),
                     ("x", "-", (0, 0, 0), (1, w, t)))]


def parallel_plate_inductance(w, t1, t2, gap, lam, mu=4e-7 * math.pi):
    """Per-unit-length inductance of a wide superconducting parallel-plate line.

    ``mu * (gap + lam*coth(t1/lam) + lam*coth(t2/lam)) / w``, all lengths in
    metres. Fringing is neglected, so it needs ``w`` well above the magnetic
    thickness.
    """
    return mu * (gap + lam / math.tanh(t1 / lam) + lam / math.tanh(t2 / lam)) / w


def bend(arm=8, w=2, t=1, refine=1, dx=2.5e-7, material=NIOBIUM):
    """L-shaped strip: an x arm joined to a y arm at a square corner.

    ``refine`` splits every coarse voxel into ``refine**3`` voxels while
    keeping the physical shape fixed.
    """
    A, W, T = arm * refine, w * refine, t * refine
    boxes = [Box((0, 0, 0), (A, W, T), "m"), Box((A - W, W, 0), (A, A, T), "m")]
    g = build_grid(boxes, dx / refine, {"m": material})
    return g, [_port(g, "bend", ("y", "+", (A - W, A - 1, 0), (A, A, T)),
                     ("x", "-", (0, 0, 0), (1, W, T)))]


def two_bars(n=8, sep=2, dx=1e-7, material=NIOBIUM):
    """Two parallel bars along x, one port each (coupled two-port)."""
    boxes = [Box((0, 0, 0), (n, 1, 1), "m"), Box((0, 1 + sep, 0), (n, 2 + sep, 1), "m")]
    g = build_grid(boxes, dx, {"m": material})
    ports = [_port(g, "a", ("x", "+", (n - 1, 0, 0), (n, 1, 1)), ("x", "-", (0, 0, 0), (1, 1, 1))),
             _port(g, "b", ("x", "+", (n - 1, 1 + sep, 0), (n, 2 + sep, 1)),
                   ("x", "-", (0, 1 + sep, 0), (1, 2 + sep, 1)))]
    return g, ports
