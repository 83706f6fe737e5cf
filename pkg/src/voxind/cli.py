"""Command-line front end.

    voxind cache-build --nmax 32 --tol 1e-8 --out kernels.svxt
    voxind solve geometry.json --freq 1e9 --cache kernels.svxt --outdir out/
    voxind verify [geometry.json]

Exit status: 0 success, 2 configuration error, 3 non-convergence,
4 cache mismatch.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import BLOCK_TAGS, BLOCKS, assemble_toeplitz
from .opfft import assemble_dense_Z, embed_and_fft
from .precond import SchurSolveError, build_precond
from .solve import SolveConfig, current_density, extract, relative_difference
from .tucker import CacheError, cache_write, reconstruct
from .voxgrid import AXES, Box, GridError, Material, PortSpec, build_grid, build_nodes, terminal_nodes

log = logging.getLogger("voxind")

EXIT_OK, EXIT_CONFIG, EXIT_NOCONV, EXIT_CACHE = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def sig(x, digits=12):
    """Round to ``digits`` significant figures (keeps reports reproducible)."""
    if x == 0 or not math.isfinite(x):
        return float(x)
    return float(f"{x:.{digits - 1}e}")


def _rounded(obj):
    if isinstance(obj, float):
        return sig(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return _rounded(obj.item())
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# configuration

@dataclass
class ProjectConfig:
    path: Path
    dx: float
    dims: tuple
    materials: dict
    boxes: list
    ports: list                 # raw dicts, resolved once the grid exists
    freqs: list = field(default_factory=lambda: [1e9])
    solver: dict = field(default_factory=dict)
    length_m: float | None = None
    reference_L: float | None = None
    cache: str | None = None


def _get(d, key, where, kind=None):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"missing field '{where}{key}'")
    v = d[key]
    if kind is not None and (not isinstance(v, kind) or isinstance(v, bool)):
        raise ConfigError(f"field '{where}{key}' has the wrong type ({type(v).__name__})")
    return v


def _triple(v, name):
    if not (isinstance(v, list) and len(v) == 3 and all(isinstance(i, int) and not isinstance(i, bool)
                                                      for i in v)):
        raise ConfigError(f"field '{name}' must be a list of three integers")
    return tuple(v)


def _number(v, name, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"field '{name}' must be a finite number")
    if positive and v <= 0:
        raise ConfigError(f"field '{name}' must be positive")
    return float(v)


def parse_config(path) -> ProjectConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("top-level JSON value must be an object")
    dx = _number(_get(raw, "dx_m", ""), "dx_m", positive=True)
    dims = _triple(_get(raw, "domain", ""), "domain")
    if min(dims) < 1:
        raise ConfigError("field 'domain' must hold positive voxel counts")

    materials = {}
    for name, m in _get(raw, "materials", "", dict).items():
        where = f"materials.{name}."
        s0 = _number(_get(m, "sigma0_S_per_m", where), where + "sigma0_S_per_m")
        lam = _get(m, "lambda_m", where)
        if lam == "normal":
            lam = math.inf
        else:
            lam = _number(lam, where + "lambda_m", positive=True)
        try:
            materials[name] = Material(s0, lam, name)
        except GridError as exc:
            raise ConfigError(f"field '{where[:-1]}': {exc}") from None

    boxes = []
    for i, b in enumerate(_get(raw, "boxes", "", list)):
        where = f"boxes[{i}]."
        lo = _triple(_get(b, "min", where), where + "min")
        hi = _triple(_get(b, "max", where), where + "max")
        mat = _get(b, "material", where, str)
        if mat not in materials:
            raise ConfigError(f"field '{where}material' names unknown material {mat!r}")
        boxes.append(Box(lo, hi, mat))

    ports = []
    for i, p in enumerate(raw.get("ports", [])):
        where = f"ports[{i}]."
        entry = {"name": _get(p, "name", where, str)}
        for key in ("plus_face", "minus_face"):
            f = _get(p, key, where, dict)
            w = f"{where}{key}."
            axis = _get(f, "axis", w)
            if axis not in AXES and axis not in (0, 1, 2):
                raise ConfigError(f"field '{w}axis' must be one of x, y, z")
            side = _get(f, "side", w)
            if side not in ("+", "-"):
                raise ConfigError(f"field '{w}side' must be '+' or '-'")
            entry[key] = (axis, side, _triple(_get(f, "min", w), w + "min"),
                          _triple(_get(f, "max", w), w + "max"))
        ports.append(entry)
    if not ports:
        raise ConfigError("field 'ports' must list at least one port")

    freqs = raw.get("freqs_hz", [1e9])
    if not isinstance(freqs, list) or not freqs:
        raise ConfigError("field 'freqs_hz' must be a non-empty list")
    freqs = [_number(f, "freqs_hz", positive=True) for f in freqs]
    solver = raw.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("field 'solver' must be an object")
    length = raw.get("length_m")
    ref = raw.get("reference_L_H")
    cache = raw.get("cache")
    return ProjectConfig(path, dx, dims, materials, boxes, ports, freqs, solver,
                         None if length is None else _number(length, "length_m", positive=True),
                         None if ref is None else _number(ref, "reference_L_H"),
                         cache)


def build_problem(cfg: ProjectConfig):
    """Grid and resolved ports from a parsed config."""
    try:
        grid = build_grid(cfg.boxes, cfg.dx, cfg.materials, cfg.dims)
        nodes = build_nodes(grid)
        ports = []
        for i, p in enumerate(cfg.ports):
            terms = []
            for key in ("plus_face", "minus_face"):
                axis, side, lo, hi = p[key]
                try:
                    terms.append(terminal_nodes(grid, nodes, axis, side, lo, hi))
                except GridError as exc:
                    raise ConfigError(f"field 'ports[{i}].{key}': {exc}") from None
            ports.append(PortSpec(p["name"], *terms))
    except GridError as exc:
        raise ConfigError(str(exc)) from None
    return grid, ports


def solver_config(cfg: ProjectConfig, args) -> SolveConfig:
    s = dict(cfg.solver)
    opts = {
        "rre": s.get("rre", 1e-8),
        "restart": s.get("restart", 50),
        "max_iters": s.get("max_iters", 2000),
        "tucker_tol": s.get("tucker_tol", 1e-8),
        "compress": s.get("compress", True),
        "schur": s.get("schur", "amg"),
        "schur_tol": s.get("schur_tol", 1e-8),
    }
    for key, val in (("rre", args.rre), ("restart", args.restart), ("tucker_tol", args.tucker_tol),
                     ("schur", args.schur), ("schur_tol", args.schur_tol), ("max_iters", args.max_iters)):
        if val is not None:
            opts[key] = val
    if args.no_tucker:
        opts["compress"] = False
    if opts["schur"] not in ("direct", "amg"):
        raise ConfigError(f"field 'solver.schur' must be 'direct' or 'amg', got {opts['schur']!r}")
    freqs = args.freq if args.freq else cfg.freqs
    try:
        return SolveConfig(freqs=tuple(freqs), **opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver settings: {exc}") from None


# ---------------------------------------------------------------------------
# outputs

def write_csv(path, report, cfg: ProjectConfig):
    cols = ["freq_hz", "port", "port_j", "L_H", "R_ohm", "iterations", "converged"]
    if cfg.length_m:
        cols.append("L_per_m_H_per_m")
    if cfg.reference_L is not None:
        cols.append("err")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for fi, f in enumerate(report.freqs):
            L, R = report.inductance[fi], report.resistance[fi]
            for i, pi in enumerate(report.ports):
                for j, pj in enumerate(report.ports):
                    res = report.residuals[fi][j]
                    row = [f"{f:.12g}", pi, pj, f"{L[i, j]:.12g}", f"{R[i, j]:.12g}",
                           report.iterations[fi][j], int(res <= report.rre)]
                    if cfg.length_m:
                        row.append(f"{L[i, j] / cfg.length_m:.12g}")
                    if cfg.reference_L is not None:
                        row.append(f"{relative_difference(cfg.reference_L, L[i, j]):.12g}"
                                   if i == j else "")
                    w.writerow(row)


def write_vtk(path, grid, J, title="current density"):
    """Legacy-VTK structured points with |J| and Re(J) as cell data."""
    Kx, Ky, Kz = grid.dims
    mag = np.zeros(grid.dims)
    vec = np.zeros(grid.dims + (3,))
    idx = tuple(grid.voxels.T)
    mag[idx] = np.sqrt(np.sum(np.abs(J) ** 2, axis=1))
    vec[idx] = J.real
    # VTK orders cells with x varying fastest
    mag = mag.transpose(2, 1, 0).ravel()
    vec = vec.transpose(2, 1, 0, 3).reshape(-1, 3)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_POINTS",
             f"DIMENSIONS {Kx + 1} {Ky + 1} {Kz + 1}", "ORIGIN 0 0 0",
             f"SPACING {grid.dx:.12g} {grid.dx:.12g} {grid.dx:.12g}",
             f"CELL_DATA {grid.Kt}", "SCALARS J_magnitude double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.12g}" for v in mag]
    lines.append("VECTORS J_real double")
    lines += [" ".join(f"{c:.12g}" for c in v) for v in vec]
    Path(path).write_text("\n".join(lines) + "\n")


def _stats(report, cfg: SolveConfig):
    s = report.stats
    return {
        "unknowns": s["N"], "voxels": s["K"], "lattice_cells": s["Kt"], "nodes": s["M"],
        "compressed": cfg.compress, "compression_ratio": s["compression_ratio"],
        "memory_bytes": {"circulant": s["circulant_bytes"], "circulant_dense": s["circulant_dense_bytes"],
                         "schur_solver": s["schur_bytes"]},
        "schur": cfg.schur, "rre": cfg.rre, "restart": cfg.restart,
        "tucker_tol": cfg.tucker_tol, "schur_tol": cfg.schur_tol,
        "iterations": report.iterations, "converged": report.converged,
    }


def _timings(report, op_probe):
    t = dict(report.stats["timings"])
    conv = op_probe.get("convolution")
    restore = op_probe.get("restore")
    out = {"seconds": t}
    if conv and restore is not None:
        out["computational_overhead"] = restore / conv
    return out


def _probe_overhead(grid, kernels, omega, tol):
    """Time one uncompressed matvec against restoring every compressed block."""
    op = embed_and_fft(kernels, grid, omega)
    v = np.ones(5 * grid.K, dtype=complex)
    t0 = time.perf_counter()
    op.apply_Z(v)
    conv = time.perf_counter() - t0
    cop = embed_and_fft(kernels, grid, omega, compress=True, tol=tol)
    t0 = time.perf_counter()
    for blk in cop.blocks:
        cop.blocks[blk].full()
    return {"convolution": conv, "restore": time.perf_counter() - t0}


# ---------------------------------------------------------------------------
# commands

def cmd_cache_build(args):
    t0 = time.perf_counter()
    tensors = cache_write(None, args.nmax, args.tol, args.out)
    elapsed = time.perf_counter() - t0
    dense = args.nmax ** 3
    print(f"cache {args.out}: nmax={args.nmax} tol={args.tol:g}")
    total = 0
    for blk in BLOCKS:
        t = tensors[blk]
        total += t.size
        print(f"  {blk[0]:>2},{blk[1]:<2} tag={BLOCK_TAGS[blk]:<3d} ranks={t.ranks} "
              f"compressed={8 * t.size} B dense={8 * dense} B")
    print(f"total compressed {8 * total} B vs dense {8 * dense * len(BLOCKS)} B, "
          f"{elapsed:.2f} s")
    return EXIT_OK


def cmd_solve(args):
    cfg = parse_config(args.config)
    scfg = solver_config(cfg, args)
    grid, ports = build_problem(cfg)
    cache = args.cache or cfg.cache
    if cache is not None:
        cache = Path(cache)
        if not cache.is_absolute() and args.cache is None:
            cache = cfg.path.parent / cache
        if not cache.exists():
            raise ConfigError(f"cache file {cache} not found")
    t0 = time.perf_counter()
    if cache is not None:
        from .tucker import cache_read
        kernels = cache_read(cache, grid.dims, grid.dx)
    else:
        kernels = assemble_toeplitz(grid.dims, grid.dx)
    t_kernels = time.perf_counter() - t0
    try:
        report = extract(grid, ports, scfg, kernels=kernels, keep_currents=True)
    except SchurSolveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    report.stats["timings"]["toeplitz"] = t_kernels
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = cfg.path.stem
    write_csv(outdir / f"{stem}_report.csv", report, cfg)
    stats = _stats(report, scfg)
    (outdir / f"{stem}_stats.json").write_text(json.dumps(_rounded(stats), indent=2, sort_keys=True) + "\n")
    probe = _probe_overhead(grid, kernels, 2 * math.pi * scfg.freqs[0], scfg.tucker_tol) \
        if scfg.compress else {}
    (outdir / f"{stem}_timings.json").write_text(json.dumps(_rounded(_timings(report, probe)), indent=2) + "\n")
    for p, port in enumerate(ports):
        x = report.currents[(0, p)]
        write_vtk(outdir / f"{stem}_current_{port.name}.vtk", grid,
                  current_density(grid, x[:5 * grid.K]),
                  f"|J| driven at port {port.name}, {scfg.freqs[0]:.6g} Hz")
    for fi, f in enumerate(report.freqs):
        for i, name in enumerate(report.ports):
            print(f"{f:.6g} Hz  {name}: L = {report.inductance[fi][i, i]:.6e} H  "
                  f"R = {report.resistance[fi][i, i]:.6e} ohm  "
                  f"({report.iterations[fi][i]} iterations)")
    if not report.converged:
        print("warning: GMRES did not reach the requested residual; report flagged", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


def _random_grid(seed=0):
    rng = np.random.default_rng(seed)
    dims = (4, 4, 4)
    occ = rng.random(dims) < 0.5
    occ[0, 0, 0] = True
    boxes = [Box(tuple(int(i) for i in v), tuple(int(i) + 1 for i in v), "sc") for v in np.argwhere(occ)]
    return build_grid(boxes, 1e-7, {"sc": Material(1e6, 9e-8, "sc")}, dims)


def verify_checks(grid, omega=2 * math.pi * 1e9):
    """(name, passed, detail) for the dense-oracle invariants on a small grid."""
    from .tucker import tucker_svd
    if grid.Kt > 64:
        raise ConfigError(f"verify needs a grid with at most 64 cells, got {grid.Kt}")
    out = []
    kern = assemble_toeplitz(grid.dims, grid.dx)
    op = embed_and_fft(kern, grid, omega)
    Z = assemble_dense_Z(grid, kern, omega)
    v = np.random.default_rng(1).standard_normal(5 * grid.K) + 0j
    err = np.linalg.norm(op.apply_Z(v) - Z @ v) / np.linalg.norm(Z @ v)
    out.append(("fft-vs-dense matvec", err <= 1e-12, f"relative error {err:.2e}"))
    sym = np.abs(Z - Z.T).max() / np.abs(Z).max()
    out.append(("Z complex symmetry", sym <= 1e-12, f"max asymmetry {sym:.2e}"))
    unit = assemble_toeplitz(grid.dims, 1.0)
    worst = 0.0
    for s in (0.5, 2.0, 3.7):
        ks = assemble_toeplitz(grid.dims, s)
        for blk in BLOCKS:
            ref = unit.data[blk] * s**5
            worst = max(worst, np.linalg.norm(ks.data[blk] - ref) / np.linalg.norm(ref))
    out.append(("dx^5 scaling law", worst <= 1e-10, f"worst relative error {worst:.2e}"))
    worst = 0.0
    for blk in BLOCKS:
        t = tucker_svd(unit.data[blk], 1e-8)
        worst = max(worst, np.linalg.norm(reconstruct(t) - unit.data[blk]) / np.linalg.norm(unit.data[blk]))
    out.append(("tucker round-trip", worst <= 1e-8, f"worst relative error {worst:.2e}"))
    from .solve import setup_problem
    prob = setup_problem(grid, [])
    if prob.A.shape[0]:
        pc = build_precond(op, prob.A, "direct")
        w = np.random.default_rng(2).standard_normal(prob.N) + 0j
        w[prob.n_current:] *= np.median(pc.Y)
        err = np.linalg.norm(pc.apply(pc.matvec_Q(w)) - w) / np.linalg.norm(w)
        out.append(("preconditioner round-trip", err <= 1e-6, f"relative error {err:.2e}"))
    return out


def cmd_verify(args):
    if args.config:
        grid, _ = build_problem(parse_config(args.config))
    else:
        grid = _random_grid()
    ok = True
    for name, passed, detail in verify_checks(grid):
        ok &= bool(passed)
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if ok else 1


def make_parser():
    ap = argparse.ArgumentParser(prog="voxind", description="Inductance extraction for voxelized "
                                 "superconducting structures.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cache-build", help="precompute compressed unit-voxel kernels")
    c.add_argument("--nmax", type=int, default=128)
    c.add_argument("--tol", type=float, default=1e-8)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_cache_build)

    s = sub.add_parser("solve", help="extract port inductances")
    s.add_argument("config")
    s.add_argument("--freq", type=float, action="append", help="Hz; repeat for a sweep")
    s.add_argument("--rre", type=float)
    s.add_argument("--restart", type=int)
    s.add_argument("--max-iters", type=int)
    s.add_argument("--tucker-tol", type=float)
    s.add_argument("--schur", choices=("direct", "amg"))
    s.add_argument("--schur-tol", type=float)
    s.add_argument("--no-tucker", action="store_true", help="keep circulant tensors uncompressed")
    s.add_argument("--cache")
    s.add_argument("--outdir", default=".")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="dense-oracle checks on a tiny grid")
    v.add_argument("config", nargs="?")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CacheError as exc:
        print(f"cache error: {exc}", file=sys.stderr)
        return EXIT_CACHE


if __name__ == "__main__":
    sys.exit(main())
