"""Mesh refinement of a 90-degree bend, and what the Schur solver costs.

The same L-shaped strip is voxelised at three resolutions. Successive
relative changes in L shrink, which is the practical convergence check
when no reference value exists. At the finest level the AMG-CG Schur
solver is compared with a sparse direct factorisation for memory.

    python3 demos/bend_refinement.py
"""
import time

from voxind import SolveConfig, extract, relative_difference
from voxind.shapes import bend


def main():
    Ls = []
    for r in (1, 2, 4):
        g, ports = bend(refine=r)
        t0 = time.perf_counter()
        rep = extract(g, ports, SolveConfig(compress=False))
        L = rep.inductance[0][0, 0]
        line = f"refine {r}: K = {g.K:5d}, N = {rep.stats['N']:6d}, L = {L:.5e} H"
        if Ls:
            line += f", change {relative_difference(L, Ls[-1]):.4f}"
        Ls.append(L)
        print(line + f", {rep.iterations[0][0]} GMRES its, {time.perf_counter() - t0:.1f} s")

    g, ports = bend(refine=4)
    for kind in ("amg", "direct"):
        rep = extract(g, ports, SolveConfig(compress=False, schur=kind))
        print(f"{kind:>6} Schur solver: {rep.stats['schur_bytes'] / 2**20:.2f} MiB, "
              f"setup {rep.stats['schur_setup_time'] * 1e3:.0f} ms, L = {rep.inductance[0][0, 0]:.6e} H")


if __name__ == "__main__":
    main()
