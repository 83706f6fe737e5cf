"""Kinetic inductance of a superconducting parallel-plate line.

Thin niobium films (lambda = 90 nm) carry a large share of their
inductance in the kinetic term, so the classic magnetic estimate
``mu0 * d / w`` badly underestimates L. The wide-line formula with the
``lambda * coth(t / lambda)`` corrections captures it. This script sweeps
the film thickness and compares the solver's per-length inductance with
both estimates.

The line is shorted at the far end; solving two lengths and differencing
removes the port and short contributions.

    python3 demos/microstrip_kinetic.py
"""
from voxind import SolveConfig, extract
from voxind.kernels import MU0
from voxind.shapes import NIOBIUM, parallel_plate, parallel_plate_inductance

DX = 2.5e-8
W, GAP = 20, 2
LENGTHS = (8, 16)


def per_length(t):
    Ls = []
    for n in LENGTHS:
        rep = extract(*parallel_plate(n, W, t, GAP, DX), SolveConfig(compress=False))
        Ls.append(rep.inductance[0][0, 0])
    return (Ls[1] - Ls[0]) / ((LENGTHS[1] - LENGTHS[0]) * DX)


def main():
    lam = NIOBIUM.lambda_
    print(f"strip width {W * DX * 1e9:.0f} nm, gap {GAP * DX * 1e9:.0f} nm, lambda {lam * 1e9:.0f} nm")
    print(f"{'t (nm)':>7} {'solver':>12} {'formula':>12} {'err':>7} {'mu0*d/w':>12}")
    for t in (1, 2):
        got = per_length(t)
        ref = parallel_plate_inductance(W * DX, t * DX, t * DX, GAP * DX, lam, MU0)
        geo = MU0 * GAP / W
        print(f"{t * DX * 1e9:7.0f} {got:12.4e} {ref:12.4e} {got / ref - 1:+7.3f} {geo:12.4e}")
    print("kinetic share at t = 25 nm:",
          f"{1 - MU0 * GAP * DX / (W * DX) / parallel_plate_inductance(W * DX, DX, DX, GAP * DX, lam):.0%}")


if __name__ == "__main__":
    main()
