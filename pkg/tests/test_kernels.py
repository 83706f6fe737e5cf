import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voxind.kernels import (BLOCKS, MU0, QuadratureError, ZERO_BLOCKS, assemble_toeplitz,
                            block_parity, diagonal_terms, galerkin_integral, primitive_integrals,
                            resolve_block, two_fluid_coeffs)
from voxind.voxgrid import Box, Material, build_grid

BASIS_FIELDS = {
    # vector field of each basis at local coordinates u (centre at 0), unit edge
    "x": lambda u: np.stack([np.ones_like(u[0]), 0 * u[0], 0 * u[0]]),
    "y": lambda u: np.stack([0 * u[0], np.ones_like(u[0]), 0 * u[0]]),
    "z": lambda u: np.stack([0 * u[0], 0 * u[0], np.ones_like(u[0])]),
    "2D": lambda u: np.stack([u[0], -u[1], 0 * u[0]]),
    "3D": lambda u: np.stack([u[0], u[1], -2 * u[2]]),
}


def self_term_oracle(n):
    """Unit-cube self integral of 1/(4 pi R) from an n^3 subdivision.

    Off-diagonal sub-cube pairs use the midpoint rule (summed over lattice
    offsets with multiplicity); the coincident pairs reuse the unknown
    itself through the h^5 self-similarity of the integral.
    """
    h = 1.0 / n
    r = np.arange(-(n - 1), n)
    dx, dy, dz = np.meshgrid(r, r, r, indexing="ij")
    mult = (n - abs(dx)) * (n - abs(dy)) * (n - abs(dz))
    dist = np.sqrt(dx**2 + dy**2 + dz**2) * h
    dist[n - 1, n - 1, n - 1] = np.inf
    s = np.sum(mult / dist) * h**6 / (4 * np.pi)
    return s / (1.0 - n**3 * h**5)


def gauss6(beta, alpha, offset, order=8):
    """Direct 6-D tensor Gauss-Legendre of the tested Green integral."""
    x, w = np.polynomial.legendre.leggauss(order)
    x, w = x / 2, w / 2
    U = np.array(list(itertools.product(x, repeat=3))).T
    Wt = np.prod(np.array(list(itertools.product(w, repeat=3))), axis=1)
    fo = BASIS_FIELDS[beta](U)
    fs = BASIS_FIELDS[alpha](U)
    d = np.asarray(offset, float)[:, None, None]
    R = np.linalg.norm(U[:, :, None] + d - U[:, None, :], axis=0)
    dot = np.einsum("ip,iq->pq", fo, fs)
    return float(Wt @ (dot / (4 * np.pi * R)) @ Wt)


def test_self_term_matches_subdivision_oracle():
    ns = [16, 32, 64]
    vals = [self_term_oracle(n) for n in ns]
    # midpoint error ~ h^2: two Richardson steps
    r1 = [(4 * vals[i + 1] - vals[i]) / 3 for i in range(2)]
    extrap = (16 * r1[1] - r1[0]) / 15
    got = galerkin_integral(("x", "x"), (0, 0, 0))
    assert abs(got - extrap) / extrap < 1e-6
    assert got * 4 * np.pi == pytest.approx(1.8823126443896705, rel=1e-12)


@pytest.mark.parametrize("block", sorted(BLOCKS))
@pytest.mark.parametrize("offset", [(3, 1, 2), (-2, 3, -4), (4, 0, -3)])
def test_reduced_integral_matches_direct_6d(block, offset):
    ref = gauss6(*block, offset)
    got = galerkin_integral(block, offset)
    assert abs(got - ref) <= 1e-8 * max(abs(ref), 1e-3 * galerkin_integral(("x", "x"), offset))


@pytest.mark.parametrize("block", [("2D", "x"), ("3D", "y"), ("3D", "z"), ("3D", "2D")])
def test_transposed_blocks_match_direct_6d(block):
    offset = (2, -3, 3)
    ref = gauss6(*block, offset)
    assert galerkin_integral(block, offset) == pytest.approx(ref, rel=1e-8, abs=1e-12)


def test_odd_block_vanishes_at_zero_offset():
    assert galerkin_integral(("x", "2D"), (0, 0, 0)) == 0.0
    assert galerkin_integral(("z", "3D"), (0, 0, 0)) == 0.0


def test_far_field_point_limit():
    v = galerkin_integral(("x", "x"), (10, 0, 0))
    assert v == pytest.approx(1 / (4 * np.pi * 10), rel=0.01)


def test_structural_zero_blocks():
    for blk in ZERO_BLOCKS:
        assert resolve_block(*blk) is None
        assert resolve_block(blk[1], blk[0]) is None
        assert galerkin_integral(blk, (1, 0, 0)) == 0.0
        assert gauss6(*blk, (1, 2, 0)) == pytest.approx(0.0, abs=1e-15)


def test_quadrature_failure_reported():
    with pytest.raises(QuadratureError):
        galerkin_integral(("x", "x"), (1, 0, 0), tol=1e-30)


def test_single_cell_domain():
    k = assemble_toeplitz((1, 1, 1))
    assert k.data[("x", "x")].shape == (1, 1, 1)
    assert k.data[("x", "2D")][0, 0, 0] == 0.0
    assert k.data[("x", "x")][0, 0, 0] == pytest.approx(galerkin_integral(("x", "x"), (0, 0, 0)), rel=1e-12)


def test_neighbour_smaller_than_self():
    k = assemble_toeplitz((2, 1, 1)).data[("x", "x")].ravel()
    assert 0 < k[1] < k[0]
    assert k[1] == pytest.approx(galerkin_integral(("x", "x"), (1, 0, 0)), rel=1e-10)


def test_dx2_is_32_times_unit():
    a, b = assemble_toeplitz((3, 2, 2)), assemble_toeplitz((3, 2, 2), 2.0)
    for blk in BLOCKS:
        np.testing.assert_allclose(b.data[blk], 32 * a.data[blk], rtol=1e-12, atol=0)


@pytest.mark.parametrize("dx", [0.5, 2.0, 3.7])
def test_scaling_law(dx):
    unit = assemble_toeplitz((4, 3, 3))
    scaled = assemble_toeplitz((4, 3, 3), dx)
    for blk in BLOCKS:
        ref = unit.data[blk] * dx**5
        assert np.linalg.norm(scaled.data[blk] - ref) <= 1e-10 * np.linalg.norm(ref)


def test_reciprocity_and_parity():
    k = assemble_toeplitz((3, 3, 3))
    for blk in BLOCKS:
        for off in [(1, 2, 0), (2, 1, 1), (0, 0, 2)]:
            neg = tuple(-o for o in off)
            assert k.value(blk, off) == pytest.approx(k.value(blk[::-1], neg), rel=1e-12, abs=1e-16)
            sign = np.prod([p for p, o in zip(block_parity(blk), off) if o])
            assert k.value(blk, neg) == pytest.approx(sign * k.value(blk, off), rel=1e-12, abs=1e-16)


def test_diagonal_kernels_are_axis_permutations():
    k = assemble_toeplitz((4, 4, 4))
    xx, yy, zz = (k.data[(b, b)] for b in "xyz")
    np.testing.assert_array_equal(xx, yy)
    np.testing.assert_array_equal(xx, zz)
    # the (x,x) kernel is invariant under permuting offset axes
    np.testing.assert_allclose(xx, xx.transpose(1, 0, 2), rtol=1e-10)
    np.testing.assert_allclose(xx, xx.transpose(2, 1, 0), rtol=1e-10)
    assert np.all(xx > 0)


@settings(max_examples=25, deadline=None)
@given(st.tuples(*[st.integers(-6, 6)] * 3))
def test_primitives_finite_and_positive_average(offset):
    p = primitive_integrals(offset)
    assert np.all(np.isfinite(p))
    assert p[0] > 0


# --- two-fluid coefficients -------------------------------------------------

def test_two_fluid_pure_superconductor():
    lam = 9e-8
    c = two_fluid_coeffs(Material(0.0, lam), 2 * np.pi * 1e9)
    assert c.a == 0.0 and c.b == lam**2


def test_two_fluid_unit_product():
    lam, w = 1e-7, 2 * np.pi * 1e9
    s0 = 1.0 / (w * MU0 * lam**2)
    c = two_fluid_coeffs(Material(s0, lam), w)
    k = w * MU0 * lam**2
    assert c.a == pytest.approx(s0 * k**2 / 2, rel=1e-14)
    assert c.b == pytest.approx(lam**2 / 2, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e3, 1e9), st.floats(1e-9, 1e-5), st.floats(1e6, 1e12))
def test_two_fluid_is_reciprocal_conductivity(s0, lam, f):
    w = 2 * np.pi * f
    c = two_fluid_coeffs(Material(s0, lam), w)
    sigma = s0 - 1j / (w * MU0 * lam**2)
    assert c.c * sigma == pytest.approx(1.0, rel=1e-10)
    k = w * MU0 * lam**2
    assert c.a == pytest.approx(s0 * k**2 / (1 + (s0 * k) ** 2), rel=1e-12)
    assert c.b == pytest.approx(lam**2 / (1 + (s0 * k) ** 2), rel=1e-12)
    assert c.a >= 0 and c.b >= 0


def test_normal_conductor_limit():
    s0, w = 5.8e7, 2 * np.pi * 1e6
    normal = two_fluid_coeffs(Material(s0, math.inf), w)
    assert (normal.a, normal.b) == (1 / s0, 0.0)
    big = two_fluid_coeffs(Material(s0, 1.0), w)
    assert big.c == pytest.approx(normal.c, rel=1e-6)


def test_two_fluid_rejects_bad_inputs():
    for w in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            two_fluid_coeffs(Material(0.0, 1e-7), w)


def test_diagonal_terms_ratios_and_scaling():
    mat = {"m": Material(0.0, 9e-8)}
    g1 = build_grid([Box((0, 0, 0), (2, 1, 1), "m")], 1e-7, mat)
    g2 = build_grid([Box((0, 0, 0), (2, 1, 1), "m")], 0.5e-7, mat)
    w = 2 * np.pi * 1e9
    z1, z2 = diagonal_terms(g1, w), diagonal_terms(g2, w)
    assert np.all(z1["x"].real == 0)
    np.testing.assert_allclose(z1["x"], 1j * w * MU0 * (9e-8) ** 2 / 1e-7)
    np.testing.assert_allclose(z1["3D"] / z1["x"], 0.5)
    np.testing.assert_allclose(z1["2D"] / z1["x"], 1 / 6)
    np.testing.assert_allclose(np.abs(z2["y"]), 2 * np.abs(z1["y"]))


def test_cross_conduction_terms_orthogonal():
    # conduction coupling of distinct bases in one voxel is the integral of
    # their dot product, which vanishes for every pair
    x, w = np.polynomial.legendre.leggauss(4)
    U = np.array(list(itertools.product(x / 2, repeat=3))).T
    W = np.prod(np.array(list(itertools.product(w / 2, repeat=3))), axis=1)
    names = list(BASIS_FIELDS)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            g = np.sum(BASIS_FIELDS[a](U) * BASIS_FIELDS[b](U), axis=0) @ W
            assert abs(g) < 1e-15
    # and the diagonal factors 1, 1/6, 1/2 are the squared norms
    for b, f in (("x", 1.0), ("2D", 1 / 6), ("3D", 1 / 2)):
        assert np.sum(BASIS_FIELDS[b](U) ** 2, axis=0) @ W == pytest.approx(f, rel=1e-14)
