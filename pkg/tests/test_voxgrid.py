import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voxind.voxgrid import (BASES, Box, GridError, Material, PortSpec, build_grid, build_incidence,
                            build_nodes, node_count, terminal_nodes, unknown_count)

NB = {"nb": Material(0.0, 9e-8)}


def grid_from_mask(mask, dx=1.0):
    boxes = [Box(tuple(int(i) for i in v), tuple(int(i) + 1 for i in v), "nb") for v in np.argwhere(mask)]
    return build_grid(boxes, dx, NB, mask.shape)


def face_set(mask):
    """Independent oracle: unique faces as (axis, lattice point) keys."""
    faces = set()
    for v in map(tuple, np.argwhere(mask)):
        for a in range(3):
            for s in (0, 1):
                p = list(v)
                p[a] += s
                faces.add((a, *p))
    return faces


masks = st.integers(0, 2**27 - 1).map(
    lambda bits: np.array([(bits >> i) & 1 for i in range(27)], bool).reshape(3, 3, 3)
).filter(lambda m: m.any())


def test_single_voxel_counts():
    g = build_grid([Box((0, 0, 0), (1, 1, 1), "nb")], 1.0, NB)
    assert (g.K, g.Kt, node_count(g), unknown_count(g)) == (1, 1, 6, 11)


def test_bar_counts():
    g = build_grid([Box((0, 0, 0), (2, 1, 1), "nb")], 1.0, NB)
    assert (g.K, node_count(g), unknown_count(g)) == (2, 11, 21)


def test_plate_voxel_count():
    # 5 x 0.2 x 10 um at 0.05 um
    g = build_grid([Box((0, 0, 0), (100, 4, 200), "nb")], 0.05e-6, NB)
    assert g.K == 80_000 and g.Kt == 80_000


def test_incidence_columns_single_voxel():
    g = build_grid([Box((0, 0, 0), (1, 1, 1), "nb")], 1.0, NB)
    nodes = build_nodes(g)
    A = build_incidence(g, nodes).toarray()
    f = [nodes.face_ids[a] for a in range(3)]
    face = lambda a, s: f[a][(s if a == 0 else 0, s if a == 1 else 0, s if a == 2 else 0)]
    expect = {
        "x": {face(0, 0): -1, face(0, 1): 1},
        "2D": {face(0, 0): 0.5, face(0, 1): 0.5, face(1, 0): -0.5, face(1, 1): -0.5},
        "3D": {face(0, 0): 0.5, face(0, 1): 0.5, face(1, 0): 0.5, face(1, 1): 0.5,
               face(2, 0): -1, face(2, 1): -1},
    }
    for name, entries in expect.items():
        col = np.zeros(6)
        for node, val in entries.items():
            col[node] = val
        np.testing.assert_array_equal(A[:, BASES.index(name)], col)


def test_incidence_shape_and_values():
    g = build_grid([Box((0, 0, 0), (3, 2, 1), "nb")], 1.0, NB)
    A = build_incidence(g)
    assert A.shape == (node_count(g), 5 * g.K)
    assert set(np.unique(A.data)) <= {-1.0, -0.5, 0.5, 1.0}


@settings(max_examples=60, deadline=None)
@given(masks)
def test_node_count_matches_face_oracle(mask):
    g = grid_from_mask(mask)
    assert node_count(g) == len(face_set(mask))
    assert unknown_count(g) == 5 * g.K + len(face_set(mask))


@settings(max_examples=60, deadline=None)
@given(masks)
def test_columns_conserve_flux(mask):
    A = build_incidence(grid_from_mask(mask))
    np.testing.assert_allclose(np.asarray(A.sum(axis=0)).ravel(), 0.0, atol=0)


@settings(max_examples=30, deadline=None)
@given(masks, st.randoms(use_true_random=False))
def test_node_ids_independent_of_box_order(mask, rnd):
    boxes = [Box(tuple(int(i) for i in v), tuple(int(i) + 1 for i in v), "nb") for v in np.argwhere(mask)]
    shuffled = boxes[:]
    rnd.shuffle(shuffled)
    a = build_nodes(build_grid(boxes, 1.0, NB, mask.shape))
    b = build_nodes(build_grid(shuffled, 1.0, NB, mask.shape))
    for fa, fb in zip(a.face_ids, b.face_ids):
        np.testing.assert_array_equal(fa, fb)


def test_shared_face_has_one_node():
    g = build_grid([Box((0, 0, 0), (2, 1, 1), "nb")], 1.0, NB)
    nodes = build_nodes(g)
    shared = nodes.face_ids[0][1, 0, 0]
    A = build_incidence(g, nodes).toarray()
    # the x basis of voxel 0 leaves through it, the x basis of voxel 1 enters
    assert A[shared, 0] == 1 and A[shared, 1] == -1
    assert not nodes.boundary_mask(g)[shared]
    assert nodes.boundary_mask(g).sum() == 10


def test_build_grid_errors():
    with pytest.raises(GridError):
        build_grid([Box((0, 0, 0), (1, 1, 1), "cu")], 1.0, NB)
    with pytest.raises(GridError):
        build_grid([Box((0, 0, 0), (3, 1, 1), "nb")], 1.0, NB, dims=(2, 1, 1))
    two = {"nb": NB["nb"], "al": Material(1e7, 1e-7)}
    with pytest.raises(GridError, match="overlaps"):
        build_grid([Box((0, 0, 0), (2, 1, 1), "nb"), Box((1, 0, 0), (3, 1, 1), "al")], 1.0, two)
    # same-material overlap is fine
    g = build_grid([Box((0, 0, 0), (2, 1, 1), "nb"), Box((1, 0, 0), (3, 1, 1), "nb")], 1.0, NB)
    assert g.K == 3
    with pytest.raises(GridError):
        build_grid([], 1.0, NB)
    with pytest.raises(GridError):
        build_grid([Box((0, 0, 0), (1, 1, 1), "nb")], 0.0, NB)


def test_material_validation():
    with pytest.raises(GridError):
        Material(-1.0, 1e-7)
    with pytest.raises(GridError):
        Material(0.0, 0.0)
    with pytest.raises(GridError):
        Material(0.0, math.inf)
    assert Material(1e7, math.inf).is_normal


def test_terminals():
    g = build_grid([Box((0, 0, 0), (3, 2, 1), "nb")], 1.0, NB)
    nodes = build_nodes(g)
    plus = terminal_nodes(g, nodes, "x", "+", (2, 0, 0), (3, 2, 1))
    minus = terminal_nodes(g, nodes, 0, "-", (0, 0, 0), (1, 2, 1))
    assert len(plus) == len(minus) == 2
    with pytest.raises(GridError, match="interior"):
        terminal_nodes(g, nodes, "x", "+", (0, 0, 0), (1, 2, 1))
    with pytest.raises(GridError):
        PortSpec("p", plus, np.array([], int))
    with pytest.raises(GridError):
        PortSpec("p", plus, plus)
