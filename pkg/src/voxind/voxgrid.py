"""Voxel lattice, face nodes, incidence matrix and port terminals.

Every non-empty voxel carries five divergence-free current bases
(x, y, z, 2D, 3D) and one potential node at the centre of each face.
Faces shared by two non-empty voxels map to a single node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

AXES = "xyz"
BASES = ("x", "y", "z", "2D", "3D")

# outward flux of each basis through the (-, +) faces along x, y, z,
# normalised so that the constant bases carry unit flux
FLUX_TABLE = {
    "x": ((-1.0, 1.0), (0.0, 0.0), (0.0, 0.0)),
    "y": ((0.0, 0.0), (-1.0, 1.0), (0.0, 0.0)),
    "z": ((0.0, 0.0), (0.0, 0.0), (-1.0, 1.0)),
    "2D": ((0.5, 0.5), (-0.5, -0.5), (0.0, 0.0)),
    "3D": ((0.5, 0.5), (0.5, 0.5), (-1.0, -1.0)),
}


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Material:
    """Two-fluid material: normal-channel conductivity and London depth.

    ``lambda_ = math.inf`` marks a normal (non-superconducting) conductor.
    """

    sigma0: float
    lambda_: float
    name: str = ""

    def __post_init__(self):
        if not (self.sigma0 >= 0.0) or math.isnan(self.sigma0):
            raise GridError(f"material {self.name!r}: sigma0 must be >= 0")
        if not (self.lambda_ > 0.0):
            raise GridError(f"material {self.name!r}: lambda must be > 0")
        if math.isinf(self.lambda_) and self.sigma0 == 0.0:
            raise GridError(f"material {self.name!r}: normal conductor needs sigma0 > 0")

    @property
    def is_normal(self) -> bool:
        return math.isinf(self.lambda_)


@dataclass(frozen=True)
class Box:
    """Axis-aligned block of voxels, ``lo`` inclusive and ``hi`` exclusive."""

    lo: tuple[int, int, int]
    hi: tuple[int, int, int]
    material: str


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    dims: tuple[int, int, int]
    dx: float
    material_id: np.ndarray  # int per lattice cell, -1 when empty
    materials: tuple[Material, ...]
    voxel_index: np.ndarray = field(init=False, repr=False)
    voxels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dx <= 0:
            raise GridError("dx must be positive")
        if self.material_id.shape != tuple(self.dims):
            raise GridError("material_id shape does not match dims")
        occ = self.material_id >= 0
        index = np.full(self.dims, -1, dtype=np.int64)
        index[occ] = np.arange(int(occ.sum()))
        index.setflags(write=False)
        vox = np.argwhere(occ)
        vox.setflags(write=False)
        object.__setattr__(self, "voxel_index", index)
        object.__setattr__(self, "voxels", vox)

    @property
    def occupancy(self) -> np.ndarray:
        return self.material_id >= 0

    @property
    def K(self) -> int:
        return len(self.voxels)

    @property
    def Kt(self) -> int:
        return int(np.prod(self.dims))

    def voxel_materials(self) -> np.ndarray:
        """Material index of each non-empty voxel in enumeration order."""
        return self.material_id[tuple(self.voxels.T)]

    def centers(self) -> np.ndarray:
        return (self.voxels + 0.5) * self.dx


def build_grid(boxes, dx, materials, dims=None) -> VoxelGrid:
    """Rasterise boxes onto a lattice.

    ``materials`` maps names to :class:`Material`. When ``dims`` is omitted
    the lattice is the bounding box of all primitives.
    """
    boxes = [b if isinstance(b, Box) else Box(tuple(b["min"]), tuple(b["max"]), b["material"])
             for b in boxes]
    if not boxes:
        raise GridError("geometry has no boxes")
    if dims is None:
        dims = tuple(int(max(b.hi[a] for b in boxes)) for a in range(3))
    dims = tuple(int(d) for d in dims)
    if any(d <= 0 for d in dims):
        raise GridError(f"dims must be positive, got {dims}")

    names = list(materials)
    table = tuple(materials[n] if materials[n].name else
                  Material(materials[n].sigma0, materials[n].lambda_, n) for n in names)
    mat_id = np.full(dims, -1, dtype=np.int32)
    for b in boxes:
        if b.material not in materials:
            raise GridError(f"box references unknown material {b.material!r}")
        lo, hi = np.asarray(b.lo), np.asarray(b.hi)
        if np.any(lo < 0) or np.any(hi > dims) or np.any(hi <= lo):
            raise GridError(f"box {b.lo}..{b.hi} is empty or outside domain {dims}")
        sl = tuple(slice(int(l), int(h)) for l, h in zip(lo, hi))
        mid = names.index(b.material)
        region = mat_id[sl]
        if np.any((region >= 0) & (region != mid)):
            raise GridError(f"box {b.lo}..{b.hi} overlaps a box of another material")
        region[...] = mid
    if not np.any(mat_id >= 0):
        raise GridError("geometry has zero non-empty voxels")
    return VoxelGrid(dims, float(dx), mat_id, table)


@dataclass(frozen=True, eq=False)
class NodeIndex:
    """Canonical face numbering.

    ``face_ids[a]`` has shape ``dims`` with ``+1`` along axis ``a``; entry
    ``[i, j, k]`` is the node on the face between cell ``i-1`` and ``i``
    along that axis, or -1 when neither neighbour is occupied.
    """

    face_ids: tuple[np.ndarray, np.ndarray, np.ndarray]
    M: int

    def key(self, node: int) -> tuple[int, int, int, int]:
        for a, ids in enumerate(self.face_ids):
            hit = np.argwhere(ids == node)
            if len(hit):
                return (a, *map(int, hit[0]))
        raise KeyError(node)

    def boundary_mask(self, grid: VoxelGrid) -> np.ndarray:
        """True for nodes that sit on exactly one non-empty voxel."""
        occ = grid.occupancy
        mask = np.zeros(self.M, dtype=bool)
        for a, ids in enumerate(self.face_ids):
            pad = [(0, 0)] * 3
            pad[a] = (1, 1)
            o = np.pad(occ, pad)
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[a] = slice(0, -1)
            hi[a] = slice(1, None)
            single = o[tuple(lo)] ^ o[tuple(hi)]
            mask[ids[single]] = True
        return mask


def build_nodes(grid: VoxelGrid) -> NodeIndex:
    occ = grid.occupancy
    ids = []
    start = 0
    for a in range(3):
        pad = [(0, 0)] * 3
        pad[a] = (1, 1)
        o = np.pad(occ, pad)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        exists = o[tuple(lo)] | o[tuple(hi)]
        f = np.full(exists.shape, -1, dtype=np.int64)
        n = int(exists.sum())
        f[exists] = np.arange(start, start + n)
        f.setflags(write=False)
        ids.append(f)
        start += n
    return NodeIndex(tuple(ids), start)


def node_count(grid: VoxelGrid) -> int:
    return build_nodes(grid).M


def unknown_count(grid: VoxelGrid) -> int:
    return 5 * grid.K + node_count(grid)


def voxel_face_nodes(grid: VoxelGrid, nodes: NodeIndex) -> np.ndarray:
    """(K, 3, 2) node ids of the (-, +) faces of every voxel along x, y, z."""
    v = grid.voxels
    out = np.empty((grid.K, 3, 2), dtype=np.int64)
    for a in range(3):
        plus = v.copy()
        plus[:, a] += 1
        out[:, a, 0] = nodes.face_ids[a][tuple(v.T)]
        out[:, a, 1] = nodes.face_ids[a][tuple(plus.T)]
    return out


def build_incidence(grid: VoxelGrid, nodes: NodeIndex | None = None) -> sp.csr_matrix:
    """M x 5K incidence matrix of outward face fluxes.

    Column ``b*K + k`` belongs to basis ``BASES[b]`` of voxel ``k``.
    """
    if grid.K < 1:
        raise GridError("grid has no voxels")
    nodes = nodes or build_nodes(grid)
    K = grid.K
    faces = voxel_face_nodes(grid, nodes)
    rows, cols, vals = [], [], []
    for b, name in enumerate(BASES):
        for a in range(3):
            for side in range(2):
                c = FLUX_TABLE[name][a][side]
                if c == 0.0:
                    continue
                rows.append(faces[:, a, side])
                cols.append(b * K + np.arange(K))
                vals.append(np.full(K, c))
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nodes.M, 5 * K))
    return A.tocsr()


@dataclass(frozen=True)
class PortSpec:
    name: str
    plus: np.ndarray
    minus: np.ndarray

    def __post_init__(self):
        if len(self.plus) == 0 or len(self.minus) == 0:
            raise GridError(f"port {self.name!r}: empty terminal")
        if np.intersect1d(self.plus, self.minus).size:
            raise GridError(f"port {self.name!r}: terminals overlap")


def terminal_nodes(grid: VoxelGrid, nodes: NodeIndex, axis, side, lo, hi) -> np.ndarray:
    """Boundary face nodes on the ``side`` ('+' or '-') of the occupied
    voxels inside the box ``lo..hi`` (exclusive)."""
    a = AXES.index(axis) if isinstance(axis, str) else int(axis)
    if side not in ("+", "-"):
        raise GridError(f"terminal side must be '+' or '-', got {side!r}")
    sl = tuple(slice(int(l), int(h)) for l, h in zip(lo, hi))
    vox = np.argwhere(grid.occupancy[sl]) + np.asarray(lo)
    if len(vox) == 0:
        raise GridError(f"terminal box {lo}..{hi} contains no voxels")
    if side == "+":
        vox[:, a] += 1
    ids = nodes.face_ids[a][tuple(vox.T)]
    boundary = nodes.boundary_mask(grid)
    if not np.all(boundary[ids]):
        raise GridError(f"terminal box {lo}..{hi} side {axis}{side} includes interior faces")
    return np.unique(ids)
