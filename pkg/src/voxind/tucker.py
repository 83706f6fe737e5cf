"""Tucker (HOSVD) compression of 3-D arrays and the on-disk kernel cache."""
from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernels import BLOCK_TAGS, BLOCKS, ToeplitzKernelSet, assemble_toeplitz

DEFAULT_TOL = 1e-8
DEFAULT_NMAX = 128

CACHE_MAGIC = b"SVXT"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIdQQQI")
_BLOCK_HEAD = struct.Struct("<2sQQQ")


class CacheError(RuntimeError):
    pass


class CacheTooSmall(CacheError):
    pass


@dataclass(frozen=True, eq=False)
class TuckerTensor:
    core: np.ndarray
    factors: tuple[np.ndarray, np.ndarray, np.ndarray]
    shape: tuple[int, int, int]
    tol: float = 0.0

    @property
    def ranks(self) -> tuple[int, int, int]:
        return tuple(self.core.shape)

    @property
    def size(self) -> int:
        """Stored values: core plus factor matrices."""
        return self.core.size + sum(f.size for f in self.factors)

    @property
    def compression_ratio(self) -> float:
        return math.prod(self.shape) / self.size

    def full(self, rows=None) -> np.ndarray:
        """Dense array, or only the mode-0 slab ``rows`` (a slice)."""
        if rows is None:
            return reconstruct(self)
        F0 = self.factors[0][rows]
        return reconstruct(TuckerTensor(self.core, (F0,) + tuple(self.factors[1:]),
                                        (F0.shape[0],) + tuple(self.shape[1:])))


def mode_product(tensor, matrix, mode):
    """i-mode product: contracts ``tensor`` axis ``mode`` with the columns of
    ``matrix``; the result has ``matrix.shape[0]`` entries along that axis."""
    tensor = np.asarray(tensor)
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[1] != tensor.shape[mode]:
        raise ValueError(f"factor of shape {matrix.shape} does not match "
                         f"extent {tensor.shape[mode]} along mode {mode}")
    out = np.tensordot(matrix, tensor, axes=(1, mode))
    return np.moveaxis(out, 0, mode)


def unfold(tensor, mode):
    return np.moveaxis(tensor, mode, 0).reshape(tensor.shape[mode], -1)


def _truncation_rank(sv, total_norm, tol):
    """Smallest rank whose discarded singular values all fall below
    ``tol/sqrt(3)`` relative to the largest and whose discarded energy
    stays below ``tol/sqrt(3)`` of the tensor norm."""
    thr = tol / math.sqrt(3.0)
    rel = sv / sv[0]
    above = np.flatnonzero(rel >= thr)
    d_peak = int(above[-1]) + 1 if len(above) else 1
    tail = np.sqrt(np.cumsum((sv**2)[::-1])[::-1])  # tail[k] = ||sv[k:]||
    ok = np.flatnonzero(tail <= thr * total_norm)
    d_energy = int(ok[0]) if len(ok) else len(sv)
    return max(1, d_peak, d_energy)


def _fix_signs(u):
    idx = np.argmax(np.abs(u), axis=0)
    s = np.sign(u[idx, np.arange(u.shape[1])])
    s[s == 0] = 1.0
    return u * s


def tucker_svd(tensor, tol=DEFAULT_TOL) -> TuckerTensor:
    """Truncated higher-order SVD of a real 3-D array.

    The factor for each mode comes from the SVD of that mode's unfolding of
    the input; the core is the input projected onto all three factors.
    Relative Frobenius reconstruction error is at most ``tol``.
    """
    O = np.asarray(tensor, dtype=float)
    if O.ndim != 3 or O.size == 0:
        raise ValueError("tucker_svd expects a non-empty 3-D array")
    if tol <= 0:
        raise ValueError("tol must be positive")
    shape = tuple(O.shape)
    norm = np.linalg.norm(O)
    if norm == 0.0:
        factors = tuple(np.eye(D, 1) for D in shape)
        return TuckerTensor(np.zeros((1, 1, 1)), factors, shape, tol)
    factors = []
    C = O
    for i in range(3):
        u, sv, _ = np.linalg.svd(unfold(O, i), full_matrices=False)
        d = _truncation_rank(sv, norm, tol)
        F = _fix_signs(u[:, :d])
        factors.append(np.ascontiguousarray(F))
        C = mode_product(C, F.T, i)
    return TuckerTensor(np.ascontiguousarray(C), tuple(factors), shape, tol)


def reconstruct(t: TuckerTensor) -> np.ndarray:
    out = t.core
    for i, F in enumerate(t.factors):
        out = mode_product(out, F, i)
    return out


@dataclass(frozen=True, eq=False)
class ComplexTucker:
    """Real and imaginary parts compressed separately; ``None`` for a part
    that is identically zero."""

    real: TuckerTensor | None
    imag: TuckerTensor | None
    shape: tuple[int, int, int]

    @property
    def size(self) -> int:
        return sum(p.size for p in (self.real, self.imag) if p is not None)

    def full(self, rows=None) -> np.ndarray:
        n0 = len(range(*rows.indices(self.shape[0]))) if rows is not None else self.shape[0]
        out = np.zeros((n0,) + tuple(self.shape[1:]), dtype=complex)
        if self.real is not None:
            out.real = self.real.full(rows)
        if self.imag is not None:
            out.imag = self.imag.full(rows)
        return out


def compress_complex(arr, tol=DEFAULT_TOL, zero_floor=1e-14) -> ComplexTucker:
    arr = np.asarray(arr)
    total = np.linalg.norm(arr)
    parts = []
    for part in (arr.real, arr.imag):
        n = np.linalg.norm(part)
        if n <= zero_floor * total:
            parts.append(None)
        else:
            # per-part tolerance keeps the combined relative error within tol
            parts.append(tucker_svd(part, tol * total / (n * math.sqrt(2.0))))
    return ComplexTucker(parts[0], parts[1], tuple(arr.shape))


# ---------------------------------------------------------------------------
# kernel cache

def _pack_matrix(a):
    return np.asarray(a, "<f8").tobytes(order="F")


def cache_write(kernels: ToeplitzKernelSet | None, nmax, tol, path):
    """Compress unit-edge Toeplitz kernels of an ``nmax`` domain to ``path``.

    ``kernels`` may be None, in which case they are assembled here. Returns
    the per-block Tucker tensors.
    """
    nmax = (int(nmax),) * 3 if np.isscalar(nmax) else tuple(int(n) for n in nmax)
    if kernels is None:
        kernels = assemble_toeplitz(nmax, 1.0)
    if kernels.dx != 1.0:
        kernels = kernels.scaled(1.0)
    if tuple(kernels.dims) != nmax:
        raise CacheError(f"kernel dims {kernels.dims} differ from nmax {nmax}")
    payload = bytearray(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, float(tol), *nmax, len(BLOCKS)))
    tensors = {}
    for blk in BLOCKS:
        t = tucker_svd(kernels.data[blk], tol)
        tensors[blk] = t
        tag = BLOCK_TAGS[blk].to_bytes(2, "little")
        payload += _BLOCK_HEAD.pack(tag, *t.ranks)
        for F in t.factors:
            payload += _pack_matrix(F)
        payload += _pack_matrix(t.core)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(bytes(payload) + struct.pack("<I", crc))
    return tensors


def cache_info(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + 4:
        raise CacheError("cache file truncated")
    magic, version, tol, n1, n2, n3, nblk = _HEADER.unpack_from(raw, 0)
    if magic != CACHE_MAGIC:
        raise CacheError("not a kernel cache (bad magic)")
    if version != CACHE_VERSION:
        raise CacheError(f"cache format version {version}, expected {CACHE_VERSION}")
    payload, crc = raw[:-4], struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CacheError("cache checksum mismatch")
    return {"tol": tol, "nmax": (n1, n2, n3), "blocks": nblk, "payload": payload}


def cache_load(path):
    """Per-block Tucker tensors stored in a cache file."""
    info = cache_info(path)
    payload = info["payload"]
    nmax = info["nmax"]
    tags = {v: k for k, v in BLOCK_TAGS.items()}
    pos = _HEADER.size
    tensors = {}
    for _ in range(info["blocks"]):
        tag, r1, r2, r3 = _BLOCK_HEAD.unpack_from(payload, pos)
        pos += _BLOCK_HEAD.size
        ranks = (r1, r2, r3)
        factors = []
        for D, d in zip(nmax, ranks):
            n = D * d
            factors.append(np.frombuffer(payload, "<f8", n, pos).reshape((D, d), order="F").copy())
            pos += 8 * n
        n = math.prod(ranks)
        core = np.frombuffer(payload, "<f8", n, pos).reshape(ranks, order="F").copy()
        pos += 8 * n
        blk = tags[int.from_bytes(tag, "little")]
        tensors[blk] = TuckerTensor(core, tuple(factors), tuple(nmax), info["tol"])
    if pos != len(payload):
        raise CacheError("cache payload has trailing bytes")
    return tensors, info


def cache_read(path, dims, dx) -> ToeplitzKernelSet:
    """Restore, trim to ``dims`` and rescale by ``dx**5``."""
    tensors, info = cache_load(path)
    dims = tuple(int(d) for d in dims)
    if any(d > n for d, n in zip(dims, info["nmax"])):
        raise CacheTooSmall(f"cache too small: built for {info['nmax']}, requested {dims}; "
                            f"rebuild with a larger --nmax")
    if set(tensors) != set(BLOCKS):
        raise CacheError("cache is missing kernel blocks")
    scale = float(dx) ** 5
    data = {}
    for blk, t in tensors.items():
        # trimming the factor rows first restores only the needed entries
        trimmed = TuckerTensor(t.core, tuple(F[:d] for F, d in zip(t.factors, dims)), dims)
        data[blk] = reconstruct(trimmed) * scale
    return ToeplitzKernelSet(dims, float(dx), data)
