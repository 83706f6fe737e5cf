"""FFT-accelerated impedance operator and the saddle-point matvec."""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .kernels import BLOCKS, MU0, ToeplitzKernelSet, block_parity, diagonal_terms, resolve_block
from .tucker import DEFAULT_TOL, compress_complex
from .voxgrid import BASES, VoxelGrid


def embed(kernel, parity):
    """Circulant embedding of a non-negative-octant Toeplitz kernel.

    Output has twice the extent per axis; index ``2K - m`` holds offset
    ``-m`` (signed by ``parity``) and index ``K`` is zero padding.
    """
    out = np.asarray(kernel, dtype=float)
    for a, K in enumerate(kernel.shape):
        idx = np.concatenate([np.arange(K), [0], np.arange(K - 1, 0, -1)])
        sign = np.concatenate([np.ones(K), [0.0], np.full(K - 1, float(parity[a]))])
        shape = [1, 1, 1]
        shape[a] = 2 * K
        out = np.take(out, idx, axis=a) * sign.reshape(shape)
    return out


SLAB_ELEMENTS = 1 << 15

# stored blocks with diagonal ones first, so each accumulator is initialised
# before any off-diagonal contribution lands in it
_ORDER = sorted(BLOCKS, key=lambda blk: blk[0] != blk[1])
_PAIRS = [(BASES.index(b), BASES.index(a), int(np.prod(block_parity((b, a))))) for b, a in _ORDER]


def padded_fft_inplace(buf, dims):
    """FFT of a padded buffer whose data sits in the leading ``dims`` block.

    Axes are transformed one at a time so all-zero lines are skipped; the
    buffer is overwritten with the spectrum.
    """
    n0, n1, n2 = dims
    sfft.fft(buf[:, :n1, :n2], axis=0, overwrite_x=True)
    sfft.fft(buf[:, :, :n2], axis=1, overwrite_x=True)
    sfft.fft(buf, axis=2, overwrite_x=True)
    return buf


def cropped_ifft_inplace(buf, dims):
    """Inverse FFT of a padded spectrum; only the leading ``dims`` block is
    computed and returned (as a view into the overwritten buffer)."""
    n0, n1, n2 = dims
    sfft.ifft(buf, axis=2, overwrite_x=True)
    sfft.ifft(buf[:, :, :n2], axis=1, overwrite_x=True)
    sfft.ifft(buf[:, :n1, :n2], axis=0, overwrite_x=True)
    return buf[:n0, :n1, :n2]


@dataclass(eq=False)
class CirculantOperator:
    """Impedance operator ``Z`` acting on the 5K current coefficients."""

    grid: VoxelGrid
    omega: float
    mu: float
    z: dict                      # basis -> complex (K,) conduction terms
    self_terms: dict             # basis -> complex Green term at zero offset
    blocks: dict                 # stored block -> complex FFT array or ComplexTucker
    compressed: bool = False
    stats: dict = field(default_factory=dict)
    _local: threading.local = field(default_factory=threading.local, repr=False)

    @property
    def padded_dims(self):
        return tuple(2 * d for d in self.grid.dims)

    @property
    def K(self):
        return self.grid.K

    def scatter(self, v):
        out = np.zeros(self.padded_dims, dtype=complex)
        out[tuple(self.grid.voxels.T)] = v
        return out

    def gather(self, arr):
        return arr[tuple(self.grid.voxels.T)]

    def diagonal(self):
        """Diagonal of Z (length 5K) without dense assembly."""
        return np.concatenate([self.z[b] + self.self_terms[b] for b in BASES])

    def block_array(self, blk, rows=None):
        """FFT-domain array of a stored block (or its mode-0 slab ``rows``);
        compressed blocks are restored on demand."""
        data = self.blocks[blk]
        if self.compressed:
            t0 = time.perf_counter()
            arr = data.full(rows)
            self.stats["restore_time"] = self.stats.get("restore_time", 0.0) + time.perf_counter() - t0
            return arr
        return data if rows is None else data[rows]

    def _slabs(self):
        # keep the blocks, spectra and products of one slab within cache
        P0, P1, P2 = self.padded_dims
        step = max(1, SLAB_ELEMENTS // (P1 * P2))
        return [slice(i, min(i + step, P0)) for i in range(0, P0, step)]

    def _workspace(self):
        # a per-thread buffer: reusing it avoids page-faulting a fresh
        # multi-megabyte array on every product
        ws = getattr(self._local, "ws", None)
        if ws is None:
            ws = self._local.ws = np.empty((len(BASES),) + self.padded_dims, complex)
        return ws

    def apply_Z(self, I):
        I = np.asarray(I, dtype=complex)
        K = self.K
        if I.shape != (5 * K,):
            raise ValueError(f"current vector must have length {5 * K}")
        dims = self.grid.dims
        idx = tuple(self.grid.voxels.T)
        spec = self._workspace()
        spec.fill(0)
        for i in range(len(BASES)):
            spec[i][idx] = I[i * K:(i + 1) * K]
            padded_fft_inplace(spec[i], dims)
        acc = tmp = None
        for rows in self._slabs():
            src = spec[:, rows]
            if acc is None or acc.shape != src.shape:
                acc, tmp = np.empty_like(src), np.empty_like(src[0])
            for (b, a, sign), blk in zip(_PAIRS, _ORDER):
                Zh = self.block_array(blk, rows)
                if a == b:
                    np.multiply(Zh, src[a], out=acc[b])
                    continue
                np.multiply(Zh, src[a], out=tmp)
                acc[b] += tmp
                np.multiply(Zh, src[b], out=tmp)
                if sign > 0:
                    acc[a] += tmp
                else:
                    acc[a] -= tmp
            # the slab's spectrum is no longer needed, so products overwrite it
            src[...] = acc
        out = np.empty(5 * K, dtype=complex)
        for i, b in enumerate(BASES):
            conv = cropped_ifft_inplace(spec[i], dims)
            out[i * K:(i + 1) * K] = self.z[b] * I[i * K:(i + 1) * K] + conv[idx]
        return out

    def memory_bytes(self):
        if self.compressed:
            return 8 * sum(t.size for t in self.blocks.values())
        return sum(a.nbytes for a in self.blocks.values())

    def dense_memory_bytes(self):
        return 16 * len(self.blocks) * int(np.prod(self.padded_dims))


def embed_and_fft(kernels: ToeplitzKernelSet, grid: VoxelGrid, omega, mu=MU0,
                  compress=False, tol=DEFAULT_TOL) -> CirculantOperator:
    if tuple(kernels.dims) != tuple(grid.dims):
        raise ValueError(f"kernel dims {kernels.dims} do not match grid dims {grid.dims}")
    if abs(kernels.dx - grid.dx) > 1e-12 * grid.dx:
        kernels = kernels.scaled(grid.dx)
    pref = 1j * omega * mu / grid.dx**4
    blocks = {}
    stats = {}
    t0 = time.perf_counter()
    for blk in BLOCKS:
        spec = pref * sfft.fftn(embed(kernels.data[blk], block_parity(blk)))
        blocks[blk] = compress_complex(spec, tol) if compress else spec
    stats["setup_time"] = time.perf_counter() - t0
    self_terms = {b: pref * kernels.data[(b, b)][0, 0, 0] for b in BASES}
    op = CirculantOperator(grid, float(omega), float(mu), diagonal_terms(grid, omega, mu),
                           self_terms, blocks, compressed=compress, stats=stats)
    if compress:
        stats["compression_ratio"] = op.dense_memory_bytes() / op.memory_bytes()
    else:
        stats["compression_ratio"] = 1.0
    return op


def apply_system(op: CirculantOperator, A, v):
    """``[Z I - A^T phi ; A I]`` for ``v = [I ; phi]``."""
    n = 5 * op.K
    I, phi = v[:n], v[n:]
    return np.concatenate([op.apply_Z(I) - A.T @ phi, A @ I])


def assemble_dense_Z(grid: VoxelGrid, kernels: ToeplitzKernelSet, omega, mu=MU0):
    """Brute-force dense Z from kernel lookups, for small grids."""
    if abs(kernels.dx - grid.dx) > 1e-12 * grid.dx:
        kernels = kernels.scaled(grid.dx)
    K = grid.K
    pref = 1j * omega * mu / grid.dx**4
    vox = grid.voxels
    Z = np.zeros((5 * K, 5 * K), dtype=complex)
    z = diagonal_terms(grid, omega, mu)
    for bi, beta in enumerate(BASES):
        for ai, alpha in enumerate(BASES):
            res = resolve_block(beta, alpha)
            if res is None:
                continue
            for l in range(K):
                for k in range(K):
                    Z[bi * K + l, ai * K + k] = pref * kernels.value((beta, alpha), vox[l] - vox[k])
        Z[bi * K:(bi + 1) * K, bi * K:(bi + 1) * K] += np.diag(z[beta])
    return Z
