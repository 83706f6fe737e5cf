"""How well the FFT-domain interaction tensors compress.

For cubes of growing size the (x,x) circulant tensor is Tucker-compressed
at two tolerances. The compressed fraction falls quickly with size while
the multilinear rank grows only slowly, which is what makes storing the
tensors compressed and restoring them slab by slab affordable. The
restore-to-convolution time ratio is printed too.

    python3 demos/compression_study.py
"""
import time

import numpy as np
import scipy.fft as sfft

from voxind.kernels import assemble_toeplitz, block_parity
from voxind.opfft import embed, embed_and_fft
from voxind.tucker import reconstruct, tucker_svd
from voxind.voxgrid import Box, Material, build_grid


def main():
    for n in (8, 16, 32):
        k = assemble_toeplitz((n, n, n))
        T = sfft.fftn(embed(k.data[("x", "x")], block_parity(("x", "x")))).real
        for tol in (1e-4, 1e-8):
            t = tucker_svd(T, tol)
            err = np.linalg.norm(reconstruct(t) - T) / np.linalg.norm(T)
            print(f"n = {n:2d}  tol {tol:.0e}: ranks {t.ranks}, "
                  f"size {t.size / T.size:.4f} of dense, error {err:.1e}")
        g = build_grid([Box((0, 0, 0), (n, n, n), "nb")], 1e-7, {"nb": Material(0.0, 9e-8)})
        op = embed_and_fft(k.scaled(g.dx), g, 2 * np.pi * 1e9)
        cop = embed_and_fft(k.scaled(g.dx), g, 2 * np.pi * 1e9, compress=True)
        v = np.ones(5 * g.K, complex)
        op.apply_Z(v)
        t0 = time.perf_counter()
        op.apply_Z(v)
        conv = time.perf_counter() - t0
        t0 = time.perf_counter()
        for blk in cop.blocks.values():
            blk.full()
        restore = time.perf_counter() - t0
        print(f"          all blocks: compression ratio {cop.stats['compression_ratio']:.1f}, "
              f"restore/convolution {restore / conv:.2f}")


if __name__ == "__main__":
    main()
