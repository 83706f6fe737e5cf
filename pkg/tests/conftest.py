import numpy as np
import pytest
import scipy.fft as sfft

from voxind.kernels import assemble_toeplitz, block_parity
from voxind.opfft import embed

_KERNELS = {}


def cube_kernels(n):
    """Unit-edge kernels of an n^3 cube, assembled once per session."""
    if n not in _KERNELS:
        _KERNELS[n] = assemble_toeplitz((n, n, n))
    return _KERNELS[n]


def circulant_xx(n):
    """FFT-domain (x,x) circulant tensor of an n^3 cube (real: even kernel)."""
    k = cube_kernels(n).data[("x", "x")]
    return sfft.fftn(embed(k, block_parity(("x", "x")))).real


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_RESULTS = []


def record(number, name, passed, detail):
    """Note an acceptance outcome for the terminal summary."""
    _RESULTS.append((number, name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_RESULTS):
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}")
