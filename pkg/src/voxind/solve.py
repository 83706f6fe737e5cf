"""Port excitation, restarted GMRES and inductance extraction.

Port terminals are held at fixed potentials (+1/2 V on the positive
terminal, -1/2 V on the negative one, 0 V on terminals of undriven ports)
and eliminated from the unknowns, so their contribution moves to the
right-hand side. Floating conductors that touch no terminal are grounded
at one node to remove the constant-potential null space.

The potential unknowns follow the ``[Z, -A^T; A, 0]`` block convention
with an outward-flux incidence matrix, which makes them the negated
physical potential.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

from .kernels import MU0, ToeplitzKernelSet, assemble_toeplitz
from .opfft import CirculantOperator, apply_system, embed_and_fft
from .precond import build_precond
from .voxgrid import NodeIndex, PortSpec, VoxelGrid, build_incidence, build_nodes

log = logging.getLogger(__name__)


@dataclass
class SolveConfig:
    rre: float = 1e-8
    restart: int = 50
    max_iters: int = 2000
    freqs: tuple = (1e9,)
    tucker_tol: float = 1e-8
    compress: bool = True
    schur: str = "amg"
    schur_tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.rre < 1:
            raise ValueError("rre must lie in (0, 1)")
        if self.restart < 1:
            raise ValueError("restart must be >= 1")


@dataclass(eq=False)
class Problem:
    """Grid, ports and the reduced incidence matrix over free nodes."""

    grid: VoxelGrid
    ports: list
    nodes: NodeIndex
    A_full: sp.csr_matrix
    pinned: np.ndarray          # terminal nodes (sorted)
    grounded: np.ndarray        # extra nodes fixed at 0 V
    free: np.ndarray            # remaining potential unknowns
    A: sp.csr_matrix            # rows of A_full for free nodes

    @property
    def n_current(self):
        return 5 * self.grid.K

    @property
    def N(self):
        return self.n_current + len(self.free)


def setup_problem(grid: VoxelGrid, ports) -> Problem:
    ports = list(ports)
    nodes = build_nodes(grid)
    A_full = build_incidence(grid, nodes)
    pinned = np.unique(np.concatenate([np.concatenate([p.plus, p.minus]) for p in ports])) \
        if ports else np.zeros(0, dtype=np.int64)
    # node connectivity through shared voxels
    B = abs(A_full).astype(bool).astype(float)
    ncomp, labels = csgraph.connected_components(B @ B.T, directed=False)
    has_pin = np.zeros(ncomp, dtype=bool)
    has_pin[labels[pinned]] = True
    grounded = np.array([np.flatnonzero(labels == c)[0] for c in range(ncomp) if not has_pin[c]],
                        dtype=np.int64)
    fixed = np.union1d(pinned, grounded)
    free = np.setdiff1d(np.arange(nodes.M), fixed)
    return Problem(grid, ports, nodes, A_full, pinned, grounded, free, A_full[free].tocsr())


def terminal_potentials(problem: Problem, driven: int | None):
    """Physical potential of every pinned node for a drive of port ``driven``."""
    phi = np.zeros(problem.nodes.M)
    if driven is not None:
        port = problem.ports[driven]
        phi[port.plus] = 0.5
        phi[port.minus] = -0.5
    return phi


def build_excitation(problem: Problem, driven: int):
    """Right-hand side ``[V; 0]`` for a unit voltage across port ``driven``."""
    if not problem.ports:
        raise ValueError("no ports defined: the excitation would be zero")
    phi = terminal_potentials(problem, driven)
    # system potentials are the negated physical ones
    V = -(problem.A_full[problem.pinned].T @ phi[problem.pinned])
    rhs = np.zeros(problem.N, dtype=complex)
    rhs[:problem.n_current] = V
    return rhs


def port_current(problem: Problem, I, port: PortSpec):
    """Current entering the conductor through the positive terminal."""
    return -np.sum((problem.A_full[port.plus] @ I))


@dataclass
class GmresResult:
    x: np.ndarray
    converged: bool
    iterations: int
    history: list
    residual: float


def gmres(matvec, rhs, precond=None, x0=None, rre=1e-8, restart=50, max_iters=2000):
    """Left-preconditioned restarted GMRES.

    Convergence is declared when ``||P(b - A x)|| <= rre * ||P b||``.
    ``history`` holds the relative preconditioned residual after every
    inner iteration (index 0 is the initial residual).
    """
    P = precond if precond is not None else (lambda v: v)
    b = np.asarray(rhs, dtype=complex)
    n = len(b)
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    pb = P(b)
    bnorm = np.linalg.norm(pb)
    if bnorm == 0:
        return GmresResult(np.zeros(n, dtype=complex), True, 0, [0.0], 0.0)
    r = P(b - matvec(x)) if x0 is not None else pb
    beta = np.linalg.norm(r)
    history = [beta / bnorm]
    best_x, best_res = x.copy(), beta / bnorm
    current = best_res
    it = 0
    while current > rre and it < max_iters:
        m = restart
        V = np.zeros((m + 1, n), dtype=complex)
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m, dtype=complex)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        g[0] = beta
        V[0] = r / beta
        j = 0
        for j in range(m):
            w = P(matvec(V[j]))
            for i in range(j + 1):
                H[i, j] = np.vdot(V[i], w)
                w = w - H[i, j] * V[i]
            # one reorthogonalisation pass keeps the basis orthonormal
            for i in range(j + 1):
                h = np.vdot(V[i], w)
                H[i, j] += h
                w = w - h * V[i]
            hnext = np.linalg.norm(w)
            H[j + 1, j] = hnext
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + np.conj(cs[i]) * H[i + 1, j]
                H[i, j] = t
            a, bb = H[j, j], H[j + 1, j]
            den = math.hypot(abs(a), abs(bb))
            if den == 0:
                cs[j], sn[j] = 1.0, 0.0
            elif abs(a) == 0:
                cs[j], sn[j] = 0.0, 1.0
            else:
                cs[j] = abs(a) / den
                sn[j] = (a / abs(a)) * np.conj(bb) / den
            H[j, j] = cs[j] * a + sn[j] * bb
            H[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            it += 1
            history.append(abs(g[j + 1]) / bnorm)
            # hnext == 0 is a lucky breakdown: the Krylov space is invariant
            if history[-1] <= rre or it >= max_iters or hnext == 0:
                break
            V[j + 1] = w / hnext
        k = j + 1
        y = np.linalg.solve(np.triu(H[:k, :k]), g[:k])
        x = x + V[:k].T @ y
        r = P(b - matvec(x))
        beta = np.linalg.norm(r)
        current = beta / bnorm
        if current < best_res:
            best_x, best_res = x.copy(), current
        if current <= rre:
            return GmresResult(x, True, it, history, current)
        if beta == 0:
            break
    return GmresResult(best_x, best_res <= rre, it, history, best_res)


@dataclass
class SolveReport:
    freqs: list
    ports: list
    rre: float = 1e-8
    impedance: list = field(default_factory=list)   # per freq: P x P complex
    inductance: list = field(default_factory=list)  # per freq: P x P
    resistance: list = field(default_factory=list)
    iterations: list = field(default_factory=list)  # per freq: per driven port
    histories: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    converged: bool = True
    currents: dict = field(default_factory=dict)    # (freq index, port) -> I
    stats: dict = field(default_factory=dict)


def current_density(grid: VoxelGrid, I):
    """Current density vector at every voxel centre (A/m^2), shape (K, 3)."""
    K = grid.K
    return np.stack([I[0:K], I[K:2 * K], I[2 * K:3 * K]], axis=1) / grid.dx**2


def relative_difference(ref, other):
    """``|ref - other| / |ref|``."""
    if ref == 0:
        raise ValueError("reference value is zero")
    return abs(ref - other) / abs(ref)


def extract_inductance(problem: Problem, I, port: PortSpec, omega, voltage=1.0):
    """(L, R) seen at a single driven port with the given drive voltage."""
    Ip = port_current(problem, I, port)
    if abs(Ip) < 1e-300:
        raise ValueError("port current is zero: open port")
    Zp = voltage / Ip
    return Zp.imag / omega, Zp.real


def solve_frequency(problem: Problem, op: CirculantOperator, config: SolveConfig, pc=None):
    """Drive every port in turn; returns the port impedance matrix and run data."""
    if pc is None:
        pc = build_precond(op, problem.A, config.schur, config.schur_tol)
    P = len(problem.ports)
    Y = np.zeros((P, P), dtype=complex)
    runs = []
    for p in range(P):
        rhs = build_excitation(problem, p)
        res = gmres(lambda v: apply_system(op, problem.A, v), rhs, pc.apply,
                    rre=config.rre, restart=config.restart, max_iters=config.max_iters)
        I = res.x[:problem.n_current]
        for q, port in enumerate(problem.ports):
            Y[q, p] = port_current(problem, I, port)
        runs.append(res)
    Z = np.linalg.inv(Y)
    return Z, runs, pc


def load_kernels(grid: VoxelGrid, cache=None) -> ToeplitzKernelSet:
    if cache is not None:
        from .tucker import cache_read
        return cache_read(cache, grid.dims, grid.dx)
    return assemble_toeplitz(grid.dims, grid.dx)


def extract(grid: VoxelGrid, ports, config: SolveConfig | None = None, kernels=None,
            cache=None, mu=MU0, keep_currents=False) -> SolveReport:
    """Full pipeline: kernels, operator, preconditioner and GMRES per frequency."""
    config = config or SolveConfig()
    problem = setup_problem(grid, ports)
    t0 = time.perf_counter()
    if kernels is None:
        kernels = load_kernels(grid, cache)
    t_kernels = time.perf_counter() - t0
    report = SolveReport(list(config.freqs), [p.name for p in problem.ports], config.rre)
    timings = {"toeplitz": t_kernels, "circulant": 0.0, "precond": 0.0, "iterative": 0.0}
    for fi, f in enumerate(config.freqs):
        omega = 2 * math.pi * f
        t0 = time.perf_counter()
        op = embed_and_fft(kernels, grid, omega, mu, compress=config.compress, tol=config.tucker_tol)
        timings["circulant"] += time.perf_counter() - t0
        t0 = time.perf_counter()
        pc = build_precond(op, problem.A, config.schur, config.schur_tol)
        timings["precond"] += time.perf_counter() - t0
        t0 = time.perf_counter()
        Z, runs, pc = solve_frequency(problem, op, config, pc)
        timings["iterative"] += time.perf_counter() - t0
        report.impedance.append(Z)
        report.inductance.append(Z.imag / omega)
        report.resistance.append(Z.real)
        report.iterations.append([r.iterations for r in runs])
        report.histories.append([r.history for r in runs])
        report.residuals.append([r.residual for r in runs])
        for p, r in enumerate(runs):
            if not r.converged:
                report.converged = False
                log.warning("port %s at %.3g Hz did not converge (residual %.2e)",
                            problem.ports[p].name, f, r.residual)
            if keep_currents:
                report.currents[(fi, p)] = r.x
        report.stats.setdefault("compression_ratio", op.stats["compression_ratio"])
        report.stats.setdefault("circulant_bytes", op.memory_bytes())
        report.stats.setdefault("circulant_dense_bytes", op.dense_memory_bytes())
        report.stats.setdefault("schur_bytes", pc.stats["memory_bytes"])
        report.stats.setdefault("schur_setup_time", pc.stats["setup_time"])
        if op.compressed:
            report.stats["restore_time"] = op.stats.get("restore_time", 0.0)
    report.stats.update({"N": problem.N, "K": grid.K, "Kt": grid.Kt, "M": problem.nodes.M,
                         "timings": timings})
    report.problem = problem
    return report
