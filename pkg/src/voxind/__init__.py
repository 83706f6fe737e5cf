"""FFT-accelerated volume-integral inductance extraction for voxelized
superconducting structures."""
from .voxgrid import (Box, GridError, Material, NodeIndex, PortSpec, VoxelGrid, build_grid,
                      build_incidence, build_nodes, terminal_nodes)
from .kernels import MU0, ToeplitzKernelSet, assemble_toeplitz, galerkin_integral, two_fluid_coeffs
from .tucker import TuckerTensor, cache_read, cache_write, mode_product, reconstruct, tucker_svd
from .opfft import CirculantOperator, apply_system, embed_and_fft
from .precond import SchurPreconditioner, amg_cg_solve, apply_precond, build_precond
from .solve import (SolveConfig, SolveReport, build_excitation, extract, extract_inductance, gmres,
                    relative_difference, setup_problem)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "GridError",
    "Material",
    "NodeIndex",
    "PortSpec",
    "VoxelGrid",
    "build_grid",
    "build_incidence",
    "build_nodes",
    "terminal_nodes",
    "MU0",
    "ToeplitzKernelSet",
    "assemble_toeplitz",
    "galerkin_integral",
    "two_fluid_coeffs",
    "TuckerTensor",
    "cache_read",
    "cache_write",
    "mode_product",
    "reconstruct",
    "tucker_svd",
    "CirculantOperator",
    "apply_system",
    "embed_and_fft",
    "SchurPreconditioner",
    "amg_cg_solve",
    "apply_precond",
    "build_precond",
    "SolveConfig",
    "SolveReport",
    "build_excitation",
    "extract",
    "extract_inductance",
    "gmres",
    "relative_difference",
    "setup_problem",
]
