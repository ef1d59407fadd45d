"""Numerical laboratory for rough singular integrals on homogeneous groups."""

import os

# Prefer the OpenMP layer; numba falls back to the others if it is missing.
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp tbb workqueue")

from .groups import GroupStructure, abelian, heisenberg, product, check_axioms, estimate_A0  # noqa: E402
from .grid import GridFunction, Lattice, convolve, interpolate, lq_norm, reflect, scale  # noqa: E402
from .kernels import KernelSpec, RadialFactor, build_K0, hilbert_kernel  # noqa: E402
from .decomposition import CutoffPhi, Decomposition, LinearOperatorHandle, NSchedule  # noqa: E402
from .norms import EstimateReport, decay_fit, l2_opnorm, sharpness_probe, weighted_norm_lower  # noqa: E402
from .weights import BallSampler, WeightGrid, power_weight  # noqa: E402
from .biparam import BiDecomposition, BiKernelSpec, ProductGroup, ProductWeight  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "GroupStructure", "abelian", "heisenberg", "product", "check_axioms", "estimate_A0",
    "GridFunction", "Lattice", "convolve", "interpolate", "lq_norm", "reflect", "scale",
    "KernelSpec", "RadialFactor", "build_K0", "hilbert_kernel",
    "CutoffPhi", "Decomposition", "LinearOperatorHandle", "NSchedule",
    "EstimateReport", "decay_fit", "l2_opnorm", "sharpness_probe", "weighted_norm_lower",
    "BallSampler", "WeightGrid", "power_weight",
    "BiDecomposition", "BiKernelSpec", "ProductGroup", "ProductWeight",
]
