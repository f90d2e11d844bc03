"""Algebraic iterative reconstruction with unmatched projector/backprojector pairs.

The package is organized in five layers:

* :mod:`unmatched.operators` -- action-only linear maps, dense/sparse
  realizations, unmatched pairs with MVM accounting, damped augmentation.
* :mod:`unmatched.solvers` -- the plain and shifted relaxed iterations with
  convergence histories, plus the sharp relaxation-parameter bounds.
* :mod:`unmatched.spectral` -- matrix-free leftmost-eigenvalue estimation
  (restarted Krylov-Schur and a numerical-range variant) and shift selection.
* :mod:`unmatched.oracle` -- dense desk-scale ground truth: oblique
  projectors/pseudoinverses, fixed-point identities, perturbation bounds.
* :mod:`unmatched.problems` -- generated test problems (ill-posed matrices,
  mismatched parallel-beam CT, phantom, noise).

:mod:`unmatched.experiments` and :mod:`unmatched.cli` assemble these into
reproducible end-to-end runs (`unmatched gen/estimate/solve/trials/scaling/verify`).
"""

from . import mmio, operators, oracle, problems, solvers, spectral
from .operators import (
    DenseMatrix,
    LinearMap,
    ShapeError,
    SparseMatrix,
    UnmatchedPair,
    augment,
    augment_rhs,
)
from .solvers import (
    InfeasibleSpectrumError,
    IterationConfig,
    IterationHistory,
    SolveResult,
    iterate,
    iterate_shifted,
    landweber,
    max_omega,
    max_omega_shifted,
    select_omega,
)
from .spectral import (
    EigEstimate,
    EstimatorConfig,
    KrylovDecomposition,
    arnoldi_expand,
    dense_leftmost,
    fov_leftmost,
    krylov_schur_leftmost,
    select_shift,
)

__version__ = "0.1.0"

__all__ = [
    "DenseMatrix",
    "EigEstimate",
    "EstimatorConfig",
    "InfeasibleSpectrumError",
    "IterationConfig",
    "IterationHistory",
    "KrylovDecomposition",
    "LinearMap",
    "ShapeError",
    "SolveResult",
    "SparseMatrix",
    "UnmatchedPair",
    "arnoldi_expand",
    "augment",
    "augment_rhs",
    "dense_leftmost",
    "fov_leftmost",
    "iterate",
    "iterate_shifted",
    "krylov_schur_leftmost",
    "landweber",
    "max_omega",
    "max_omega_shifted",
    "mmio",
    "operators",
    "oracle",
    "problems",
    "select_omega",
    "select_shift",
    "solvers",
    "spectral",
]
