"""Matrix-free leftmost-eigenvalue estimation for composed pair operators.

The composed back-forward operator decides whether the pair iteration can
converge: one eigenvalue with negative real part breaks it.  Only actions
are available (no transposes, no shift-and-invert), so the leftmost
eigenvalue is estimated with restarted Krylov machinery:

* a restarted Schur-based eigensolver that truncates to the leftmost
  Schur vectors each cycle and stops on a cheap residual bound, and
* a fixed-budget variant that runs the same restarts and then reports the
  leftmost point of the projected operator's numerical range, which always
  bounds the leftmost eigenvalue's real part from below.

Both share the Krylov decomposition  op V = V H + h * v * f^H  with a
small dense H that is re-Schur-factorized from scratch every cycle; the
complex Schur form avoids real 2x2-block bookkeeping entirely.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .operators import LinearMap, UnmatchedPair
from .oracle import SIZE_GUARD, DenseSizeError, as_array

#: New basis vectors shorter than this times ||H|| signal an invariant subspace.
BREAKDOWN_TOL = 1e-14


@dataclass
class EstimatorConfig:
    """Subspace dimensions, tolerance, restart budget, and start seed.

    tol is an absolute residual tolerance on ||(op - theta I) v||.
    """

    mindim: int = 30
    maxdim: int = 60
    tol: float = 1e-2
    max_cycles: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.mindim <= 0 or self.maxdim <= 0:
            raise ValueError("subspace dimensions must be positive")
        if not self.mindim < self.maxdim:
            raise ValueError(
                f"mindim must be below maxdim, got {self.mindim} >= {self.maxdim}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_cycles <= 0:
            raise ValueError("max_cycles must be positive")


@dataclass
class KrylovDecomposition:
    """A relation  op V = V H + coupling * residual_direction * f^H.

    basis has orthonormal columns (real until the first restart makes it
    complex); h is the small projected matrix; coupling and f carry the
    rank-one remainder.  A fresh expansion leaves f equal to the last
    standard basis vector.  When ``breakdown`` is set the remainder
    vanished (exact invariant subspace): coupling is 0 and
    residual_direction is a zero vector.
    """

    basis: np.ndarray
    h: np.ndarray
    coupling: complex
    residual_direction: np.ndarray
    f: np.ndarray
    breakdown: bool = False

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def column_residual(self, op: LinearMap, column: int) -> float:
        """Recompute one column of the defining relation; costs one apply.

        Returns ||op(V e_j) - V H e_j - coupling * v * conj(f_j)||.
        """
        v_col = self.basis[:, column]
        lhs = op.apply(v_col)
        rhs = self.basis @ self.h[:, column] \
            + self.coupling * np.conj(self.f[column]) * self.residual_direction
        return float(np.linalg.norm(lhs - rhs))

    def orthonormality_defect(self) -> float:
        v = self.basis
        defect = np.linalg.norm(v.conj().T @ v - np.eye(self.dim), 2)
        if not self.breakdown:
            defect = max(defect, float(np.max(
                np.abs(v.conj().T @ self.residual_direction))))
        return float(defect)


@dataclass
class EigEstimate:
    """A leftmost-eigenvalue estimate with its cost and quality.

    residual is the cheap bound |coupling * f^H c_1| on
    ||(op - theta I) vector||; mvms is the number of forward/back
    applications spent; method is one of ``krylov_schur``, ``fov``,
    ``dense_oracle``.  seed records the start-vector generator.
    ritz_values holds the full spectrum of the final projected matrix
    (or the exact spectrum for the dense oracle), sorted leftmost-first;
    relaxation-parameter bounds are evaluated over it.
    """

    theta: complex
    vector: Optional[np.ndarray]
    residual: float
    mvms: int
    converged: bool
    method: str
    seed: Optional[int] = None
    ritz_values: Optional[np.ndarray] = None


def _leftmost_key(lam):
    # nondecreasing real part; ties: smaller |Im| first, then Im >= 0
    return (lam.real, abs(lam.imag), 0.0 if lam.imag >= 0 else 1.0)


def ordered_schur_leftmost(h) -> tuple:
    """Complex Schur form S = Q^H H Q with the diagonal sorted leftmost-first.

    Recomputed from scratch (zgees, then a selection sort of the diagonal
    with unitary similarity swaps).  S is exactly upper triangular and Q
    unitary to machine precision.
    """
    h = np.asarray(h, dtype=complex)
    s, q = scipy.linalg.schur(h, output="complex")
    n = s.shape[0]
    for k in range(n - 1):
        d = np.diag(s)
        j = min(range(k, n), key=lambda i: _leftmost_key(d[i]))
        if j != k:
            s, q, info = lapack.ztrexc(s, q, j + 1, k + 1)
            if info != 0:  # pragma: no cover - ztrexc cannot fail for complex
                raise RuntimeError(f"Schur reordering failed with info={info}")
    return s, q


def _seed_decomposition(start_vector) -> KrylovDecomposition:
    v = np.asarray(start_vector)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("start vector must be nonzero")
    v = v / norm
    n = v.shape[0]
    return KrylovDecomposition(
        basis=np.zeros((n, 0), dtype=v.dtype),
        h=np.zeros((0, 0), dtype=v.dtype),
        coupling=1.0,
        residual_direction=v,
        f=np.zeros(0, dtype=v.dtype),
        breakdown=False,
    )


def arnoldi_expand(op: LinearMap, decomp: Optional[KrylovDecomposition],
                   target_dim: int, start_vector=None) -> KrylovDecomposition:
    """Grow a Krylov decomposition to target_dim by Arnoldi steps.

    Pass ``decomp=None`` with a start vector to build from scratch.  Each
    added dimension applies ``op`` once and reorthogonalizes twice against
    the current basis.  On lucky breakdown (new vector below
    :data:`BREAKDOWN_TOL` times ||H||) the decomposition is returned early
    with ``breakdown=True``: the basis then spans an exact invariant
    subspace.
    """
    if decomp is None:
        if start_vector is None:
            raise ValueError("building from scratch requires a start vector")
        decomp = _seed_decomposition(start_vector)
    n = decomp.residual_direction.shape[0] if decomp.dim == 0 \
        else decomp.basis.shape[0]
    if not decomp.dim < target_dim <= n:
        raise ValueError(
            f"target_dim must lie in ({decomp.dim}, {n}], got {target_dim}")
    if decomp.breakdown:
        return decomp

    basis = decomp.basis
    h = decomp.h
    coupling = decomp.coupling
    v_next = decomp.residual_direction
    f = decomp.f

    while basis.shape[1] < target_dim:
        ell = basis.shape[1]
        w = op.apply(v_next)
        frame = np.concatenate([basis, v_next[:, None]], axis=1)
        g = frame.conj().T @ w
        w = w - frame @ g
        g2 = frame.conj().T @ w
        w = w - frame @ g2
        g = g + g2

        new_h = np.zeros((ell + 1, ell + 1), dtype=np.result_type(h, g, coupling))
        new_h[:ell, :ell] = h
        new_h[:ell, ell] = g[:ell]
        new_h[ell, :ell] = coupling * np.conj(f)
        new_h[ell, ell] = g[ell]

        basis = frame
        h = new_h
        f = np.zeros(ell + 1, dtype=new_h.dtype)
        f[ell] = 1.0

        beta = np.linalg.norm(w)
        if beta < BREAKDOWN_TOL * max(np.linalg.norm(h), 1e-300):
            return KrylovDecomposition(
                basis=basis, h=h, coupling=0.0,
                residual_direction=np.zeros(n, dtype=basis.dtype),
                f=f, breakdown=True)
        coupling = beta
        v_next = w / beta

    return KrylovDecomposition(basis=basis, h=h, coupling=coupling,
                               residual_direction=v_next, f=f,
                               breakdown=False)


def _truncate(decomp: KrylovDecomposition, s, q, keep: int) -> KrylovDecomposition:
    """Restart: keep the leading (leftmost) Schur vectors of the projection."""
    return KrylovDecomposition(
        basis=decomp.basis @ q[:, :keep],
        h=s[:keep, :keep],
        coupling=decomp.coupling,
        residual_direction=decomp.residual_direction,
        f=q[:, :keep].conj().T @ decomp.f,
        breakdown=False,
    )


def _start_vector(pair: UnmatchedPair, seed) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(pair.image_dim)


def krylov_schur_leftmost(pair: UnmatchedPair,
                          cfg: EstimatorConfig) -> EigEstimate:
    """Estimate the leftmost eigenvalue of the composed pair operator.

    Builds a Krylov decomposition of dimension maxdim, extracts the Schur
    pairs of the projection sorted leftmost-first, and accepts the leftmost
    Ritz value once the cheap residual |coupling * f^H c_1| (which equals
    ||(op - theta I) v|| exactly) drops below tol.  Otherwise the
    decomposition is truncated to the mindim leftmost Schur vectors and
    re-expanded.  If max_cycles runs out, the current best estimate is
    returned with ``converged=False``.
    """
    n = pair.image_dim
    if cfg.maxdim > n:
        raise ValueError(f"maxdim {cfg.maxdim} exceeds operator dimension {n}")
    op = pair.composed()
    mvm0 = pair.mvm_count
    decomp = arnoldi_expand(op, None, cfg.maxdim,
                            start_vector=_start_vector(pair, cfg.seed))

    estimate = None
    for cycle in range(cfg.max_cycles):
        s, q = ordered_schur_leftmost(decomp.h)
        theta = complex(s[0, 0])
        c1 = q[:, 0]
        residual = float(abs(decomp.coupling * np.vdot(decomp.f, c1)))
        vector = decomp.basis @ c1
        converged = decomp.breakdown or residual <= cfg.tol
        estimate = EigEstimate(theta=theta, vector=vector, residual=residual,
                               mvms=pair.mvm_count - mvm0,
                               converged=converged, method="krylov_schur",
                               seed=cfg.seed, ritz_values=np.diag(s).copy())
        if converged or cycle == cfg.max_cycles - 1:
            break
        decomp = _truncate(decomp, s, q, cfg.mindim)
        decomp = arnoldi_expand(op, decomp, cfg.maxdim)
    return estimate


def fov_leftmost(pair: UnmatchedPair, cfg: EstimatorConfig,
                 maxit: int) -> float:
    """Fixed-budget lower-bound estimate of the leftmost real part.

    Runs ``maxit`` restart cycles exactly like the Schur-based solver
    (the initial subspace build counts as the first cycle; there is no
    residual test), then returns the leftmost point of the projected
    numerical range: the smallest eigenvalue of (H + H^H) / 2.  The value
    can only overshoot the true leftmost real part downward -- the
    projected numerical range sits inside the full one, whose leftmost
    point lies at or below every eigenvalue's real part.
    """
    decomp = _fov_decomposition(pair, cfg, maxit)
    return projected_range_leftmost(decomp.h)


def projected_range_leftmost(h) -> float:
    """Leftmost point of the numerical range of a (projected) matrix."""
    h = np.asarray(h, dtype=complex)
    hermitian_part = 0.5 * (h + h.conj().T)
    return float(scipy.linalg.eigvalsh(hermitian_part)[0])


def _fov_decomposition(pair: UnmatchedPair, cfg: EstimatorConfig,
                       maxit: int) -> KrylovDecomposition:
    """The restart loop behind fov_leftmost; returns the final decomposition."""
    if maxit < 1:
        raise ValueError(f"maxit must be at least 1, got {maxit}")
    n = pair.image_dim
    if cfg.maxdim > n:
        raise ValueError(f"maxdim {cfg.maxdim} exceeds operator dimension {n}")
    op = pair.composed()
    decomp = arnoldi_expand(op, None, cfg.maxdim,
                            start_vector=_start_vector(pair, cfg.seed))
    for _ in range(maxit - 1):
        if decomp.breakdown:
            break
        s, q = ordered_schur_leftmost(decomp.h)
        decomp = _truncate(decomp, s, q, cfg.mindim)
        decomp = arnoldi_expand(op, decomp, cfg.maxdim)
    return decomp


def select_shift(estimate, factor: float = 2.0) -> float:
    """Damping shift from a leftmost-eigenvalue estimate.

    A positive leftmost real part needs no shift (returns 0; the plain
    iteration converges); otherwise returns factor * |Re|, which over-
    shifts by a safety factor so estimate error cannot leave the shifted
    spectrum in the left half plane.
    """
    if factor < 1:
        raise ValueError(f"factor must be at least 1, got {factor}")
    if isinstance(estimate, EigEstimate):
        re = estimate.theta.real
    else:
        re = complex(estimate).real
    if re > 0:
        return 0.0
    return factor * abs(re)


def dense_leftmost(matrix) -> EigEstimate:
    """Full dense eigendecomposition oracle for the leftmost eigenvalue.

    Ties on the real part prefer the smallest |Im|, then nonnegative Im.
    Refuses matrices larger than the dense-layer guard; use the iterative
    estimators for those.
    """
    a = as_array(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"need a square matrix, got shape {a.shape}")
    if a.shape[0] > SIZE_GUARD:
        raise DenseSizeError(
            f"dense eigendecomposition refuses n = {a.shape[0]} > {SIZE_GUARD}; "
            "use krylov_schur_leftmost / fov_leftmost instead")
    values, vectors = scipy.linalg.eig(a)
    order = min(range(values.shape[0]), key=lambda i: _leftmost_key(values[i]))
    theta = complex(values[order])
    vector = vectors[:, order]
    residual = float(np.linalg.norm(a @ vector - theta * vector))
    ritz = np.array(sorted(values, key=_leftmost_key))
    return EigEstimate(theta=theta, vector=vector, residual=residual,
                       mvms=0, converged=True, method="dense_oracle",
                       ritz_values=ritz)


def explicit_residual(pair: UnmatchedPair, estimate: EigEstimate) -> float:
    """Recompute ||(op - theta I) v|| with two extra MVMs."""
    if estimate.vector is None:
        raise ValueError("estimate carries no vector")
    v = estimate.vector
    return float(np.linalg.norm(
        pair.composed().apply(v) - estimate.theta * v))
