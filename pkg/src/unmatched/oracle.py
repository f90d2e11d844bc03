"""Dense, small-scale ground truth for the matrix-free layer.

Everything here works on explicitly stored matrices and is meant for desk
scale: SVD-based rank and subspace machinery, oblique projectors and
pseudoinverses, the eight equivalent existence conditions for a unique
fixed point of the pair iteration, closed-form fixed points of the plain
and shifted schemes, and the perturbation / regularization error bounds
the iterative results are verified against.

A single relative rank threshold (:data:`RANK_TOL`) is shared by every
rank decision so the eight conditions stay mutually consistent.  All
solves go through SVD-based least squares, never unpivoted LU; the target
matrices are ill-conditioned by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .operators import DenseMatrix

#: Singular values above RANK_TOL * sigma_1 count toward rank, everywhere.
RANK_TOL = 1e-10

#: Largest dimension the dense layer accepts.
SIZE_GUARD = 2000


class DenseSizeError(ValueError):
    """Problem too large for the dense layer; use the matrix-free path."""


class NoUniqueFixedPointError(ValueError):
    """The pair iteration has no unique fixed point for this (A, B)."""


class ConsensusError(RuntimeError):
    """The eight existence conditions disagree (rank-threshold borderline)."""

    def __init__(self, message, conditions):
        super().__init__(message)
        self.conditions = conditions


class ConsistencyError(ArithmeticError):
    """Independent dense routes to the same quantity disagree."""


class SingularShiftError(np.linalg.LinAlgError):
    """The shifted system is numerically singular; adjust the shift."""


def as_array(m) -> np.ndarray:
    """Coerce a DenseMatrix or array-like to a float ndarray."""
    if isinstance(m, DenseMatrix):
        return m.array
    return np.asarray(m, dtype=float)


def _guard(*mats):
    for m in mats:
        if max(m.shape) > SIZE_GUARD:
            raise DenseSizeError(
                f"dense oracle refuses dimensions {m.shape} "
                f"(> {SIZE_GUARD}); use the matrix-free estimators instead")


def rank_of(a) -> int:
    """Numerical rank with the shared relative threshold."""
    a = as_array(a)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > RANK_TOL * s[0]))


@dataclass
class SvdFactors:
    """Rank-truncated SVD A = U diag(s) V^T.

    U is m x r and V is n x r with orthonormal columns; s is positive and
    nonincreasing; r is the numerical rank under :data:`RANK_TOL`.
    """

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray
    rank: int


def svd_factors(a) -> SvdFactors:
    a = as_array(a)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    r = 0 if s.size == 0 or s[0] == 0 else \
        int(np.count_nonzero(s > RANK_TOL * s[0]))
    return SvdFactors(u=u[:, :r], singular_values=s[:r], v=vt[:r].T, rank=r)


def orth_basis(a) -> np.ndarray:
    """Orthonormal basis of range(a), rank-truncated."""
    f = svd_factors(a)
    return f.u


def null_basis(a) -> np.ndarray:
    """Orthonormal basis of null(a), rank-truncated."""
    a = as_array(a)
    n = a.shape[1]
    u, s, vt = np.linalg.svd(a)
    r = 0 if s.size == 0 or s[0] == 0 else \
        int(np.count_nonzero(s > RANK_TOL * s[0]))
    return vt[r:].T.reshape(n, n - r)


def row_space_basis(a) -> np.ndarray:
    """Orthonormal basis of range(a^T)."""
    f = svd_factors(a)
    return f.v


@dataclass
class SubspacePair:
    """Orthonormal bases for two complementary subspaces of the same space.

    ``y0_basis`` spans the orthogonal complement of the second subspace;
    it is what the oblique projector formula consumes.
    """

    x_basis: np.ndarray
    y_basis: np.ndarray
    y0_basis: np.ndarray


def subspace_pair(x_span, y_span) -> SubspacePair:
    """Build a SubspacePair from arbitrary spanning matrices."""
    xb = orth_basis(as_array(x_span))
    yb = orth_basis(as_array(y_span))
    y0 = null_basis(yb.T)
    return SubspacePair(x_basis=xb, y_basis=yb, y0_basis=y0)


def _check_complementary(xb, yb):
    m = xb.shape[0]
    d = xb.shape[1] + yb.shape[1]
    if d != m or rank_of(np.concatenate([xb, yb], axis=1)) != m:
        raise np.linalg.LinAlgError(
            f"subspaces are not complementary: dims {xb.shape[1]} + "
            f"{yb.shape[1]} vs ambient {m}, joint rank "
            f"{rank_of(np.concatenate([xb, yb], axis=1))}")


def oblique_projector(sub: SubspacePair) -> np.ndarray:
    """Idempotent P fixing the first subspace and annihilating the second.

    Computed as X pinv(Y0^T X) Y0^T.  Raises if the subspaces are not
    complementary.
    """
    _check_complementary(sub.x_basis, sub.y_basis)
    x, y0 = sub.x_basis, sub.y0_basis
    return x @ np.linalg.pinv(y0.T @ x, rcond=RANK_TOL) @ y0.T


def oblique_pseudoinverse(x, y_complement_basis=None, y_basis=None,
                          require_complementary=True) -> np.ndarray:
    """Pseudoinverse of x taken along a prescribed complement.

    Exactly one of the two bases selects the formula:

    * ``y_complement_basis`` (Y0, in the row space of the result): returns
      ``pinv(Y0^T x) Y0^T``.  The implicit "along" subspace is the
      orthogonal complement of Y0 in the data space; it must be
      complementary to range(x).
    * ``y_basis`` (Y, in the solution space): returns ``Y pinv(x Y)``.
      Y must be complementary to null(x).

    With Y the orthogonal complement of range(x) (first form) or of
    null(x) (second form), both reduce to the Moore-Penrose pseudoinverse.
    ``require_complementary=False`` skips the rank validation; the
    generalized formula is still well defined and is what the fixed-point
    expressions use when ranks differ.
    """
    x = as_array(x)
    if (y_complement_basis is None) == (y_basis is None):
        raise ValueError("pass exactly one of y_complement_basis / y_basis")
    if y_complement_basis is not None:
        y0 = as_array(y_complement_basis)
        if require_complementary and rank_of(y0.T @ x) != rank_of(x):
            raise np.linalg.LinAlgError(
                "along-subspace not complementary to range(x): "
                f"rank(Y0^T X) = {rank_of(y0.T @ x)} != rank(X) = {rank_of(x)}")
        return np.linalg.pinv(y0.T @ x, rcond=RANK_TOL) @ y0.T
    y = as_array(y_basis)
    if require_complementary and (
            y.shape[1] != rank_of(x) or rank_of(x @ y) != y.shape[1]):
        raise np.linalg.LinAlgError(
            "along-subspace not complementary to null(x): "
            f"dim Y = {y.shape[1]}, rank(X) = {rank_of(x)}, "
            f"rank(X Y) = {rank_of(x @ y)}")
    return y @ np.linalg.pinv(x @ y, rcond=RANK_TOL)


# ---------------------------------------------------------------------------
# Existence of a unique fixed point: eight equivalent conditions
# ---------------------------------------------------------------------------

CONDITION_LABELS = (
    "i: composed map nonsingular on range(back)",
    "ii: restricted system uniquely solvable for every rhs",
    "iii: range(back) meets null(back@fwd) trivially",
    "iv: null(back@fwd@back) equals null(back)",
    "v: range(back@fwd@back) equals range(back)",
    "vi: rank(back@fwd@back) equals rank(back)",
    "vii: fwd injective on range(back), back injective on range(fwd@back)",
    "viii: range(back) meets null(fwd) trivially, "
    "range(fwd@back) meets null(back) trivially",
)

#: Residual below which a numerically-exact subspace containment is accepted.
_CONTAIN_TOL = 1e-8


@dataclass
class FixedPointReport:
    """Outcome of the eight-way existence check."""

    conditions: tuple
    consensus: bool


def _trivial_intersection(basis_a, basis_b) -> bool:
    if basis_a.shape[1] == 0 or basis_b.shape[1] == 0:
        return True
    joint = np.concatenate([basis_a, basis_b], axis=1)
    return rank_of(joint) == basis_a.shape[1] + basis_b.shape[1]


def _contained(sub_basis, sup_basis) -> bool:
    """Numerical test for span(sub) being inside span(sup)."""
    if sub_basis.shape[1] == 0:
        return True
    resid = sub_basis - sup_basis @ (sup_basis.T @ sub_basis)
    return np.linalg.norm(resid, 2) <= _CONTAIN_TOL


def check_unique_fixed_point(a, b) -> FixedPointReport:
    """Evaluate all eight equivalent existence conditions and their consensus.

    Each condition is computed by its own numerical route under the shared
    rank threshold.  If the routes disagree the instance sits on a rank
    borderline; a :class:`ConsensusError` naming the dissenting conditions
    is raised instead of picking a winner.
    """
    a, b = as_array(a), as_array(b)
    _guard(a, b)
    if a.shape[0] != b.shape[1] or a.shape[1] != b.shape[0]:
        raise ValueError(f"incompatible shapes {a.shape} and {b.shape}")

    ba = b @ a
    ab = a @ b
    bab = ba @ b
    r_b, r_a, r_ab, r_ba, r_bab = map(rank_of, (b, a, ab, ba, bab))

    qb = orth_basis(b)
    qab = orth_basis(ab)
    n_a = null_basis(a)
    n_b = null_basis(b)
    n_ba = null_basis(ba)

    if r_b == 0:
        conditions = (True,) * 8
        return FixedPointReport(conditions=conditions, consensus=True)

    cond_i = rank_of(ba @ qb) == r_b
    restricted = qb.T @ ba @ qb
    cond_ii = rank_of(restricted) == r_b
    cond_iii = _trivial_intersection(qb, n_ba)
    cond_iv = (bab.shape[1] - r_bab == b.shape[1] - r_b) and \
        _contained(null_basis(bab), n_b)
    cond_v = (r_bab == r_b) and _contained(orth_basis(bab), qb)
    cond_vi = r_bab == r_b
    cond_vii = (rank_of(a @ qb) == r_b) and (rank_of(b @ qab) == r_ab)
    cond_viii = _trivial_intersection(qb, n_a) and \
        _trivial_intersection(qab, n_b)

    conditions = (cond_i, cond_ii, cond_iii, cond_iv, cond_v, cond_vi,
                  cond_vii, cond_viii)
    consensus = all(conditions) or not any(conditions)
    if not consensus:
        dissent = [CONDITION_LABELS[i] for i, c in enumerate(conditions)
                   if c != conditions[0]]
        raise ConsensusError(
            "existence conditions disagree (rank-threshold borderline); "
            "dissenting: " + "; ".join(dissent), conditions)
    return FixedPointReport(conditions=conditions, consensus=conditions[0])


# ---------------------------------------------------------------------------
# Closed-form fixed points
# ---------------------------------------------------------------------------

def _require_consensus(a, b):
    report = check_unique_fixed_point(a, b)
    if not report.consensus:
        raise NoUniqueFixedPointError(
            "the pair iteration has no unique fixed point for this (A, B); "
            "all eight existence conditions are false")


def fixed_point(a, b, rhs) -> np.ndarray:
    """Closed-form fixed point of the plain pair iteration, three routes.

    Computes the fixed point by three independent expressions -- the
    oblique pseudoinverse of the composed map along range(back) applied to
    back(rhs); back times the oblique pseudoinverse of fwd@back along
    null(back); and the oblique projector onto range(back) along
    null(back@fwd) composed with the oblique pseudoinverse of fwd along
    null(back) -- and checks their mutual agreement to 1e-9 relative
    before returning the first.
    """
    a, b = as_array(a), as_array(b)
    rhs = np.asarray(rhs, dtype=float)
    _require_consensus(a, b)

    ba = b @ a
    ab = a @ b
    qb = orth_basis(b)
    rsb = row_space_basis(b)  # orthonormal, spans null(back)^perp

    x1 = oblique_pseudoinverse(ba, y_basis=qb) @ (b @ rhs)
    x2 = b @ (oblique_pseudoinverse(ab, y_complement_basis=rsb,
                                    require_complementary=False) @ rhs)
    apinv = oblique_pseudoinverse(a, y_complement_basis=rsb,
                                  require_complementary=False)
    proj = qb @ np.linalg.pinv(row_space_basis(ba).T @ qb,
                               rcond=RANK_TOL) @ row_space_basis(ba).T
    x3 = proj @ (apinv @ rhs)

    scale = max(np.linalg.norm(x1), np.linalg.norm(x2), np.linalg.norm(x3),
                1e-300)
    for other, name in ((x2, "second"), (x3, "third")):
        if np.linalg.norm(x1 - other) > 1e-9 * scale:
            raise ConsistencyError(
                f"fixed-point routes disagree: first vs {name} differ by "
                f"{np.linalg.norm(x1 - other) / scale:.3e} relative")
    return x1


def fixed_point_noise_free(a, b, xbar) -> np.ndarray:
    """Fixed point for exact data rhs = fwd(xbar): an oblique projection.

    Returns the projection of ``xbar`` onto range(back@fwd) along
    null(back@fwd); this equals the long-run limit of the plain iteration
    on noise-free data.
    """
    a, b = as_array(a), as_array(b)
    _require_consensus(a, b)
    f = svd_factors(b @ a)
    u, v = f.u, f.v
    proj = u @ np.linalg.pinv(v.T @ u, rcond=RANK_TOL) @ v.T
    return proj @ np.asarray(xbar, dtype=float)


def _svd_solve(m, rhs, what="shifted system"):
    """SVD least-squares solve that refuses numerically singular systems."""
    u, s, vt = np.linalg.svd(m)
    if s.size == 0 or s[0] == 0 or s[-1] <= RANK_TOL * s[0]:
        raise SingularShiftError(
            f"{what} is numerically singular "
            f"(sigma_min/sigma_max = {0 if s.size == 0 or s[0] == 0 else s[-1] / s[0]:.3e})")
    return vt.T @ ((u.T @ rhs) / s)


def fixed_point_shifted(a, b, rhs, alpha: float) -> np.ndarray:
    """Closed-form fixed point of the shifted iteration, two routes.

    Solves (back@fwd + alpha I) x = back(rhs) and compares with
    back applied to the solution of (fwd@back + alpha I) y = rhs; the two
    must agree to 1e-10 relative and the result must lie in range(back)
    to 1e-10 relative.
    """
    a, b = as_array(a), as_array(b)
    _guard(a, b)
    rhs = np.asarray(rhs, dtype=float)
    n = a.shape[1]
    m = a.shape[0]

    x1 = _svd_solve(b @ a + alpha * np.eye(n), b @ rhs)
    x2 = b @ _svd_solve(a @ b + alpha * np.eye(m), rhs)

    scale = max(np.linalg.norm(x1), np.linalg.norm(x2), 1e-300)
    if np.linalg.norm(x1 - x2) > 1e-10 * scale:
        raise ConsistencyError(
            "shifted fixed-point routes disagree by "
            f"{np.linalg.norm(x1 - x2) / scale:.3e} relative")
    qb = orth_basis(b)
    out_of_range = np.linalg.norm(x1 - qb @ (qb.T @ x1))
    if out_of_range > 1e-10 * scale:
        raise ConsistencyError(
            f"shifted fixed point leaves range(back) by "
            f"{out_of_range / scale:.3e} relative")
    return x1


# ---------------------------------------------------------------------------
# Perturbation and regularization bounds
# ---------------------------------------------------------------------------

@dataclass
class PerturbationSpec:
    """Perturbations entering the shifted normal equations.

    delta_forward perturbs the forward matrix, delta_back perturbs its
    transpose (so the back map is fwd^T + delta_back), noise perturbs the
    data, and alpha is the positive shift.
    """

    delta_forward: np.ndarray
    delta_back: np.ndarray
    noise: np.ndarray
    alpha: float


@dataclass
class BoundReport:
    """A perturbation bound split into its constituent terms.

    absolute_bound is always the sum of the three terms.  measured_error
    is filled when the perturbed solution was actually computed.
    """

    noise_term: float
    forward_term: float
    back_term: float
    absolute_bound: float
    relative_bound: float
    measured_error: Optional[float] = None

    CSV_HEADER = ("noise_term", "forward_term", "back_term",
                  "absolute_bound", "relative_bound", "measured_error")

    def csv_row(self):
        measured = "" if self.measured_error is None else repr(self.measured_error)
        return (repr(self.noise_term), repr(self.forward_term),
                repr(self.back_term), repr(self.absolute_bound),
                repr(self.relative_bound), measured)


def perturbation_bound(a, b, bbar, e) -> BoundReport:
    """Data-noise sensitivity of the plain iteration's fixed point.

    The bound is ||P|| * ||pinv|| * ||e|| with P the oblique projector onto
    range(back) along null(back@fwd) and pinv the oblique pseudoinverse of
    fwd along null(back); when the back map has full column rank the
    projector is the identity and the bound reduces to the pseudoinverse
    term alone.  The measured error compares the fixed points for bbar and
    bbar + e.
    """
    a, b = as_array(a), as_array(b)
    bbar = np.asarray(bbar, dtype=float)
    e = np.asarray(e, dtype=float)
    _require_consensus(a, b)

    qb = orth_basis(b)
    rsb = row_space_basis(b)
    rs_ba = row_space_basis(b @ a)
    proj = qb @ np.linalg.pinv(rs_ba.T @ qb, rcond=RANK_TOL) @ rs_ba.T
    apinv = oblique_pseudoinverse(a, y_complement_basis=rsb,
                                  require_complementary=False)

    e_norm = np.linalg.norm(e)
    bound = float(np.linalg.norm(proj, 2) * np.linalg.norm(apinv, 2) * e_norm)

    x_clean = fixed_point(a, b, bbar)
    x_noisy = fixed_point(a, b, bbar + e)
    measured = float(np.linalg.norm(x_noisy - x_clean))
    clean_norm = np.linalg.norm(x_clean)
    relative = bound / clean_norm if clean_norm > 0 else np.inf if bound > 0 else 0.0
    return BoundReport(noise_term=bound, forward_term=0.0, back_term=0.0,
                       absolute_bound=bound, relative_bound=float(relative),
                       measured_error=measured)


def perturbation_bound_shifted(a, spec: PerturbationSpec, bbar) -> BoundReport:
    """First-order sensitivity of the shifted fixed point, three terms.

    With x_reg the (unperturbed) shifted least-squares solution and
    rho = bbar - fwd(x_reg), the absolute bound is

        ||e|| / (2 sqrt(alpha)) + ||dF x_reg|| / (2 sqrt(alpha))
        + ||dB rho|| / alpha,

    and the relative bound is the corresponding normwise expression.  The
    measured error solves the perturbed shifted normal equations exactly.
    Higher-order terms are dropped, so the bound dominates only for small
    perturbations.
    """
    a = as_array(a)
    _guard(a)
    bbar = np.asarray(bbar, dtype=float)
    alpha = float(spec.alpha)
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    da = np.asarray(spec.delta_forward, dtype=float)
    dat = np.asarray(spec.delta_back, dtype=float)
    e = np.asarray(spec.noise, dtype=float)

    n = a.shape[1]
    x_reg = _svd_solve(a.T @ a + alpha * np.eye(n), a.T @ bbar,
                       "regularized system")
    rho = bbar - a @ x_reg

    half = 1.0 / (2.0 * np.sqrt(alpha))
    noise_term = float(half * np.linalg.norm(e))
    forward_term = float(half * np.linalg.norm(da @ x_reg))
    back_term = float(np.linalg.norm(dat @ rho) / alpha)
    absolute = noise_term + forward_term + back_term

    norm_a = np.linalg.norm(a, 2)
    norm_ax = np.linalg.norm(a @ x_reg)
    if norm_ax > 0:
        relative = (norm_a * half * np.linalg.norm(e) / norm_ax
                    + norm_a * half * np.linalg.norm(da, 2) / norm_a
                    + norm_a ** 2 / alpha * np.linalg.norm(dat, 2) / norm_a
                    * np.linalg.norm(rho) / norm_ax)
    else:
        relative = np.inf if absolute > 0 else 0.0

    perturbed = (a.T + dat) @ (a + da) + alpha * np.eye(n)
    x_pert = _svd_solve(perturbed, (a.T + dat) @ (bbar + e))
    measured = float(np.linalg.norm(x_pert - x_reg))
    return BoundReport(noise_term=noise_term, forward_term=forward_term,
                       back_term=back_term, absolute_bound=float(absolute),
                       relative_bound=float(relative), measured_error=measured)


def regularization_error_bound(n: int, nu: float, alpha: float,
                               norm_a: float) -> float:
    """Relative regularization error bound under the coefficient-decay model.

    For exact-data SVD coefficients decaying like sigma_i^nu, the relative
    error between the shifted (regularized) noise-free solution and the
    exact solution is bounded by sqrt(n) for nu < 1, by
    sqrt(n) (sqrt(alpha)/||A||)^(nu-1) for 1 <= nu < 3, and by
    sqrt(n) (sqrt(alpha)/||A||)^2 for nu >= 3.
    """
    if nu < 0:
        raise ValueError(f"nu must be nonnegative, got {nu}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if norm_a <= 0:
        raise ValueError(f"norm_a must be positive, got {norm_a}")
    root_n = np.sqrt(n)
    ratio = np.sqrt(alpha) / norm_a
    if nu < 1:
        return float(root_n)
    if nu < 3:
        return float(root_n * ratio ** (nu - 1))
    return float(root_n * ratio ** 2)
