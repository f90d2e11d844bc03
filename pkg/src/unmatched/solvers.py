"""Relaxed residual-backprojection iterations for unmatched pairs.

The basic scheme updates ``x <- x + omega * back(b - forward(x))`` from
``x^0 = 0``; with an unmatched back map it converges only when every nonzero
eigenvalue of the composed back-forward operator has positive real part and
the relaxation parameter stays below a spectrum-dependent bound.  The shifted
scheme ``x <- (1 - alpha*omega) x + omega * back(b - forward(x))`` damps the
update so that a small positive shift restores convergence; it is exactly the
basic scheme applied to the damped augmented pair.

This module also provides the sharp relaxation-parameter bounds for both
schemes and the safety-factor policy used to pick omega from a bound.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .operators import UnmatchedPair, _as_vector

#: Relative residual growth treated as divergence of the iteration.
DIVERGENCE_FACTOR = 1e8


class InfeasibleSpectrumError(ValueError):
    """No relaxation parameter can make the iteration converge.

    Carries the offending eigenvalue in ``eigenvalue``.
    """

    def __init__(self, message, eigenvalue):
        super().__init__(message)
        self.eigenvalue = eigenvalue


@dataclass
class IterationConfig:
    """Parameters of a single solve.

    omega : relaxation parameter (> 0).
    alpha : damping shift (>= 0; must be 0 for the unshifted schemes and
        > 0 for the shifted one).
    max_iters : iteration budget.
    fixed_point_tol : stop when ``||x^{k+1} - x^k|| <= tol * ||x^k||``
        (with a 1e-300 absolute floor so x = 0 terminates); 0 disables.
    record_every : history recording stride; iterate 0 and the final
        iterate are always recorded.
    """

    omega: float
    alpha: float = 0.0
    max_iters: int = 1000
    fixed_point_tol: float = 0.0
    record_every: int = 1

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.max_iters <= 0:
            raise ValueError(f"max_iters must be positive, got {self.max_iters}")
        if self.fixed_point_tol < 0:
            raise ValueError("fixed_point_tol must be nonnegative")
        if self.record_every <= 0:
            raise ValueError("record_every must be positive")


@dataclass
class IterationHistory:
    """Per-iteration records, one row per recorded iterate.

    Row k describes the state after k updates: the residual norm
    ``||b - forward(x^k)||``, the update norm ``||x^k - x^{k-1}||`` (0 at
    k = 0), the relative error ``||x^k - ref|| / ||ref||`` when a reference
    solution was supplied, and the pair's cumulative MVM count when x^k was
    reached.
    """

    iters: np.ndarray
    residual_norms: np.ndarray
    update_norms: np.ndarray
    error_norms: Optional[np.ndarray]
    mvms: np.ndarray

    CSV_HEADER = ("iter", "residual_norm", "update_norm", "error_norm", "mvms")

    def to_csv(self, path_or_file) -> None:
        """Write the history as CSV; error_norm cells are empty without a reference."""
        if hasattr(path_or_file, "write"):
            self._write(path_or_file)
        else:
            with open(path_or_file, "w", newline="") as fh:
                self._write(fh)

    def _write(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        for i, k in enumerate(self.iters):
            err = "" if self.error_norms is None \
                else repr(float(self.error_norms[i]))
            w.writerow([int(k), repr(float(self.residual_norms[i])),
                        repr(float(self.update_norms[i])), err,
                        int(self.mvms[i])])

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self._write(buf)
        return buf.getvalue()


@dataclass
class SolveResult:
    """Final iterate, history, and how the iteration stopped.

    termination is one of ``fixed_point_reached``, ``max_iters``,
    ``diverged`` (residual grew by :data:`DIVERGENCE_FACTOR` over its
    initial value).  best_error_iteration is the recorded iterate index
    minimizing the relative error; None without a reference.
    """

    x: np.ndarray
    history: IterationHistory
    termination: str
    best_error_iteration: Optional[int] = None


def _run(pair: UnmatchedPair, b, config: IterationConfig, reference=None,
         callback=None) -> SolveResult:
    """Shared fixed-point loop; alpha comes from config (0 = unshifted)."""
    fwd, back = pair.forward, pair.back
    b = _as_vector(np.asarray(b, dtype=float), fwd.rows, "data vector")
    if reference is not None:
        reference = _as_vector(np.asarray(reference, dtype=float),
                               fwd.cols, "reference solution")
        ref_norm = np.linalg.norm(reference)
    omega, alpha = config.omega, config.alpha
    mvm0 = pair.mvm_count

    n = fwd.cols
    x = np.zeros(n)
    r = b.copy()  # residual of x^0 = 0
    rnorm0 = np.linalg.norm(r)

    iters, rnorms, unorms, mvms = [], [], [], []
    enorms = [] if reference is not None else None

    def record(k, rnorm, unorm):
        iters.append(k)
        rnorms.append(rnorm)
        unorms.append(unorm)
        mvms.append(pair.mvm_count - mvm0)
        if enorms is not None:
            enorms.append(np.linalg.norm(x - reference) / ref_norm)

    record(0, rnorm0, 0.0)
    termination = "max_iters"
    for k in range(1, config.max_iters + 1):
        xnorm_prev = np.linalg.norm(x)
        step = back.apply(r)
        if alpha != 0.0:
            step = step - alpha * x
        dx = omega * step
        x = x + dx
        r = b - fwd.apply(x)
        unorm = np.linalg.norm(dx)
        rnorm = np.linalg.norm(r)
        if callback is not None:
            callback(k, x)

        stop = None
        if rnorm > DIVERGENCE_FACTOR * rnorm0:
            stop = "diverged"
        elif config.fixed_point_tol > 0 and \
                unorm <= max(config.fixed_point_tol * xnorm_prev, 1e-300):
            stop = "fixed_point_reached"

        if k % config.record_every == 0 or stop or k == config.max_iters:
            record(k, rnorm, unorm)
        if stop:
            termination = stop
            break

    history = IterationHistory(
        iters=np.array(iters, dtype=int),
        residual_norms=np.array(rnorms),
        update_norms=np.array(unorms),
        error_norms=None if enorms is None else np.array(enorms),
        mvms=np.array(mvms, dtype=int),
    )
    best = None
    if enorms is not None:
        best = int(history.iters[int(np.argmin(history.error_norms))])
    return SolveResult(x=x, history=history, termination=termination,
                       best_error_iteration=best)


def iterate(pair: UnmatchedPair, b, config: IterationConfig, reference=None,
            callback=None) -> SolveResult:
    """Run the basic iteration x <- x + omega * back(b - forward(x)).

    Starts from x^0 = 0; every iterate lies in the range of the back map.
    Divergence is reported through ``termination``, not raised.  Requires
    ``config.alpha == 0``.
    """
    if config.alpha != 0.0:
        raise ValueError("the unshifted iteration requires config.alpha == 0; "
                         "use iterate_shifted for alpha > 0")
    return _run(pair, b, config, reference, callback)


def iterate_shifted(pair: UnmatchedPair, b, config: IterationConfig,
                    reference=None, callback=None) -> SolveResult:
    """Run the damped iteration x <- (1 - alpha*omega) x + omega * back(b - forward(x)).

    Requires ``config.alpha > 0``.  At a fixed point x satisfies
    ``back(forward(x)) + alpha x = back(b)``.  The update is evaluated as
    ``x + omega * (back(r) - alpha x)``, the same arithmetic the augmented
    pair produces, so the two paths agree to rounding at every iterate.
    """
    if config.alpha <= 0.0:
        raise ValueError("the shifted iteration requires config.alpha > 0")
    return _run(pair, b, config, reference, callback)


def landweber(forward, transpose, b, config: IterationConfig, reference=None,
              callback=None) -> SolveResult:
    """Gradient-descent iteration x <- x + omega * transpose(b - forward(x)).

    ``transpose`` must be an explicit map realizing the exact adjoint of
    ``forward`` (this package gives solvers no way to form it).  Converges
    for 0 < omega < 2 / ||forward||^2, which is the caller's responsibility.
    """
    if config.alpha != 0.0:
        raise ValueError("landweber requires config.alpha == 0")
    return _run(UnmatchedPair(forward, transpose), b, config, reference,
                callback)


def max_omega(eigenvalues: Sequence[complex]) -> float:
    """Supremum of convergent relaxation parameters for the basic iteration.

    Given the eigenvalues of the composed back-forward operator, returns
    ``min over nonzero lam of 2 Re(lam) / |lam|^2``; the iteration converges
    for any omega strictly below this value.  Raises
    :class:`InfeasibleSpectrumError` if some nonzero eigenvalue has
    nonpositive real part (then no omega works).
    """
    return max_omega_shifted(eigenvalues, 0.0)


def max_omega_shifted(eigenvalues: Sequence[complex], alpha: float) -> float:
    """Supremum of convergent relaxation parameters for the shifted iteration.

    Returns ``min over lam != -alpha of
    2 (Re(lam) + alpha) / (|lam|^2 + alpha (alpha + 2 Re(lam)))``.
    Eigenvalues equal to -alpha are irrelevant for convergence and skipped.
    Raises :class:`InfeasibleSpectrumError` when some eigenvalue with
    ``lam != -alpha`` has ``Re(lam) + alpha <= 0``.
    """
    eigenvalues = [complex(lam) for lam in eigenvalues]
    if not eigenvalues:
        raise ValueError("eigenvalue list must be nonempty")
    bound = np.inf
    for lam in eigenvalues:
        scale = max(1.0, abs(lam), abs(alpha))
        if abs(lam + alpha) <= 1e-14 * scale:
            continue
        shifted_re = lam.real + alpha
        if shifted_re <= 0:
            raise InfeasibleSpectrumError(
                f"eigenvalue {lam} has Re + alpha = {shifted_re} <= 0 "
                f"(alpha = {alpha}); no relaxation parameter converges",
                eigenvalue=lam)
        denom = abs(lam) ** 2 + alpha * (alpha + 2 * lam.real)
        bound = min(bound, 2 * shifted_re / denom)
    return float(bound)


def select_omega(bound: float, safety: float = 0.95) -> float:
    """Back a relaxation bound off by a safety factor (default 0.95)."""
    if bound <= 0:
        raise ValueError(f"bound must be positive, got {bound}")
    if not 0 < safety < 1:
        raise ValueError(f"safety must lie in (0, 1), got {safety}")
    return safety * bound
