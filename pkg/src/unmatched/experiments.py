"""Reproducible end-to-end experiment pipelines.

Each pipeline run wires the library together: generate (or load) a
problem, estimate the leftmost eigenvalue of the composed pair operator,
select the damping shift and relaxation parameter, run the plain and
shifted iterations, and write artifacts (problem metadata, eigenvalue
estimates, chosen parameters with their provenance, per-method
convergence histories, and a summary with desk-scale oracle
cross-checks).  Every artifact is a deterministic function of
(config, seed).

Seed derivation: the problem matrices use ``seed``, the mismatched
transpose ``seed + 1000``, the data noise ``seed + 2000``, and estimator
start vectors ``seed`` (``seed + trial`` inside trial batches).
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from . import mmio, problems, solvers, spectral
from .operators import LinearMap, UnmatchedPair, augment, augment_rhs
from .oracle import (
    SIZE_GUARD,
    PerturbationSpec,
    check_unique_fixed_point,
    fixed_point,
    fixed_point_noise_free,
    fixed_point_shifted,
    perturbation_bound,
    perturbation_bound_shifted,
)
from .solvers import InfeasibleSpectrumError, IterationConfig
from .spectral import EigEstimate, EstimatorConfig

PROBLEM_CHOICES = ("small-well", "small-ill", "ct", "file")

#: Ritz values below this times the largest magnitude are treated as the
#: zero eigenvalues of a rank-deficient composed operator.
_RITZ_ZERO_TOL = 1e-8


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    """Everything a run depends on; flags override config-file keys."""

    problem: str = "small-well"
    size: int = 64
    noise: float = 0.05
    estimator: str = "ks"
    mindim: int = 30
    maxdim: int = 60
    tol: Optional[float] = None
    cycles: int = 50
    iters: Optional[int] = None
    fp_tol: float = 1e-8
    record_every: Optional[int] = None
    omega: Optional[float] = None
    alpha: Optional[float] = None
    omega_scale: Optional[float] = None
    safety: float = 0.95
    shift_factor: float = 2.0
    seed: int = 0
    out: Optional[str] = None
    image_side: int = 32
    angles: int = 23
    det_pixels: int = 20
    det_length: float = 1.0
    forward: Optional[str] = None
    back: Optional[str] = None
    solution: Optional[str] = None
    data: Optional[str] = None
    trials: int = 25
    sides: Sequence[int] = (32,)

    def __post_init__(self):
        if self.problem not in PROBLEM_CHOICES:
            raise ConfigError(
                f"unknown problem {self.problem!r}; choose from {PROBLEM_CHOICES}")
        if self.estimator != "ks" and self.estimator != "dense" \
                and not re.fullmatch(r"fov\d+", self.estimator):
            raise ConfigError(
                f"unknown estimator {self.estimator!r}; use ks, dense, or fovN")
        if self.noise < 0:
            raise ConfigError("noise must be nonnegative")


_CONFIG_TYPES = {
    "size": int, "mindim": int, "maxdim": int, "cycles": int, "iters": int,
    "record_every": int, "seed": int, "image_side": int, "angles": int,
    "det_pixels": int, "trials": int,
    "noise": float, "tol": float, "fp_tol": float, "omega": float,
    "alpha": float, "omega_scale": float, "safety": float,
    "shift_factor": float, "det_length": float,
}


def parse_config_file(path) -> dict:
    """Flat key=value config with cosmetic [section] headers.

    Keys match :class:`ExperimentConfig` field names (dashes allowed in
    place of underscores); sections only group lines visually.
    """
    values = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "sides":
            values[key] = tuple(int(s) for s in value.split(",") if s.strip())
        elif key in _CONFIG_TYPES:
            values[key] = _CONFIG_TYPES[key](value)
        else:
            values[key] = value
    return values


def config_from(file_path=None, **overrides) -> ExperimentConfig:
    """Build a config from an optional file plus keyword overrides."""
    values = parse_config_file(file_path) if file_path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    valid = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(values) - valid
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# Problem construction
# ---------------------------------------------------------------------------

@dataclass
class Problem:
    """A concrete problem instance with a fresh-pair factory."""

    name: str
    make_pair: object  # () -> UnmatchedPair with its own MVM counter
    xbar: Optional[np.ndarray]
    bbar: Optional[np.ndarray]
    b: np.ndarray
    meta: dict
    default_iters: int
    default_tol: float

    @property
    def desk_scale(self) -> bool:
        return max(self.meta["m"], self.meta["n"]) <= SIZE_GUARD


def _small_problem(cfg: ExperimentConfig, decade_exponent: float) -> Problem:
    n = cfg.size
    spec = problems.IllPosedMatrixSpec(
        m=n, n=n, singular_values=np.logspace(0, decade_exponent, n),
        seed=cfg.seed)
    a = problems.make_ill_posed_matrix(spec)
    b_mat = problems.make_unmatched_transpose(a, 0.05, seed=cfg.seed + 1000)
    xbar = problems.make_two_hump_solution(n)
    bbar = a @ xbar
    b = problems.add_noise(bbar, problems.NoiseSpec(cfg.noise, cfg.seed + 2000))
    meta = {"m": n, "n": n, "singular_value_decades": -decade_exponent,
            "transpose_perturbation": 0.05, "noise": cfg.noise,
            "seed": cfg.seed}
    return Problem(name=cfg.problem,
                   make_pair=lambda: UnmatchedPair.from_arrays(a, b_mat),
                   xbar=xbar, bbar=bbar, b=b, meta=meta,
                   default_iters=300_000, default_tol=1e-8)


def _ct_problem(cfg: ExperimentConfig) -> Problem:
    geom = problems.CtGeometry(
        image_side=cfg.image_side, num_angles=cfg.angles,
        num_detector_pixels=cfg.det_pixels, detector_length=cfg.det_length)
    reference_pair = problems.make_ct_pair(geom)
    xbar = problems.make_shepp_logan(geom.image_side)
    bbar = reference_pair.forward.base.apply(xbar)
    b = problems.add_noise(bbar, problems.NoiseSpec(cfg.noise, cfg.seed + 2000))
    meta = {"m": geom.num_rays, "n": geom.num_pixels,
            "image_side": geom.image_side, "angles": geom.num_angles,
            "det_pixels": geom.num_detector_pixels,
            "det_length": geom.detector_length, "noise": cfg.noise,
            "seed": cfg.seed}
    return Problem(name="ct",
                   make_pair=lambda: problems.make_ct_pair(geom),
                   xbar=xbar, bbar=bbar, b=b, meta=meta,
                   default_iters=20_000, default_tol=1e-2)


def _file_problem(cfg: ExperimentConfig) -> Problem:
    if not cfg.forward or not cfg.back:
        raise ConfigError("problem=file requires forward= and back= paths")
    try:
        fwd = mmio.read_matrix(cfg.forward)
        back = mmio.read_matrix(cfg.back)
        xbar = mmio.read_vector(cfg.solution) if cfg.solution else None
        data = mmio.read_vector(cfg.data) if cfg.data else None
    except FileNotFoundError:
        raise
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read problem files: {exc}") from exc
    if xbar is None and data is None:
        raise ConfigError("problem=file needs solution= or data= (or both)")
    bbar = fwd.apply(xbar) if xbar is not None else None
    if data is not None:
        b = data
    else:
        b = problems.add_noise(bbar, problems.NoiseSpec(cfg.noise,
                                                        cfg.seed + 2000))
    meta = {"m": fwd.rows, "n": fwd.cols, "forward": cfg.forward,
            "back": cfg.back, "noise": cfg.noise, "seed": cfg.seed}
    return Problem(name="file",
                   make_pair=lambda: UnmatchedPair(fwd, back),
                   xbar=xbar, bbar=bbar, b=b, meta=meta,
                   default_iters=10_000, default_tol=1e-6)


def build_problem(cfg: ExperimentConfig) -> Problem:
    if cfg.problem == "small-well":
        return _small_problem(cfg, -2.0)
    if cfg.problem == "small-ill":
        return _small_problem(cfg, -4.0)
    if cfg.problem == "ct":
        return _ct_problem(cfg)
    return _file_problem(cfg)


# ---------------------------------------------------------------------------
# Estimation step
# ---------------------------------------------------------------------------

def _estimator_config(cfg: ExperimentConfig, problem: Problem,
                      seed: int) -> EstimatorConfig:
    n = problem.meta["n"]
    maxdim = min(cfg.maxdim, n)
    mindim = min(cfg.mindim, max(1, maxdim - 1))
    tol = cfg.tol if cfg.tol is not None else problem.default_tol
    return EstimatorConfig(mindim=mindim, maxdim=maxdim, tol=tol,
                           max_cycles=cfg.cycles, seed=seed)


def _fov_estimate(pair: UnmatchedPair, est_cfg: EstimatorConfig,
                  maxit: int) -> EigEstimate:
    mvm0 = pair.mvm_count
    decomp = spectral._fov_decomposition(pair, est_cfg, maxit)
    nu = spectral.projected_range_leftmost(decomp.h)
    ritz = np.array(sorted(np.linalg.eigvals(decomp.h),
                           key=spectral._leftmost_key))
    return EigEstimate(theta=complex(nu), vector=None, residual=math.nan,
                       mvms=pair.mvm_count - mvm0, converged=True,
                       method=f"fov{maxit}", seed=est_cfg.seed,
                       ritz_values=ritz)


def estimate_leftmost(problem: Problem, cfg: ExperimentConfig,
                      seed: Optional[int] = None):
    """Run the configured estimator; returns (estimate, fallback_used).

    A non-converged Krylov-Schur run falls back to the fixed-budget
    numerical-range estimate (15 cycles), which always returns a value.
    """
    est_cfg = _estimator_config(cfg, problem, cfg.seed if seed is None else seed)
    fallback = False
    if cfg.estimator == "dense":
        a, b = problem.make_pair().densify()
        estimate = spectral.dense_leftmost(b @ a)
    elif cfg.estimator == "ks":
        estimate = spectral.krylov_schur_leftmost(problem.make_pair(), est_cfg)
        if not estimate.converged:
            fallback = True
            estimate = _fov_estimate(problem.make_pair(), est_cfg, 15)
    else:
        maxit = int(cfg.estimator[3:])
        estimate = _fov_estimate(problem.make_pair(), est_cfg, maxit)
    return estimate, fallback


def _nonzero_ritz(estimate: EigEstimate) -> np.ndarray:
    """Ritz values with the numerical zeros of a rank-deficient operator dropped."""
    ritz = estimate.ritz_values
    if ritz is None or len(ritz) == 0:
        return np.array([estimate.theta])
    scale = np.max(np.abs(ritz))
    keep = ritz[np.abs(ritz) > _RITZ_ZERO_TOL * scale]
    return keep if len(keep) else np.array([estimate.theta])


# ---------------------------------------------------------------------------
# Parameter selection
# ---------------------------------------------------------------------------

@dataclass
class ChosenParameters:
    """Shift and relaxation parameters plus their provenance."""

    alpha_recommended: float
    alpha_shifted: Optional[float]
    omega_plain: float
    omega_shifted: Optional[float]
    bound_plain: Optional[float]
    bound_shifted: Optional[float]
    recommendation: str
    notes: list = field(default_factory=list)


def choose_parameters(estimate: EigEstimate,
                      cfg: ExperimentConfig) -> ChosenParameters:
    """Decision rule: no shift when the leftmost real part is positive.

    The comparison (shifted) run still gets alpha = factor * |Re| so both
    schemes can be compared; when the leftmost real part is exactly zero
    the shifted run is skipped.  Relaxation bounds are evaluated over the
    estimate's Ritz values; if no plain bound exists (negative real
    parts), the deliberately divergent plain run uses the norm-based
    fallback  safety * 2 / max|ritz|.
    """
    notes = []
    re_lm = estimate.theta.real
    alpha_rec = spectral.select_shift(estimate, cfg.shift_factor)
    recommendation = "plain" if re_lm > 0 else "shifted"
    alpha_shifted = cfg.shift_factor * abs(re_lm) if re_lm != 0 else None
    if cfg.alpha is not None:
        alpha_shifted = cfg.alpha if cfg.alpha > 0 else None
        notes.append(f"alpha overridden by flag: {cfg.alpha!r}")

    ritz = _nonzero_ritz(estimate)
    rho = float(np.max(np.abs(ritz)))
    try:
        bound_plain = solvers.max_omega(ritz)
    except InfeasibleSpectrumError as exc:
        bound_plain = None
        notes.append(
            "no convergent relaxation for the plain scheme "
            f"(eigenvalue {exc.eigenvalue}); norm-based fallback used")
    if bound_plain is not None:
        omega_plain = solvers.select_omega(bound_plain, cfg.safety)
    else:
        omega_plain = cfg.safety * 2.0 / rho

    bound_shifted = None
    omega_shifted = None
    if alpha_shifted is not None:
        # may raise InfeasibleSpectrumError for a forced bad alpha
        bound_shifted = solvers.max_omega_shifted(ritz, alpha_shifted)
        omega_shifted = solvers.select_omega(bound_shifted, cfg.safety)

    if cfg.omega is not None:
        if bound_shifted is not None and cfg.omega >= bound_shifted:
            binding = min(ritz, key=lambda lam: 2 * (lam.real + alpha_shifted)
                          / (abs(lam) ** 2 + alpha_shifted
                             * (alpha_shifted + 2 * lam.real)))
            raise InfeasibleSpectrumError(
                f"requested omega {cfg.omega} is not below the shifted "
                f"relaxation bound {bound_shifted}", eigenvalue=binding)
        omega_plain = cfg.omega
        omega_shifted = cfg.omega if omega_shifted is not None else None
        notes.append(f"omega overridden by flag: {cfg.omega!r}")
    if cfg.omega_scale is not None:
        omega_plain *= cfg.omega_scale
        if omega_shifted is not None:
            omega_shifted *= cfg.omega_scale
        notes.append(f"omega scaled by flag: {cfg.omega_scale!r}")

    return ChosenParameters(alpha_recommended=alpha_rec,
                            alpha_shifted=alpha_shifted,
                            omega_plain=omega_plain,
                            omega_shifted=omega_shifted,
                            bound_plain=bound_plain,
                            bound_shifted=bound_shifted,
                            recommendation=recommendation, notes=notes)


# ---------------------------------------------------------------------------
# Artifact helpers
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(float(value))
    return str(value)


def _write_kv(path: Path, entries: dict) -> None:
    lines = [f"{key} = {_fmt(value)}" for key, value in entries.items()]
    path.write_text("\n".join(lines) + "\n")


def _eig_csv_rows(estimates) -> list:
    rows = [("method", "theta_re", "theta_im", "residual", "mvms", "seed",
             "converged")]
    for est in estimates:
        rows.append((est.method, repr(est.theta.real), repr(est.theta.imag),
                     "" if math.isnan(est.residual) else repr(est.residual),
                     str(est.mvms), "" if est.seed is None else str(est.seed),
                     str(est.converged)))
    return rows


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _effective_meta(cfg: ExperimentConfig, problem: Problem) -> dict:
    # "out" is where artifacts land, not what they contain; leaving it out
    # keeps artifact bytes a function of (config, seed) alone.
    meta = {f"config.{k}": getattr(cfg, k)
            for k in sorted(ExperimentConfig.__dataclass_fields__)
            if k != "out"}
    meta["config.sides"] = ",".join(str(s) for s in cfg.sides)
    for key in sorted(problem.meta):
        meta[f"problem.{key}"] = problem.meta[key]
    return meta


def _iteration_config(cfg: ExperimentConfig, problem: Problem, omega: float,
                      alpha: float) -> IterationConfig:
    iters = cfg.iters if cfg.iters is not None else problem.default_iters
    stride = cfg.record_every if cfg.record_every is not None \
        else max(1, iters // 2000)
    return IterationConfig(omega=omega, alpha=alpha, max_iters=iters,
                           fixed_point_tol=cfg.fp_tol, record_every=stride)


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    out_dir: Path
    estimate: EigEstimate
    params: ChosenParameters
    runs: dict
    summary: dict


def _shifted_fixed_point_residual(pair: UnmatchedPair, x, b, alpha) -> float:
    """||(composed + alpha I) x - back(b)|| / ||back(b)||, matrix-free."""
    lhs = pair.composed().apply(x) + alpha * x
    rhs = pair.back.apply(b)
    return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300))


def run_pipeline(cfg: ExperimentConfig, out_dir=None) -> PipelineResult:
    """Full experiment: generate, estimate, select parameters, iterate, report."""
    problem = build_problem(cfg)
    out = Path(out_dir if out_dir is not None
               else cfg.out or f"runs/solve-{cfg.problem}-seed{cfg.seed}")
    out.mkdir(parents=True, exist_ok=True)

    estimate, fallback = estimate_leftmost(problem, cfg)
    params = choose_parameters(estimate, cfg)

    runs = {}
    plain_cfg = _iteration_config(cfg, problem, params.omega_plain, 0.0)
    runs["plain"] = solvers.iterate(problem.make_pair(), problem.b, plain_cfg,
                                    reference=problem.xbar)
    if params.omega_shifted is not None:
        shifted_cfg = _iteration_config(cfg, problem, params.omega_shifted,
                                        params.alpha_shifted)
        runs["shifted"] = solvers.iterate_shifted(
            problem.make_pair(), problem.b, shifted_cfg,
            reference=problem.xbar)

    summary = {
        "problem": problem.name,
        "estimator": estimate.method,
        "estimator_fallback": fallback,
        "leftmost_re": estimate.theta.real,
        "leftmost_im": estimate.theta.imag,
        "estimate_converged": estimate.converged,
        "estimate_mvms": estimate.mvms,
        "recommendation": params.recommendation,
        "alpha_recommended": params.alpha_recommended,
    }
    for name, result in runs.items():
        hist = result.history
        summary[f"{name}.termination"] = result.termination
        summary[f"{name}.iterations"] = int(hist.iters[-1])
        summary[f"{name}.final_residual"] = float(hist.residual_norms[-1])
        summary[f"{name}.mvms"] = int(hist.mvms[-1])
        if hist.error_norms is not None:
            summary[f"{name}.best_error_iteration"] = result.best_error_iteration
            summary[f"{name}.min_error"] = float(hist.error_norms.min())
            summary[f"{name}.final_error"] = float(hist.error_norms[-1])
    if "shifted" in runs:
        check_pair = problem.make_pair()
        summary["shifted.fixed_point_residual"] = _shifted_fixed_point_residual(
            check_pair, runs["shifted"].x, problem.b, params.alpha_shifted)

    if problem.desk_scale:
        a, b_mat = problem.make_pair().densify()
        dense = spectral.dense_leftmost(b_mat @ a)
        summary["oracle.leftmost_re"] = dense.theta.real
        summary["oracle.leftmost_abs_error"] = abs(estimate.theta.real
                                                   - dense.theta.real)
        if "shifted" in runs:
            x_star = fixed_point_shifted(a, b_mat, problem.b,
                                         params.alpha_shifted)
            summary["oracle.shifted_limit_relative_gap"] = float(
                np.linalg.norm(runs["shifted"].x - x_star)
                / max(np.linalg.norm(x_star), 1e-300))

    _write_kv(out / "meta.txt", _effective_meta(cfg, problem))
    _write_csv(out / "eig.csv", _eig_csv_rows([estimate]))
    params_entries = {
        "alpha_recommended": params.alpha_recommended,
        "alpha_shifted": params.alpha_shifted
        if params.alpha_shifted is not None else "",
        "omega_plain": params.omega_plain,
        "omega_shifted": params.omega_shifted
        if params.omega_shifted is not None else "",
        "bound_plain": params.bound_plain
        if params.bound_plain is not None else "",
        "bound_shifted": params.bound_shifted
        if params.bound_shifted is not None else "",
        "safety": cfg.safety,
        "shift_factor": cfg.shift_factor,
        "recommendation": params.recommendation,
    }
    for i, note in enumerate(params.notes):
        params_entries[f"note_{i}"] = note
    _write_kv(out / "params.txt", params_entries)
    for name, result in runs.items():
        result.history.to_csv(out / f"history_{name}.csv")
    _write_kv(out / "summary.txt", summary)
    return PipelineResult(out_dir=out, estimate=estimate, params=params,
                          runs=runs, summary=summary)


def run_gen(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Write the generated problem itself (matrices and vectors)."""
    problem = build_problem(cfg)
    out = Path(out_dir if out_dir is not None
               else cfg.out or f"runs/gen-{cfg.problem}-seed{cfg.seed}")
    out.mkdir(parents=True, exist_ok=True)
    pair = problem.make_pair()
    mmio.write_matrix(out / "forward.mtx", pair.forward.base)
    mmio.write_matrix(out / "back.mtx", pair.back.base)
    if problem.xbar is not None:
        mmio.write_vector(out / "solution.mtx", problem.xbar)
    if problem.bbar is not None:
        mmio.write_vector(out / "data_clean.mtx", problem.bbar)
    mmio.write_vector(out / "data_noisy.mtx", problem.b)
    _write_kv(out / "meta.txt", _effective_meta(cfg, problem))
    return out


def run_estimate(cfg: ExperimentConfig, out_dir=None):
    """Estimate the leftmost eigenvalue only; returns (estimate, out path)."""
    problem = build_problem(cfg)
    out = Path(out_dir if out_dir is not None
               else cfg.out or f"runs/estimate-{cfg.problem}-seed{cfg.seed}")
    out.mkdir(parents=True, exist_ok=True)
    estimate, fallback = estimate_leftmost(problem, cfg)
    _write_kv(out / "meta.txt", _effective_meta(cfg, problem))
    _write_csv(out / "eig.csv", _eig_csv_rows([estimate]))
    if fallback:
        (out / "fallback.txt").write_text(
            "krylov_schur did not converge; fov15 fallback used\n")
    return estimate, out


def run_trials(cfg: ExperimentConfig, trials: Optional[int] = None,
               methods: Sequence[str] = ("ks", "fov10", "fov15", "fov20"),
               out_dir=None) -> Path:
    """Trial statistics per estimator: mean MVMs, mean/std of Re(theta).

    Each trial uses start-vector seed ``cfg.seed + trial`` on a fresh pair.
    Writes ``trials_raw.csv`` (one row per trial and method) and
    ``trials_stats.csv`` (one row per method).
    """
    trials = cfg.trials if trials is None else trials
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    problem = build_problem(cfg)
    out = Path(out_dir if out_dir is not None
               else cfg.out or f"runs/trials-{cfg.problem}-seed{cfg.seed}")
    out.mkdir(parents=True, exist_ok=True)

    raw = [("method", "trial", "seed", "theta_re", "mvms", "converged")]
    stats = [("method", "trials", "mean_mvms", "mean_theta_re",
              "std_theta_re")]
    for method in methods:
        thetas, mvms = [], []
        for trial in range(trials):
            trial_cfg = replace(cfg, estimator=method)
            estimate, _ = estimate_leftmost(problem, trial_cfg,
                                            seed=cfg.seed + trial)
            thetas.append(estimate.theta.real)
            mvms.append(estimate.mvms)
            raw.append((method, str(trial), str(cfg.seed + trial),
                        repr(estimate.theta.real), str(estimate.mvms),
                        str(estimate.converged)))
        stats.append((method, str(trials), repr(float(np.mean(mvms))),
                      repr(float(np.mean(thetas))),
                      repr(float(np.std(thetas)))))
    _write_csv(out / "trials_raw.csv", raw)
    _write_csv(out / "trials_stats.csv", stats)
    _write_kv(out / "meta.txt", _effective_meta(cfg, problem))
    return out


def run_scaling(cfg: ExperimentConfig, sides: Optional[Sequence[int]] = None,
                out_dir=None) -> Path:
    """Estimator cost versus problem size on CT geometries.

    For each image side the geometry keeps the reference proportions
    (angles ~ 0.70 N, detector pixels ~ 0.625 N) and the Krylov-Schur
    MVM count to tolerance is recorded; with at least two sides the
    log-log slope of MVMs against n is reported (observational only).
    """
    sides = tuple(cfg.sides if sides is None else sides)
    if not sides:
        raise ConfigError("scaling needs at least one side")
    out = Path(out_dir if out_dir is not None
               else cfg.out or f"runs/scaling-seed{cfg.seed}")
    out.mkdir(parents=True, exist_ok=True)

    rows = [("side", "n", "m", "mvms", "theta_re", "converged")]
    log_n, log_mvms = [], []
    for side in sides:
        geom = problems.CtGeometry(
            image_side=side,
            num_angles=max(2, round(0.703 * side)),
            num_detector_pixels=max(2, round(0.625 * side)),
            detector_length=cfg.det_length)
        pair = problems.make_ct_pair(geom)
        est_cfg = EstimatorConfig(
            mindim=min(cfg.mindim, max(1, min(cfg.maxdim, geom.num_pixels) - 1)),
            maxdim=min(cfg.maxdim, geom.num_pixels),
            tol=cfg.tol if cfg.tol is not None else 1e-2,
            max_cycles=cfg.cycles, seed=cfg.seed)
        estimate = spectral.krylov_schur_leftmost(pair, est_cfg)
        rows.append((str(side), str(geom.num_pixels), str(geom.num_rays),
                     str(estimate.mvms), repr(estimate.theta.real),
                     str(estimate.converged)))
        log_n.append(math.log(geom.num_pixels))
        log_mvms.append(math.log(estimate.mvms))
    _write_csv(out / "scaling.csv", rows)
    if len(sides) >= 2:
        slope = float(np.polyfit(log_n, log_mvms, 1)[0])
        slope_text = f"loglog_slope = {slope!r}\n"
    else:
        slope_text = "loglog_slope = undefined (single size)\n"
    (out / "scaling_summary.txt").write_text(slope_text)
    return out


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------

def run_verify(cfg: ExperimentConfig, out_dir=None):
    """Dense-oracle invariant suite; returns (all_passed, report lines).

    Checks (content-named): shift-feasibility, relaxation-bound,
    three-route-fixed-point, noise-free-projection,
    shifted-fixed-point-identity, shifted-iterate-limit,
    rhs-perturbation-bound, first-order-perturbation-bound,
    augmented-equivalence.  Any failure makes the suite fail; the report
    names the failing check and carries the offending quantities.
    """
    problem = build_problem(cfg)
    if not problem.desk_scale:
        raise ConfigError("verify needs a desk-scale problem "
                          f"(max dim {SIZE_GUARD})")
    pair = problem.make_pair()
    a, b_mat = pair.densify()
    lam = np.linalg.eigvals(b_mat @ a)
    lam_lm = min(lam, key=spectral._leftmost_key)
    lines = []
    ok = True

    def check(name, passed, detail):
        nonlocal ok
        ok = ok and passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")

    # shift feasibility and relaxation bound for the parameters in use
    alpha = cfg.alpha if cfg.alpha is not None \
        else cfg.shift_factor * abs(min(0.0, lam_lm.real))
    if alpha == 0.0 and lam_lm.real <= 0:
        offender = lam_lm
        check("shift-feasibility", False,
              f"alpha = 0 but eigenvalue {offender} has nonpositive real part")
        bound = None
    else:
        try:
            bound = solvers.max_omega_shifted(lam, alpha) if alpha > 0 \
                else solvers.max_omega(lam)
            check("shift-feasibility", True,
                  f"alpha = {alpha!r}, leftmost = {complex(lam_lm)!r}")
        except InfeasibleSpectrumError as exc:
            bound = None
            check("shift-feasibility", False,
                  f"offending eigenvalue {exc.eigenvalue!r} at alpha = {alpha!r}")

    if bound is not None:
        omega = solvers.select_omega(bound, cfg.safety) if cfg.omega is None \
            else cfg.omega
        if cfg.omega_scale is not None:
            omega *= cfg.omega_scale
        radius = float(np.max(np.abs(1.0 - omega * (lam + alpha))))
        check("relaxation-bound", omega < bound and radius < 1.0,
              f"omega = {omega!r}, bound = {bound!r}, "
              f"iteration spectral radius = {radius!r}")
    else:
        omega = None
        check("relaxation-bound", False, "no feasible relaxation bound")

    report = check_unique_fixed_point(a, b_mat)
    if report.consensus:
        rng = np.random.default_rng(cfg.seed + 3000)
        rhs = rng.standard_normal(a.shape[0])
        try:
            fixed_point(a, b_mat, rhs)
            check("three-route-fixed-point", True,
                  "three expressions agree to 1e-9 relative")
        except ArithmeticError as exc:
            check("three-route-fixed-point", False, str(exc))
        if problem.xbar is not None:
            x1 = fixed_point(a, b_mat, a @ problem.xbar)
            x2 = fixed_point_noise_free(a, b_mat, problem.xbar)
            gap = np.linalg.norm(x1 - x2) / max(np.linalg.norm(x1), 1e-300)
            check("noise-free-projection", gap <= 1e-9,
                  f"relative gap {gap:.3e}")
    else:
        lines.append("SKIP three-route-fixed-point: no unique fixed point "
                     "for this pair")

    x_exact = problem.xbar if problem.xbar is not None \
        else np.random.default_rng(cfg.seed + 4000).standard_normal(a.shape[1])
    alpha_pos = alpha if alpha > 0 else 0.1
    x_shift = fixed_point_shifted(a, b_mat, a @ x_exact, alpha_pos)
    lhs = x_exact - x_shift
    rhs_vec = alpha_pos * np.linalg.solve(
        b_mat @ a + alpha_pos * np.eye(a.shape[1]), x_exact)
    gap = np.linalg.norm(lhs - rhs_vec) / max(np.linalg.norm(x_exact), 1e-300)
    check("shifted-fixed-point-identity", gap <= 1e-10,
          f"relative gap {gap:.3e} at alpha = {alpha_pos!r}")

    if omega is not None and alpha_pos > 0:
        bound_pos = solvers.max_omega_shifted(lam, alpha_pos)
        omega_pos = solvers.select_omega(bound_pos, cfg.safety)
        it_cfg = IterationConfig(omega=omega_pos, alpha=alpha_pos,
                                 max_iters=cfg.iters or 20000,
                                 fixed_point_tol=1e-12, record_every=1000)
        result = solvers.iterate_shifted(problem.make_pair(), problem.b, it_cfg)
        x_oracle = fixed_point_shifted(a, b_mat, problem.b, alpha_pos)
        gap = np.linalg.norm(result.x - x_oracle) \
            / max(np.linalg.norm(x_oracle), 1e-300)
        check("shifted-iterate-limit", gap <= 1e-6,
              f"relative gap {gap:.3e} after {result.history.iters[-1]} "
              f"iterations ({result.termination})")

    if report.consensus and problem.bbar is not None:
        e = problem.b - problem.bbar
        bound_rep = perturbation_bound(a, b_mat, problem.bbar, e)
        check("rhs-perturbation-bound",
              bound_rep.measured_error <= bound_rep.absolute_bound,
              f"measured {bound_rep.measured_error:.3e} vs bound "
              f"{bound_rep.absolute_bound:.3e}")

    rng = np.random.default_rng(cfg.seed + 5000)
    eps = 1e-3
    spec = PerturbationSpec(
        delta_forward=eps * rng.standard_normal(a.shape),
        delta_back=eps * rng.standard_normal(a.T.shape),
        noise=eps * rng.standard_normal(a.shape[0]),
        alpha=max(alpha_pos, 0.01))
    rep = perturbation_bound_shifted(a, spec, problem.bbar
                                     if problem.bbar is not None
                                     else a @ x_exact)
    check("first-order-perturbation-bound",
          rep.measured_error <= rep.absolute_bound,
          f"measured {rep.measured_error:.3e} vs bound {rep.absolute_bound:.3e}")

    if omega is not None and alpha_pos > 0:
        bound_pos = solvers.max_omega_shifted(lam, alpha_pos)
        omega_pos = solvers.select_omega(bound_pos, cfg.safety)
        k = 200
        r_sh = solvers.iterate_shifted(
            problem.make_pair(), problem.b,
            IterationConfig(omega=omega_pos, alpha=alpha_pos, max_iters=k,
                            record_every=k))
        aug = augment(problem.make_pair(), alpha_pos)
        r_aug = solvers.iterate(
            aug, augment_rhs(problem.b, a.shape[1]),
            IterationConfig(omega=omega_pos, max_iters=k, record_every=k))
        gap = np.linalg.norm(r_sh.x - r_aug.x) \
            / max(np.linalg.norm(r_sh.x), 1e-300)
        check("augmented-equivalence", gap <= 1e-12,
              f"relative gap {gap:.3e} after {k} iterations")

    if out_dir is not None or cfg.out:
        out = Path(out_dir if out_dir is not None else cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.txt").write_text("\n".join(lines) + "\n")
    return ok, lines
