"""Command-line experiment runner.

Verbs: ``gen`` (write the generated problem), ``estimate`` (leftmost
eigenvalue only), ``solve`` (full pipeline), ``trials`` (estimator
statistics over seeds), ``scaling`` (estimator cost vs problem size),
``verify`` (dense-oracle invariant suite).

Exit codes: 0 success, 2 infeasible parameters, 3 verification failure,
4 I/O error.  All options can also come from a flat key=value config
file (``--config``); command-line flags win.
"""

from __future__ import annotations

import argparse
import sys

from . import experiments
from .experiments import ConfigError, ExperimentConfig, config_from
from .oracle import ConsistencyError
from .solvers import InfeasibleSpectrumError

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_VERIFY_FAILED = 3
EXIT_IO = 4


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", help="output directory for artifacts")
    p.add_argument("--problem", choices=experiments.PROBLEM_CHOICES,
                   help="problem selector (default small-well)")
    p.add_argument("--size", type=int, help="dimension of the small problems")
    p.add_argument("--noise", type=float, help="relative data-noise level")
    p.add_argument("--estimator", help="ks | fovN | dense")
    p.add_argument("--mindim", type=int, help="restart subspace dimension")
    p.add_argument("--maxdim", type=int, help="maximal subspace dimension")
    p.add_argument("--tol", type=float, help="estimator residual tolerance")
    p.add_argument("--cycles", type=int, help="estimator restart budget")
    p.add_argument("--iters", type=int, help="iteration budget")
    p.add_argument("--fp-tol", type=float, dest="fp_tol",
                   help="relative-update stopping tolerance")
    p.add_argument("--record-every", type=int, dest="record_every",
                   help="history recording stride")
    p.add_argument("--omega", type=float, help="relaxation parameter override")
    p.add_argument("--alpha", type=float, help="shift override")
    p.add_argument("--omega-scale", type=float, dest="omega_scale",
                   help="scale the selected relaxation parameter")
    p.add_argument("--safety", type=float,
                   help="safety factor below the relaxation bound")
    p.add_argument("--shift-factor", type=float, dest="shift_factor",
                   help="shift = factor * |Re(leftmost)|")
    p.add_argument("--image-side", type=int, dest="image_side")
    p.add_argument("--angles", type=int, help="number of projection angles")
    p.add_argument("--det-pixels", type=int, dest="det_pixels")
    p.add_argument("--det-length", type=float, dest="det_length")
    p.add_argument("--forward", help="Matrix Market forward matrix (problem=file)")
    p.add_argument("--back", help="Matrix Market back matrix (problem=file)")
    p.add_argument("--solution", help="Matrix Market solution vector")
    p.add_argument("--data", help="Matrix Market data vector")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unmatched",
        description="Experiments with unmatched projector/backprojector pairs")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, text in (
            ("gen", "generate a problem and write its matrices/vectors"),
            ("estimate", "estimate the leftmost eigenvalue"),
            ("solve", "full pipeline: estimate, select parameters, iterate"),
            ("trials", "estimator statistics over repeated seeds"),
            ("scaling", "estimator cost versus problem size"),
            ("verify", "dense-oracle invariant suite")):
        p = sub.add_parser(verb, help=text)
        _add_common(p)
        if verb == "trials":
            p.add_argument("--trials", type=int, help="number of trials")
            p.add_argument("--methods", default="ks,fov10,fov15,fov20",
                           help="comma list of estimators to compare")
        if verb == "scaling":
            p.add_argument("--sides", help="comma list of image sides")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    overrides = {
        key: getattr(args, key) for key in
        ExperimentConfig.__dataclass_fields__ if hasattr(args, key)}
    if getattr(args, "sides", None):
        overrides["sides"] = tuple(
            int(s) for s in str(args.sides).split(",") if s.strip())
    return config_from(args.config, **overrides)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.verb == "gen":
            out = experiments.run_gen(cfg)
            print(f"problem written to {out}")
        elif args.verb == "estimate":
            estimate, out = experiments.run_estimate(cfg)
            print(f"method={estimate.method} theta={estimate.theta:.6g} "
                  f"residual={estimate.residual:.3g} mvms={estimate.mvms} "
                  f"converged={estimate.converged}")
            print(f"artifacts in {out}")
        elif args.verb == "solve":
            result = experiments.run_pipeline(cfg)
            for key in sorted(result.summary):
                print(f"{key} = {result.summary[key]}")
            print(f"artifacts in {result.out_dir}")
        elif args.verb == "trials":
            methods = tuple(m.strip() for m in args.methods.split(",")
                            if m.strip())
            out = experiments.run_trials(cfg, trials=args.trials,
                                         methods=methods)
            print((out / "trials_stats.csv").read_text().rstrip())
            print(f"artifacts in {out}")
        elif args.verb == "scaling":
            out = experiments.run_scaling(cfg)
            print((out / "scaling.csv").read_text().rstrip())
            print((out / "scaling_summary.txt").read_text().rstrip())
            print(f"artifacts in {out}")
        elif args.verb == "verify":
            ok, lines = experiments.run_verify(cfg)
            for line in lines:
                print(line)
            if not ok:
                return EXIT_VERIFY_FAILED
    except InfeasibleSpectrumError as exc:
        print(f"infeasible parameters: {exc} "
              f"(offending eigenvalue {exc.eigenvalue})", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OSError, FileNotFoundError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConsistencyError as exc:
        print(f"oracle inconsistency: {exc}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
