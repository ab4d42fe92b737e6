"""Command-line surface: experiment runner plus small inspection utilities.

Exit codes: 0 success, 1 domain error (invalid design, singular model,
excessive failures, bad config content), 2 usage or I/O error.  Human
logging goes to stderr; stdout stays machine-readable for ``folds`` and
``score-demo`` (with ``--json``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .cvdesign import InvalidDesignError, ascii_fold_map, blocked_folds, clustered_folds, fold_plan_json
from .harness import (
    ConfigError,
    ExcessiveFailureError,
    ExperimentConfig,
    derive_stream,
    load_results_json,
    run_experiment,
    summarize,
    validate_config,
    write_results_json,
    PURPOSE_FOLD_PLAN,
)
from .lattice import build_grid
from .models import GaussianDensity
from .scoring import sample_z, score_fold, UndefinedStatisticError

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path) as fh:
        return json.load(fh)


def cmd_run(args) -> int:
    try:
        raw = _load_config_file(args.config)
    except FileNotFoundError as exc:
        _log(str(exc))
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        _log(f"config is not valid JSON: {exc}")
        return EXIT_USAGE
    errors = validate_config(raw)
    if errors:
        for e in errors:
            _log(f"config error: {e}")
        return EXIT_DOMAIN
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.trim is not None:
        raw["trim"] = args.trim
    config = ExperimentConfig.from_dict(raw)
    os.makedirs(args.out, exist_ok=True)
    _log(
        f"spatialcv {__version__} | experiment={config.name} "
        f"lattice={config.rows}x{config.cols} replications={config.replications} "
        f"master_seed={config.seed} parallelism={args.parallelism}"
    )
    progress = None
    if not args.quiet:
        total_tasks = config.replications * max(1, len(config.dgp.rho_grid) or 1)

        def progress(done, total, _every=max(1, total_tasks // 20)):
            if done % _every == 0 or done == total:
                _log(f"  replications {done}/{total}")

    try:
        results = run_experiment(
            config,
            parallelism=args.parallelism,
            collect_fold_scores=args.scores,
            progress=progress,
        )
    except ExcessiveFailureError as exc:
        _log(f"experiment aborted: {exc}")
        return EXIT_DOMAIN
    write_results_json(results, os.path.join(args.out, "results.json"))
    paths = summarize(results, args.out)
    if args.scores and results.fold_scores is not None:
        from .scoring import write_score_table

        write_score_table(
            os.path.join(args.out, "scores.csv"), results.fold_scores,
            extra_fields=("design", "rho"),
        )
    for cell in results.cells:
        s = cell.summary
        z = "nan" if s.z is None else f"{s.z:.3f}"
        rho = "-" if cell.rho is None else f"{cell.rho:g}"
        _log(
            f"  cell rho={rho} design={cell.design} mode={cell.mode}: "
            f"accuracy={s.accuracy:.3f} Z={z} (n={s.n_used}, failed={cell.n_failed})"
        )
    _log(f"wrote {paths['summary']}")
    return EXIT_OK


def cmd_validate_config(args) -> int:
    try:
        raw = _load_config_file(args.config)
    except FileNotFoundError as exc:
        _log(str(exc))
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        _log(f"config is not valid JSON: {exc}")
        return EXIT_USAGE
    errors = validate_config(raw)
    if errors:
        for e in errors:
            _log(f"config error: {e}")
        return EXIT_DOMAIN
    _log("config ok")
    return EXIT_OK


def cmd_folds(args) -> int:
    if (args.size is None) == (args.clusters is None):
        _log("folds: pass exactly one of --size (blocked) or --clusters (clustered)")
        return EXIT_USAGE
    lattice = build_grid(args.rows, args.cols)
    try:
        if args.clusters:
            rng = derive_stream(args.seed, 0, PURPOSE_FOLD_PLAN)
            plan = clustered_folds(
                lattice, args.clusters, buffer_order=args.halo_order,
                scheme=args.scheme, rng=rng,
            )
        else:
            plan = blocked_folds(lattice, args.size, halo_order=args.halo_order, scheme=args.scheme)
    except InvalidDesignError as exc:
        _log(f"invalid design: {exc}")
        return EXIT_DOMAIN
    _log(f"{plan.k} folds ({plan.label}) on {args.rows}x{args.cols}")
    if args.ascii:
        print(ascii_fold_map(plan, args.fold))
    else:
        print(fold_plan_json(plan, indent=2 if not args.json else None))
    return EXIT_OK


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.replace(";", ",").split(",") if v.strip() != ""])


def _parse_matrix(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip() != ""]
    return np.array([[float(v) for v in r.split(",")] for r in rows])


def cmd_score_demo(args) -> int:
    out = {}
    if args.cov is not None:
        if args.y is None:
            _log("score-demo: --y is required when --cov is given")
            return EXIT_USAGE
        cov = _parse_matrix(args.cov)
        y = _parse_vector(args.y)
        mean = _parse_vector(args.mean) if args.mean else np.zeros(y.size)
        if cov.shape != (y.size, y.size) or mean.size != y.size:
            _log("score-demo: mean/covariance/observation dimensions disagree")
            return EXIT_USAGE
        try:
            pred = GaussianDensity.from_covariance(mean, cov)
        except np.linalg.LinAlgError:
            _log("score-demo: covariance is not positive definite")
            return EXIT_DOMAIN
        fs = score_fold(pred, y)
        out["joint"] = fs.joint
        out["pointwise"] = fs.pointwise
    if args.deltas is not None:
        deltas = _parse_vector(args.deltas)
        try:
            out["sample_z"] = sample_z(deltas)
        except (UndefinedStatisticError, ValueError) as exc:
            _log(f"score-demo: {exc}")
            return EXIT_DOMAIN
    if not out:
        _log("score-demo: nothing to do (pass --cov/--y and/or --deltas)")
        return EXIT_USAGE
    if args.json:
        print(json.dumps(out))
    else:
        for key, value in out.items():
            print(f"{key}: {value:.6f}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    if not os.path.exists(args.results):
        _log(f"results file not found: {args.results}")
        return EXIT_USAGE
    results = load_results_json(args.results)
    paths = summarize(results, args.out)
    _log(f"wrote {paths['summary']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatialcv",
        description="Block cross-validation experiments for Gaussian spatial models",
    )
    parser.add_argument("--version", action="version", version=f"spatialcv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a replicated model-selection experiment")
    p_run.add_argument("--config", required=True, help="experiment config JSON")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the config master seed")
    p_run.add_argument("--parallelism", type=int, default=1)
    p_run.add_argument("--trim", type=float, default=None, help="override the trim fraction")
    p_run.add_argument("--scores", action="store_true", help="also write per-fold scores.csv")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate-config", help="check a config without running")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=cmd_validate_config)

    p_folds = sub.add_parser("folds", help="print a fold plan")
    p_folds.add_argument("--rows", type=int, required=True)
    p_folds.add_argument("--cols", type=int, required=True)
    p_folds.add_argument("--size", type=int, default=None, help="blocked design: test block side")
    p_folds.add_argument("--clusters", type=int, default=None, help="clustered design: fold count")
    p_folds.add_argument("--halo-order", type=int, default=1)
    p_folds.add_argument("--scheme", choices=("rook", "queen"), default="queen")
    p_folds.add_argument("--seed", type=int, default=0)
    p_folds.add_argument("--ascii", action="store_true", help="character map of one fold")
    p_folds.add_argument("--fold", type=int, default=0, help="fold index for --ascii")
    p_folds.add_argument("--json", action="store_true", help="compact JSON output")
    p_folds.set_defaults(func=cmd_folds)

    p_score = sub.add_parser("score-demo", help="spot-check scores on inline inputs")
    p_score.add_argument("--mean", default=None, help="comma-separated mean vector")
    p_score.add_argument("--cov", default=None, help="covariance rows, ';'-separated")
    p_score.add_argument("--y", default=None, help="comma-separated observations")
    p_score.add_argument("--deltas", default=None, help="comma-separated fold deltas")
    p_score.add_argument("--json", action="store_true")
    p_score.set_defaults(func=cmd_score_demo)

    p_sum = sub.add_parser("summarize", help="regenerate summary tables from results.json")
    p_sum.add_argument("--results", required=True)
    p_sum.add_argument("--out", required=True)
    p_sum.set_defaults(func=cmd_summarize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
    except (InvalidDesignError, ConfigError) as exc:
        _log(str(exc))
        code = EXIT_DOMAIN
    except ValueError as exc:
        _log(str(exc))
        code = EXIT_USAGE
    return code


if __name__ == "__main__":
    sys.exit(main())
