"""Replicated model-selection experiments.

An experiment draws many independent datasets from a configured spatial
data-generating process, scores a pair of candidate models on every fold of
every configured fold design (jointly and pointwise), and summarizes the
resulting selection statistics per (dgp cell, fold design, mode).

Determinism: every random draw derives from the master seed through
dedicated substreams, replication datasets are bitwise-shared across fold
designs (and across dgp cells via common random numbers), and aggregation
order is fixed, so results are identical at any parallelism level.
"""

from __future__ import annotations

import json
import multiprocessing
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .cvdesign import FoldPlan, blocked_folds, clustered_folds, partition_views
from .laplace import (
    DegenerateCurvatureError,
    FoldProblem,
    KernelEvaluator,
    MapOptions,
    SarEvaluator,
    fit_fold,
    predictive_block,
)
from .lattice import Lattice, build_grid, contiguity, distances, row_standardize
from .models import KernelParams, PriorSpec, SarParams, kernel_covariance, modified_sar_density, sar_density
from .scoring import (
    MODES,
    PopulationSummary,
    SelectionRecord,
    population_summary,
    score_fold,
    selection_record,
)

SAR_FAMILIES = ("sar", "modified_sar")
FAMILIES = SAR_FAMILIES + ("kernel",)
KERNELS = ("matern_half", "exp_quadratic")
SCHEMES = ("rook", "queen")

# purposes for substream derivation
PURPOSE_DGP_X = 0
PURPOSE_DGP_NOISE = 1
PURPOSE_FOLD_PLAN = 2
PURPOSE_RETRY = 3

_PURPOSE_NAMES = {
    "dgp_x": PURPOSE_DGP_X,
    "dgp_noise": PURPOSE_DGP_NOISE,
    "fold_plan": PURPOSE_FOLD_PLAN,
    "retry": PURPOSE_RETRY,
}


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


class ExcessiveFailureError(Exception):
    """More than the tolerated share of selection runs failed."""


def derive_stream(master_seed: int, replication: int, purpose, *extra) -> np.random.Generator:
    """Independent substream keyed by (master seed, replication, purpose).

    Data-generating purposes depend on nothing else, so replication datasets
    are shared across fold designs; additional key components (used for
    per-fold retry streams) extend the key without changing the base ones.
    """
    code = _PURPOSE_NAMES[purpose] if isinstance(purpose, str) else int(purpose)
    ss = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=(int(replication), code, *map(int, extra))
    )
    return np.random.default_rng(ss)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DgpConfig:
    family: str
    scheme: str = "rook"
    order: int = 1
    kernel: str | None = None
    beta: tuple = ()
    rho_grid: tuple = ()
    sigma2: float | None = None
    lam: float = 1.0
    sigma: float = 1.0


@dataclass(frozen=True)
class CandidateConfig:
    family: str
    scheme: str = "rook"
    order: int = 1
    kernel: str | None = None
    columns: tuple | None = None


@dataclass(frozen=True)
class FoldDesignConfig:
    design: str = "blocked"
    sizes: tuple = ()
    k: int = 0
    halo_order: int = 1
    scheme: str = "queen"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    rows: int
    cols: int
    dgp: DgpConfig
    candidate_a: CandidateConfig
    candidate_b: CandidateConfig
    folds: FoldDesignConfig
    replications: int
    seed: int
    priors: PriorSpec = field(default_factory=PriorSpec)
    trim: float | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        errors = validate_config(raw)
        if errors:
            raise ConfigError("; ".join(errors))
        lat = raw["lattice"]
        dgp_raw = raw["dgp"]
        rho = dgp_raw.get("rho", ())
        if isinstance(rho, (int, float)):
            rho = (float(rho),)
        dgp = DgpConfig(
            family=dgp_raw["family"],
            scheme=dgp_raw.get("scheme", "rook"),
            order=int(dgp_raw.get("order", 1)),
            kernel=dgp_raw.get("kernel"),
            beta=tuple(float(b) for b in dgp_raw.get("beta") or ()),
            rho_grid=tuple(float(r) for r in rho or ()),
            sigma2=float(dgp_raw["sigma2"]) if dgp_raw.get("sigma2") is not None else None,
            lam=float(dgp_raw.get("lam") or 1.0),
            sigma=float(dgp_raw.get("sigma") or 1.0),
        )
        cands = {}
        for key in ("a", "b"):
            c = raw["candidates"][key]
            cols = c.get("columns")
            cands[key] = CandidateConfig(
                family=c["family"],
                scheme=c.get("scheme") or "rook",
                order=int(c.get("order") or 1),
                kernel=c.get("kernel"),
                columns=tuple(int(i) for i in cols) if cols is not None else None,
            )
        f = raw["folds"]
        folds = FoldDesignConfig(
            design=f.get("design") or "blocked",
            sizes=tuple(int(s) for s in f.get("sizes") or ()),
            k=int(f.get("k") or 0),
            halo_order=int(f["halo_order"]) if f.get("halo_order") is not None else 1,
            scheme=f.get("scheme") or "queen",
        )
        priors = PriorSpec(**raw.get("priors", {}))
        return cls(
            name=raw["name"],
            rows=int(lat["rows"]),
            cols=int(lat["cols"]),
            dgp=dgp,
            candidate_a=cands["a"],
            candidate_b=cands["b"],
            folds=folds,
            replications=int(raw["replications"]),
            seed=int(raw["seed"]),
            priors=priors,
            trim=float(raw["trim"]) if raw.get("trim") is not None else None,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lattice": {"rows": self.rows, "cols": self.cols},
            "dgp": {
                "family": self.dgp.family,
                "scheme": self.dgp.scheme,
                "order": self.dgp.order,
                "kernel": self.dgp.kernel,
                "beta": list(self.dgp.beta),
                "rho": list(self.dgp.rho_grid),
                "sigma2": self.dgp.sigma2,
                "lam": self.dgp.lam,
                "sigma": self.dgp.sigma,
            },
            "candidates": {
                key: {
                    "family": c.family,
                    "scheme": c.scheme,
                    "order": c.order,
                    "kernel": c.kernel,
                    "columns": list(c.columns) if c.columns is not None else None,
                }
                for key, c in (("a", self.candidate_a), ("b", self.candidate_b))
            },
            "priors": asdict(self.priors),
            "folds": {
                "design": self.folds.design,
                "sizes": list(self.folds.sizes),
                "k": self.folds.k,
                "halo_order": self.folds.halo_order,
                "scheme": self.folds.scheme,
            },
            "replications": self.replications,
            "seed": self.seed,
            "trim": self.trim,
        }


def _validate_candidate(c: dict, label: str, n_cov: int, errors: list):
    fam = c.get("family")
    if fam not in FAMILIES:
        errors.append(f"candidates.{label}.family must be one of {FAMILIES}")
        return
    if fam in SAR_FAMILIES:
        if c.get("scheme", "rook") not in SCHEMES:
            errors.append(f"candidates.{label}.scheme must be rook or queen")
        order = c.get("order", 1)
        if not isinstance(order, int) or order < 1:
            errors.append(f"candidates.{label}.order must be an integer >= 1")
        cols = c.get("columns")
        if cols is not None:
            if not cols or any((not isinstance(i, int)) or i < 0 or i >= n_cov for i in cols):
                errors.append(
                    f"candidates.{label}.columns must be nonempty indices into the {n_cov} dgp covariates"
                )
    else:
        if c.get("kernel") not in KERNELS:
            errors.append(f"candidates.{label}.kernel must be one of {KERNELS}")


def validate_config(raw: dict) -> list[str]:
    """Schema diagnostics for a raw config dict; empty list means valid."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        return ["config must be a JSON object"]
    for key in ("name", "lattice", "dgp", "candidates", "folds", "replications", "seed"):
        if key not in raw:
            errors.append(f"missing required key {key!r}")
    if errors:
        return errors
    lat = raw["lattice"]
    rows, cols = lat.get("rows"), lat.get("cols")
    if not (isinstance(rows, int) and isinstance(cols, int) and rows >= 1 and cols >= 1):
        errors.append("lattice.rows and lattice.cols must be positive integers")
        rows = cols = None
    dgp = raw["dgp"]
    fam = dgp.get("family")
    n_cov = 0
    if fam not in FAMILIES:
        errors.append(f"dgp.family must be one of {FAMILIES}")
    elif fam in SAR_FAMILIES:
        beta = dgp.get("beta")
        if not beta or not all(isinstance(b, (int, float)) for b in beta):
            errors.append("dgp.beta must be a nonempty list of numbers for SAR families")
        else:
            n_cov = len(beta)
        rho = dgp.get("rho")
        rho_list = [rho] if isinstance(rho, (int, float)) else rho
        if not rho_list or any(not isinstance(r, (int, float)) or not (0.0 <= r < 1.0) for r in rho_list):
            errors.append("dgp.rho must be a value or list of values in [0, 1)")
        if not isinstance(dgp.get("sigma2"), (int, float)) or dgp.get("sigma2", 0) <= 0:
            errors.append("dgp.sigma2 must be a positive number")
        if dgp.get("scheme", "rook") not in SCHEMES:
            errors.append("dgp.scheme must be rook or queen")
        order = dgp.get("order", 1)
        if not isinstance(order, int) or order < 1:
            errors.append("dgp.order must be an integer >= 1")
    else:
        if dgp.get("kernel") not in KERNELS:
            errors.append(f"dgp.kernel must be one of {KERNELS}")
        if dgp.get("lam", 1.0) <= 0 or dgp.get("sigma", 1.0) <= 0:
            errors.append("dgp.lam and dgp.sigma must be positive")
    cands = raw.get("candidates", {})
    if not isinstance(cands, dict) or set(cands) != {"a", "b"}:
        errors.append("candidates must contain exactly the keys 'a' and 'b'")
    else:
        for label in ("a", "b"):
            _validate_candidate(cands[label], label, n_cov, errors)
    f = raw["folds"]
    design = f.get("design", "blocked")
    if design == "blocked":
        sizes = f.get("sizes")
        if not sizes or any(not isinstance(s, int) or s < 1 for s in sizes):
            errors.append("folds.sizes must be a nonempty list of positive integers")
        elif rows and cols:
            for s in sizes:
                if rows % s or cols % s:
                    errors.append(f"block size {s} does not divide the {rows}x{cols} lattice")
    elif design == "clustered":
        if not isinstance(f.get("k"), int) or f.get("k", 0) < 2:
            errors.append("folds.k must be an integer >= 2 for clustered designs")
    else:
        errors.append("folds.design must be 'blocked' or 'clustered'")
    halo = f.get("halo_order", 1)
    if not isinstance(halo, int) or halo < 0:
        errors.append("folds.halo_order must be an integer >= 0")
    if f.get("scheme", "queen") not in SCHEMES:
        errors.append("folds.scheme must be rook or queen")
    if not isinstance(raw.get("replications"), int) or raw["replications"] < 1:
        errors.append("replications must be a positive integer")
    if not isinstance(raw.get("seed"), int):
        errors.append("seed must be an integer")
    trim = raw.get("trim")
    if trim is not None and (not isinstance(trim, (int, float)) or not (0.0 < trim <= 1.0)):
        errors.append("trim must be a fraction in (0, 1] or null")
    return errors


# ---------------------------------------------------------------------------
# execution context (built once per worker process)


class ExperimentContext:
    """Shared immutable state for all replication tasks of one experiment."""

    def __init__(self, config: ExperimentConfig, collect_fold_scores: bool = False):
        self.config = config
        self.collect_fold_scores = collect_fold_scores
        self.lattice: Lattice = build_grid(config.rows, config.cols)
        self.n = self.lattice.n
        self._adjacency = {}
        self.dist = None
        if config.dgp.family == "kernel" or "kernel" in (
            config.candidate_a.family, config.candidate_b.family
        ):
            self.dist = distances(self.lattice)
        self.n_covariates = len(config.dgp.beta) if config.dgp.family in SAR_FAMILIES else 0
        self.plans: list[FoldPlan] = self._build_plans()
        self.dgp_cells: list[float | None] = (
            list(config.dgp.rho_grid) if config.dgp.family in SAR_FAMILIES else [None]
        )
        self.opts = MapOptions()

    def std_adjacency(self, scheme: str, order: int):
        key = (scheme, order)
        if key not in self._adjacency:
            adj = row_standardize(contiguity(self.lattice, scheme, order))
            adj.eigenvalues()  # warm the spectrum cache once per process
            self._adjacency[key] = adj
        return self._adjacency[key]

    def _build_plans(self) -> list[FoldPlan]:
        f = self.config.folds
        if f.design == "blocked":
            return [
                blocked_folds(self.lattice, s, halo_order=f.halo_order, scheme=f.scheme)
                for s in f.sizes
            ]
        rng = derive_stream(self.config.seed, 0, PURPOSE_FOLD_PLAN)
        return [
            clustered_folds(self.lattice, f.k, buffer_order=f.halo_order, scheme=f.scheme, rng=rng)
        ]

    def dgp_density(self, X, rho):
        dgp = self.config.dgp
        if dgp.family in SAR_FAMILIES:
            adj = self.std_adjacency(dgp.scheme, dgp.order)
            params = SarParams(beta=np.array(dgp.beta), rho=rho, sigma2=dgp.sigma2)
            ctor = sar_density if dgp.family == "sar" else modified_sar_density
            return ctor(adj, X, params)
        return kernel_covariance(dgp.kernel, self.dist, KernelParams(lam=dgp.lam, sigma=dgp.sigma))

    def evaluator(self, cand: CandidateConfig, X):
        if cand.family in SAR_FAMILIES:
            adj = self.std_adjacency(cand.scheme, cand.order)
            return SarEvaluator(
                adj, X, columns=cand.columns, priors=self.config.priors, variant=cand.family
            )
        return KernelEvaluator(cand.kernel, self.dist, priors=self.config.priors)


def run_replication(ctx: ExperimentContext, rho_idx: int, rep: int):
    """Run one replication against every fold design; pure function of
    (config, master seed, rho_idx, rep)."""
    config = ctx.config
    rho = ctx.dgp_cells[rho_idx]
    X = None
    if ctx.n_covariates:
        rng_x = derive_stream(config.seed, rep, PURPOSE_DGP_X)
        X = np.column_stack(
            [np.ones(ctx.n)] + [rng_x.standard_normal(ctx.n) for _ in range(ctx.n_covariates - 1)]
        )
    noise = derive_stream(config.seed, rep, PURPOSE_DGP_NOISE).standard_normal(ctx.n)
    y = ctx.dgp_density(X, rho).from_standard_normal(noise)

    eval_a = ctx.evaluator(config.candidate_a, X)
    eval_b = ctx.evaluator(config.candidate_b, X)

    records: dict[str, SelectionRecord | None] = {}
    fold_rows = [] if ctx.collect_fold_scores else None
    for design_idx, plan in enumerate(ctx.plans):
        scores = {"a": [], "b": []}
        failed = False
        for fold_idx, fold in enumerate(plan.folds):
            views = partition_views(fold, y, X)
            for model_idx, (key, evaluator) in enumerate((("a", eval_a), ("b", eval_b))):
                problem = FoldProblem(evaluator, views)
                result = fit_fold(problem, rng=None, opts=ctx.opts)
                if not result.converged:
                    retry_rng = derive_stream(
                        config.seed, rep, PURPOSE_RETRY, rho_idx, design_idx, fold_idx, model_idx
                    )
                    result = fit_fold(problem, rng=retry_rng, opts=ctx.opts)
                if not result.converged:
                    failed = True
                    break
                try:
                    pred = predictive_block(result, problem.layout)
                except DegenerateCurvatureError:
                    failed = True
                    break
                scores[key].append(score_fold(pred, y[fold.test], fold_id=fold_idx))
            if failed:
                break
        if failed:
            records[plan.label] = None
            continue
        records[plan.label] = selection_record(rep, scores["a"], scores["b"])
        if fold_rows is not None:
            for key in ("a", "b"):
                for fs in scores[key]:
                    for mode in MODES:
                        fold_rows.append(
                            {
                                "design": plan.label,
                                "rho": rho,
                                "replication": rep,
                                "fold": fs.fold_id,
                                "model": key,
                                "mode": mode,
                                "n_test": fs.n_test,
                                "score": fs.by_mode(mode),
                            }
                        )
    return rho_idx, rep, records, fold_rows


# module-global context for worker processes
_WORKER_CTX: ExperimentContext | None = None


def _worker_init(config_dict: dict, collect_fold_scores: bool):
    global _WORKER_CTX
    _WORKER_CTX = ExperimentContext(
        ExperimentConfig.from_dict(config_dict), collect_fold_scores
    )


def _worker_run(task):
    rho_idx, rep = task
    return run_replication(_WORKER_CTX, rho_idx, rep)


# ---------------------------------------------------------------------------
# result assembly


@dataclass(frozen=True)
class CellResult:
    """Summary of one (dgp cell, fold design, evaluation mode)."""

    rho: float | None
    design: str
    mode: str
    summary: PopulationSummary
    n_failed: int
    statistics: tuple


@dataclass
class ResultSet:
    config: ExperimentConfig
    cells: list[CellResult]
    failures: dict
    runtime: dict
    fold_scores: list | None = None

    def cell(self, rho, design: str, mode: str) -> CellResult:
        for c in self.cells:
            if c.design == design and c.mode == mode and _rho_eq(c.rho, rho):
                return c
        raise KeyError(f"no cell (rho={rho}, design={design}, mode={mode})")

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "cells": [
                {
                    "rho": c.rho,
                    "design": c.design,
                    "mode": c.mode,
                    "summary": {
                        "mean": c.summary.mean,
                        "sd": c.summary.sd,
                        "z": c.summary.z,
                        "accuracy": c.summary.accuracy,
                        "n_total": c.summary.n_total,
                        "n_used": c.summary.n_used,
                        "trim": c.summary.trim,
                    },
                    "n_failed": c.n_failed,
                    "statistics": list(c.statistics),
                }
                for c in self.cells
            ],
            "failures": self.failures,
            "runtime": self.runtime,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ResultSet":
        cells = []
        for c in raw["cells"]:
            s = c["summary"]
            cells.append(
                CellResult(
                    rho=c["rho"],
                    design=c["design"],
                    mode=c["mode"],
                    summary=PopulationSummary(
                        mode=c["mode"], mean=s["mean"], sd=s["sd"], z=s["z"],
                        accuracy=s["accuracy"], n_total=s["n_total"],
                        n_used=s["n_used"], trim=s["trim"],
                    ),
                    n_failed=c["n_failed"],
                    statistics=tuple(c["statistics"]),
                )
            )
        return cls(
            config=ExperimentConfig.from_dict(raw["config"]),
            cells=cells,
            failures=raw.get("failures", {}),
            runtime=raw.get("runtime", {}),
        )


def _rho_eq(a, b):
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) < 1e-12


def _cell_key(rho, design):
    return f"rho={rho:g}|{design}" if rho is not None else design


def run_experiment(
    config: ExperimentConfig | dict,
    parallelism: int = 1,
    collect_fold_scores: bool = False,
    progress=None,
    max_failure_rate: float = 0.2,
) -> ResultSet:
    """Execute all replications and aggregate per-cell summaries.

    Deterministic given (config, seed) at any parallelism level.  Raises
    :class:`ExcessiveFailureError` when more than ``max_failure_rate`` of the
    (replication x dgp cell x design) selection runs fail.
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    else:
        errors = validate_config(config.to_dict())
        if errors:
            raise ConfigError("; ".join(errors))
    start = time.time()
    ctx = ExperimentContext(config, collect_fold_scores)
    tasks = [(rho_idx, rep) for rho_idx in range(len(ctx.dgp_cells)) for rep in range(config.replications)]

    outcomes = {}
    fold_rows_all = [] if collect_fold_scores else None
    done = 0
    if parallelism <= 1:
        for task in tasks:
            rho_idx, rep, records, fold_rows = run_replication(ctx, *task)
            outcomes[(rho_idx, rep)] = records
            if fold_rows_all is not None and fold_rows:
                fold_rows_all.extend(fold_rows)
            done += 1
            if progress is not None:
                progress(done, len(tasks))
    else:
        with multiprocessing.Pool(
            processes=parallelism,
            initializer=_worker_init,
            initargs=(config.to_dict(), collect_fold_scores),
        ) as pool:
            for rho_idx, rep, records, fold_rows in pool.imap_unordered(_worker_run, tasks, chunksize=1):
                outcomes[(rho_idx, rep)] = records
                if fold_rows_all is not None and fold_rows:
                    fold_rows_all.extend(fold_rows)
                done += 1
                if progress is not None:
                    progress(done, len(tasks))

    cells: list[CellResult] = []
    failures: dict[str, int] = {}
    total_runs = 0
    total_failed = 0
    for rho_idx, rho in enumerate(ctx.dgp_cells):
        for plan in ctx.plans:
            stats = {mode: [] for mode in MODES}
            n_failed = 0
            for rep in range(config.replications):
                record = outcomes[(rho_idx, rep)][plan.label]
                total_runs += 1
                if record is None:
                    n_failed += 1
                    total_failed += 1
                    continue
                for mode in MODES:
                    stats[mode].append(record.statistic[mode])
            key = _cell_key(rho, plan.label)
            if n_failed:
                failures[key] = n_failed
            for mode in MODES:
                if len(stats[mode]) >= 2:
                    cells.append(
                        CellResult(
                            rho=rho,
                            design=plan.label,
                            mode=mode,
                            summary=population_summary(stats[mode], trim=config.trim, mode=mode),
                            n_failed=n_failed,
                            statistics=tuple(stats[mode]),
                        )
                    )

    runtime = {
        "version": __version__,
        "wall_seconds": time.time() - start,
        "parallelism": parallelism,
        "tasks": len(tasks),
        "optimizer": {
            "grad_tol": ctx.opts.grad_tol,
            "max_iter": ctx.opts.max_iter,
            "hess_step": ctx.opts.hess_step,
        },
    }
    result = ResultSet(config=config, cells=cells, failures=failures, runtime=runtime,
                       fold_scores=fold_rows_all)
    if total_runs and total_failed / total_runs > max_failure_rate:
        raise ExcessiveFailureError(
            f"{total_failed}/{total_runs} selection runs failed "
            f"(> {max_failure_rate:.0%} tolerated)"
        )
    return result


# ---------------------------------------------------------------------------
# summary tables


SUMMARY_FIELDS = (
    "experiment", "design", "mode", "dgp_cell", "rho", "accuracy", "z", "mean", "sd",
    "n_total", "n_used", "n_failed", "trim",
)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summary_rows(results: ResultSet):
    for c in results.cells:
        s = c.summary
        # the dgp cell is the true autoregressive value, or the kernel for
        # kernel-field experiments (which have a single dgp cell)
        dgp_cell = repr(c.rho) if c.rho is not None else results.config.dgp.kernel
        yield {
            "experiment": results.config.name,
            "design": c.design,
            "mode": c.mode,
            "dgp_cell": dgp_cell,
            "rho": c.rho,
            "accuracy": s.accuracy,
            "z": s.z,
            "mean": s.mean,
            "sd": s.sd,
            "n_total": s.n_total,
            "n_used": s.n_used,
            "n_failed": c.n_failed,
            "trim": s.trim,
        }


def write_summary_csv(results: ResultSet, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_render_summary_csv(results))


def summarize(results: ResultSet, out_dir) -> dict:
    """Write the plot-ready summary CSV plus a JSON manifest; returns paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "summary.csv")
    manifest_path = os.path.join(out_dir, "manifest.json")
    _atomic_write(csv_path, _render_summary_csv(results))
    manifest = {
        "experiment": results.config.name,
        "config": results.config.to_dict(),
        "files": ["summary.csv"],
        "cells": len(results.cells),
        "failures": results.failures,
        "runtime": results.runtime,
    }
    _atomic_write(manifest_path, json.dumps(manifest, indent=2) + "\n")
    return {"summary": csv_path, "manifest": manifest_path}


def _render_summary_csv(results: ResultSet) -> str:
    lines = [",".join(SUMMARY_FIELDS)]
    for row in summary_rows(results):
        lines.append(",".join(_fmt(row[f]) for f in SUMMARY_FIELDS))
    return "\n".join(lines) + "\n"


def _atomic_write(path, content: str) -> None:
    import os

    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(content)
    os.replace(tmp, path)


def write_results_json(results: ResultSet, path) -> None:
    _atomic_write(path, json.dumps(results.to_dict(), indent=2) + "\n")


def load_results_json(path) -> ResultSet:
    with open(path) as fh:
        return ResultSet.from_dict(json.load(fh))
