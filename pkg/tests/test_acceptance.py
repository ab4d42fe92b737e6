"""Acceptance suite: every criterion prints one pass/fail line.

The replicated selection experiments (criteria 7-9) run the shipped desk
presets from configs/ and take tens of minutes on a small machine; run with
``pytest tests/test_acceptance.py -v -s`` to watch the lines appear.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from spatialcv.cvdesign import blocked_folds, partition_views
from spatialcv.harness import run_experiment, summarize
from spatialcv.laplace import FoldProblem, SarEvaluator, build_evaluator, fit_fold, predictive_block
from spatialcv.lattice import build_grid, contiguity, distances, row_standardize
from spatialcv.models import (
    GaussianDensity,
    KernelParams,
    ModelSpec,
    PriorSpec,
    SarParams,
    model_density,
)
from spatialcv.scoring import population_summary, sample_z
from conftest import conditional_gaussian, dense_mvn_logpdf, random_spd

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def _report(number, name, ok, detail=""):
    print(f"[acceptance {number}] {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"acceptance criterion {number} ({name}) failed: {detail}"


def _load_config(name):
    with open(CONFIG_DIR / name) as fh:
        return json.load(fh)


# -- heavy shared runs -------------------------------------------------------


@pytest.fixture(scope="module")
def covsel_runs(tmp_path_factory):
    """Criterion 7's config executed twice at different parallelism levels."""
    config = _load_config("covsel_desk.json")
    out = {}
    for label, parallelism in (("p2", 2), ("p1", 1)):
        results = run_experiment(config, parallelism=parallelism)
        out_dir = tmp_path_factory.mktemp(f"covsel_{label}")
        paths = summarize(results, out_dir)
        out[label] = (results, paths["summary"])
    return out


@pytest.fixture(scope="module")
def netsel_run():
    return run_experiment(_load_config("netsel_desk.json"), parallelism=2)


# -- criteria ----------------------------------------------------------------


def test_criterion_1_fold_arithmetic():
    lat = build_grid(24, 24)
    counts = {s: blocked_folds(lat, s, halo_order=1, scheme="rook").k for s in (1, 2, 3, 4, 6, 8)}
    expected = {1: 576, 2: 144, 3: 64, 4: 36, 6: 16, 8: 9}
    ok = counts == expected and counts[4] == 36
    print(f"    s=4 gives K={counts[4]}")
    _report(1, "fold arithmetic on the 24x24 lattice", ok, f"counts={counts}")


def test_criterion_2_gaussian_density_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 51))
        cov = random_spd(rng, n, scale=float(rng.uniform(0.2, 3.0)))
        mean = rng.standard_normal(n)
        y = mean + rng.standard_normal(n) * rng.uniform(0.5, 2.0)
        expected = dense_mvn_logpdf(y, mean, cov)
        err_cov = abs(GaussianDensity.from_covariance(mean, cov).log_density(y) - expected)
        err_prec = abs(GaussianDensity.from_precision(mean, np.linalg.inv(cov)).log_density(y) - expected)
        worst = max(worst, err_cov, err_prec)
    _report(2, "log density vs dense-inverse oracle", worst < 1e-8, f"max abs err {worst:.2e}")


def test_criterion_3_laplace_exactness_on_quadratics():
    rng = np.random.default_rng(33)
    lat = build_grid(8, 8)
    w = row_standardize(contiguity(lat, "rook", 1))
    dist = distances(lat)
    worst = 0.0
    n_buffered = 0
    for i in range(50):
        if i % 2 == 0:
            params = SarParams(
                beta=rng.standard_normal(2),
                rho=float(rng.uniform(0.0, 0.9)),
                sigma2=float(rng.uniform(0.5, 5.0)),
            )
            X = np.column_stack([np.ones(lat.n), rng.standard_normal(lat.n)])
            family = "sar" if i % 4 == 0 else "modified_sar"
            model = ModelSpec(family=family, adjacency=w, fixed=params)
        else:
            params = KernelParams(lam=float(rng.uniform(0.6, 2.0)), sigma=float(rng.uniform(0.5, 1.5)))
            kind = "matern_half" if i % 4 == 1 else "exp_quadratic"
            model = ModelSpec(family="kernel", kernel=kind, dist=dist, fixed=params)
            X = None
        dens = model_density(model, X, params)
        y = dens.simulate(rng)
        s = int(rng.choice([1, 2, 4]))
        plan = blocked_folds(lat, s, halo_order=1, scheme="queen")
        fold = plan.folds[int(rng.integers(plan.k))]
        n_buffered += fold.buffer.size > 0
        views = partition_views(fold, y, X)
        problem = FoldProblem(build_evaluator(model, X), views)
        result = fit_fold(problem)
        assert result.converged
        pred = predictive_block(result, problem.layout)
        cmean, ccov = conditional_gaussian(
            dens.mean, dens.covariance(), fold.train, fold.test, y[fold.train]
        )
        worst = max(worst, float(np.max(np.abs(pred.mean - cmean))))
        worst = max(worst, float(np.max(np.abs(pred.covariance() - ccov))))
    ok = worst < 1e-6 and n_buffered >= 40
    _report(3, "clamped predictive equals exact conditional", ok,
            f"max abs err {worst:.2e} over 50 folds ({n_buffered} with buffers)")


def test_criterion_4_joint_pointwise_identity_at_s1():
    config = {
        "name": "loo-identity-smoke",
        "lattice": {"rows": 8, "cols": 8},
        "dgp": {"family": "sar", "scheme": "rook", "order": 1,
                "beta": [1.0, 1.0, 0.9], "rho": [0.9], "sigma2": 5.0},
        "candidates": {
            "a": {"family": "sar", "scheme": "rook", "order": 1, "columns": [0, 1]},
            "b": {"family": "sar", "scheme": "rook", "order": 1, "columns": [0, 2]},
        },
        "priors": {"beta_variance": 10.0},
        "folds": {"design": "blocked", "sizes": [1], "halo_order": 1, "scheme": "rook"},
        "replications": 20,
        "seed": 440,
        "trim": None,
    }
    results = run_experiment(config, parallelism=2, collect_fold_scores=True)
    per_key = {}
    for row in results.fold_scores:
        key = (row["replication"], row["model"], row["mode"])
        per_key[key] = per_key.get(key, 0.0) + row["score"]
    worst = 0.0
    for rep in range(20):
        for model in ("a", "b"):
            worst = max(worst, abs(per_key[(rep, model, "joint")] - per_key[(rep, model, "pointwise")]))
    _report(4, "joint equals pointwise for 1x1 test sets", worst < 1e-10,
            f"max |elpd_j - elpd_pw| = {worst:.2e} across 20 replications")


def test_criterion_5_gradient_validation():
    rng = np.random.default_rng(55)
    lat = build_grid(8, 8)
    w = row_standardize(contiguity(lat, "rook", 1))
    X = np.column_stack([np.ones(lat.n), rng.standard_normal((lat.n, 2))])
    lat_k = build_grid(6, 6)
    dist = distances(lat_k)
    failures = []
    worst = 0.0

    def check(problem, y_like, n_points=20):
        nonlocal worst
        base = problem.initial_point()
        for _ in range(n_points):
            z = base + 0.25 * rng.standard_normal(base.size)
            _, g = problem.objective_and_gradient(z)
            h = 1e-6
            for i in range(z.size):
                zp = z.copy()
                zp[i] += h
                zm = z.copy()
                zm[i] -= h
                fd = (problem.objective(zp) - problem.objective(zm)) / (2 * h)
                err = abs(g[i] - fd)
                tol = max(1e-5, 1e-4 * abs(g[i]))
                worst = max(worst, err / tol)
                if err >= tol:
                    failures.append((type(problem.evaluator).__name__, i, err, tol))

    for variant in ("sar", "modified_sar"):
        dgp = model_density(
            ModelSpec(family=variant, adjacency=w), X,
            SarParams(beta=np.array([1.0, 1.0, 0.9]), rho=0.7, sigma2=5.0),
        )
        y = dgp.simulate(rng)
        fold = blocked_folds(lat, 2, halo_order=1, scheme="rook").folds[5]
        problem = FoldProblem(
            SarEvaluator(w, X, priors=PriorSpec(), variant=variant),
            partition_views(fold, y, X),
        )
        check(problem, y)
    for kind in ("matern_half", "exp_quadratic"):
        model = ModelSpec(family="kernel", kernel=kind, dist=dist,
                          priors=PriorSpec(sigma_variance=1.0, lambda_variance=1.0))
        y = model_density(model, None, KernelParams(lam=1.0, sigma=1.0)).simulate(rng)
        fold = blocked_folds(lat_k, 2, halo_order=1, scheme="queen").folds[3]
        problem = FoldProblem(build_evaluator(model, None), partition_views(fold, y, None))
        check(problem, y)
    _report(5, "analytic gradients match central differences", not failures,
            f"worst err/tol ratio {worst:.3f}; {len(failures)} violations")


def test_criterion_6_statistic_arithmetic():
    z = sample_z([1.0, 2.0, 3.0])
    ok_z = abs(z - 3.4641) < 1e-4
    s = population_summary([1.0, 2.0, 3.0])
    ok_summary = s.z == 2.0 and s.accuracy == 1.0 and s.mean == 2.0 and s.sd == 1.0
    trimmed = population_summary([1.0] * 98 + [-1000.0, 1000.0], trim=0.98)
    ok_trim = (
        trimmed.mean == 1.0 and trimmed.sd == 0.0 and trimmed.z is None
        and trimmed.accuracy == 0.99 and trimmed.n_used == 98
    )
    _report(6, "selection statistic arithmetic", ok_z and ok_summary and ok_trim,
            f"sample_z={z:.5f}, summary=(Z={s.z}, acc={s.accuracy}), "
            f"trimmed=(mean={trimmed.mean}, sd={trimmed.sd}, acc={trimmed.accuracy})")


def _acc_z(results, rho, design, mode):
    cell = results.cell(rho, design, mode)
    return cell.summary.accuracy, cell.summary.z


def test_criterion_7_covariate_selection_trends(covsel_runs):
    results = covsel_runs["p2"][0]
    details = []

    acc_j, z_j = _acc_z(results, 0.95, "blocked_s4", "joint")
    acc_p, z_p = _acc_z(results, 0.95, "blocked_s4", "pointwise")
    part_a = acc_j >= acc_p and z_j > z_p
    details.append(f"(a) rho=0.95 s=4: acc_joint={acc_j:.3f} vs acc_pw={acc_p:.3f}, "
                   f"Z_joint={z_j:.3f} vs Z_pw={z_p:.3f}")

    acc_p1, _ = _acc_z(results, 0.95, "blocked_s1", "pointwise")
    part_b = acc_p <= acc_p1 + 0.05
    details.append(f"(b) rho=0.95 pointwise: acc(s=4)={acc_p:.3f} <= acc(s=1)={acc_p1:.3f}+0.05")

    part_c = True
    for s in (1, 2, 4):
        aj, _ = _acc_z(results, 0.0, f"blocked_s{s}", "joint")
        ap, _ = _acc_z(results, 0.0, f"blocked_s{s}", "pointwise")
        part_c = part_c and abs(aj - ap) <= 0.10
        details.append(f"(c) rho=0 s={s}: |{aj:.3f} - {ap:.3f}| <= 0.10")

    _report(7, "covariate-selection desk reproduction", part_a and part_b and part_c,
            "; ".join(details))


def test_criterion_8_network_selection_sanity(netsel_run):
    results = netsel_run
    details = []
    ok = True
    for s in (2, 4):
        for mode in ("joint", "pointwise"):
            acc, _ = _acc_z(results, 0.0, f"blocked_s{s}", mode)
            ok = ok and 0.35 <= acc <= 0.65
            details.append(f"rho=0 s={s} {mode}: acc={acc:.3f}")
    acc_j, z_j = _acc_z(results, 0.9, "blocked_s4", "joint")
    _, z_p = _acc_z(results, 0.9, "blocked_s4", "pointwise")
    ok = ok and acc_j > 0.5 and z_j > z_p
    details.append(f"rho=0.9 s=4: acc_joint={acc_j:.3f}, Z_joint={z_j:.3f} vs Z_pw={z_p:.3f}")
    _report(8, "network-selection desk sanity", ok, "; ".join(details))


def test_criterion_9_determinism_across_parallelism(covsel_runs):
    csv_p2 = open(covsel_runs["p2"][1], "rb").read()
    csv_p1 = open(covsel_runs["p1"][1], "rb").read()
    _report(9, "byte-identical summaries across parallelism", csv_p2 == csv_p1,
            f"{len(csv_p2)} bytes vs {len(csv_p1)} bytes")
