import copy
import json

import numpy as np
import pytest

import spatialcv.harness as harness
from spatialcv.harness import (
    ConfigError,
    ExcessiveFailureError,
    ExperimentConfig,
    PURPOSE_DGP_NOISE,
    PURPOSE_DGP_X,
    PURPOSE_RETRY,
    derive_stream,
    load_results_json,
    run_experiment,
    summarize,
    validate_config,
    write_results_json,
)

TINY_CONFIG = {
    "name": "tiny",
    "lattice": {"rows": 6, "cols": 6},
    "dgp": {
        "family": "sar",
        "scheme": "rook",
        "order": 1,
        "beta": [1.0, 1.0, 0.9],
        "rho": [0.0, 0.6],
        "sigma2": 5.0,
    },
    "candidates": {
        "a": {"family": "sar", "scheme": "rook", "order": 1, "columns": [0, 1]},
        "b": {"family": "sar", "scheme": "rook", "order": 1, "columns": [0, 2]},
    },
    "priors": {"beta_variance": 10.0, "rho_a": 2.0, "rho_b": 2.0, "sigma2_variance": 10.0},
    "folds": {"design": "blocked", "sizes": [2, 3], "halo_order": 1, "scheme": "rook"},
    "replications": 4,
    "seed": 777,
    "trim": None,
}


def test_derive_stream_reproducible():
    a = derive_stream(123, 5, PURPOSE_DGP_X).standard_normal(4)
    b = derive_stream(123, 5, PURPOSE_DGP_X).standard_normal(4)
    assert np.array_equal(a, b)


def test_derive_stream_purpose_and_replication_separation():
    seen = set()
    for rep in range(20):
        for purpose in (PURPOSE_DGP_X, PURPOSE_DGP_NOISE, PURPOSE_RETRY):
            first = int(derive_stream(99, rep, purpose).integers(0, 2**63))
            assert first not in seen
            seen.add(first)


def test_derive_stream_accepts_names_and_extras():
    by_name = derive_stream(7, 0, "dgp_noise").standard_normal(3)
    by_code = derive_stream(7, 0, PURPOSE_DGP_NOISE).standard_normal(3)
    assert np.array_equal(by_name, by_code)
    extra = derive_stream(7, 0, PURPOSE_RETRY, 1, 2, 3).standard_normal(3)
    extra2 = derive_stream(7, 0, PURPOSE_RETRY, 1, 2, 4).standard_normal(3)
    assert not np.array_equal(extra, extra2)


def test_validate_config_accepts_tiny():
    assert validate_config(TINY_CONFIG) == []


def test_validate_config_catches_problems():
    bad = copy.deepcopy(TINY_CONFIG)
    bad["folds"]["sizes"] = [4]
    errors = validate_config(bad)
    assert any("does not divide" in e for e in errors)

    bad = copy.deepcopy(TINY_CONFIG)
    del bad["seed"]
    assert any("seed" in e for e in validate_config(bad))

    bad = copy.deepcopy(TINY_CONFIG)
    bad["dgp"]["rho"] = [1.2]
    assert any("rho" in e for e in validate_config(bad))

    bad = copy.deepcopy(TINY_CONFIG)
    bad["candidates"]["a"]["columns"] = [0, 7]
    assert any("columns" in e for e in validate_config(bad))

    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"name": "x"})


KERNEL_CONFIG = {
    "name": "tiny-kernel",
    "lattice": {"rows": 6, "cols": 6},
    "dgp": {"family": "kernel", "kernel": "matern_half", "lam": 1.0, "sigma": 1.0},
    "candidates": {
        "a": {"family": "kernel", "kernel": "matern_half"},
        "b": {"family": "kernel", "kernel": "exp_quadratic"},
    },
    "priors": {"sigma_variance": 1.0, "lambda_variance": 1.0},
    "folds": {"design": "blocked", "sizes": [3], "halo_order": 1, "scheme": "queen"},
    "replications": 2,
    "seed": 4242,
    "trim": None,
}


def test_config_round_trip():
    config = ExperimentConfig.from_dict(TINY_CONFIG)
    again = ExperimentConfig.from_dict(config.to_dict())
    assert again == config


def test_kernel_config_round_trip():
    # kernel configs leave the SAR-only fields null; the echoed dict must
    # parse back (workers are initialized from it)
    config = ExperimentConfig.from_dict(KERNEL_CONFIG)
    echoed = config.to_dict()
    assert validate_config(echoed) == []
    assert ExperimentConfig.from_dict(echoed) == config


@pytest.fixture(scope="module")
def tiny_results():
    return run_experiment(TINY_CONFIG, parallelism=1)


def test_run_experiment_cells_complete(tiny_results):
    results = tiny_results
    # 2 rho cells x 2 designs x 2 modes
    assert len(results.cells) == 8
    designs = {c.design for c in results.cells}
    assert designs == {"blocked_s2", "blocked_s3"}
    for cell in results.cells:
        assert cell.summary.n_total == 4
        assert len(cell.statistics) == 4
        assert cell.n_failed == 0
    # joint and pointwise aggregate identical replication sets
    joint = results.cell(0.6, "blocked_s2", "joint")
    pw = results.cell(0.6, "blocked_s2", "pointwise")
    assert len(joint.statistics) == len(pw.statistics)


def test_run_experiment_deterministic_across_parallelism(tiny_results):
    par = run_experiment(TINY_CONFIG, parallelism=2)
    a = tiny_results.to_dict()
    b = par.to_dict()
    a.pop("runtime")
    b.pop("runtime")
    assert a == b


def test_run_experiment_validates_config():
    bad = copy.deepcopy(TINY_CONFIG)
    bad["replications"] = 0
    with pytest.raises(ConfigError):
        run_experiment(bad)


def test_orientation_swap_negates_statistics(tiny_results):
    swapped_config = copy.deepcopy(TINY_CONFIG)
    swapped_config["candidates"] = {
        "a": TINY_CONFIG["candidates"]["b"],
        "b": TINY_CONFIG["candidates"]["a"],
    }
    swapped = run_experiment(swapped_config, parallelism=1)
    for cell in tiny_results.cells:
        mirror = swapped.cell(cell.rho, cell.design, cell.mode)
        assert np.allclose(np.asarray(mirror.statistics), -np.asarray(cell.statistics), atol=1e-9)
        zeros = float(np.mean(np.asarray(cell.statistics) == 0.0))
        assert abs(
            mirror.summary.accuracy - (1.0 - cell.summary.accuracy - zeros)
        ) < 1e-12


def test_datasets_shared_across_designs(tiny_results):
    # same replication -> identical statistics inputs require identical y;
    # verified indirectly: rerunning with a single design reproduces the
    # same per-replication statistics as the two-design run
    solo = copy.deepcopy(TINY_CONFIG)
    solo["folds"]["sizes"] = [2]
    results_solo = run_experiment(solo, parallelism=1)
    for mode in ("joint", "pointwise"):
        full = tiny_results.cell(0.6, "blocked_s2", mode)
        alone = results_solo.cell(0.6, "blocked_s2", mode)
        assert np.array_equal(np.asarray(full.statistics), np.asarray(alone.statistics))


def test_summarize_and_results_round_trip(tiny_results, tmp_path):
    paths = summarize(tiny_results, tmp_path)
    lines = open(paths["summary"]).read().splitlines()
    assert lines[0].startswith("experiment,design,mode,dgp_cell,rho,")
    assert len(lines) == 1 + len(tiny_results.cells)
    manifest = json.load(open(paths["manifest"]))
    assert manifest["experiment"] == "tiny"
    assert manifest["files"] == ["summary.csv"]

    results_path = tmp_path / "results.json"
    write_results_json(tiny_results, results_path)
    loaded = load_results_json(results_path)
    out2 = tmp_path / "again"
    paths2 = summarize(loaded, out2)
    assert open(paths["summary"]).read() == open(paths2["summary"]).read()


def test_kernel_experiment_smoke():
    results = run_experiment(KERNEL_CONFIG, parallelism=1)
    assert len(results.cells) == 2
    for cell in results.cells:
        assert cell.rho is None
        assert np.all(np.isfinite(cell.statistics))
    # parallel execution goes through the config echo in worker initializers
    par = run_experiment(KERNEL_CONFIG, parallelism=2)
    for cell in results.cells:
        mirror = par.cell(cell.rho, cell.design, cell.mode)
        assert np.array_equal(np.asarray(mirror.statistics), np.asarray(cell.statistics))


def test_clustered_experiment_smoke():
    config = copy.deepcopy(TINY_CONFIG)
    config["name"] = "tiny-clustered"
    config["folds"] = {"design": "clustered", "k": 4, "halo_order": 1, "scheme": "queen"}
    config["dgp"]["rho"] = [0.5]
    config["replications"] = 2
    results = run_experiment(config, parallelism=1)
    assert {c.design for c in results.cells} == {"clustered_k4"}
    assert len(results.cells) == 2


def test_failure_accounting_and_abort(monkeypatch, tiny_results):
    from spatialcv.laplace import LaplaceResult

    def always_fails(problem, rng=None, opts=None):
        return LaplaceResult(
            map_point=np.zeros(problem.dim), objective_value=-np.inf, hessian=None,
            converged=False, gradient_norm=np.inf, n_iter=0,
        )

    monkeypatch.setattr(harness, "fit_fold", always_fails)
    with pytest.raises(ExcessiveFailureError):
        run_experiment(TINY_CONFIG, parallelism=1)


def test_partial_failure_is_recorded(monkeypatch, tiny_results):
    real_fit_fold = harness.fit_fold
    calls = {"n": 0}

    def flaky(problem, rng=None, opts=None):
        calls["n"] += 1
        if calls["n"] <= 2:  # first fold fit of replication 0 fails, retry included
            from spatialcv.laplace import LaplaceResult

            return LaplaceResult(
                map_point=np.zeros(problem.dim), objective_value=-np.inf, hessian=None,
                converged=False, gradient_norm=np.inf, n_iter=0,
            )
        return real_fit_fold(problem, rng=rng, opts=opts)

    monkeypatch.setattr(harness, "fit_fold", flaky)
    results = run_experiment(TINY_CONFIG, parallelism=1)
    failed_cells = [c for c in results.cells if c.n_failed > 0]
    assert failed_cells
    for cell in failed_cells:
        assert cell.summary.n_total == 3  # one replication dropped
    assert results.failures  # named in the failure map
