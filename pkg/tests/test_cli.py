import json

import pytest

from spatialcv.cli import main

TINY_CONFIG = {
    "name": "cli-tiny",
    "lattice": {"rows": 6, "cols": 6},
    "dgp": {
        "family": "sar",
        "scheme": "rook",
        "order": 1,
        "beta": [1.0, 1.0, 0.9],
        "rho": [0.5],
        "sigma2": 5.0,
    },
    "candidates": {
        "a": {"family": "sar", "scheme": "rook", "order": 1, "columns": [0, 1]},
        "b": {"family": "sar", "scheme": "rook", "order": 1, "columns": [0, 2]},
    },
    "priors": {"beta_variance": 10.0},
    "folds": {"design": "blocked", "sizes": [3], "halo_order": 1, "scheme": "rook"},
    "replications": 3,
    "seed": 31,
    "trim": None,
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return str(path)


def test_folds_paper_count(capsys):
    code = main(["folds", "--rows", "24", "--cols", "24", "--size", "4"])
    captured = capsys.readouterr()
    assert code == 0
    assert "36 folds" in captured.err
    doc = json.loads(captured.out)
    assert doc["n_folds"] == 36


def test_folds_rejects_non_divisible(capsys):
    code = main(["folds", "--rows", "6", "--cols", "6", "--size", "4"])
    captured = capsys.readouterr()
    assert code == 1
    assert "does not divide" in captured.err


def test_folds_loo_zero_halo_train_sizes(capsys):
    code = main(["folds", "--rows", "4", "--cols", "4", "--size", "1", "--halo-order", "0"])
    captured = capsys.readouterr()
    assert code == 0
    doc = json.loads(captured.out)
    assert doc["n_folds"] == 16
    assert all(len(f["train"]) == 15 for f in doc["folds"])


def test_folds_ascii_map(capsys):
    code = main(["folds", "--rows", "6", "--cols", "6", "--size", "2", "--ascii"])
    captured = capsys.readouterr()
    assert code == 0
    assert captured.out.count("T") == 4


def test_folds_requires_one_design(capsys):
    assert main(["folds", "--rows", "4", "--cols", "4"]) == 2
    assert main(["folds", "--rows", "4", "--cols", "4", "--size", "2", "--clusters", "3"]) == 2


def test_folds_clustered(capsys):
    code = main(["folds", "--rows", "6", "--cols", "6", "--clusters", "4", "--seed", "3"])
    captured = capsys.readouterr()
    assert code == 0
    doc = json.loads(captured.out)
    assert doc["n_folds"] == 4


def test_score_demo_identity(capsys):
    code = main(["score-demo", "--cov", "1,0;0,1", "--y", "0,0", "--json"])
    captured = capsys.readouterr()
    assert code == 0
    out = json.loads(captured.out)
    assert abs(out["joint"] + 1.837877) < 1e-5
    assert abs(out["pointwise"] + 1.837877) < 1e-5


def test_score_demo_correlated_and_deltas(capsys):
    code = main([
        "score-demo", "--cov", "1,0.9;0.9,1", "--y", "0,0", "--deltas", "1,2,3", "--json",
    ])
    captured = capsys.readouterr()
    assert code == 0
    out = json.loads(captured.out)
    assert abs(out["joint"] + 1.007512) < 1e-5
    assert abs(out["pointwise"] + 1.837877) < 1e-5
    assert abs(out["sample_z"] - 3.4641) < 1e-4


def test_score_demo_rejects_non_spd(capsys):
    code = main(["score-demo", "--cov", "1,2;2,1", "--y", "0,0"])
    assert code == 1


def test_score_demo_requires_inputs(capsys):
    assert main(["score-demo"]) == 2


def test_validate_config_ok(config_path, capsys):
    assert main(["validate-config", "--config", config_path]) == 0
    assert "ok" in capsys.readouterr().err


def test_validate_config_diagnostics(tmp_path, capsys):
    bad = dict(TINY_CONFIG, replications=0)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert main(["validate-config", "--config", str(path)]) == 1
    assert "replications" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert main(["run", "--config", missing, "--out", str(tmp_path / "o")]) == 2
    assert missing in capsys.readouterr().err
    assert main(["validate-config", "--config", missing]) == 2


def test_run_writes_outputs_and_is_deterministic(config_path, tmp_path, capsys):
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    assert main(["run", "--config", config_path, "--out", str(out1), "--quiet"]) == 0
    assert main([
        "run", "--config", config_path, "--out", str(out2), "--quiet", "--parallelism", "2",
    ]) == 0
    for name in ("results.json", "summary.csv", "manifest.json"):
        assert (out1 / name).exists()
    assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()


def test_run_seed_override_changes_results(config_path, tmp_path, capsys):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert main(["run", "--config", config_path, "--out", str(out1), "--quiet"]) == 0
    assert main([
        "run", "--config", config_path, "--out", str(out2), "--quiet", "--seed", "99",
    ]) == 0
    assert (out1 / "summary.csv").read_text() != (out2 / "summary.csv").read_text()
    banner = capsys.readouterr().err
    assert "master_seed=99" in banner


def test_run_scores_table(config_path, tmp_path):
    out = tmp_path / "scored"
    assert main(["run", "--config", config_path, "--out", str(out), "--quiet", "--scores"]) == 0
    lines = (out / "scores.csv").read_text().splitlines()
    # 4 folds x 2 models x 2 modes x 3 replications + header
    assert len(lines) == 1 + 4 * 2 * 2 * 3


def test_summarize_from_results(config_path, tmp_path):
    out = tmp_path / "orig"
    assert main(["run", "--config", config_path, "--out", str(out), "--quiet"]) == 0
    redo = tmp_path / "redo"
    assert main([
        "summarize", "--results", str(out / "results.json"), "--out", str(redo),
    ]) == 0
    assert (out / "summary.csv").read_bytes() == (redo / "summary.csv").read_bytes()


def test_run_rejects_invalid_config_content(tmp_path, capsys):
    bad = dict(TINY_CONFIG)
    bad["folds"] = {"design": "blocked", "sizes": [5], "halo_order": 1, "scheme": "rook"}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
