import json
import os
import subprocess
import sys

import pytest

from wmfm.cli import main

TINY = {
    "dataset": {"n_records": 120, "split_ratios": [0.5, 0.25, 0.25]},
    "encoder": {
        "embed_dim": 8, "channel_conv": [4], "channel_head": [16, 8], "image_backbone": [4, 8],
        "image_head": [16, 8], "projection_head": [16, 8],
    },
    "train": {"batch_size": 16, "epochs": 2, "adapt_epochs": 2, "dtype": "float64", "head_hidden": 8},
}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err) if err.strip() else None)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.json"
    cfg.write_text(json.dumps(TINY))
    assert main(["gen", "--config", str(cfg), "--out", str(root / "data"), "--seed", "5"]) == 0
    assert main(["pretrain", "--config", str(cfg), "--data", str(root / "data"), "--out", str(root / "pre")]) == 0
    return root, cfg


def test_gradcheck_passes(capsys, tmp_path):
    code, out, err = run(capsys, "gradcheck", "--out", tmp_path / "g")
    assert code == 0 and out["passed"] and err is None
    assert json.loads((tmp_path / "g" / "gradcheck.json").read_text())["passed"]


def test_gen_and_pretrain_outputs(workspace):
    root, _ = workspace
    for name in ("manifest.json", "train.bin", "config.json"):
        assert (root / "data" / name).exists()
    echoed = json.loads((root / "data" / "config.json").read_text())
    assert echoed["command"] == "gen" and echoed["dataset"]["seed"] == 5 and echoed["dataset"]["n_records"] == 120
    for name in ("init.ckpt", "final.ckpt", "best.ckpt", "runlog.jsonl", "metrics.json", "config.json"):
        assert (root / "pre" / name).exists()
    echoed = json.loads((root / "pre" / "config.json").read_text())
    assert echoed["train"]["epochs"] == 2 and echoed["encoder"]["embed_dim"] == 8


def test_zero_epochs_returns_initialization(capsys, workspace, tmp_path):
    root, cfg = workspace
    code, out, _ = run(capsys, "pretrain", "--config", cfg, "--data", root / "data", "--out", tmp_path, "--epochs", "0")
    assert code == 0 and out["epochs"] == 0
    assert (tmp_path / "init.ckpt").read_bytes() == (tmp_path / "final.ckpt").read_bytes()


def test_pretrain_rerun_is_identical(capsys, workspace, tmp_path):
    root, cfg = workspace
    code, _, _ = run(capsys, "pretrain", "--config", cfg, "--data", root / "data", "--out", tmp_path)
    assert code == 0
    assert (tmp_path / "final.ckpt").read_bytes() == (root / "pre" / "final.ckpt").read_bytes()


def test_adapt_eval_and_baseline(capsys, workspace, tmp_path):
    root, cfg = workspace
    ckpt = root / "pre" / "final.ckpt"
    code, out, _ = run(capsys, "adapt", "--config", cfg, "--task", "los", "--data", root / "data",
                       "--checkpoint", ckpt, "--out", tmp_path / "a", "--label-fraction", "0.5")
    assert code == 0 and out["checksum_before"] == out["checksum_after"] and out["num_train_labels"] == 30
    code, ev, _ = run(capsys, "eval", "--config", cfg, "--data", root / "data", "--checkpoint", ckpt,
                      "--head", tmp_path / "a" / "head.ckpt")
    assert code == 0 and ev["task"] == "los" and 0 <= ev["metrics"]["balanced_accuracy"] <= 1
    code, ev, _ = run(capsys, "eval", "--config", cfg, "--data", root / "data", "--checkpoint", ckpt)
    assert code == 0 and ev["mi_check"] <= 1e-12
    code, out, _ = run(capsys, "baseline", "--config", cfg, "--task", "loc", "--data", root / "data", "--out", tmp_path / "b")
    assert code == 0 and (tmp_path / "b" / "encoders.ckpt").exists()


def test_retrieve_writes_table_and_csv(capsys, workspace, tmp_path):
    root, cfg = workspace
    code, out, _ = run(capsys, "retrieve", "--data", root / "data", "--checkpoint", root / "pre" / "final.ckpt",
                       "--out", tmp_path, "--export")
    assert code == 0 and set(out["channel"]) == {"1", "2", "5"}
    assert (tmp_path / "similarity.csv").exists() and (tmp_path / "retrieval.json").exists()
    assert len((tmp_path / "embeddings.csv").read_text().splitlines()) == 1 + 2 * 30


def test_sweeps(capsys, workspace, tmp_path):
    root, cfg = workspace
    ckpt = root / "pre" / "final.ckpt"
    code, out, _ = run(capsys, "sweep", "--config", cfg, "--kind", "data", "--data", root / "data",
                       "--checkpoint", ckpt, "--out", tmp_path / "d")
    assert code == 0 and [r["label_fraction"] for r in out["rows"]] == [0.2, 0.4, 0.6, 0.8, 1.0]
    code, out, _ = run(capsys, "sweep", "--config", cfg, "--kind", "noise", "--data", root / "data",
                       "--model", f"clean={ckpt}", "--out", tmp_path / "n")
    assert code == 0 and len(out["mean_distance"]["clean"]) == 6
    assert (tmp_path / "n" / "noise_sweep.csv").exists()


def test_schema_error_names_key(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"train": {"batch_size": "big"}}))
    code, out, err = run(capsys, "gradcheck", "--config", bad)
    assert code == 2 and out is None
    assert err["error"] == "config" and err["key"] == "train/batch_size" and "train/batch_size" in err["message"]
    bad.write_text(json.dumps({"encoder": {"width": 3}}))
    code, _, err = run(capsys, "gradcheck", "--config", bad)
    assert code == 2 and "width" in err["message"]


def test_missing_files_name_the_path(capsys, tmp_path):
    code, _, err = run(capsys, "gradcheck", "--config", tmp_path / "nope.json")
    assert code == 1 and err["error"] == "missing_file" and str(tmp_path / "nope.json") in err["message"]
    code, _, err = run(capsys, "pretrain", "--data", tmp_path / "nodata", "--out", tmp_path / "o")
    assert code == 1 and err["command"] == "pretrain" and str(tmp_path / "nodata") in err["message"]


def test_output_directory_needs_force(capsys, workspace, tmp_path):
    root, cfg = workspace
    (tmp_path / "keep.txt").write_text("x")
    code, _, err = run(capsys, "gen", "--config", cfg, "--out", tmp_path)
    assert code == 1 and err["error"] == "output_exists"
    code, _, _ = run(capsys, "gen", "--config", cfg, "--out", tmp_path, "--force")
    assert code == 0 and (tmp_path / "manifest.json").exists()


def test_usage_errors_are_json(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 2 and err["error"] == "usage"
    code, _, err = run(capsys, "adapt", "--task", "los")
    assert code == 2 and "required" in err["message"]


def test_invalid_log_level(capsys, monkeypatch):
    monkeypatch.setenv("WMFM_LOG_LEVEL", "chatty")
    code, _, err = run(capsys, "gradcheck")
    assert code == 2 and err["key"] == "WMFM_LOG_LEVEL"


def test_module_entry_point_runs(tmp_path):
    env = {**os.environ, "WMFM_LOG_LEVEL": "error"}
    p = subprocess.run([sys.executable, "-m", "wmfm.cli", "--version"], capture_output=True, text=True, env=env)
    assert p.returncode == 0 and p.stdout.startswith("wmfm ")
