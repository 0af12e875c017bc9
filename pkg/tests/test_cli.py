"""CLI subcommands, exit codes, and the full gen/train/inspect flow."""

import json

import pytest

from metadet.cli import main
from metadet.nn import load_checkpoint


@pytest.fixture(scope="module")
def tiny_cfg_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps({
        "dataset": {"train_count": 10, "val_count": 5, "image_size": 32},
        "model": {"fpn_width": 8, "head_width": 8, "d_aux": 8,
                  "fusion_blocks": 1},
        "train": {"epochs": 1, "batch_size": 4},
        "ablation": {"suite": "modules", "seeds": [0, 1, 2], "epochs": 1},
    }))
    return str(path)


@pytest.fixture(scope="module")
def tiny_dataset(tiny_cfg_path, tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    assert main(["gen-data", "--config", tiny_cfg_path, "--seed", "4",
                 "--out", str(root)]) == 0
    return str(root)


def test_gen_data_writes_tree(tiny_cfg_path, tmp_path, capsys):
    out = tmp_path / "ds"
    assert main(["gen-data", "--config", tiny_cfg_path, "--seed", "4",
                 "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "wrote 10+5 images" in stdout
    assert (out / "train" / "meta.jsonl").exists()
    assert (out / "val" / "images" / "00004.pgm").exists()
    assert (out / "manifest.json").exists()


def test_train_and_inspect_flow(tiny_cfg_path, tiny_dataset, tmp_path, capsys):
    run = tmp_path / "run"
    code = main(["train", "--config", tiny_cfg_path, "--seed", "9",
                 "--data", tiny_dataset, "--out", str(run)])
    stdout = capsys.readouterr().out
    assert code == 0
    assert "final: ap50" in stdout
    assert "epoch 1/1" in stdout
    manifest, _ = load_checkpoint(run / "checkpoint")
    assert manifest["seed"] == 9

    code = main(["inspect", "--checkpoint", str(run / "checkpoint")])
    stdout = capsys.readouterr().out
    assert code == 0
    assert "parameters" in stdout
    assert "manifest extras" in stdout


def test_ablate_command(tiny_cfg_path, tiny_dataset, tmp_path, capsys):
    out = tmp_path / "suite"
    code = main(["ablate", "--config", tiny_cfg_path, "--data", tiny_dataset,
                 "--out", str(out)])
    stdout = capsys.readouterr().out
    assert code == 0
    assert (out / "ablation.csv").exists()
    for row in ("baseline", "modulator_only", "edge_only", "full"):
        assert row in stdout


def test_verify_command(capsys):
    assert main(["verify"]) == 0
    stdout = capsys.readouterr().out
    assert "properties hold" in stdout
    assert "FAIL" not in stdout


def test_config_error_exits_2(tiny_dataset, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {"fpn_widht": 8}}))
    assert main(["train", "--config", str(bad), "--data", tiny_dataset,
                 "--out", str(tmp_path / "r")]) == 2

    invalid = tmp_path / "invalid.json"
    invalid.write_text("{not json")
    assert main(["gen-data", "--config", str(invalid),
                 "--out", str(tmp_path / "d")]) == 2


def test_bad_suite_exits_2(tiny_cfg_path, tiny_dataset, tmp_path):
    assert main(["ablate", "--config", tiny_cfg_path, "--suite", "optimizers",
                 "--data", tiny_dataset, "--out", str(tmp_path / "s")]) == 2


def test_data_error_exits_3(tiny_cfg_path, tmp_path):
    assert main(["train", "--config", tiny_cfg_path,
                 "--data", str(tmp_path / "nowhere"),
                 "--out", str(tmp_path / "r")]) == 3
    assert main(["inspect",
                 "--checkpoint", str(tmp_path / "missing")]) == 3


def test_threads_flag_sets_environment(capsys):
    import os
    assert main(["--threads", "1", "verify"]) == 0
    capsys.readouterr()
    assert os.environ["OMP_NUM_THREADS"] == "1"
    assert os.environ["OPENBLAS_NUM_THREADS"] == "1"
