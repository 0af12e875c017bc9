"""Config parsing, validation, and snapshots."""

import json

import pytest

from metadet.config import (ABLATION_SUITES, ExperimentConfig,
                            config_from_dict, load_config, resolved_dict,
                            write_snapshot)
from metadet.errors import ConfigError


def test_defaults_validate():
    cfg = ExperimentConfig().validate()
    assert cfg.dataset.train_count == 600
    assert cfg.dataset.val_count == 150
    assert cfg.dataset.image_size == 128
    assert cfg.model.modulation_depth == 2
    assert cfg.train.batch_size == 4
    assert cfg.seed == 0


def test_partial_dict_overrides():
    cfg = config_from_dict({"train": {"epochs": 2, "lr": 0.01}, "seed": 5})
    assert cfg.train.epochs == 2
    assert cfg.train.lr == 0.01
    assert cfg.train.momentum == 0.9        # untouched default
    assert cfg.seed == 5


def test_unknown_keys_name_their_path():
    with pytest.raises(ConfigError, match="model.fpn_widht"):
        config_from_dict({"model": {"fpn_widht": 32}})
    with pytest.raises(ConfigError, match="'optimizer'"):
        config_from_dict({"optimizer": {}})
    with pytest.raises(ConfigError, match="train.learning_rate"):
        config_from_dict({"train": {"learning_rate": 0.1}})


def test_lists_become_tuples():
    cfg = config_from_dict({"model": {"metadata_mask": ["band"]},
                            "ablation": {"seeds": [3, 4, 5]}})
    assert cfg.model.metadata_mask == ("band",)
    assert cfg.ablation.seeds == (3, 4, 5)


def test_validation_rejects_bad_values():
    with pytest.raises(ConfigError, match="topology"):
        config_from_dict({"model": {"topology": "serial"}})
    with pytest.raises(ConfigError, match="metadata_mask"):
        config_from_dict({"model": {"metadata_mask": ["sensor"]}})
    with pytest.raises(ConfigError, match="dtype"):
        config_from_dict({"model": {"dtype": "float16"}})
    with pytest.raises(ConfigError, match="suite"):
        config_from_dict({"ablation": {"suite": "everything"}})
    with pytest.raises(ConfigError, match="seeds"):
        config_from_dict({"ablation": {"seeds": [0, 1]}})
    with pytest.raises(ConfigError, match="compensation"):
        config_from_dict({"model": {"compensation_mode": "raw"}})


def test_scalar_where_object_expected():
    with pytest.raises(ConfigError):
        config_from_dict({"model": 3})
    with pytest.raises(ConfigError, match="does not take an object"):
        config_from_dict({"seed": {"value": 3}})


def test_suites_list():
    assert ABLATION_SUITES == ("modules", "topology", "metadata", "depth")


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(bad)


def test_load_config_roundtrip(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"dataset": {"train_count": 20, "val_count": 10},
                             "train": {"epochs": 1}}))
    cfg = load_config(p)
    assert cfg.dataset.train_count == 20
    assert cfg.train.epochs == 1


def test_snapshot_is_json_and_reloadable(tmp_path):
    cfg = config_from_dict({"model": {"metadata_mask": ["platform", "band"]}})
    path = write_snapshot(cfg, tmp_path)
    obj = json.loads(path.read_text())
    assert obj["model"]["metadata_mask"] == ["platform", "band"]
    again = config_from_dict(obj)
    assert again == cfg


def test_resolved_dict_has_no_tuples():
    d = resolved_dict(ExperimentConfig())

    def walk(v):
        assert not isinstance(v, tuple)
        if isinstance(v, dict):
            for x in v.values():
                walk(x)
        elif isinstance(v, list):
            for x in v:
                walk(x)

    walk(d)
