"""Experiment configuration: JSON files mapped onto typed dataclasses.

A config file holds up to four sections (dataset, model, train, ablation),
each optional, each overriding defaults field by field. Unknown sections
or keys raise ConfigError with the offending path, so typos never pass
silently. ``resolved_dict`` produces the fully-resolved snapshot written
into every run directory.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .compensation import COMPENSATION_MODES
from .metadata import MASKABLE
from .modulation import TOPOLOGIES


@dataclass
class DatasetConfig:
    train_count: int = 600
    val_count: int = 150
    image_size: int = 128


@dataclass
class ModelConfig:
    modulation_depth: int = 2
    edge_depth: int = 2
    topology: str = "parallel"
    share_branch_cascade: bool = True
    metadata_mask: tuple = ()
    fpn_width: int = 48
    head_width: int = 48
    d_aux: int = 64
    fusion_blocks: int = 2
    dropout: float = 0.1
    compensation_mode: str = "bottleneck"
    sigma_w: float = 6000.0
    sigma_h: float = 6000.0
    dtype: str = "float32"

    def validate(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"model.topology {self.topology!r} not in {TOPOLOGIES}")
        if self.compensation_mode not in COMPENSATION_MODES:
            raise ConfigError(f"model.compensation_mode {self.compensation_mode!r} "
                              f"not in {COMPENSATION_MODES}")
        for m in self.metadata_mask:
            if m not in MASKABLE:
                raise ConfigError(f"model.metadata_mask entry {m!r} not in {MASKABLE}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"model.dtype must be float32 or float64, got {self.dtype!r}")


@dataclass
class TrainConfig:
    epochs: int = 12
    batch_size: int = 4
    lr: float = 0.003
    momentum: float = 0.9
    warmup_frac: float = 0.05
    pos_weight: float = 24.0
    box_weight: float = 1.0
    score_thresh: float = 0.05
    nms_iou: float = 0.5
    max_dets: int = 64


@dataclass
class AblationConfig:
    suite: str = "modules"
    seeds: tuple = (0, 1, 2)
    epochs: int = 4

    def validate(self):
        if self.suite not in ABLATION_SUITES:
            raise ConfigError(f"ablation.suite {self.suite!r} not in "
                              f"{tuple(ABLATION_SUITES)}")
        if len(self.seeds) < 3:
            raise ConfigError("ablation needs at least 3 seeds")


ABLATION_SUITES = ("modules", "topology", "metadata", "depth")


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    seed: int = 0

    def validate(self):
        self.model.validate()
        self.ablation.validate()
        return self


def _fill(cls, obj: dict, path: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"config section {path or 'top level'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in obj.items():
        where = f"{path}.{key}" if path else key
        if key not in fields:
            raise ConfigError(f"unknown config key {where!r}")
        if key in _SECTION_TYPES:
            kwargs[key] = _fill(_SECTION_TYPES[key], value, where)
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        elif isinstance(value, dict):
            raise ConfigError(f"config key {where!r} does not take an object")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"bad config section {path or 'top level'}: {e}") from e


_SECTION_TYPES = {"dataset": DatasetConfig, "model": ModelConfig,
                  "train": TrainConfig, "ablation": AblationConfig}


def config_from_dict(obj: dict) -> ExperimentConfig:
    return _fill(ExperimentConfig, obj, "").validate()


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    return config_from_dict(obj)


def resolved_dict(cfg: ExperimentConfig) -> dict:
    out = dataclasses.asdict(cfg)

    def detuple(v):
        if isinstance(v, tuple):
            return [detuple(x) for x in v]
        if isinstance(v, dict):
            return {k: detuple(x) for k, x in v.items()}
        return v

    return detuple(out)


def write_snapshot(cfg: ExperimentConfig, run_dir):
    p = Path(run_dir) / "config.json"
    p.write_text(json.dumps(resolved_dict(cfg), indent=2, sort_keys=True) + "\n")
    return p
