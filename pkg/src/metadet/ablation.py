"""Ablation suites: train model variants across seeds, tabulate metrics.

Four suites exercise the refinement stack:

  modules   leave-one-out plus baseline: full model, no modulator, no edge
            enhancer, neither.
  topology  the five modulator branch layouts, plus the shared-cascade
            variant of the parallel layout.
  metadata  masking levers: all metadata, each component masked alone,
            everything masked.
  depth     modulation depth 0-3 crossed with edge depth {0, matching}.

Each row trains one config across all seeds and reports mean and standard
deviation of final AP50 and recall plus the parameter count. Output is a
CSV; rows are trained in declared order and seeds in ascending order, so
a (dataset, config, seeds) triple always yields the same file.
"""

from __future__ import annotations

import copy
import csv
import statistics
import time
from pathlib import Path

from .config import ABLATION_SUITES, ExperimentConfig
from .errors import ConfigError
from .nn import RngStream
from .train import build_detector, train_model

ABLATION_HEADER = ["row", "ap50_mean", "ap50_sd", "recall_mean", "recall_sd",
                   "params", "seeds"]


def _variant(cfg: ExperimentConfig, **model_overrides) -> ExperimentConfig:
    out = copy.deepcopy(cfg)
    for key, value in model_overrides.items():
        if not hasattr(out.model, key):
            raise ConfigError(f"unknown model override {key!r}")
        setattr(out.model, key, value)
    out.model.validate()
    return out


def suite_rows(suite: str, cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """The (name, config) rows of one suite, in report order."""
    if suite == "modules":
        return [
            ("baseline", _variant(cfg, modulation_depth=0, edge_depth=0)),
            ("modulator_only", _variant(cfg, edge_depth=0)),
            ("edge_only", _variant(cfg, modulation_depth=0)),
            ("full", _variant(cfg)),
        ]
    if suite == "topology":
        rows = [(t, _variant(cfg, topology=t, share_branch_cascade=False))
                for t in ("parallel", "channel_then_spatial",
                          "spatial_then_channel", "channel_only",
                          "spatial_only")]
        rows.append(("parallel_shared",
                     _variant(cfg, topology="parallel",
                              share_branch_cascade=True)))
        return rows
    if suite == "metadata":
        return [
            ("all", _variant(cfg, metadata_mask=())),
            ("no_platform", _variant(cfg, metadata_mask=("platform",))),
            ("no_band", _variant(cfg, metadata_mask=("band",))),
            ("no_resolution", _variant(cfg, metadata_mask=("resolution",))),
            ("none", _variant(cfg, metadata_mask=("platform", "band",
                                                  "resolution"))),
        ]
    if suite == "depth":
        rows = []
        for depth in range(4):
            rows.append((f"mod{depth}_edge0",
                         _variant(cfg, modulation_depth=depth, edge_depth=0)))
            rows.append((f"mod{depth}_edge{depth}",
                         _variant(cfg, modulation_depth=depth,
                                  edge_depth=depth)))
        return rows
    raise ConfigError(f"unknown ablation suite {suite!r}, expected one of "
                      f"{ABLATION_SUITES}")


def run_suite(cfg: ExperimentConfig, data_root, out_dir, log=None) -> list[dict]:
    """Train every row of cfg.ablation.suite across cfg.ablation.seeds.

    Writes ablation.csv into out_dir and returns the row dicts."""
    t0 = time.time()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = sorted(int(s) for s in cfg.ablation.seeds)
    results = []
    for name, row_cfg in suite_rows(cfg.ablation.suite, cfg):
        row_cfg.train.epochs = cfg.ablation.epochs
        params = build_detector(row_cfg.model, RngStream(0)).num_parameters()
        ap50s, recalls = [], []
        for seed in seeds:
            run_dir = out_dir / f"{name}_seed{seed}"
            final = train_model(row_cfg, data_root, run_dir, seed=seed)
            ap50s.append(final["ap50"])
            recalls.append(final["recall"])
            if log:
                log(f"{name} seed {seed}: ap50 {final['ap50']:.4f} "
                    f"recall {final['recall']:.4f} "
                    f"({final['wall_seconds']:.0f}s)")
        results.append({
            "row": name,
            "ap50_mean": statistics.fmean(ap50s),
            "ap50_sd": statistics.stdev(ap50s),
            "recall_mean": statistics.fmean(recalls),
            "recall_sd": statistics.stdev(recalls),
            "params": params,
            "seeds": len(seeds),
        })
    path = out_dir / "ablation.csv"
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=ABLATION_HEADER)
        w.writeheader()
        for r in results:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v)
                        for k, v in r.items()})
    if log:
        log(f"suite {cfg.ablation.suite!r} done in {time.time() - t0:.0f}s "
            f"-> {path}")
    return results
