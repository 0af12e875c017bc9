"""Training and evaluation loops.

A run consumes a dataset directory and an experiment config and produces a
run directory: resolved config snapshot, per-epoch ``metrics.csv`` (header
``epoch,ap50,recall,loss``), and a final checkpoint. Everything downstream
of (config, seed, dataset) is deterministic: shuffling, dropout and
initialisation each draw from fixed substreams of the run seed, so two
runs with the same inputs produce byte-identical metrics and checkpoints.

Substream layout: split 0 initialises the model, split 1 feeds epoch
shuffles, split 2 feeds per-iteration dropout.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, ModelConfig, write_snapshot
from .dataset import DetectionSample, load_split
from .detector import Detector, decode_predictions, detection_loss
from .errors import DataError, NumericsError
from .evaluation import evaluate_detections
from .nn import RngStream, SGD, Tensor, no_grad, save_checkpoint, warmup_lr

METRICS_HEADER = "epoch,ap50,recall,loss"


def build_detector(model_cfg: ModelConfig, rng: RngStream) -> Detector:
    return Detector(
        rng,
        dtype=np.dtype(model_cfg.dtype),
        modulation_depth=model_cfg.modulation_depth,
        edge_depth=model_cfg.edge_depth,
        topology=model_cfg.topology,
        share_branch_cascade=model_cfg.share_branch_cascade,
        metadata_mask=model_cfg.metadata_mask,
        fpn_width=model_cfg.fpn_width,
        head_width=model_cfg.head_width,
        d_aux=model_cfg.d_aux,
        fusion_blocks=model_cfg.fusion_blocks,
        dropout=model_cfg.dropout,
        compensation_mode=model_cfg.compensation_mode,
        sigma_w=model_cfg.sigma_w,
        sigma_h=model_cfg.sigma_h,
    )


def _batch_tensor(samples: list[DetectionSample], dtype) -> Tensor:
    return Tensor(np.stack([s.image for s in samples]).astype(dtype, copy=False))


def evaluate_model(model: Detector, samples: list[DetectionSample],
                   batch_size: int = 4, score_thresh: float = 0.05,
                   nms_iou: float = 0.5, max_dets: int = 64,
                   image_size: int = 128) -> dict:
    """AP50/recall of a model over a sample list (evaluation mode)."""
    was_training = model.training
    model.eval()
    detections, truths = [], []
    with no_grad():
        for k in range(0, len(samples), batch_size):
            chunk = samples[k:k + batch_size]
            x = _batch_tensor(chunk, model.dtype)
            logits, offsets = model(x, [s.record for s in chunk])
            decoded = decode_predictions(
                logits.data, offsets.data, score_thresh=score_thresh,
                nms_iou=nms_iou, max_dets=max_dets, image_size=image_size)
            detections.extend(decoded)
            truths.extend(s.boxes for s in chunk)
    if was_training:
        model.train()
    return evaluate_detections(detections, truths)


def train_model(cfg: ExperimentConfig, data_root, out_dir, seed: int | None = None,
                log=None) -> dict:
    """Full training run; returns the final metrics dict.

    ``seed`` overrides ``cfg.seed`` (the ablation driver reuses one config
    across seeds). The run aborts with NumericsError naming the iteration
    if the loss ever turns non-finite.
    """
    t_start = time.time()
    seed = cfg.seed if seed is None else int(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_snapshot(cfg, out_dir)

    train_samples = load_split(data_root, "train", cfg.dataset.image_size)
    val_samples = load_split(data_root, "val", cfg.dataset.image_size)
    if not train_samples:
        raise DataError(f"{data_root}: empty training split")

    root = RngStream(seed)
    model = build_detector(cfg.model, root.split(0))
    model.train()
    opt = SGD(model.parameters(), lr=cfg.train.lr, momentum=cfg.train.momentum)
    tc = cfg.train
    n = len(train_samples)
    iters_per_epoch = (n + tc.batch_size - 1) // tc.batch_size
    total_iters = iters_per_epoch * tc.epochs

    lines = [METRICS_HEADER]
    history = []
    it = 0
    for epoch in range(1, tc.epochs + 1):
        order = root.split(1).split(epoch).permutation(n)
        epoch_loss = 0.0
        for k in range(0, n, tc.batch_size):
            chunk = [train_samples[i] for i in order[k:k + tc.batch_size]]
            x = _batch_tensor(chunk, model.dtype)
            drop_rng = root.split(2).split(it)
            try:
                logits, offsets = model(x, [s.record for s in chunk],
                                        rng=drop_rng)
                loss, _ = detection_loss(
                    logits, offsets, [s.boxes for s in chunk],
                    pos_weight=tc.pos_weight, box_weight=tc.box_weight)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise NumericsError("non-finite loss")
                model.zero_grad()
                loss.backward()
            except NumericsError as e:
                raise NumericsError(f"{e} at iteration {it} "
                                    f"(epoch {epoch})") from e
            epoch_loss += value
            opt.lr = warmup_lr(it, total_iters, tc.lr, tc.warmup_frac)
            opt.step()
            it += 1
        mean_loss = epoch_loss / iters_per_epoch
        metrics = evaluate_model(
            model, val_samples, tc.batch_size, tc.score_thresh,
            tc.nms_iou, tc.max_dets, cfg.dataset.image_size)
        row = {"epoch": epoch, "ap50": metrics["ap50"],
               "recall": metrics["recall"], "loss": mean_loss}
        history.append(row)
        lines.append(f"{epoch},{row['ap50']:.6f},{row['recall']:.6f},"
                     f"{mean_loss:.6f}")
        if log:
            log(f"epoch {epoch}/{tc.epochs}  loss {mean_loss:.4f}  "
                f"ap50 {row['ap50']:.4f}  recall {row['recall']:.4f}")

    (out_dir / "metrics.csv").write_text("\n".join(lines) + "\n")
    save_checkpoint(out_dir / "checkpoint",
                    [(name, p.data) for name, p in model.named_parameters()],
                    extra={"seed": seed, "epochs": tc.epochs,
                           "final_ap50": history[-1]["ap50"]})
    final = dict(history[-1])
    final.update(seed=seed, params=model.num_parameters(),
                 wall_seconds=round(time.time() - t_start, 2),
                 out_dir=str(out_dir))
    return final
