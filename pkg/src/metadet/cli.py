"""Command-line interface.

Subcommands: gen-data (synthesize a dataset), train (one training run),
ablate (a suite across seeds), verify (dataset-free property battery),
inspect (report on a checkpoint). Exit codes: 0 success, 1 property or
verification failure, 2 configuration error, 3 data or I/O error.

--threads caps BLAS thread pools and must act before numpy loads, so this
module sets the environment variables at entry, then imports the rest.
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_threads(n: int | None):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="metadet",
        description="Metadata-conditioned small-target detection testbed")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/OpenMP thread pools (set before numpy loads)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate the synthetic dataset")
    g.add_argument("--config", help="experiment config JSON")
    g.add_argument("--seed", type=int, default=None, help="dataset seed")
    g.add_argument("--out", required=True, help="dataset root directory")

    t = sub.add_parser("train", help="run one training")
    t.add_argument("--config", help="experiment config JSON")
    t.add_argument("--seed", type=int, default=None, help="run seed override")
    t.add_argument("--data", required=True, help="dataset root directory")
    t.add_argument("--out", required=True, help="run directory")

    a = sub.add_parser("ablate", help="train an ablation suite across seeds")
    a.add_argument("--config", help="experiment config JSON")
    a.add_argument("--suite", default=None,
                   help="suite name (overrides config): modules | topology | "
                        "metadata | depth")
    a.add_argument("--data", required=True, help="dataset root directory")
    a.add_argument("--out", required=True, help="suite output directory")

    v = sub.add_parser("verify", help="run the property battery (no dataset)")

    i = sub.add_parser("inspect", help="summarise a checkpoint directory")
    i.add_argument("--checkpoint", required=True,
                   help="checkpoint directory (manifest.json + params.axt)")
    del g, t, a, v, i
    return p


def _load_cfg(path, seed=None):
    from .config import ExperimentConfig, load_config
    cfg = load_config(path) if path else ExperimentConfig().validate()
    if seed is not None:
        cfg.seed = int(seed)
    return cfg


def cmd_gen_data(args) -> int:
    from .synth import generate_dataset
    cfg = _load_cfg(args.config, args.seed)
    manifest = generate_dataset(args.out, cfg.seed,
                                cfg.dataset.train_count,
                                cfg.dataset.val_count)
    counts = manifest["counts"]
    print(f"wrote {counts['train']}+{counts['val']} images under {args.out} "
          f"(seed {manifest['seed']})")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args.config, args.seed)
    from .train import train_model
    final = train_model(cfg, args.data, args.out, log=print)
    print(f"final: ap50 {final['ap50']:.4f} recall {final['recall']:.4f} "
          f"loss {final['loss']:.4f} ({final['wall_seconds']:.0f}s, "
          f"{final['params']} params)")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args.config)
    if args.suite:
        cfg.ablation.suite = args.suite
        cfg.ablation.validate()
    from .ablation import run_suite
    rows = run_suite(cfg, args.data, args.out, log=print)
    width = max(len(r["row"]) for r in rows)
    for r in rows:
        print(f"{r['row']:<{width}}  ap50 {r['ap50_mean']:.4f}+-{r['ap50_sd']:.4f}  "
              f"recall {r['recall_mean']:.4f}+-{r['recall_sd']:.4f}  "
              f"params {r['params']}")
    return 0


def cmd_verify(_args) -> int:
    from .verify import run_battery
    _, n_fail, _ = run_battery(out=print)
    return 1 if n_fail else 0


def cmd_inspect(args) -> int:
    import numpy as np
    from .nn import load_checkpoint
    manifest, params = load_checkpoint(args.checkpoint)
    total = int(sum(np.asarray(v).size for v in params.values()))
    groups: dict[str, int] = {}
    for name, arr in params.items():
        head = name.split(".", 1)[0]
        groups[head] = groups.get(head, 0) + int(np.asarray(arr).size)
    print(f"checkpoint {args.checkpoint}: {len(params)} tensors, "
          f"{total} parameters")
    for head in sorted(groups, key=groups.get, reverse=True):
        share = 100.0 * groups[head] / total if total else 0.0
        print(f"  {head:<16} {groups[head]:>9}  {share:5.1f}%")
    extra = {k: v for k, v in manifest.items() if k != "params"}
    if extra:
        print(f"  manifest extras: {extra}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_threads(args.threads)
    from .errors import ConfigError, DataError, VerificationFailure
    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "ablate": cmd_ablate,
        "verify": cmd_verify,
        "inspect": cmd_inspect,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except VerificationFailure as e:
        print(f"verification failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
