"""Experiment command line.

Subcommands: generate-data, pretrain, finetune, evaluate, sinkhorn-demo.
Configs are flat key=value files mirroring the SynthConfig / TrainConfig
fields; see README for the file formats written by each stage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data, trainer
from .config import load_config
from .metrics import ari, clustering_accuracy, nmi, uniformity
from .numerics import seeded_rng, softmax_columns
from .sinkhorn import TransportConfig, solve_balanced


def _cmd_generate_data(args: argparse.Namespace) -> int:
    cfg = load_config(data.SynthConfig, args.config) if args.config else data.SynthConfig()
    bundle = data.generate(cfg)
    data.save_bundle(bundle, args.out, cfg)
    print(f"wrote {args.out}/data.txt ({bundle.source_x.shape[0]} source, {bundle.target_x.shape[0]} target)")
    return 0


def _train_config(args: argparse.Namespace) -> trainer.TrainConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if args.config:
        return load_config(trainer.TrainConfig, args.config, overrides)
    return trainer.TrainConfig(**overrides)


def _cmd_pretrain(args: argparse.Namespace) -> int:
    cfg = _train_config(args)
    bundle = data.load_bundle(args.data)
    b0, b1, history = trainer.pretrain(bundle, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trainer.save_branch_state(out / "b0.ckpt", b0)
    trainer.save_branch_state(out / "b1.ckpt", b1)
    (out / "pretrain_history.csv").write_text(trainer.history_to_csv(history))
    final = [row for row in history if row["epoch"] == cfg.pretrain_epochs]
    print(f"pretrained {cfg.pretrain_epochs} epochs; wrote {out}/b0.ckpt, {out}/b1.ckpt")
    for row in final:
        print(f"  {row['branch']}: sup={row['loss_sup']:.4f} dec={row['loss_dec']:.4f} cont={row['loss_cont']:.4f}")
    return 0


def _cmd_finetune(args: argparse.Namespace) -> int:
    cfg = _train_config(args)
    bundle = data.load_bundle(args.data)
    ckpt = Path(args.checkpoints)
    b0 = trainer.load_branch_state(ckpt / "b0.ckpt")
    b1 = trainer.load_branch_state(ckpt / "b1.ckpt")
    trainer.init_target_classifiers(b0, b1, bundle, cfg)
    ablation = {"bm": "bm", "ocm": "ocm", "full": "full"}[args.ablation]
    history = trainer.finetune(b0, b1, bundle, cfg, ablation=ablation, balance=args.balance == "on", out_dir=args.out)
    out = Path(args.out)
    trainer.save_branch_state(out / "b0.ckpt", b0)
    trainer.save_branch_state(out / "b1.ckpt", b1)
    (out / "history.csv").write_text(trainer.history_to_csv(history))
    final = {row["branch"]: row for row in history if row["epoch"] == cfg.finetune_epochs}
    record = {
        branch: {k: row[k] for k in ("acc", "nmi", "ari", "uniformity")}
        for branch, row in final.items()
    }
    (out / "metrics.json").write_text(json.dumps(record, indent=2) + "\n")
    print(json.dumps(record, indent=2))
    return 0


def _read_labels(path: str, column: int) -> np.ndarray:
    rows = np.loadtxt(path, dtype=np.int64, ndmin=2)
    order = np.argsort(rows[:, 0], kind="stable")
    return rows[order, column]


def _cmd_evaluate(args: argparse.Namespace) -> int:
    pred = _read_labels(args.labels, 1 + args.branch)
    true = _read_labels(args.truth, 1)
    k = args.k if args.k else int(pred.max()) + 1
    record = {
        "acc": clustering_accuracy(pred, true),
        "nmi": nmi(pred, true),
        "ari": ari(pred, true),
        "uniformity": uniformity(pred, k),
    }
    print(json.dumps(record, indent=2))
    return 0


def _cmd_sinkhorn_demo(args: argparse.Namespace) -> int:
    rng = seeded_rng(args.seed)
    p_hat = softmax_columns(rng.standard_normal((args.k, args.n)))
    result = solve_balanced(p_hat, TransportConfig(xi=args.xi))
    np.set_printoptions(precision=4, suppress=True)
    print(result.q)
    print(f"row marginal err: {result.row_marginal_err:.3e}")
    print(f"col marginal err: {result.col_marginal_err:.3e}")
    print(f"iterations: {result.iters_used} (converged: {result.converged})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cobranch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write a synthetic two-domain dataset")
    p.add_argument("--config", help="SynthConfig key=value file (defaults if omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_generate_data)

    p = sub.add_parser("pretrain", help="train both base modules")
    p.add_argument("--config", help="TrainConfig key=value file")
    p.add_argument("--data", required=True, help="dataset directory from generate-data")
    p.add_argument("--out", required=True, help="output directory for checkpoints")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("finetune", help="clustering finetune from a pretrain checkpoint")
    p.add_argument("--config", help="TrainConfig key=value file")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoints", required=True, help="directory holding b0.ckpt/b1.ckpt")
    p.add_argument("--out", required=True)
    p.add_argument("--ablation", choices=["bm", "ocm", "full"], default="full")
    p.add_argument("--balance", choices=["on", "off"], default="on")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("evaluate", help="score a label dump against ground truth")
    p.add_argument("--labels", required=True, help="dump file: index label0 [label1]")
    p.add_argument("--truth", required=True, help="truth file: index label")
    p.add_argument("--branch", type=int, choices=[0, 1], default=0, help="label column to score")
    p.add_argument("--k", type=int, default=0, help="cluster count for uniformity (default: max label + 1)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sinkhorn-demo", help="solve one balanced assignment on random predictions")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--xi", type=float, default=10.0)
    p.set_defaults(func=_cmd_sinkhorn_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
