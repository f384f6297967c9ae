"""Command-line front end: dataset generation, training, evaluation, curves.

Exit codes: 0 success, 2 usage error, 1 runtime failure. Any flag can also
be supplied through a plain key=value file via --config (command-line flags
win over file values).
"""

from __future__ import annotations

import argparse
import os
import sys

# Single-threaded BLAS is faster for this workload's small matrices; only a
# hint, real deployments can override.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

from .doorsim.dataset import DatasetConfig, generate_dataset, load_dataset, save_dataset
from .evaluation import (
    eval_image_ablation,
    eval_regret,
    eval_rmse,
    read_records_csv,
    summarize,
    write_records_csv,
    write_summary_csv,
)
from .models import KINDS
from .nets import ModelConfig
from .training import TrainConfig, load_checkpoint, save_checkpoint, train


def _load_config_defaults(path: str) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssnp",
        description="Door-domain reward models: generate data, train, evaluate adaptation curves.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a train/test door dataset pair")
    p.add_argument("--config", help="key=value defaults file")
    p.add_argument("--out", required=True, help="output path prefix (writes PREFIX.train and PREFIX.test)")
    p.add_argument("--train-doors", type=int, default=800)
    p.add_argument("--test-doors", type=int, default=50)
    p.add_argument("--images-per-door", type=int, default=10)
    p.add_argument("--actions-per-door", type=int, default=10)
    p.add_argument("--labeled-frac", type=float, default=0.10)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model on a dataset file")
    p.add_argument("--config", help="key=value defaults file")
    p.add_argument("--data", required=True, help="training dataset file")
    p.add_argument("--model", choices=KINDS, default="ssnp")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--anneal-frac", type=float, default=0.2)
    p.add_argument("--loss-weight", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", help="optional JSON-lines epoch log path")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a test dataset")
    p.add_argument("--config", help="key=value defaults file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="test dataset file")
    p.add_argument("--candidates", type=int, default=100)
    p.add_argument("--max-context", type=int, default=10)
    p.add_argument("--metric", choices=("regret", "rmse", "ablation"), default="regret")
    p.add_argument("--image-counts", default="1,5,10", help="comma list for --metric ablation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("curves", help="aggregate eval records into curve summaries")
    p.add_argument("--config", help="key=value defaults file")
    p.add_argument("--in", dest="inputs", required=True, nargs="+", help="eval record CSV file(s)")
    p.add_argument("--out", required=True, help="summary CSV path")
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Pre-scan for --config and install its values as subparser defaults."""
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        parser.error("--config needs a path")
    values = _load_config_defaults(argv[at + 1])
    for action in parser._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
        known = {a.dest for a in action._actions}
        action.set_defaults(**{k: v for k, v in values.items() if k in known})
    return argv


def run(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        argv = _apply_config_file(parser, list(argv))
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.command == "gen-data":
            cfg = DatasetConfig(
                train_doors=int(args.train_doors),
                test_doors=int(args.test_doors),
                images_per_door=int(args.images_per_door),
                actions_per_door=int(args.actions_per_door),
                image_size=int(args.image_size),
                labeled_frac=float(args.labeled_frac),
                seed=int(args.seed),
            )
            train_ds, test_ds = generate_dataset(cfg)
            save_dataset(train_ds, args.out + ".train")
            save_dataset(test_ds, args.out + ".test")
            print(f"wrote {args.out}.train ({len(train_ds.records)} doors, "
                  f"{train_ds.labeled_count} labeled) and {args.out}.test ({len(test_ds.records)} doors)")
        elif args.command == "train":
            ds = load_dataset(args.data)
            cfg = TrainConfig(
                kind=args.model,
                epochs=int(args.epochs),
                lr=float(args.lr),
                anneal_frac=float(args.anneal_frac),
                seed=int(args.seed),
                loss_weight=float(args.loss_weight),
            )
            ckpt = train(ds, cfg, ModelConfig(image_size=ds.image_size), log_path=args.log)
            save_checkpoint(ckpt, args.out)
            print(f"wrote {args.out} (model={ckpt.kind}, epochs={cfg.epochs})")
        elif args.command == "eval":
            ckpt = load_checkpoint(args.ckpt)
            test_ds = load_dataset(args.data)
            predictor = ckpt.predictor()
            k = float(ckpt.dataset_echo["labeled_frac"])
            common = dict(k=k, seed=int(args.seed), workers=int(args.workers))
            if args.metric == "regret":
                records = eval_regret(
                    predictor, test_ds, candidates=int(args.candidates),
                    max_context=int(args.max_context), **common,
                )
            elif args.metric == "rmse":
                records = eval_rmse(predictor, test_ds, max_context=int(args.max_context), **common)
            else:
                counts = tuple(int(v) for v in str(args.image_counts).split(","))
                records = eval_image_ablation(
                    predictor, test_ds, image_counts=counts,
                    max_context=int(args.max_context), **common,
                )
            write_records_csv(records, args.out)
            print(f"wrote {args.out} ({len(records)} records)")
        else:
            records = []
            for path in args.inputs:
                records.extend(read_records_csv(path))
            write_summary_csv(summarize(records), args.out)
            print(f"wrote {args.out} ({len(records)} records summarized)")
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
