"""Command-line entry point: synth, train, eval, infer.

Exit codes: 0 success, 1 usage/configuration problem, 2 data problem
(annotations, images, checkpoints), 3 numeric failure during optimization.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from .checkpoint import CheckpointError
from .data import (AnnotationError, SplitSpec, load_dataset, save_dataset,
                   split_dataset, synth_generate)
from .evaluator import evaluate_counts, infer, render_overlay, write_predictions_csv
from .trainer import NumericFailure, TrainConfig, fit, load_model, save_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    """Invalid run configuration (bad keys, bad values, missing paths)."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this tool reserves 2 for
    # data problems
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_SPLIT_KEYS = {"ratios", "seed"}
_TOP_KEYS = {"data_dir", "out_dir", "split", "train"}


def load_run_config(path: str | Path) -> dict:
    """Parse and strictly validate a run-configuration JSON file.

    Unknown keys anywhere are rejected; the referenced data directory must
    exist.  Returns a dict with ``data_dir``, ``out_dir``, ``split``
    (SplitSpec) and ``train`` (TrainConfig).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("data_dir", "out_dir"):
        if key not in doc:
            raise ConfigError(f"missing config key {key!r}")
    data_dir = Path(doc["data_dir"])
    if not data_dir.is_dir():
        raise ConfigError(f"data_dir does not exist: {data_dir}")

    split_doc = doc.get("split", {})
    unknown = set(split_doc) - _SPLIT_KEYS
    if unknown:
        raise ConfigError(f"unknown split keys: {sorted(unknown)}")
    try:
        split = SplitSpec(ratios=tuple(split_doc.get("ratios", (0.7, 0.15, 0.15))),
                          seed=int(split_doc.get("seed", 0)))
    except ValueError as e:
        raise ConfigError(str(e)) from e

    train_doc = doc.get("train", {})
    unknown = set(train_doc) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown train keys: {sorted(unknown)}")
    try:
        train = TrainConfig(**train_doc)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e

    return {"data_dir": data_dir, "out_dir": Path(doc["out_dir"]),
            "split": split, "train": train}


def _split_items(items, spec: SplitSpec):
    by_id = {item.id: item for item in items}
    train_ids, val_ids, test_ids = split_dataset(sorted(by_id), spec)
    return ([by_id[i] for i in train_ids], [by_id[i] for i in val_ids],
            [by_id[i] for i in test_ids])


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------
def cmd_synth(args) -> int:
    if args.pods_max < args.pods_min:
        raise ConfigError(f"--pods-max ({args.pods_max}) < --pods-min ({args.pods_min})")
    items = synth_generate(args.count, (args.pods_min, args.pods_max),
                           seed=args.seed, image_size=args.size)
    save_dataset(items, args.out)
    print(f"wrote {len(items)} images + annotations to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    config: TrainConfig = run["train"]
    for name in ("epochs", "batch_size", "seed", "variant"):
        value = getattr(args, name)
        if value is not None:
            setattr(config, name, value)
    config.__post_init__()
    items = load_dataset(run["data_dir"])
    train_items, val_items, _ = _split_items(items, run["split"])
    if not train_items or not val_items:
        raise ConfigError("train/val split is empty; add data or adjust ratios")
    model, history = fit(train_items, val_items, config, out_dir=run["out_dir"],
                         resume=args.resume,
                         log_fn=lambda rec: print(json.dumps(rec, sort_keys=True)))
    split: SplitSpec = run["split"]
    save_model(run["out_dir"] / "model.ckpt", model, config,
               extra_meta={"split": {"ratios": list(split.ratios), "seed": split.seed}})
    print(f"best epoch {history.best_epoch} "
          f"(val MAE {history.val_mae[history.best_epoch]:.3f}); "
          f"checkpoints in {run['out_dir']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, config, meta = load_model(args.ckpt)
    items = load_dataset(args.data)
    split_meta = meta.get("split", {})
    spec = SplitSpec(ratios=tuple(split_meta.get("ratios", (0.7, 0.15, 0.15))),
                     seed=int(split_meta.get("seed", config.seed)))
    if args.split_seed is not None:
        spec = SplitSpec(ratios=spec.ratios, seed=args.split_seed)
    splits = dict(zip(("train", "val", "test"), _split_items(items, spec)))
    subset = splits[args.split]
    if not subset:
        raise ConfigError(f"split {args.split!r} is empty for this dataset")
    report = evaluate_counts(model, subset, threshold=args.threshold)
    print(report.to_json())
    return EXIT_OK


def cmd_infer(args) -> int:
    from .data import load_image

    model, _, _ = load_model(args.ckpt)
    image = load_image(args.image)
    proposals, count = infer(model, image, threshold=args.threshold)
    image_id = Path(args.image).stem
    if args.out_csv:
        write_predictions_csv(args.out_csv, image_id, proposals)
    if args.out_overlay:
        pred_points = proposals.points.data if proposals is not None else []
        render_overlay(image, [], pred_points, args.out_overlay)
    print(json.dumps({"image_id": image_id, "count": count}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="podcount",
                     description=__doc__,
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dot-annotated dataset")
    p.add_argument("--count", type=int, required=True, help="number of images")
    p.add_argument("--pods-min", type=int, default=20, help="min objects per image")
    p.add_argument("--pods-max", type=int, default=80, help="max objects per image")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--size", type=int, default=256, help="image side length")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--resume", default=None, help="continue from a last.ckpt")
    p.add_argument("--epochs", type=int, default=None, help="override config epochs")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None,
                   help="override config batch size")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--variant", default=None, choices=["T", "S", "B", "L"],
                   help="override backbone variant")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score counting metrics on a dataset split")
    p.add_argument("--ckpt", required=True, help="model checkpoint")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--threshold", type=float, default=0.5,
                   help="confidence cutoff for counting")
    p.add_argument("--split-seed", dest="split_seed", type=int, default=None,
                   help="split seed (defaults to the checkpoint's train seed)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer", help="predict points for a single image")
    p.add_argument("--ckpt", required=True, help="model checkpoint")
    p.add_argument("--image", required=True, help="input PNG/JPEG")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out-csv", dest="out_csv", default=None,
                   help="write image_id,x,y,confidence rows here")
    p.add_argument("--out-overlay", dest="out_overlay", default=None,
                   help="write a dot-overlay PNG here")
    p.set_defaults(fn=cmd_infer)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"podcount: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (AnnotationError, CheckpointError, FileNotFoundError, ValueError) as e:
        print(f"podcount: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericFailure as e:
        print(f"podcount: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
