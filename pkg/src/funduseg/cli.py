"""Command-line interface.

Subcommands: synth, preprocess, train, eval, crossval, compare, activations.
Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

import argparse
import sys
from pathlib import Path

from .errors import ConfigError, FundusegError
from .pipeline import (
    ExperimentConfig,
    compare,
    crossval,
    evaluate,
    export_activation_maps,
    load_config,
    preprocess,
    read_split,
    train,
)
from .raster import write_mask, write_ppm
from .synth import generate_dataset


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse usage problems are config errors
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="funduseg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate a synthetic image/mask dataset directory"),
        ("preprocess", "materialize training images and target stacks"),
        ("train", "train on a preprocessed dataset"),
        ("eval", "evaluate a checkpoint and write a metrics table"),
        ("crossval", "k-fold cross-validation of disc dice"),
        ("compare", "train regions-only vs edge-integrated with shared splits"),
        ("activations", "export per-channel probability heatmaps"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", type=Path, help="flat key=value config file")
        sp.add_argument("--seed", type=int, help="override config seed")
        sp.add_argument("--out", help="override output directory")
        sp.add_argument("--mode", choices=("regions", "edges"), help="target mode override")
        sp.add_argument("--folds", type=int, help="fold count override")
        if name in ("eval", "activations"):
            sp.add_argument("--ckpt", default="best", help="'best', 'final', or a checkpoint path")
        if name == "activations":
            sp.add_argument("--ids", help="comma-separated image ids (default: test split)")
        if name == "synth":
            sp.add_argument("--images", type=int, help="override sample count")
    return p


def _config_from(args) -> ExperimentConfig:
    overrides = {"seed": args.seed, "out": args.out, "mode": args.mode, "folds": args.folds}
    if getattr(args, "images", None) is not None:
        overrides["images"] = args.images
    if args.config is not None:
        return load_config(args.config, **overrides)
    kwargs = {k: v for k, v in overrides.items() if v is not None}
    return ExperimentConfig(**kwargs)


def _resolve_ckpt(cfg: ExperimentConfig, name: str) -> Path:
    if name in ("best", "final"):
        return Path(cfg.out) / f"ckpt_{name}.bin"
    return Path(name)


def _test_ids(cfg: ExperimentConfig):
    split_path = Path(cfg.out) / "split.csv"
    if not split_path.exists():
        raise FundusegError(f"{split_path} not found (run train first)")
    return read_split(split_path)[2]


def _cmd_synth(cfg: ExperimentConfig) -> None:
    out = Path(cfg.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    pairs = generate_dataset(cfg.synth_config(), cfg.images)
    lines = [f"config_hash = {cfg.config_hash()}", f"seed = {cfg.seed}"]
    for i, (img, mask) in enumerate(pairs):
        image_id = f"img{i:04d}"
        write_ppm(out / "images" / f"{image_id}.ppm", img)
        write_mask(out / "masks" / f"{image_id}.pgm", mask, cfg.label_mapping())
        lines.append(f"pair = images/{image_id}.ppm masks/{image_id}.pgm")
    (out / "manifest.txt").write_text("".join(l + "\n" for l in lines))
    print(f"wrote {len(pairs)} image/mask pairs under {out}")


def _cmd_eval(cfg: ExperimentConfig, ckpt: str) -> None:
    out_csv = Path(cfg.out) / "metrics_test.csv"
    records, summary = evaluate(cfg, _resolve_ckpt(cfg, ckpt), _test_ids(cfg), out_csv)
    print(f"evaluated {len(records)} images -> {out_csv}")
    for col in ("dice_disc", "hausdorff_disc", "dice_cup", "hausdorff_cup"):
        print(f"  {col}: mean {summary[col]['mean']:.4f}  median {summary[col]['median']:.4f}")


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        cfg = _config_from(args)
        if args.command == "synth":
            _cmd_synth(cfg)
        elif args.command == "preprocess":
            ids = preprocess(cfg)
            print(f"preprocessed {len(ids)} samples ({cfg.mode} mode) under {cfg.out}/data")
        elif args.command == "train":
            result = train(cfg)
            last = result.log_rows[-1]
            print(f"trained {cfg.epochs} epochs; final train loss {last[1]:.6f}, val loss {last[2]:.6f}")
        elif args.command == "eval":
            _cmd_eval(cfg, args.ckpt)
        elif args.command == "crossval":
            if not (Path(cfg.out) / "data" / "manifest.txt").exists():
                preprocess(cfg)
            _, fold_dice = crossval(cfg)
            print("per-fold disc dice: " + " ".join(f"{d:.4f}" for d in fold_dice))
        elif args.command == "compare":
            table = compare(cfg)
            for (mode, structure), row in table.items():
                print(f"  {mode:8s} {structure}: mean dice {row[0]:.4f}  mean hausdorff {row[2]:.4f}")
            print(f"report: {Path(cfg.out) / 'compare.csv'}")
        elif args.command == "activations":
            ids = args.ids.split(",") if args.ids else _test_ids(cfg)
            written = export_activation_maps(
                cfg, _resolve_ckpt(cfg, args.ckpt), ids, Path(cfg.out) / "activations"
            )
            print(f"wrote {len(written)} activation maps")
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (FundusegError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
