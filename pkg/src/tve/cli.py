"""Command-line surface: synth / train / eval / gradcheck / report."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dataio
from . import gradcheck
from . import retrieval
from . import train as tr


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tve",
        description="Desk-scale video-text retrieval engine on precomputed embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic paired-embedding dataset")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--pairs", type=int, default=32)
    synth.add_argument("--concepts", type=int, default=16)
    synth.add_argument("--frames", type=int, default=8)
    synth.add_argument("--tokens", type=int, default=8)
    synth.add_argument("--dim", type=int, default=32)
    synth.add_argument("--noise", type=float, default=0.05)
    synth.add_argument("--order-discriminative", action="store_true")
    synth.add_argument("--seed", type=int, default=0)

    train = sub.add_parser("train", help="train a model and write a checkpoint")
    train.add_argument("--config", help="key = value config file")
    _add_config_flags(train)

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    evaluate.add_argument("--checkpoint")
    evaluate.add_argument("--videos", required=True)
    evaluate.add_argument("--texts", required=True)
    evaluate.add_argument("--manifest", required=True)
    evaluate.add_argument("--w", type=float, default=None, help="fusion weight (default: checkpoint config)")
    evaluate.add_argument("--split", default=None, choices=["train", "val", "test"])
    evaluate.add_argument("--ties", default="optimistic", choices=["optimistic", "pessimistic"])
    evaluate.add_argument("--out", help="write the machine-readable metric record here")
    evaluate.add_argument(
        "--validate-only",
        action="store_true",
        help="only validate the data files against the format contract",
    )

    gc = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--tolerance", type=float, default=gradcheck.DEFAULT_TOLERANCE)

    report = sub.add_parser("report", help="format a metric record as a results table")
    report.add_argument("--metrics", required=True, help="machine-readable record file, or - for stdin")
    report.add_argument("--name", default="ours", help="method label for the table row")
    return parser


_CONFIG_FLAGS = {
    "batch_size": int, "epochs": int, "max_steps": int, "learning_rate": float,
    "beta1": float, "beta2": float, "adam_eps": float, "w": float, "seed": int,
    "dim": int, "frames": int, "tokens": int, "heads": int, "temporal_layers": int,
    "centers": int, "tdb_variant": str, "tab_variant": str,
    "videos": str, "texts": str, "manifest": str, "out_dir": str,
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for name, typ in _CONFIG_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)
    parser.add_argument("--keep-difference-tokens", action="store_true", default=None)
    parser.add_argument("--literal-eq7", action="store_true", default=None)


def _overrides_from_args(args: argparse.Namespace) -> dict:
    out = {}
    for name in list(_CONFIG_FLAGS) + ["keep_difference_tokens", "literal_eq7"]:
        value = getattr(args, name, None)
        if value is not None:
            out[name] = value
    return out


def cmd_synth(args) -> int:
    cfg = dataio.SyntheticConfig(
        num_concepts=args.concepts,
        num_pairs=args.pairs,
        frames=args.frames,
        tokens=args.tokens,
        dim=args.dim,
        noise=args.noise,
        order_discriminative=args.order_discriminative,
        seed=args.seed,
    )
    videos, texts, manifest = dataio.synthesize_dataset(cfg, args.out)
    print(f"wrote {videos}")
    print(f"wrote {texts}")
    print(f"wrote {manifest}")
    return 0


def cmd_train(args) -> int:
    text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
    cfg = tr.config_from_text(text, overrides=_overrides_from_args(args))
    for required in ("videos", "texts", "manifest"):
        if not getattr(cfg, required):
            raise ValueError(f"missing required option --{required}")
    result = tr.train(cfg, log=print)
    if result.checkpoint_path:
        print(f"wrote {result.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    dataset = tr.load_dataset(args.videos, args.texts, args.manifest)
    if args.validate_only:
        print(
            f"ok: {len(dataset.videos.records)} videos "
            f"(seq_len={dataset.videos.seq_len}, dim={dataset.videos.dim}), "
            f"{len(dataset.texts.records)} texts "
            f"(seq_len={dataset.texts.seq_len}, dim={dataset.texts.dim}), "
            f"{len(dataset.entries)} manifest entries"
        )
        return 0
    if not args.checkpoint:
        raise ValueError("--checkpoint is required unless --validate-only is given")
    checkpoint = tr.load_checkpoint(args.checkpoint)
    params, _ = checkpoint.restore()
    w = checkpoint.config.w if args.w is None else args.w
    reports, _, _ = tr.evaluate_split(
        params, checkpoint.config.model_config(), dataset, args.split, w, args.ties
    )
    print(retrieval.format_report_table(reports))
    record = retrieval.machine_record(reports)
    if args.out:
        Path(args.out).write_text(record, encoding="utf-8")
    else:
        sys.stdout.write(record)
    return 0


def cmd_gradcheck(args) -> int:
    results, elapsed = gradcheck.run_suite(args.seed, args.tolerance)
    print(gradcheck.format_table(results))
    print(f"total {elapsed:.1f}s")
    return 0 if all(r.passed for r in results) else 1


def cmd_report(args) -> int:
    text = sys.stdin.read() if args.metrics == "-" else Path(args.metrics).read_text("utf-8")
    values = retrieval.parse_machine_record(text)
    metrics = ["R@1", "R@5", "R@10", "MdR", "MnR"]
    name_width = max(10, len(args.name))
    head1 = " " * name_width + "  " + "Text => Video".center(34) + "  " + "Video => Text".center(34)
    head2 = f"{'Method':<{name_width}}  " + " ".join(f"{m:>6}" for m in metrics)
    head2 += "   " + " ".join(f"{m:>6}" for m in metrics)
    print(head1)
    print(head2)
    row = f"{args.name:<{name_width}}  "
    row += " ".join(f"{values.get(('t2v', m), float('nan')):>6.1f}" for m in metrics)
    row += "   "
    row += " ".join(f"{values.get(('v2t', m), float('nan')):>6.1f}" for m in metrics)
    print(row)
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (
        ValueError,
        OSError,
        dataio.EmbeddingFormatError,
        tr.TrainingDivergedError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
