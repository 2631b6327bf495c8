"""Command-line entry point: train, eval, infer and footprint subcommands.

All knobs are flags (no environment variables) and `train` requires an
explicit seed so runs are reproducible.  Failures exit nonzero with a
single `error:`-prefixed line on stderr.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from stconv_kws import dataset, evaluation, frontend, model, trainer


def _add_train(sub):
    p = sub.add_parser("train", help="train a model on a Speech Commands style archive")
    p.add_argument("--data", required=True, help="dataset root directory")
    p.add_argument("--variant", default="base", choices=model.VARIANTS)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, help="output directory for checkpoint and log")
    p.add_argument("--cache-dir", default=None, help="feature cache directory")
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.001)


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output directory for posterior/ROC files")
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--roc", action="store_true", help="write per-keyword and overall FAR/FRR curves")


def _add_infer(sub):
    p = sub.add_parser("infer", help="classify individual WAV files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("wav", nargs="+", help="paths to 16 kHz mono PCM16 WAV files")


def _add_footprint(sub):
    p = sub.add_parser("footprint", help="print per-layer parameter/multiply counts")
    p.add_argument("--variant", default="base", choices=model.VARIANTS)


def cmd_train(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = dataset.ingest(args.data)
    counts = manifest.counts()
    print(f"ingested splits: train={counts[0]} dev={counts[1]} test={counts[2]}")
    x_train, y_train = dataset.load_split(manifest, "train", args.cache_dir)
    x_dev, y_dev = dataset.load_split(manifest, "dev", args.cache_dir)
    net = model.build(model.config_for_variant(args.variant), args.seed)
    cfg = trainer.TrainConfig(
        lr_init=args.lr, max_epochs=args.epochs, batch_size=args.batch_size, seed=args.seed
    )
    result = trainer.train(net, (x_train, y_train), (x_dev, y_dev), cfg)
    result.restore_best(net)
    model.save_weights(net, out_dir / "checkpoint.stcw")
    result.write_log(out_dir / "train_log.tsv")
    print(f"best dev accuracy {result.best_dev_acc:.4f} at epoch {result.best_epoch}")
    print(f"wrote {out_dir / 'checkpoint.stcw'}")
    return 0


def cmd_eval(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    net = model.load_weights(args.checkpoint)
    manifest = dataset.ingest(args.data)
    examples = manifest.split(args.split)
    feats, labels = dataset.load_split(manifest, args.split, args.cache_dir)
    _, acc, posteriors = trainer.evaluate_split(net, feats, labels)
    records = [
        evaluation.PosteriorRecord(ex.path, int(lab), post)
        for ex, lab, post in zip(examples, labels, posteriors)
    ]
    evaluation.write_posteriors(out_dir / f"posteriors_{args.split}.tsv", records)
    print(f"{args.split} accuracy\t{acc:.6f}")
    if args.roc:
        curves = []
        for k, word in enumerate(dataset.KEYWORDS):
            try:
                curve = evaluation.roc_keyword(records, k)
            except evaluation.EvalError:
                print(f"skipping ROC for {word!r}: no positives in split")
                continue
            curve.label = word
            evaluation.write_roc(out_dir / f"roc_{word}.tsv", curve)
            curves.append(curve)
        if not curves:
            raise evaluation.EvalError("no keyword has positives in this split")
        overall = evaluation.roc_overall(curves)
        evaluation.write_roc(out_dir / "roc_overall.tsv", overall)
        print(f"overall AUC\t{evaluation.auc(overall):.6f}")
    return 0


def cmd_infer(args) -> int:
    net = model.load_weights(args.checkpoint)
    for path in args.wav:
        feats = frontend.mfcc(frontend.load_wav(path))
        feats = feats.astype(np.float32).astype(np.float64)
        posterior = net.forward(feats)
        name = dataset.CLASS_NAMES[int(np.argmax(posterior))]
        probs = " ".join(f"{p:.4f}" for p in posterior)
        print(f"{path}\t{name}\t{probs}")
    return 0


def cmd_footprint(args) -> int:
    config = model.config_for_variant(args.variant)
    report = model.footprint(config)
    print(report.as_text())
    print(f"Receptive field: {model.receptive_field(config)}")
    if args.variant == "narrow":
        print(
            "note: the narrow variant's head count and FC width are free choices "
            "(heads=4, fc_out=20 here); published totals for comparable configs "
            "differ by a few hundred parameters"
        )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stconv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_train(sub)
    _add_eval(sub)
    _add_infer(sub)
    _add_footprint(sub)
    args = parser.parse_args(argv)
    handlers = {
        "train": cmd_train,
        "eval": cmd_eval,
        "infer": cmd_infer,
        "footprint": cmd_footprint,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # uniform machine-parseable failure surface
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
