"""Command-line interface.

Subcommands: `prepare-data` turns raw dataset binaries into a prepared .npz
bundle; `train` runs a k-fold experiment from a JSON config; `compare`
tabulates run reports; `param-count` prints trainable parameter totals;
`gradcheck` runs the full gradient oracle suite. All state flows through
flags and config files; environment variables are never consulted.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import Dataset, Sample, load_cifar10, load_cifar100, load_norb, make_cifar50, subsample
from .errors import LatticeNetError
from .fusion import FusionOp
from .models import ModelSpec, build_backbone, count_params, to_multistream
from .train import TrainConfig, compare_runs, format_comparison, run_experiment
from .vision import Image, make_second_stream


def save_prepared(dataset, path):
    primary = np.stack([s.primary.pixels for s in dataset.samples])
    labels = dataset.labels()
    arrays = {
        "primary": primary,
        "labels": labels,
        "num_classes": np.int64(dataset.num_classes),
        "provenance": np.frombuffer(
            json.dumps(dataset.provenance, sort_keys=True).encode(), dtype=np.uint8
        ),
        "split": np.frombuffer(dataset.split.encode(), dtype=np.uint8),
    }
    if all(s.secondary is not None for s in dataset.samples):
        arrays["secondary"] = np.stack([s.secondary.pixels for s in dataset.samples])
    np.savez_compressed(path, **arrays)


def load_prepared(path):
    with np.load(path) as z:
        primary = z["primary"]
        secondary = z["secondary"] if "secondary" in z else None
        labels = z["labels"]
        num_classes = int(z["num_classes"])
        provenance = json.loads(bytes(z["provenance"]).decode())
        split = bytes(z["split"]).decode()
    samples = [
        Sample(
            primary=Image(primary[i]),
            secondary=Image(secondary[i]) if secondary is not None else None,
            label=int(labels[i]),
            source_id=f"{Path(path).name}:{i}",
        )
        for i in range(len(labels))
    ]
    return Dataset(samples, num_classes=num_classes, split=split, provenance=provenance)


def _cmd_prepare_data(args):
    if args.dataset == "norb":
        if len(args.inputs) != 2:
            raise LatticeNetError("norb needs exactly two inputs: DAT_FILE CAT_FILE")
        ds = load_norb(args.inputs[0], args.inputs[1], split=args.split)
    elif args.dataset == "cifar10":
        ds = load_cifar10(args.inputs, split=args.split)
    else:
        ds = load_cifar100(args.inputs, split=args.split)
        if args.dataset == "cifar50":
            ds = make_cifar50(ds, seed=args.seed)
    if args.classes or args.per_class:
        if not (args.classes and args.per_class):
            raise LatticeNetError("--classes and --per-class must be given together")
        ds = subsample(ds, args.classes, args.per_class, seed=args.seed)
    if args.edges:
        ds = make_second_stream(ds, low=args.canny_low, high=args.canny_high, sigma=args.canny_sigma)
    save_prepared(ds, args.out)
    print(f"wrote {args.out}: {len(ds)} samples, {ds.num_classes} classes")


def _build_model(cfg):
    if "model_file" in cfg:
        spec = ModelSpec.from_json(Path(cfg["model_file"]).read_text())
    else:
        in_shape = tuple(cfg.get("in_shape", (3, 32, 32)))
        spec = build_backbone(
            cfg["model"], cfg["num_classes"], cfg.get("width_scale", 1.0), in_shape
        )
    topology = cfg.get("topology", "single")
    if topology != "single":
        spec = to_multistream(spec, topology, FusionOp.from_dict(cfg.get("fusion_op", "average")))
    return spec


def _cmd_train(args):
    cfg = json.loads(Path(args.config).read_text())
    spec = _build_model(cfg)
    dataset = load_prepared(cfg["dataset"])
    test_dataset = load_prepared(cfg["test_dataset"]) if cfg.get("test_dataset") else None
    config = TrainConfig(
        model=spec,
        dataset=dataset,
        test_dataset=test_dataset,
        epochs=cfg.get("epochs", 30),
        seed=cfg.get("seed", 0),
        learning_rate=cfg.get("learning_rate", 0.01),
        lr_fallback=cfg.get("lr_fallback"),
        batch_size=cfg.get("batch_size", 64),
        folds=cfg.get("folds", 5),
        init_scale=cfg.get("init_scale", 1.0),
    )
    metrics = run_experiment(config, out_dir=args.out)
    print(f"mean fold validation accuracy: {metrics.mean_val_accuracy:.5f}")
    if metrics.mean_test_accuracy is not None:
        print(f"mean test accuracy: {metrics.mean_test_accuracy:.5f}")
    print(f"reports written to {args.out}")


def _cmd_compare(args):
    runs = compare_runs(args.reports)
    print(format_comparison(runs))


def _cmd_param_count(args):
    spec = build_backbone(args.model, args.num_classes, args.width_scale)
    if args.topology != "single":
        spec = to_multistream(spec, args.topology, FusionOp("average"))
    print(f"{spec.name} [{args.topology}]: {count_params(spec)} parameters")


def _cmd_gradcheck(args):
    from .checks import gradient_suite

    results = gradient_suite(n_points=args.points)
    failed = False
    for name, err in sorted(results.items()):
        ok = err < 1e-4
        failed |= not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:<24} max rel error {err:.3e}")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="latticenet")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="parse raw binaries into a prepared .npz bundle")
    p.add_argument("--dataset", required=True, choices=["cifar10", "cifar50", "cifar100", "norb"])
    p.add_argument("--edges", action="store_true", help="attach Canny edge maps as the second stream")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--per-class", type=int, default=None)
    p.add_argument("--split", default="train", choices=["train", "test"])
    p.add_argument("--canny-low", type=float, default=50.0)
    p.add_argument("--canny-high", type=float, default=100.0)
    p.add_argument("--canny-sigma", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("inputs", nargs="+", help="raw dataset file(s)")
    p.set_defaults(func=_cmd_prepare_data)

    p = sub.add_parser("train", help="run a k-fold experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("compare", help="tabulate run reports side by side")
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("param-count", help="print trainable parameter totals")
    p.add_argument("--model", required=True)
    p.add_argument("--topology", default="single",
                   choices=["single", "multistream_late", "multistream_lattice"])
    p.add_argument("--num-classes", type=int, default=10)
    p.add_argument("--width-scale", type=float, default=1.0)
    p.set_defaults(func=_cmd_param_count)

    p = sub.add_parser("gradcheck", help="run the full gradient oracle suite")
    p.add_argument("--points", type=int, default=100)
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except LatticeNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
