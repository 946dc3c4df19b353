"""Small end-to-end run: single stream vs late fusion vs lattice cross-fusion.

Builds a synthetic CIFAR-10-format binary, parses it, attaches Canny edge
maps as the second stream, trains all three topologies with k-fold
cross-validation, and prints the comparison table. Takes a few minutes on
one CPU core; shrink epochs or per-class for a faster look.

Run: python3 demos/train_trend.py
"""

import tempfile
from pathlib import Path

import numpy as np

from latticenet import FusionOp, build_backbone, to_multistream
from latticenet.data import load_cifar10, subsample
from latticenet.train import TrainConfig, compare_runs, format_comparison, run_experiment
from latticenet.vision import make_second_stream

EPOCHS = 8
PER_CLASS = 60
SEED = 1


def synthetic_cifar_bytes(n_per_class, seed):
    """Class-separable 32x32 images in the CIFAR-10 binary record layout."""
    rng = np.random.default_rng(seed)
    records = []
    for c in range(10):
        for _ in range(n_per_class):
            img = np.zeros((3, 32, 32))
            img[c % 3, :, (c * 3) % 28 : (c * 3) % 28 + 4] = 200
            img[(c + 1) % 3, 8:24, 8:24] += 40 + 10 * c
            img = np.clip(img + rng.normal(0, 20, img.shape), 0, 255).astype(np.uint8)
            records.append(bytes([c]) + img.reshape(3, -1).tobytes())
    rng.shuffle(records)
    return b"".join(records)


work = Path(tempfile.mkdtemp(prefix="latticenet-demo-"))
raw = work / "train.bin"
raw.write_bytes(synthetic_cifar_bytes(PER_CLASS, seed=0))

dataset = load_cifar10([raw])
dataset = subsample(dataset, classes=2, per_class=PER_CLASS, seed=SEED)
dataset = make_second_stream(dataset)  # Canny edges as the distractor stream
print(f"dataset: {len(dataset)} samples, {dataset.num_classes} classes")

base = build_backbone("mini-alexnet", 2, width_scale=0.03125)
variants = {
    "single": base,
    "late": to_multistream(base, "multistream_late", None),
    "lattice": to_multistream(base, "multistream_lattice", FusionOp("average")),
}

report_dirs = []
for name, spec in variants.items():
    config = TrainConfig(
        model=spec, dataset=dataset, epochs=EPOCHS, seed=SEED, folds=3, batch_size=16
    )
    out = work / name
    metrics = run_experiment(config, out_dir=out)
    report_dirs.append(out)
    print(f"{name:>8}: mean fold validation accuracy {metrics.mean_val_accuracy:.4f}")

print()
print(format_comparison(compare_runs(report_dirs)))
print(f"\nreports kept under {work}")
