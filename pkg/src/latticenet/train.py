"""Deterministic SGD training loop, k-fold driver, and report emission.

Everything downstream of a TrainConfig is a pure function of (config,
dataset bytes): model init, per-epoch shuffles, and dropout all draw from
seeds derived with SeedSequence, so identical configs give bit-identical
metrics and report files.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import kfold_split
from .errors import ConfigurationError, ConsistencyError, DivergenceError, UsageError
from .models import ModelInstance
from .vision import normalize


@dataclass
class TrainConfig:
    model: "ModelSpec"
    dataset: "Dataset"
    epochs: int
    seed: int
    learning_rate: float = 0.01
    batch_size: int = 64
    folds: int = 5
    lr_fallback: float | None = None
    test_dataset: "Dataset | None" = None
    init_scale: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def fusion_op(self):
        return self.model.fusion_op

    @property
    def effective_lr(self):
        # lr_fallback, when set, replaces the default rate (the manual
        # rescue path for over-amplified configurations).
        return self.lr_fallback if self.lr_fallback is not None else self.learning_rate

    def descriptor(self):
        """JSON-serializable view of everything that determines the run."""
        return {
            "model": self.model.to_dict(),
            "dataset_provenance": self.dataset.provenance,
            "epochs": self.epochs,
            "seed": self.seed,
            "learning_rate": self.learning_rate,
            "lr_fallback": self.lr_fallback,
            "batch_size": self.batch_size,
            "folds": self.folds,
            "init_scale": self.init_scale,
        }

    def config_hash(self):
        blob = json.dumps(self.descriptor(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class FoldMetrics:
    fold_index: int
    train_loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    test_accuracy: float | None = None
    wall_seconds: float = 0.0
    saturation_count: int = 0


@dataclass
class RunMetrics:
    folds: list

    @property
    def mean_val_accuracy(self):
        return float(np.mean([f.val_accuracy[-1] for f in self.folds]))

    @property
    def mean_test_accuracy(self):
        vals = [f.test_accuracy for f in self.folds if f.test_accuracy is not None]
        return float(np.mean(vals)) if vals else None


def sgd_step(params, learning_rate):
    """w <- w - lr * grad for every parameter tensor; gradients are zeroed."""
    tensors = params.values() if isinstance(params, dict) else params
    for w in tensors:
        if w.grad is None:
            raise UsageError("sgd_step called on a parameter without a gradient")
    for w in tensors:
        w.data -= learning_rate * w.grad
        w.grad = None


def dataset_to_arrays(dataset):
    """(primary, secondary-or-None, labels) as float64/int64 arrays."""
    primary = np.stack([normalize(s.primary).data for s in dataset.samples])
    secondary = None
    if all(s.secondary is not None for s in dataset.samples):
        secondary = np.stack([normalize(s.secondary).data for s in dataset.samples])
    return primary, secondary, dataset.labels()


def _model_inputs(spec, primary, secondary, idx):
    if spec.topology == "single":
        return [T.Tensor(primary[idx])]
    if secondary is None:
        raise ConfigurationError("multistream model needs a secondary stream")
    return [T.Tensor(primary[idx]), T.Tensor(secondary[idx])]


def evaluate(model, primary, secondary, labels, batch_size=256):
    """Argmax-of-logits accuracy; argmax ties resolve to the lowest class."""
    n = len(labels)
    if n == 0:
        raise UsageError("evaluate called on an empty dataset")
    correct = 0
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        logits = model.forward(_model_inputs(model.spec, primary, secondary, idx))
        correct += int((logits.data.argmax(axis=1) == labels[idx]).sum())
    return correct / n


def evaluate_dataset(model, dataset, batch_size=256):
    primary, secondary, labels = dataset_to_arrays(dataset)
    return evaluate(model, primary, secondary, labels, batch_size)


def train_fold(config, fold_split, fold_index, arrays=None, test_arrays=None):
    """Train one fold to completion; deterministic given (config, fold_index)."""
    if fold_index >= fold_split.fold_count:
        raise ConfigurationError(
            f"fold_index {fold_index} out of range for {fold_split.fold_count} folds"
        )
    primary, secondary, labels = arrays if arrays is not None else dataset_to_arrays(
        config.dataset
    )
    train_idx = fold_split.train_indices(fold_index)
    val_idx = fold_split.val_indices(fold_index)

    model_seed = int(
        np.random.SeedSequence([config.seed, fold_index, 0x10DE]).generate_state(1)[0]
    )
    model = ModelInstance(config.model, seed=model_seed, init_scale=config.init_scale)
    lr = config.effective_lr
    op = config.model.fusion_op
    if op is not None:
        op.reset_saturation()

    metrics = FoldMetrics(fold_index=fold_index)
    started = time.monotonic()
    for epoch in range(config.epochs):
        rng = np.random.default_rng([config.seed, fold_index, epoch, 0x5EED])
        order = train_idx.copy()
        rng.shuffle(order)
        losses = []
        weights = []
        correct = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            inputs = _model_inputs(config.model, primary, secondary, batch)
            logits = model.forward(inputs, training=True)
            loss = T.softmax_cross_entropy(logits, labels[batch])
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite loss {value} at epoch {epoch}, batch {start // config.batch_size}",
                    epoch=epoch,
                    batch=start // config.batch_size,
                )
            T.backward(loss)
            sgd_step(model.params, lr)
            losses.append(value)
            weights.append(len(batch))
            correct += int((logits.data.argmax(axis=1) == labels[batch]).sum())
        metrics.train_loss.append(float(np.average(losses, weights=weights)))
        metrics.train_accuracy.append(correct / len(order))
        metrics.val_accuracy.append(
            _val_acc(model, primary, secondary, labels, val_idx, config.batch_size)
        )
    if test_arrays is not None:
        metrics.test_accuracy = evaluate(model, *test_arrays, batch_size=config.batch_size)
    metrics.wall_seconds = time.monotonic() - started
    if op is not None:
        metrics.saturation_count = op.saturation_count
    return metrics, model


def _val_acc(model, primary, secondary, labels, val_idx, batch_size):
    correct = 0
    for start in range(0, len(val_idx), batch_size):
        idx = val_idx[start : start + batch_size]
        logits = model.forward(_model_inputs(model.spec, primary, secondary, idx))
        correct += int((logits.data.argmax(axis=1) == labels[idx]).sum())
    return correct / len(val_idx)


def run_experiment(config, out_dir=None):
    """Train all folds, evaluate on the test split, emit reports.

    Partial fold results are persisted even when a later fold diverges.
    """
    fold_split = kfold_split(config.dataset, config.folds, config.seed)
    arrays = dataset_to_arrays(config.dataset)
    test_arrays = (
        dataset_to_arrays(config.test_dataset) if config.test_dataset is not None else None
    )
    metrics = RunMetrics(folds=[])
    try:
        for fold in range(config.folds):
            fold_metrics, _ = train_fold(config, fold_split, fold, arrays, test_arrays)
            metrics.folds.append(fold_metrics)
    except DivergenceError:
        if out_dir is not None:
            emit_report(metrics, config, out_dir, partial=True)
        raise
    if out_dir is not None:
        emit_report(metrics, config, out_dir)
    return metrics


def _atomic_write(path, data):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as f:
        f.write(data)
    os.replace(tmp, path)


def summary_dict(metrics, config, partial=False):
    d = {
        "config_hash": config.config_hash(),
        "config": config.descriptor(),
        "partial": partial,
        "folds": [
            {
                "fold": f.fold_index,
                "final_train_loss": f.train_loss[-1] if f.train_loss else None,
                "final_train_accuracy": f.train_accuracy[-1] if f.train_accuracy else None,
                "final_val_accuracy": f.val_accuracy[-1] if f.val_accuracy else None,
                "test_accuracy": f.test_accuracy,
                "saturation_count": f.saturation_count,
            }
            for f in metrics.folds
        ],
    }
    if metrics.folds and not partial:
        d["mean_val_accuracy"] = metrics.mean_val_accuracy
        d["mean_test_accuracy"] = metrics.mean_test_accuracy
    return d


def emit_report(metrics, config, out_dir, partial=False):
    """Write summary.json and curves.tsv (plus a timing sidecar).

    Wall-clock timings go to timing.tsv only, so the report files proper are
    byte-identical across reruns of the same config.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(
        out_dir / "summary.json",
        json.dumps(summary_dict(metrics, config, partial), sort_keys=True, indent=2) + "\n",
    )
    lines = ["fold\tepoch\ttrain_loss\ttrain_accuracy\tval_accuracy"]
    for f in metrics.folds:
        for epoch, (loss, tacc, vacc) in enumerate(
            zip(f.train_loss, f.train_accuracy, f.val_accuracy)
        ):
            lines.append(f"{f.fold_index}\t{epoch}\t{loss!r}\t{tacc!r}\t{vacc!r}")
    _atomic_write(out_dir / "curves.tsv", "\n".join(lines) + "\n")
    timing = ["fold\twall_seconds"] + [
        f"{f.fold_index}\t{f.wall_seconds:.3f}" for f in metrics.folds
    ]
    _atomic_write(out_dir / "timing.tsv", "\n".join(timing) + "\n")
    return out_dir / "summary.json", out_dir / "curves.tsv"


def _load_summary(path):
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    with open(path) as f:
        return json.load(f), path


def compare_runs(report_paths):
    """Side-by-side comparison of run summaries over the same dataset.

    The first path is the baseline; each row carries the absolute gap in
    accuracy points and the relative improvement (a - b) / b against it.
    Rows are ranked by mean accuracy, ties broken lexicographically by name.
    """
    if len(report_paths) < 2:
        raise ConfigurationError("compare_runs needs at least two reports")
    runs = []
    base_prov = None
    for p in report_paths:
        summary, path = _load_summary(p)
        prov = summary["config"]["dataset_provenance"]
        if base_prov is None:
            base_prov = prov
        elif prov != base_prov:
            raise ConsistencyError(
                f"{path}: dataset provenance differs from {report_paths[0]}; refusing to compare"
            )
        mean = summary.get("mean_val_accuracy")
        if summary.get("mean_test_accuracy") is not None:
            mean = summary["mean_test_accuracy"]
        runs.append({"name": summary["config"]["model"]["name"], "path": str(path), "mean": mean})
    baseline = runs[0]["mean"]
    for r in runs:
        r["abs_gap_points"] = r["mean"] - baseline
        r["relative_gap"] = (r["mean"] - baseline) / baseline if baseline else None
    runs.sort(key=lambda r: (-r["mean"], r["name"]))
    for rank, r in enumerate(runs, start=1):
        r["rank"] = rank
    return runs


def format_comparison(runs):
    header = f"{'rank':>4}  {'mean_acc':>9}  {'abs_gap_pts':>11}  {'rel_gap':>9}  name"
    lines = [header]
    for r in runs:
        rel = f"{r['relative_gap']:+.4f}" if r["relative_gap"] is not None else "n/a"
        lines.append(
            f"{r['rank']:>4}  {r['mean']:>9.5f}  {r['abs_gap_points']:>+11.5f}  {rel:>9}  {r['name']}"
        )
    return "\n".join(lines)
