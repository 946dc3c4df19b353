"""Binary dataset parsers (CIFAR-10/100, small-NORB), the seeded 50-class
CIFAR construction, stratified fold splitting, and subsampling.

All constructions are pure functions of (source bytes, parameters): sample
order and seeded selections are bit-reproducible, and every Dataset carries
provenance (file digests plus construction parameters) sufficient to
rebuild it.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ConsistencyError, CorruptionError, FormatError
from .vision import Image

CIFAR10_RECORD = 3073  # 1 label byte + 3 * 1024 pixel planes
CIFAR100_RECORD = 3074  # coarse label, fine label, 3 * 1024 pixel planes

NORB_MAGIC_BYTE = 0x1E3D4C55  # byte matrix
NORB_MAGIC_INT = 0x1E3D4C54  # int32 matrix


@dataclass
class Sample:
    primary: Image
    label: int
    source_id: str
    secondary: Image | None = None


@dataclass
class Dataset:
    samples: list
    num_classes: int
    split: str = "train"
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def labels(self):
        return np.array([s.label for s in self.samples], dtype=np.int64)


@dataclass
class FoldSplit:
    fold_count: int
    assignments: np.ndarray  # per-sample validation-fold index
    seed: int

    def train_indices(self, fold):
        return np.nonzero(self.assignments != fold)[0]

    def val_indices(self, fold):
        return np.nonzero(self.assignments == fold)[0]


def _digest(data):
    return hashlib.sha256(data).hexdigest()


def _cifar_plane_to_image(pixels):
    # 3072 bytes: 1024 R, then G, then B planes, each row-major 32x32
    return Image(pixels.reshape(3, 32, 32).transpose(1, 2, 0))


def _load_cifar(paths, record_len, num_classes, split, parse_record):
    samples = []
    digests = {}
    for path in paths:
        path = Path(path)
        raw = path.read_bytes()
        digests[path.name] = _digest(raw)
        if len(raw) % record_len != 0:
            raise FormatError(
                f"{path}: size {len(raw)} is not a multiple of the {record_len}-byte record",
                offset=(len(raw) // record_len) * record_len,
            )
        buf = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record_len)
        for idx in range(buf.shape[0]):
            label, pixels = parse_record(buf[idx])
            if label >= num_classes:
                raise CorruptionError(
                    f"{path}: record {idx} has label {label} >= {num_classes}",
                    offset=idx * record_len,
                )
            samples.append(
                Sample(
                    primary=_cifar_plane_to_image(pixels),
                    label=int(label),
                    source_id=f"{path.name}:{idx}",
                )
            )
    provenance = {"format": f"cifar{num_classes}", "files": digests, "split": split}
    return Dataset(samples, num_classes=num_classes, split=split, provenance=provenance)


def load_cifar10(paths, split="train"):
    """Parse CIFAR-10 binary batches: per record 1 label byte + 3072 pixels."""
    return _load_cifar(
        paths, CIFAR10_RECORD, 10, split, lambda rec: (int(rec[0]), rec[1:])
    )


def load_cifar100(paths, split="train"):
    """Parse CIFAR-100 binary: coarse label (ignored), fine label, 3072 pixels."""
    return _load_cifar(
        paths, CIFAR100_RECORD, 100, split, lambda rec: (int(rec[1]), rec[2:])
    )


def make_cifar50(cifar100, seed):
    """Seeded 50-class draw from CIFAR-100 with dense label remapping.

    Class indices 0..99 are shuffled with the seed, the first 50 are kept and
    sorted ascending, and labels are remapped to 0..49 in that order.
    """
    if cifar100.num_classes != 100:
        raise ConfigurationError(
            f"make_cifar50 needs a 100-class source, got {cifar100.num_classes}"
        )
    rng = np.random.default_rng(seed)
    classes = np.arange(100)
    rng.shuffle(classes)
    chosen = np.sort(classes[:50])
    remap = {int(c): i for i, c in enumerate(chosen)}
    samples = [
        replace(s, label=remap[s.label]) for s in cifar100.samples if s.label in remap
    ]
    provenance = dict(cifar100.provenance)
    provenance["cifar50"] = {"seed": int(seed), "classes": [int(c) for c in chosen]}
    return Dataset(samples, num_classes=50, split=cifar100.split, provenance=provenance)


def _read_norb_header(raw, path, expected_magic, kind):
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header", offset=len(raw))
    magic, ndim = struct.unpack_from("<ii", raw, 0)
    if magic != expected_magic:
        raise FormatError(
            f"{path}: magic 0x{magic & 0xFFFFFFFF:08X} is not the {kind} matrix magic "
            f"0x{expected_magic:08X}",
            offset=0,
        )
    # The header stores max(3, ndim) extents; trailing ones pad short shapes.
    stored = max(3, ndim)
    need = 8 + 4 * stored
    if len(raw) < need:
        raise FormatError(f"{path}: truncated extent list", offset=len(raw))
    extents = struct.unpack_from(f"<{stored}i", raw, 8)[:ndim]
    return extents, need


def load_norb(dat_path, cat_path, split="train"):
    """Parse a small-NORB stereo-image/category file pair.

    The left camera view becomes the primary stream and the right view the
    secondary; labels are the five coarse categories.
    """
    dat_path, cat_path = Path(dat_path), Path(cat_path)
    raw_dat = dat_path.read_bytes()
    raw_cat = cat_path.read_bytes()

    extents, offset = _read_norb_header(raw_dat, dat_path, NORB_MAGIC_BYTE, "byte")
    if len(extents) != 4 or extents[1] != 2:
        raise FormatError(f"{dat_path}: expected shape [N,2,H,W], got {list(extents)}")
    n, _, h, w = extents
    need = offset + n * 2 * h * w
    if len(raw_dat) < need:
        raise FormatError(f"{dat_path}: truncated image data", offset=len(raw_dat))
    images = np.frombuffer(raw_dat, dtype=np.uint8, count=n * 2 * h * w, offset=offset)
    images = images.reshape(n, 2, h, w)

    cat_extents, cat_offset = _read_norb_header(raw_cat, cat_path, NORB_MAGIC_INT, "int")
    if len(cat_extents) != 1:
        raise FormatError(f"{cat_path}: expected shape [N], got {list(cat_extents)}")
    if cat_extents[0] != n:
        raise ConsistencyError(
            f"item counts disagree: {dat_path} has {n}, {cat_path} has {cat_extents[0]}"
        )
    if len(raw_cat) < cat_offset + 4 * n:
        raise FormatError(f"{cat_path}: truncated labels", offset=len(raw_cat))
    labels = np.frombuffer(raw_cat, dtype="<i4", count=n, offset=cat_offset)

    samples = []
    for idx in range(n):
        label = int(labels[idx])
        if not 0 <= label <= 4:
            raise CorruptionError(
                f"{cat_path}: item {idx} has label {label} outside the 5 categories",
                offset=cat_offset + 4 * idx,
            )
        samples.append(
            Sample(
                primary=Image(images[idx, 0]),
                secondary=Image(images[idx, 1]),
                label=label,
                source_id=f"{dat_path.name}:{idx}",
            )
        )
    provenance = {
        "format": "small-norb",
        "files": {dat_path.name: _digest(raw_dat), cat_path.name: _digest(raw_cat)},
        "split": split,
    }
    return Dataset(samples, num_classes=5, split=split, provenance=provenance)


def kfold_split(dataset, k, seed):
    """Seeded stratified k-fold assignment, round-robin within each class."""
    if k < 2:
        raise ConfigurationError(f"k must be at least 2, got {k}")
    if len(dataset) == 0:
        raise ConfigurationError("cannot split an empty dataset")
    labels = dataset.labels()
    rng = np.random.default_rng([int(seed), 0xF01D])
    assignments = np.empty(len(dataset), dtype=np.int64)
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        if len(idx) < k:
            raise ConfigurationError(
                f"class {cls} has {len(idx)} samples, fewer than k={k}"
            )
        rng.shuffle(idx)
        assignments[idx] = np.arange(len(idx)) % k
    return FoldSplit(fold_count=k, assignments=assignments, seed=int(seed))


def subsample(dataset, classes, per_class, seed):
    """Seeded stratified reduction to `classes` classes x `per_class` samples.

    Classes are drawn by seeded shuffle then sorted; labels are remapped
    densely; within each class the kept samples preserve source order.
    """
    labels = dataset.labels()
    available = np.unique(labels)
    if classes > len(available):
        raise ConfigurationError(
            f"requested {classes} classes, dataset has {len(available)}"
        )
    rng = np.random.default_rng([int(seed), 0x5AB5])
    shuffled = available.copy()
    rng.shuffle(shuffled)
    chosen = np.sort(shuffled[:classes])
    keep = []
    for new_label, cls in enumerate(chosen):
        idx = np.nonzero(labels == cls)[0]
        if len(idx) < per_class:
            raise ConfigurationError(
                f"class {cls} has {len(idx)} samples, need {per_class}"
            )
        picked = idx.copy()
        rng.shuffle(picked)
        keep += [(int(i), new_label) for i in np.sort(picked[:per_class])]
    samples = [replace(dataset.samples[i], label=lbl) for i, lbl in keep]
    provenance = dict(dataset.provenance)
    provenance["subsample"] = {
        "seed": int(seed),
        "classes": [int(c) for c in chosen],
        "per_class": int(per_class),
    }
    return Dataset(
        samples, num_classes=classes, split=dataset.split, provenance=provenance
    )
