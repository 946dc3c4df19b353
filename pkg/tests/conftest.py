import struct

import numpy as np
import pytest


def make_cifar10_bytes(n_per_class=20, classes=10, seed=0, record_noise=20):
    """CIFAR-10-format records with class-separable synthetic images."""
    rng = np.random.default_rng(seed)
    recs = []
    for c in range(classes):
        for _ in range(n_per_class):
            img = synth_image(c, rng, record_noise)
            recs.append(bytes([c]) + img.reshape(3, -1).tobytes())
    rng.shuffle(recs)
    return b"".join(recs)


def synth_image(c, rng, noise=20):
    """A 32x32 CHW uint8 image whose geometry and color depend on the class."""
    base = np.zeros((3, 32, 32))
    x0 = (c * 3) % 28
    base[c % 3, :, x0 : x0 + 4] = 200
    base[(c + 1) % 3, 8:24, 8:24] += 40 + 10 * c
    return np.clip(base + rng.normal(0, noise, base.shape), 0, 255).astype(np.uint8)


def make_cifar100_bytes(n_per_class=2, classes=100, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for fine in range(classes):
        for _ in range(n_per_class):
            img = rng.integers(0, 256, size=3072, dtype=np.uint8)
            recs.append(bytes([fine // 5, fine]) + img.tobytes())
    rng.shuffle(recs)
    return b"".join(recs)


def make_norb_pair(n=3, h=96, w=96, labels=None, seed=0):
    """(dat_bytes, cat_bytes) in the small-NORB binary matrix layout."""
    rng = np.random.default_rng(seed)
    if labels is None:
        labels = [int(rng.integers(0, 5)) for _ in range(n)]
    images = rng.integers(0, 256, size=(n, 2, h, w), dtype=np.uint8)
    dat = struct.pack("<ii", 0x1E3D4C55, 4) + struct.pack("<4i", n, 2, h, w)
    dat += images.tobytes()
    cat = struct.pack("<ii", 0x1E3D4C54, 1) + struct.pack("<3i", n, 1, 1)
    cat += b"".join(struct.pack("<i", l) for l in labels)
    return dat, cat, images, labels


@pytest.fixture
def cifar10_file(tmp_path):
    path = tmp_path / "data_batch.bin"
    path.write_bytes(make_cifar10_bytes())
    return path


@pytest.fixture
def cifar100_file(tmp_path):
    path = tmp_path / "train.bin"
    path.write_bytes(make_cifar100_bytes(n_per_class=6))
    return path
