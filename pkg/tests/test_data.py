import numpy as np
import pytest

from latticenet.data import (
    Dataset,
    Sample,
    kfold_split,
    load_cifar10,
    load_cifar100,
    load_norb,
    make_cifar50,
    subsample,
)
from latticenet.errors import (
    ConfigurationError,
    ConsistencyError,
    CorruptionError,
    FormatError,
)
from latticenet.vision import Image

from conftest import make_cifar10_bytes, make_cifar100_bytes, make_norb_pair


class TestCifar10:
    def test_basic_parse(self, cifar10_file):
        ds = load_cifar10([cifar10_file])
        assert len(ds) == 200
        assert ds.num_classes == 10
        labels = ds.labels()
        for c in range(10):
            assert (labels == c).sum() == 20
        s = ds.samples[0]
        assert s.primary.pixels.shape == (32, 32, 3)
        assert s.source_id == "data_batch.bin:0"

    def test_plane_layout(self, tmp_path):
        # One record: label 3, R plane all 10, G plane all 20, B plane all 30.
        rec = bytes([3]) + bytes([10] * 1024) + bytes([20] * 1024) + bytes([30] * 1024)
        path = tmp_path / "one.bin"
        path.write_bytes(rec)
        ds = load_cifar10([path])
        px = ds.samples[0].primary.pixels
        assert ds.samples[0].label == 3
        np.testing.assert_array_equal(px[:, :, 0], 10)
        np.testing.assert_array_equal(px[:, :, 1], 20)
        np.testing.assert_array_equal(px[:, :, 2], 30)

    def test_multiple_files_concatenate_in_order(self, tmp_path):
        a = tmp_path / "a.bin"
        b = tmp_path / "b.bin"
        a.write_bytes(make_cifar10_bytes(n_per_class=1, seed=1))
        b.write_bytes(make_cifar10_bytes(n_per_class=1, seed=2))
        ds = load_cifar10([a, b])
        assert len(ds) == 20
        assert ds.samples[0].source_id.startswith("a.bin:")
        assert ds.samples[10].source_id.startswith("b.bin:")
        assert set(ds.provenance["files"]) == {"a.bin", "b.bin"}

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(make_cifar10_bytes(n_per_class=1)[:-10])
        with pytest.raises(FormatError):
            load_cifar10([path])

    def test_label_overflow(self, tmp_path):
        rec = bytes([17]) + bytes(3072)
        path = tmp_path / "bad.bin"
        path.write_bytes(rec)
        with pytest.raises(CorruptionError):
            load_cifar10([path])

    def test_determinism(self, cifar10_file):
        runs = [load_cifar10([cifar10_file]) for _ in range(3)]
        for other in runs[1:]:
            assert [s.label for s in other.samples] == [s.label for s in runs[0].samples]
            for a, b in zip(runs[0].samples, other.samples):
                np.testing.assert_array_equal(a.primary.pixels, b.primary.pixels)
        assert runs[0].provenance == runs[1].provenance


class TestCifar100:
    def test_fine_labels_used(self, tmp_path):
        # coarse 7, fine 42
        rec = bytes([7, 42]) + bytes(3072)
        path = tmp_path / "one.bin"
        path.write_bytes(rec)
        ds = load_cifar100([path])
        assert ds.samples[0].label == 42
        assert ds.num_classes == 100

    def test_full_parse(self, cifar100_file):
        ds = load_cifar100([cifar100_file])
        assert len(ds) == 600
        assert sorted(np.unique(ds.labels())) == list(range(100))

    def test_wrong_record_size(self, cifar100_file, tmp_path):
        # CIFAR-10 bytes are not a multiple of the 3074-byte record.
        path = tmp_path / "wrong.bin"
        path.write_bytes(make_cifar10_bytes(n_per_class=1))
        with pytest.raises(FormatError):
            load_cifar100([path])


class TestCifar50:
    def test_construction(self, cifar100_file):
        ds = make_cifar50(load_cifar100([cifar100_file]), seed=11)
        assert ds.num_classes == 50
        assert len(ds) == 300
        assert sorted(np.unique(ds.labels())) == list(range(50))
        chosen = ds.provenance["cifar50"]["classes"]
        assert len(chosen) == 50
        assert chosen == sorted(chosen)

    def test_seed_dependence_and_determinism(self, cifar100_file):
        src = load_cifar100([cifar100_file])
        a1 = make_cifar50(src, seed=11)
        a2 = make_cifar50(src, seed=11)
        b = make_cifar50(src, seed=12)
        assert a1.provenance["cifar50"] == a2.provenance["cifar50"]
        assert [s.source_id for s in a1.samples] == [s.source_id for s in a2.samples]
        assert a1.provenance["cifar50"] != b.provenance["cifar50"]

    def test_needs_100_classes(self, cifar10_file):
        with pytest.raises(ConfigurationError):
            make_cifar50(load_cifar10([cifar10_file]), seed=1)


class TestNorb:
    def test_basic_parse(self, tmp_path):
        dat, cat, images, labels = make_norb_pair(n=4, h=8, w=8, seed=3)
        (tmp_path / "d.mat").write_bytes(dat)
        (tmp_path / "c.mat").write_bytes(cat)
        ds = load_norb(tmp_path / "d.mat", tmp_path / "c.mat")
        assert len(ds) == 4
        assert ds.num_classes == 5
        for i, s in enumerate(ds.samples):
            assert s.label == labels[i]
            np.testing.assert_array_equal(s.primary.pixels[:, :, 0], images[i, 0])
            np.testing.assert_array_equal(s.secondary.pixels[:, :, 0], images[i, 1])

    def test_bad_magic(self, tmp_path):
        dat, cat, _, _ = make_norb_pair(n=2, h=4, w=4)
        (tmp_path / "d.mat").write_bytes(b"\x00" * 4 + dat[4:])
        (tmp_path / "c.mat").write_bytes(cat)
        with pytest.raises(FormatError):
            load_norb(tmp_path / "d.mat", tmp_path / "c.mat")

    def test_count_mismatch(self, tmp_path):
        dat, _, _, _ = make_norb_pair(n=3, h=4, w=4)
        _, cat, _, _ = make_norb_pair(n=2, h=4, w=4)
        (tmp_path / "d.mat").write_bytes(dat)
        (tmp_path / "c.mat").write_bytes(cat)
        with pytest.raises(ConsistencyError):
            load_norb(tmp_path / "d.mat", tmp_path / "c.mat")

    def test_label_out_of_range(self, tmp_path):
        dat, cat, _, _ = make_norb_pair(n=2, h=4, w=4, labels=[0, 9])
        (tmp_path / "d.mat").write_bytes(dat)
        (tmp_path / "c.mat").write_bytes(cat)
        with pytest.raises(CorruptionError):
            load_norb(tmp_path / "d.mat", tmp_path / "c.mat")

    def test_truncated_images(self, tmp_path):
        dat, cat, _, _ = make_norb_pair(n=2, h=4, w=4)
        (tmp_path / "d.mat").write_bytes(dat[:-5])
        (tmp_path / "c.mat").write_bytes(cat)
        with pytest.raises(FormatError):
            load_norb(tmp_path / "d.mat", tmp_path / "c.mat")


def toy_dataset(per_class=10, classes=4):
    blank = Image(np.zeros((4, 4), dtype=np.uint8))
    samples = [
        Sample(primary=blank, label=c, source_id=f"x:{c}-{i}")
        for c in range(classes)
        for i in range(per_class)
    ]
    return Dataset(samples, num_classes=classes)


class TestKfold:
    def test_stratified_partition(self):
        ds = toy_dataset(per_class=10, classes=4)
        split = kfold_split(ds, 5, seed=1)
        labels = ds.labels()
        all_val = np.concatenate([split.val_indices(f) for f in range(5)])
        assert sorted(all_val) == list(range(len(ds)))
        for f in range(5):
            val = split.val_indices(f)
            assert len(val) == 8
            # stratified: every class appears equally in every fold
            for c in range(4):
                assert (labels[val] == c).sum() == 2
            assert len(np.intersect1d(val, split.train_indices(f))) == 0

    def test_determinism_and_seed(self):
        ds = toy_dataset()
        a = kfold_split(ds, 5, seed=3)
        b = kfold_split(ds, 5, seed=3)
        c = kfold_split(ds, 5, seed=4)
        np.testing.assert_array_equal(a.assignments, b.assignments)
        assert not np.array_equal(a.assignments, c.assignments)

    def test_k_too_small(self):
        with pytest.raises(ConfigurationError):
            kfold_split(toy_dataset(), 1, seed=0)

    def test_class_smaller_than_k(self):
        with pytest.raises(ConfigurationError):
            kfold_split(toy_dataset(per_class=3), 5, seed=0)


class TestSubsample:
    def test_shape_and_remap(self):
        ds = toy_dataset(per_class=10, classes=6)
        out = subsample(ds, classes=3, per_class=4, seed=2)
        assert len(out) == 12
        assert out.num_classes == 3
        assert sorted(np.unique(out.labels())) == [0, 1, 2]
        assert out.provenance["subsample"]["per_class"] == 4

    def test_source_order_preserved_within_class(self):
        ds = toy_dataset(per_class=10, classes=2)
        out = subsample(ds, classes=2, per_class=5, seed=3)
        ids = [s.source_id for s in out.samples if s.label == 0]
        assert ids == sorted(ids, key=lambda x: int(x.split("-")[1]))

    def test_determinism(self):
        ds = toy_dataset(per_class=10, classes=6)
        a = subsample(ds, 3, 4, seed=5)
        b = subsample(ds, 3, 4, seed=5)
        assert [s.source_id for s in a.samples] == [s.source_id for s in b.samples]

    def test_too_many_classes(self):
        with pytest.raises(ConfigurationError):
            subsample(toy_dataset(classes=4), classes=5, per_class=1, seed=0)

    def test_too_few_samples(self):
        with pytest.raises(ConfigurationError):
            subsample(toy_dataset(per_class=3), classes=2, per_class=4, seed=0)
