import numpy as np
import pytest

from conftest import make_idx_pair, mnist_data_dir

from ddl.data import (
    LabeledDataset,
    load_cifar_binary,
    load_dataset,
    load_idx,
    load_matrix,
    load_mnist,
    save_dataset,
    save_matrix,
    synthesize_dataset,
)
from ddl.errors import (
    BadMagicError,
    CountMismatchError,
    LabelOutOfRangeError,
    TruncatedError,
)
from ddl.mlp import TrainConfig, build_mlp, train

import oracles


class TestLoadIdx:
    def test_basic_pair(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(10, 28, 28), dtype=np.uint8)
        labels = rng.integers(0, 10, size=10, dtype=np.uint8)
        ds = load_idx(*make_idx_pair(tmp_path, images, labels))
        assert len(ds) == 10
        assert ds.image_shape == (28, 28, 1)
        np.testing.assert_array_equal(ds.labels, labels)

    def test_normalization_endpoint(self, tmp_path):
        images = np.full((1, 2, 2), 255, dtype=np.uint8)
        ds = load_idx(*make_idx_pair(tmp_path, images, np.zeros(1, dtype=np.uint8)))
        assert ds.images.max() == 1.0
        images[:] = 0
        ds = load_idx(*make_idx_pair(tmp_path, images, np.zeros(1, dtype=np.uint8)))
        assert ds.images.min() == 0.0

    def test_gzip_detected_by_content(self, tmp_path):
        rng = np.random.default_rng(1)
        images = rng.integers(0, 256, size=(3, 4, 4), dtype=np.uint8)
        labels = np.array([1, 2, 3], dtype=np.uint8)
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        plain = load_idx(*make_idx_pair(tmp_path / "a", images, labels))
        gzipped = load_idx(*make_idx_pair(tmp_path / "b", images, labels, gz=True))
        np.testing.assert_array_equal(plain.images, gzipped.images)

    def test_bad_magic(self, tmp_path):
        img_path, lab_path = make_idx_pair(
            tmp_path, np.zeros((1, 2, 2), dtype=np.uint8), np.zeros(1, dtype=np.uint8)
        )
        raw = bytearray(img_path.read_bytes())
        raw[3] = 0x99
        img_path.write_bytes(bytes(raw))
        with pytest.raises(BadMagicError):
            load_idx(img_path, lab_path)

    def test_count_mismatch(self, tmp_path):
        img_path, _ = make_idx_pair(
            tmp_path, np.zeros((2, 2, 2), dtype=np.uint8), np.zeros(2, dtype=np.uint8)
        )
        _, lab_path = make_idx_pair(
            tmp_path / "other", np.zeros((3, 2, 2), dtype=np.uint8), np.zeros(3, dtype=np.uint8)
        )
        with pytest.raises(CountMismatchError):
            load_idx(img_path, lab_path)

    def test_truncated(self, tmp_path):
        img_path, lab_path = make_idx_pair(
            tmp_path, np.zeros((4, 3, 3), dtype=np.uint8), np.zeros(4, dtype=np.uint8)
        )
        img_path.write_bytes(img_path.read_bytes()[:-5])
        with pytest.raises(TruncatedError):
            load_idx(img_path, lab_path)

    def test_official_mnist_cross_check(self):
        data_dir = mnist_data_dir()
        if data_dir is None:
            pytest.skip("official MNIST files not present")
        ds = load_mnist(data_dir, "test")
        assert len(ds) == 10000
        import os

        for name in ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"):
            path = os.path.join(data_dir, name)
            if not os.path.exists(path):
                pytest.skip("cross-check reader needs uncompressed files")
        ref_images = oracles.read_idx_images(os.path.join(data_dir, "t10k-images-idx3-ubyte"))
        ref_labels = oracles.read_idx_labels(os.path.join(data_dir, "t10k-labels-idx1-ubyte"))
        np.testing.assert_array_equal(ds.labels, ref_labels)
        np.testing.assert_allclose(ds.images[..., 0], ref_images / 255.0)


class TestLoadCifar:
    def _record(self, label, fill):
        return bytes([label]) + bytes([fill]) * 3072

    def test_single_record(self, tmp_path):
        path = tmp_path / "batch.bin"
        path.write_bytes(self._record(7, 128))
        ds = load_cifar_binary([path])
        assert len(ds) == 1
        assert ds.labels[0] == 7
        assert ds.image_shape == (32, 32, 3)

    def test_record_count(self, tmp_path):
        path = tmp_path / "batch.bin"
        path.write_bytes(b"".join(self._record(i % 10, i) for i in range(10)))
        assert len(load_cifar_binary([path])) == 10

    def test_planar_to_interleaved(self, tmp_path):
        # distinct per-channel fills must land on the channel axis
        rec = bytes([0]) + bytes([10]) * 1024 + bytes([20]) * 1024 + bytes([30]) * 1024
        path = tmp_path / "batch.bin"
        path.write_bytes(rec)
        ds = load_cifar_binary([path])
        np.testing.assert_allclose(ds.images[0, :, :, 0], 10 / 255.0)
        np.testing.assert_allclose(ds.images[0, :, :, 1], 20 / 255.0)
        np.testing.assert_allclose(ds.images[0, :, :, 2], 30 / 255.0)

    def test_truncated(self, tmp_path):
        path = tmp_path / "batch.bin"
        path.write_bytes(self._record(1, 0)[:-1])
        with pytest.raises(TruncatedError):
            load_cifar_binary([path])

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "batch.bin"
        path.write_bytes(self._record(11, 0))
        with pytest.raises(LabelOutOfRangeError):
            load_cifar_binary([path])


class TestSynthesize:
    def test_deterministic(self):
        a = synthesize_dataset(1, 100, (8, 8, 1), 2)
        b = synthesize_dataset(1, 100, (8, 8, 1), 2)
        assert a.images.tobytes() == b.images.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_round_robin_labels(self):
        ds = synthesize_dataset(3, 10, (8, 8, 1), 10)
        assert sorted(ds.labels.tolist()) == list(range(10))

    def test_range_and_count_precondition(self):
        ds = synthesize_dataset(2, 30, (12, 10, 3), 3)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0
        with pytest.raises(ValueError):
            synthesize_dataset(2, 2, (8, 8, 1), 3)

    def test_one_layer_model_reaches_full_train_accuracy(self, two_class_split):
        train_ds, _ = two_class_split
        model = build_mlp([64, 2], seed=0)
        model, log = train(model, train_ds, TrainConfig(epochs=50, seed=0))
        assert log[-1]["train_acc"] == 1.0


class TestMatrixRoundTrip:
    def test_identity_file_size(self, tmp_path):
        path = tmp_path / "m.ddl1"
        save_matrix(np.eye(2), path)
        assert path.stat().st_size == 4 + 8 + 32

    def test_bit_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        m = rng.standard_normal((17, 9))
        m[0, 0] = -0.0  # signed zero must survive
        path = tmp_path / "m.ddl1"
        save_matrix(m, path)
        loaded = load_matrix(path)
        assert m.tobytes() == loaded.tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.ddl1"
        save_matrix(np.eye(2), path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(BadMagicError):
            load_matrix(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "m.ddl1"
        save_matrix(np.eye(3), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(TruncatedError):
            load_matrix(path)


class TestDatasetRoundTrip:
    def test_images_and_labels_survive(self, tmp_path):
        ds = synthesize_dataset(4, 12, (9, 7, 1), 3)
        save_dataset(ds, tmp_path / "ds")
        loaded = load_dataset(tmp_path / "ds")
        assert loaded.images.tobytes() == ds.images.tobytes()
        np.testing.assert_array_equal(loaded.labels, ds.labels)
        assert loaded.num_classes == ds.num_classes

    def test_empty_dataset(self, tmp_path):
        ds = LabeledDataset(np.zeros((0, 4, 4, 1)), np.zeros(0, dtype=np.int64), 2)
        save_dataset(ds, tmp_path / "empty")
        assert len(load_dataset(tmp_path / "empty")) == 0


class TestDatasetInvariants:
    def test_label_bound_enforced(self):
        with pytest.raises(LabelOutOfRangeError):
            LabeledDataset(np.zeros((2, 4, 4, 1)), np.array([0, 5]), 3)

    def test_count_mismatch_enforced(self):
        with pytest.raises(CountMismatchError):
            LabeledDataset(np.zeros((2, 4, 4, 1)), np.array([0]), 3)

    def test_pixel_range_enforced(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.full((1, 4, 4, 1), 1.5), np.array([0]), 3)
