import numpy as np
import pytest

from ddl.coding import CoderConfig
from ddl.data import LabeledDataset, synthesize_dataset
from ddl.dictlearn import Dictionary
from ddl.errors import DimensionMismatchError, PatchTooLargeError, ShapeMismatchError
from ddl.patches import (
    collect_training_patches,
    denoise_dataset,
    denoise_image,
    extract_patches,
    reassemble,
)


def exact_patch_dictionary(img, patch_size=8):
    """Dictionary whose atoms are the image's own centered unit-norm patches."""
    pm = extract_patches(img, patch_size)
    norms = np.linalg.norm(pm.data, axis=0)
    keep = norms > 1e-12
    atoms = pm.data[:, keep] / norms[keep]
    n = atoms.shape[1]
    return Dictionary(atoms, np.zeros((n, n)), np.zeros((atoms.shape[0], n)))


class TestExtract:
    def test_mnist_shape_counts(self):
        img = np.random.default_rng(0).random((28, 28, 1))
        pm = extract_patches(img, 8)
        assert pm.data.shape == (64, 441)

    def test_cifar_shape_counts(self):
        img = np.random.default_rng(0).random((32, 32, 3))
        pm = extract_patches(img, 8)
        assert pm.data.shape == (192, 625)

    def test_single_placement(self):
        img = np.random.default_rng(1).random((8, 8, 1))
        pm = extract_patches(img, 8)
        assert pm.data.shape == (64, 1)
        np.testing.assert_allclose(
            pm.data[:, 0] + pm.means[0], img.ravel(), atol=1e-15
        )

    def test_columns_centered(self):
        img = np.random.default_rng(2).random((12, 15, 3))
        pm = extract_patches(img, 8)
        assert np.abs(pm.data.mean(axis=0)).max() < 1e-12

    def test_offsets_raster_and_unique(self):
        pm = extract_patches(np.zeros((10, 11, 1)), 8)
        offs = [tuple(o) for o in pm.offsets]
        assert offs == sorted(offs)
        assert len(set(offs)) == len(offs)

    def test_patch_too_large(self):
        with pytest.raises(PatchTooLargeError):
            extract_patches(np.zeros((6, 9, 1)), 8)

    def test_no_center_mode(self):
        img = np.random.default_rng(3).random((9, 9, 1))
        pm = extract_patches(img, 8, center=False)
        assert np.all(pm.means == 0.0)


class TestReassemble:
    @pytest.mark.parametrize(
        "shape", [(8, 8, 1), (12, 9, 1), (28, 28, 1), (32, 32, 3), (9, 17, 3)]
    )
    def test_round_trip_identity(self, shape):
        rng = np.random.default_rng(hash(shape) % 2**32)
        for _ in range(10):
            img = rng.random(shape)
            pm = extract_patches(img, 8)
            out = reassemble(pm, pm.data)
            assert np.abs(out - img).max() < 1e-10

    def test_zero_everything(self):
        pm = extract_patches(np.zeros((10, 10, 1)), 8)
        out = reassemble(pm, np.zeros_like(pm.data))
        assert np.all(out == 0.0)

    def test_single_patch_no_overlap(self):
        img = np.random.default_rng(4).random((8, 8, 1))
        pm = extract_patches(img, 8)
        recon = np.random.default_rng(5).random(pm.data.shape) - 0.5
        out = reassemble(pm, recon)
        expected = np.clip((recon[:, 0] + pm.means[0]).reshape(8, 8, 1), 0, 1)
        np.testing.assert_allclose(out, expected, atol=1e-15)

    def test_shape_mismatch(self):
        pm = extract_patches(np.zeros((10, 10, 1)), 8)
        with pytest.raises(ShapeMismatchError):
            reassemble(pm, pm.data[:, :-1])

    def test_clamped_to_unit_range(self):
        pm = extract_patches(np.full((8, 8, 1), 0.5), 8)
        out = reassemble(pm, pm.data + 5.0)
        assert out.max() <= 1.0
        out = reassemble(pm, pm.data - 5.0)
        assert out.min() >= 0.0


class TestDenoise:
    def test_exact_dictionary_identity(self):
        img = np.random.default_rng(6).random((12, 12, 1))
        dic = exact_patch_dictionary(img)
        out = denoise_image(img, dic, CoderConfig(mode="omp", sparsity=1))
        assert np.abs(out - img).max() <= 1e-8

    def test_zero_image_codes_to_zero(self):
        img = np.zeros((10, 10, 1))
        dic = exact_patch_dictionary(np.random.default_rng(7).random((10, 10, 1)))
        out = denoise_image(img, dic, CoderConfig(mode="omp", sparsity=1))
        assert np.all(out == 0.0)

    def test_dimension_mismatch(self):
        img = np.zeros((10, 10, 3))
        dic = exact_patch_dictionary(np.random.default_rng(8).random((10, 10, 1)))
        with pytest.raises(DimensionMismatchError):
            denoise_image(img, dic, CoderConfig())

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        img = rng.random((12, 12, 1))
        dic = exact_patch_dictionary(rng.random((12, 12, 1)))
        cfg = CoderConfig(mode="omp", sparsity=3)
        a = denoise_image(img, dic, cfg)
        b = denoise_image(img, dic, cfg)
        assert a.tobytes() == b.tobytes()


class TestDenoiseDataset:
    def test_empty(self):
        ds = LabeledDataset(np.zeros((0, 8, 8, 1)), np.zeros(0, dtype=np.int64), 2)
        dic = exact_patch_dictionary(np.random.default_rng(0).random((8, 8, 1)))
        out = denoise_dataset(ds, dic, CoderConfig())
        assert len(out) == 0

    def test_singleton_matches_denoise_image(self):
        ds = synthesize_dataset(5, 3, (10, 10, 1), 3).subset(1)
        dic = exact_patch_dictionary(np.random.default_rng(1).random((10, 10, 1)))
        cfg = CoderConfig(mode="omp", sparsity=2)
        out = denoise_dataset(ds, dic, cfg)
        single = denoise_image(ds.images[0], dic, cfg)
        assert out.images[0].tobytes() == single.tobytes()

    def test_threaded_matches_sequential(self):
        ds = synthesize_dataset(6, 6, (10, 10, 1), 3)
        dic = exact_patch_dictionary(np.random.default_rng(2).random((10, 10, 1)))
        cfg = CoderConfig(mode="omp", sparsity=2)
        seq = denoise_dataset(ds, dic, cfg, threads=1)
        par = denoise_dataset(ds, dic, cfg, threads=4)
        assert seq.images.tobytes() == par.images.tobytes()

    def test_labels_preserved(self):
        ds = synthesize_dataset(7, 5, (9, 9, 1), 5)
        dic = exact_patch_dictionary(np.random.default_rng(3).random((9, 9, 1)))
        out = denoise_dataset(ds, dic, CoderConfig(sparsity=1))
        np.testing.assert_array_equal(out.labels, ds.labels)


class TestCollectPatches:
    def test_full_population(self):
        ds = synthesize_dataset(0, 4, (10, 10, 1), 2)
        cols = collect_training_patches(ds, 8)
        assert cols.shape == (64, 4 * 3 * 3)

    def test_subsample_size_and_determinism(self):
        ds = synthesize_dataset(1, 6, (12, 12, 1), 3)
        a = collect_training_patches(ds, 8, max_patches=50, seed=4)
        b = collect_training_patches(ds, 8, max_patches=50, seed=4)
        assert a.shape[1] == 50
        assert a.tobytes() == b.tobytes()

    def test_subsample_draws_from_population(self):
        ds = synthesize_dataset(2, 3, (10, 10, 1), 3)
        full = collect_training_patches(ds, 8)
        sample = collect_training_patches(ds, 8, max_patches=20, seed=0)
        full_set = {full[:, j].tobytes() for j in range(full.shape[1])}
        for j in range(sample.shape[1]):
            assert sample[:, j].tobytes() in full_set
