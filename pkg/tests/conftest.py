import gzip
import os
import struct
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))  # make oracles importable

from ddl.data import LabeledDataset, synthesize_split


def mnist_data_dir():
    """Directory holding the official MNIST IDX files, or None.

    Checked locations: $DDL_DATA_DIR, then ./data relative to the repo root.
    """
    candidates = []
    if os.environ.get("DDL_DATA_DIR"):
        candidates.append(os.environ["DDL_DATA_DIR"])
    candidates.append(os.path.join(os.path.dirname(os.path.dirname(__file__)), "data"))
    for base in candidates:
        for name in ("t10k-images-idx3-ubyte", "t10k-images-idx3-ubyte.gz"):
            if os.path.exists(os.path.join(base, name)):
                return base
    return None


def make_idx_pair(tmp_path, images: np.ndarray, labels: np.ndarray, gz=False):
    """Write a (uint8 images, labels) pair in IDX format; returns the paths."""
    tmp_path.mkdir(parents=True, exist_ok=True)
    n, rows, cols = images.shape
    img_bytes = struct.pack(">IIII", 0x00000803, n, rows, cols) + images.tobytes()
    lab_bytes = struct.pack(">II", 0x00000801, len(labels)) + labels.tobytes()
    if gz:
        img_bytes = gzip.compress(img_bytes)
        lab_bytes = gzip.compress(lab_bytes)
    img_path = tmp_path / ("imgs.idx3-ubyte" + (".gz" if gz else ""))
    lab_path = tmp_path / ("labs.idx1-ubyte" + (".gz" if gz else ""))
    img_path.write_bytes(img_bytes)
    lab_path.write_bytes(lab_bytes)
    return img_path, lab_path


@pytest.fixture(scope="session")
def two_class_split():
    """Small separable 8x8 fixture: (train, test) with shared class patterns."""
    return synthesize_split(seed=7, train_n=80, test_n=40, shape=(8, 8, 1), classes=2)


@pytest.fixture(scope="session")
def desk_split():
    """Desk-scale synthetic 16x16 ten-class split for pipeline-style tests."""
    return synthesize_split(seed=11, train_n=300, test_n=120, shape=(16, 16, 1), classes=10)


def random_image(rng, shape):
    return rng.random(shape)


def random_dataset(rng, n, shape, classes=10):
    images = rng.random((n,) + tuple(shape))
    labels = rng.integers(0, classes, size=n)
    return LabeledDataset(images, labels.astype(np.int64), classes)
