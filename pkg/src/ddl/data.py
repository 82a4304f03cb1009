"""Dataset ingestion and bit-exact binary persistence.

Images are dense float64 arrays of shape (height, width, channels) with
values in [0, 1]; datasets stack them as (n, h, w, c) plus integer labels.
Matrices, datasets and model weights persist in little-endian binary
containers built on one shared matrix block format ("DDL1").
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    CountMismatchError,
    LabelOutOfRangeError,
    TruncatedError,
)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
MATRIX_MAGIC = b"DDL1"

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 * 32 * 32 channel-planar pixels


def validate_image(img: np.ndarray) -> None:
    """Raise if ``img`` is not a (h, w, c) array with values in [0, 1]."""
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (h, w, c) image with 1 or 3 channels, got shape {img.shape}")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise ValueError("pixel values outside [0, 1]")


@dataclass(frozen=True)
class LabeledDataset:
    """Uniformly shaped images plus class labels in [0, num_classes)."""

    images: np.ndarray  # (n, h, w, c) float64 in [0, 1]
    labels: np.ndarray  # (n,) integer class indices
    num_classes: int

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError(f"images must be (n, h, w, c), got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise CountMismatchError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values outside [0, 1]")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelOutOfRangeError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    def flat_images(self) -> np.ndarray:
        """Images as (n, h*w*c) rows, the layout classifiers consume."""
        h, w, c = self.images.shape[1:]
        return self.images.reshape(len(self.images), h * w * c)

    def subset(self, n: int) -> "LabeledDataset":
        """First ``n`` items (deterministic, no shuffling)."""
        return LabeledDataset(self.images[:n], self.labels[:n], self.num_classes)


def _read_file(path) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":  # gzip detected by content, not extension
        raw = gzip.decompress(raw)
    return raw


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Load an IDX image/label file pair (optionally gzipped) into a dataset.

    Pixel bytes are scaled by 1/255 into [0, 1]. The image file must start
    with big-endian magic 0x00000803 and the label file with 0x00000801.
    """
    img_raw = _read_file(images_path)
    lab_raw = _read_file(labels_path)

    if len(img_raw) < 16:
        raise TruncatedError(f"{images_path}: header needs 16 bytes, file has {len(img_raw)}")
    magic, count, rows, cols = struct.unpack(">IIII", img_raw[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise BadMagicError(f"{images_path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
    if len(img_raw) < 16 + count * rows * cols:
        raise TruncatedError(
            f"{images_path}: header promises {count * rows * cols} pixel bytes, "
            f"file holds {len(img_raw) - 16}"
        )

    if len(lab_raw) < 8:
        raise TruncatedError(f"{labels_path}: header needs 8 bytes, file has {len(lab_raw)}")
    lab_magic, lab_count = struct.unpack(">II", lab_raw[:8])
    if lab_magic != IDX_LABEL_MAGIC:
        raise BadMagicError(
            f"{labels_path}: magic 0x{lab_magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
        )
    if len(lab_raw) < 8 + lab_count:
        raise TruncatedError(f"{labels_path}: {lab_count} labels promised, file too short")
    if count != lab_count:
        raise CountMismatchError(f"{count} images vs {lab_count} labels")

    pixels = np.frombuffer(img_raw, dtype=np.uint8, count=count * rows * cols, offset=16)
    images = pixels.reshape(count, rows, cols, 1).astype(np.float64) / 255.0
    labels = np.frombuffer(lab_raw, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    return LabeledDataset(images, labels, num_classes=10)


def load_cifar_binary(paths) -> LabeledDataset:
    """Load CIFAR-10 binary batches (3073-byte records) into one dataset.

    Channel-planar source pixels are converted to channel-interleaved
    (h, w, c) storage so downstream patch extraction sees one layout.
    """
    all_images, all_labels = [], []
    for path in paths:
        raw = _read_file(path)
        if len(raw) % CIFAR_RECORD_BYTES != 0:
            raise TruncatedError(
                f"{path}: {len(raw)} bytes is not a multiple of {CIFAR_RECORD_BYTES}"
            )
        n = len(raw) // CIFAR_RECORD_BYTES
        records = np.frombuffer(raw, dtype=np.uint8).reshape(n, CIFAR_RECORD_BYTES)
        labels = records[:, 0].astype(np.int64)
        if labels.size and labels.max() > 9:
            raise LabelOutOfRangeError(f"{path}: label byte {labels.max()} > 9")
        planar = records[:, 1:].reshape(n, 3, 32, 32)
        images = planar.transpose(0, 2, 3, 1).astype(np.float64) / 255.0
        all_images.append(images)
        all_labels.append(labels)
    images = np.concatenate(all_images) if all_images else np.zeros((0, 32, 32, 3))
    labels = np.concatenate(all_labels) if all_labels else np.zeros(0, dtype=np.int64)
    return LabeledDataset(images, labels, num_classes=10)


def synthesize_dataset(seed: int, count: int, shape, classes: int) -> LabeledDataset:
    """Deterministic fixture dataset of linearly separable blob patterns.

    Each class gets a coarse random high/low block pattern; samples are the
    class pattern plus small uniform noise. Labels are assigned round-robin
    (sample i gets class i mod K), so count=K yields one image per class.
    """
    if count < classes:
        raise ValueError(f"count {count} < classes {classes}")
    h, w, c = shape
    rng = np.random.default_rng(seed)
    # Coarse 4x4-pixel blocks keep the patterns blobby rather than pixel noise.
    bh, bw = (h + 3) // 4, (w + 3) // 4
    centers = np.where(rng.random((classes, bh, bw, c)) < 0.5, 0.15, 0.85)
    centers = centers.repeat(4, axis=1).repeat(4, axis=2)[:, :h, :w, :]

    labels = np.arange(count, dtype=np.int64) % classes
    noise = rng.uniform(-0.08, 0.08, size=(count, h, w, c))
    images = np.clip(centers[labels] + noise, 0.0, 1.0)
    return LabeledDataset(images, labels, num_classes=classes)


def synthesize_split(seed: int, train_n: int, test_n: int, shape, classes: int):
    """Train/test pair drawn from one synthesize_dataset call (shared patterns)."""
    full = synthesize_dataset(seed, train_n + test_n, shape, classes)
    train = LabeledDataset(full.images[:train_n], full.labels[:train_n], classes)
    test = LabeledDataset(full.images[train_n:], full.labels[train_n:], classes)
    return train, test


# --- "DDL1" matrix container -------------------------------------------------
# magic "DDL1" | rows u32 LE | cols u32 LE | row-major float64 LE values


def write_matrix_block(f, m: np.ndarray) -> None:
    m = np.ascontiguousarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"matrix block requires 2-D array, got {m.ndim}-D")
    f.write(MATRIX_MAGIC)
    f.write(struct.pack("<II", m.shape[0], m.shape[1]))
    f.write(m.astype("<f8", copy=False).tobytes())


def read_matrix_block(f) -> np.ndarray:
    header = f.read(12)
    if len(header) < 12:
        raise TruncatedError("matrix block header incomplete")
    if header[:4] != MATRIX_MAGIC:
        raise BadMagicError(f"matrix magic {header[:4]!r}, expected {MATRIX_MAGIC!r}")
    rows, cols = struct.unpack("<II", header[4:12])
    payload = f.read(rows * cols * 8)
    if len(payload) < rows * cols * 8:
        raise TruncatedError(f"matrix block promises {rows}x{cols} values, data missing")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)


def save_matrix(m: np.ndarray, path) -> None:
    with open(path, "wb") as f:
        write_matrix_block(f, m)


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_matrix_block(f)


# --- key=value sidecar files --------------------------------------------------


def write_kv_file(path, items: dict) -> None:
    with open(path, "w") as f:
        for k, v in items.items():
            f.write(f"{k}={v}\n")


def read_kv_file(path) -> dict:
    items = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: expected key=value, got {line!r}")
            k, v = line.split("=", 1)
            items[k.strip()] = v.strip()
    return items


def save_dataset(ds: LabeledDataset, prefix) -> None:
    """Persist a dataset as <prefix>.ddl1 (one image per row) + <prefix>.meta."""
    save_matrix(ds.flat_images(), str(prefix) + ".ddl1")
    h, w, c = ds.image_shape
    write_kv_file(
        str(prefix) + ".meta",
        {
            "height": h,
            "width": w,
            "channels": c,
            "num_classes": ds.num_classes,
            "labels": ",".join(str(int(l)) for l in ds.labels),
        },
    )


def load_dataset(prefix) -> LabeledDataset:
    rows = load_matrix(str(prefix) + ".ddl1")
    meta = read_kv_file(str(prefix) + ".meta")
    h, w, c = int(meta["height"]), int(meta["width"]), int(meta["channels"])
    labels_str = meta["labels"]
    labels = (
        np.array([int(t) for t in labels_str.split(",")], dtype=np.int64)
        if labels_str
        else np.zeros(0, dtype=np.int64)
    )
    images = rows.reshape(len(rows), h, w, c)
    return LabeledDataset(images, labels, int(meta["num_classes"]))


# --- standard dataset locations ----------------------------------------------

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _resolve(data_dir, name):
    for candidate in (name, name + ".gz"):
        path = os.path.join(data_dir, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"{name}[.gz] not found under {data_dir}")


def load_mnist(data_dir, split: str) -> LabeledDataset:
    """Load the standard MNIST files (plain or .gz) from ``data_dir``."""
    img_name, lab_name = MNIST_FILES[split]
    return load_idx(_resolve(data_dir, img_name), _resolve(data_dir, lab_name))


def load_cifar10(data_dir, split: str) -> LabeledDataset:
    """Load CIFAR-10 binary batches from ``data_dir`` or its standard subdir."""
    for base in (os.path.join(data_dir, "cifar-10-batches-bin"), data_dir):
        if split == "train":
            names = [f"data_batch_{i}.bin" for i in range(1, 6)]
        else:
            names = ["test_batch.bin"]
        paths = [os.path.join(base, n) for n in names]
        if all(os.path.exists(p) for p in paths):
            return load_cifar_binary(paths)
    raise FileNotFoundError(f"CIFAR-10 binary batches not found under {data_dir}")
