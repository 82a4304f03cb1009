"""Overlapping patch extraction, overlap-average reassembly, and denoising.

The denoising pipeline is: extract all stride-1 patches, remove each
patch's mean, sparse-code every patch column against a dictionary,
reconstruct columns as dictionary-times-code, re-add the means, and
average overlapping reconstructions back into an image.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .coding import CoderConfig, batch_encode
from .data import LabeledDataset
from .errors import DimensionMismatchError, PatchTooLargeError, ShapeMismatchError


@dataclass
class PatchMatrix:
    """Column-stacked vectorized patches of one image.

    data holds centered columns (one per patch placement, raster order),
    means the removed per-patch means, offsets the (row, col) source
    positions. Column dimension is patch_size**2 * channels.
    """

    data: np.ndarray  # (M, P)
    means: np.ndarray  # (P,)
    offsets: np.ndarray  # (P, 2) int
    source_shape: tuple[int, int, int]
    patch_size: int


def extract_patches(img: np.ndarray, patch_size: int, center: bool = True) -> PatchMatrix:
    """All overlapping patch_size x patch_size patches of img, stride 1.

    Each patch is vectorized row-major (channel-interleaved) into a column;
    columns are centered unless ``center`` is False.
    """
    h, w, c = img.shape
    p = patch_size
    if p > min(h, w):
        raise PatchTooLargeError(f"patch size {p} exceeds image {h}x{w}")
    windows = sliding_window_view(img, (p, p), axis=(0, 1))  # (h', w', c, p, p)
    hp, wp = windows.shape[:2]
    cols = windows.transpose(0, 1, 3, 4, 2).reshape(hp * wp, p * p * c).T.copy()
    if center:
        means = cols.mean(axis=0)
        cols -= means
    else:
        means = np.zeros(hp * wp)
    rows_idx, cols_idx = np.meshgrid(np.arange(hp), np.arange(wp), indexing="ij")
    offsets = np.stack([rows_idx.ravel(), cols_idx.ravel()], axis=1)
    return PatchMatrix(cols, means, offsets, (h, w, c), p)


def reassemble(pm: PatchMatrix, reconstructed: np.ndarray) -> np.ndarray:
    """Overlap-average reconstructed patch columns back into an image.

    Each output pixel is the mean of (patch value + stored patch mean) over
    all patches covering it; sums accumulate in raster patch order so the
    result is independent of any parallel split. Output clamped to [0, 1].
    """
    if reconstructed.shape != pm.data.shape:
        raise ShapeMismatchError(
            f"reconstruction {reconstructed.shape} vs patch matrix {pm.data.shape}"
        )
    h, w, c = pm.source_shape
    p = pm.patch_size
    acc = np.zeros((h, w, c))
    cnt = np.zeros((h, w, 1))
    for k in range(reconstructed.shape[1]):
        r, s = pm.offsets[k]
        acc[r : r + p, s : s + p, :] += (reconstructed[:, k] + pm.means[k]).reshape(p, p, c)
        cnt[r : r + p, s : s + p, 0] += 1.0
    return np.clip(acc / cnt, 0.0, 1.0)


def denoise_image(
    img: np.ndarray,
    dictionary,
    coder: CoderConfig,
    patch_size: int = 8,
    center: bool = True,
) -> np.ndarray:
    """Sparse-code every patch of img against the dictionary and reassemble."""
    atoms = dictionary.atoms if hasattr(dictionary, "atoms") else np.asarray(dictionary)
    h, w, c = img.shape
    m = patch_size * patch_size * c
    if atoms.shape[0] != m:
        raise DimensionMismatchError(
            f"dictionary atom dimension {atoms.shape[0]} != patch dimension {m}"
        )
    pm = extract_patches(img, patch_size, center=center)
    codes = batch_encode(pm.data, atoms, coder)
    coeffs = np.stack([code.coefficients for code in codes], axis=1)
    return reassemble(pm, atoms @ coeffs)


def denoise_dataset(
    ds: LabeledDataset,
    dictionary,
    coder: CoderConfig,
    patch_size: int = 8,
    center: bool = True,
    threads: int = 1,
) -> LabeledDataset:
    """Denoise every image; labels preserved. Images are independent, so the
    result does not depend on processing order or the thread count."""
    if len(ds) == 0:
        return LabeledDataset(ds.images.copy(), ds.labels.copy(), ds.num_classes)

    def one(img):
        return denoise_image(img, dictionary, coder, patch_size, center)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            denoised = list(pool.map(one, ds.images))
    else:
        denoised = [one(img) for img in ds.images]
    return LabeledDataset(np.stack(denoised), ds.labels.copy(), ds.num_classes)


def collect_training_patches(
    ds: LabeledDataset,
    patch_size: int = 8,
    max_patches: int | None = None,
    seed: int = 0,
    center: bool = True,
) -> np.ndarray:
    """Centered patch columns pooled across a dataset, for dictionary training.

    With ``max_patches`` set, a seeded uniform subsample of the full patch
    population is taken; extraction stays image-by-image so memory scales
    with the sample, not the dataset.
    """
    h, w, c = ds.image_shape
    p = patch_size
    if p > min(h, w):
        raise PatchTooLargeError(f"patch size {p} exceeds image {h}x{w}")
    per_image = (h - p + 1) * (w - p + 1)
    total = per_image * len(ds)
    if max_patches is None or max_patches >= total:
        selected = None
    else:
        rng = np.random.default_rng(seed)
        selected = np.sort(rng.choice(total, size=max_patches, replace=False))

    chunks = []
    for i, img in enumerate(ds.images):
        if selected is not None:
            lo = np.searchsorted(selected, i * per_image)
            hi = np.searchsorted(selected, (i + 1) * per_image)
            if lo == hi:
                continue
            local = selected[lo:hi] - i * per_image
        else:
            local = None
        pm = extract_patches(img, p, center=center)
        chunks.append(pm.data if local is None else pm.data[:, local])
    if not chunks:
        return np.zeros((p * p * c, 0))
    return np.concatenate(chunks, axis=1)
