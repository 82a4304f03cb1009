"""Reconstruction quality metrics (PSNR, windowed SSIM) and accuracy rows."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import LabeledDataset
from .errors import (
    ImageSmallerThanWindowError,
    LengthMismatchError,
    ShapeMismatchError,
    ZeroReferenceError,
)

SSIM_WINDOW = 8
SSIM_C1 = (0.01 * 1.0) ** 2  # dynamic range L = 1.0
SSIM_C2 = (0.03 * 1.0) ** 2
PSNR_REPORT_CAP_DB = 100.0


@dataclass
class QualityReport:
    psnr_db: float  # math.inf when mse == 0
    ssim: float
    mse: float


def mse(reference: np.ndarray, test: np.ndarray) -> float:
    if reference.shape != test.shape:
        raise ShapeMismatchError(f"{reference.shape} vs {test.shape}")
    return float(np.mean((reference - test) ** 2))


def psnr(reference: np.ndarray, test: np.ndarray, peak: float | None = None) -> float:
    """10 log10(peak^2 / MSE), peak defaulting to the reference maximum.

    Identical images return +inf (rendered as a 100 dB cap in reports).
    """
    err = mse(reference, test)
    if peak is None:
        peak = float(reference.max()) if reference.size else 0.0
        if peak == 0.0:
            raise ZeroReferenceError("all-zero reference image, peak undefined")
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def render_psnr(value: float) -> float:
    """Report rendering: cap at 100 dB (covers the +inf sentinel)."""
    return min(value, PSNR_REPORT_CAP_DB)


def _to_plane(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3:
        return img.mean(axis=2) if img.shape[2] > 1 else img[:, :, 0]
    return img


def ssim(
    x: np.ndarray,
    y: np.ndarray,
    window: int = SSIM_WINDOW,
    channel_mode: str = "mean",
) -> float:
    """Mean structural similarity over all stride-1 ``window`` x ``window``
    tiles, with population (not sample) variances.

    Color inputs are reduced to the channel-mean plane by default;
    ``channel_mode="per-channel"`` averages per-channel scores instead.
    """
    if x.shape != y.shape:
        raise ShapeMismatchError(f"{x.shape} vs {y.shape}")
    if channel_mode == "per-channel" and x.ndim == 3 and x.shape[2] > 1:
        return float(
            np.mean([ssim(x[:, :, c], y[:, :, c], window) for c in range(x.shape[2])])
        )
    xp, yp = _to_plane(x), _to_plane(y)
    h, w = xp.shape
    if window > min(h, w):
        raise ImageSmallerThanWindowError(f"window {window} exceeds image {h}x{w}")

    wx = sliding_window_view(xp, (window, window))
    wy = sliding_window_view(yp, (window, window))
    mu_x = wx.mean(axis=(2, 3))
    mu_y = wy.mean(axis=(2, 3))
    var_x = (wx * wx).mean(axis=(2, 3)) - mu_x * mu_x
    var_y = (wy * wy).mean(axis=(2, 3)) - mu_y * mu_y
    cov = (wx * wy).mean(axis=(2, 3)) - mu_x * mu_y
    scores = ((2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)) / (
        (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    )
    return float(scores.mean())


def quality(reference: np.ndarray, test: np.ndarray, peak: float | None = None) -> QualityReport:
    return QualityReport(
        psnr_db=psnr(reference, test, peak),
        ssim=ssim(reference, test),
        mse=mse(reference, test),
    )


def mean_quality(reference_ds: LabeledDataset, test_ds: LabeledDataset, peak=None):
    """Dataset-mean (psnr, ssim), per-image PSNR capped at the report limit."""
    if len(reference_ds) != len(test_ds):
        raise LengthMismatchError(f"{len(reference_ds)} vs {len(test_ds)} images")
    psnrs, ssims = [], []
    for ref, img in zip(reference_ds.images, test_ds.images):
        psnrs.append(render_psnr(psnr(ref, img, peak)))
        ssims.append(ssim(ref, img))
    return float(np.mean(psnrs)), float(np.mean(ssims))


def accuracy_table(
    model,
    clean: LabeledDataset,
    perturbed: LabeledDataset | None = None,
    denoised: LabeledDataset | None = None,
    peak: float | None = None,
) -> dict:
    """One result row: accuracies plus mean PSNR/SSIM against the clean set.

    Accuracy fields are exact correct/total fractions; quality fields are
    None when the corresponding dataset is absent.
    """
    from .mlp import evaluate_accuracy

    row = {
        "clean_acc": evaluate_accuracy(model, clean),
        "perturbed_acc": None,
        "denoised_acc": None,
        "mean_psnr_perturbed": None,
        "mean_psnr_denoised": None,
        "mean_ssim_perturbed": None,
        "mean_ssim_denoised": None,
    }
    for name, ds in (("perturbed", perturbed), ("denoised", denoised)):
        if ds is None:
            continue
        if len(ds) > len(clean) or not np.array_equal(ds.labels, clean.labels[: len(ds)]):
            raise LengthMismatchError(f"{name} dataset labels do not match the clean set")
        reference = clean.subset(len(ds))
        row[f"{name}_acc"] = evaluate_accuracy(model, ds)
        mean_psnr, mean_ssim = mean_quality(reference, ds, peak)
        row[f"mean_psnr_{name}"] = mean_psnr
        row[f"mean_ssim_{name}"] = mean_ssim
    return row
