"""Mask-aware quality metrics for texture maps.

PSNR and SSIM operate on the intersection of two atlases' active masks
using the 8-bit convention (inputs in [0, 1] are scaled by 255, peak is
255). SSIM runs on BT.601 luma with an 11x11 Gaussian window whose
weights renormalize over the active texels inside each window.
Image-domain evaluation reprojects a texture through the forward
operators and scores it against ground-truth photographs per view.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

from .errors import (
    DimensionMismatchError,
    EmptyIntersectionError,
    NoObservationsError,
    ViewMismatchError,
)
from .formation import SparseProjectionOperator, ViewImage, apply_forward
from .retrieval import TextureAtlas

logger = logging.getLogger(__name__)

PEAK = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass
class MetricReport:
    """Scores for one texture/ground-truth pairing."""

    psnr: float
    ssim: float | None
    active_texel_count: int
    per_view_psnr: list | None = None


def _intersection(a: TextureAtlas, b: TextureAtlas) -> np.ndarray:
    if a.rgb.shape != b.rgb.shape:
        raise DimensionMismatchError(
            f"atlas sizes differ: {a.rgb.shape} vs {b.rgb.shape}"
        )
    both = a.mask & b.mask
    if not both.any():
        raise EmptyIntersectionError("masks share no active texel")
    return both


def _psnr_from_mse(mse: float) -> float:
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(PEAK * PEAK / mse))


def masked_psnr(a: TextureAtlas, b: TextureAtlas) -> float:
    """PSNR in dB over the shared active texels, all three channels.

    Identical inputs give the +inf sentinel rather than an error.
    """
    both = _intersection(a, b)
    diff = (a.rgb[both] - b.rgb[both]) * PEAK
    return _psnr_from_mse(float(np.mean(diff * diff)))


def _gaussian_window() -> np.ndarray:
    offsets = np.arange(SSIM_WINDOW) - SSIM_WINDOW // 2
    g = np.exp(-(offsets**2) / (2.0 * SSIM_SIGMA**2))
    w = np.outer(g, g)
    return w / w.sum()


def masked_ssim(a: TextureAtlas, b: TextureAtlas) -> float:
    """Mean SSIM over windows centered on shared active texels.

    Inactive texels inside a window carry zero weight and the Gaussian
    renormalizes over what remains, so chart boundaries do not drag
    scores down. Luma uses BT.601 weights.
    """
    both = _intersection(a, b)
    luma_a = (a.rgb @ LUMA_WEIGHTS) * PEAK
    luma_b = (b.rgb @ LUMA_WEIGHTS) * PEAK
    m = both.astype(np.float64)

    window = _gaussian_window()

    def smooth(img):
        return correlate(img, window, mode="constant", cval=0.0)

    wsum = smooth(m)
    # Every center we keep has at least its own texel active, so wsum > 0
    # wherever it matters; elsewhere the value is discarded.
    norm = np.where(wsum > 0, 1.0, 0.0) / np.where(wsum > 0, wsum, 1.0)
    mu_a = smooth(m * luma_a) * norm
    mu_b = smooth(m * luma_b) * norm
    e_aa = smooth(m * luma_a * luma_a) * norm
    e_bb = smooth(m * luma_b * luma_b) * norm
    e_ab = smooth(m * luma_a * luma_b) * norm
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b

    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    ssim_map = num / den
    return float(ssim_map[both].mean())


def image_domain_eval(
    texture: TextureAtlas,
    gt_images: list[ViewImage],
    ops: list[SparseProjectionOperator],
) -> MetricReport:
    """Reproject the texture into each view and score against photos.

    PSNR is computed per view over pixels both covered by the operator
    and valid in the photograph; views with no such pixels are skipped
    with a warning. The report's psnr is the mean over scored views.
    """
    if len(gt_images) != len(ops):
        raise ViewMismatchError(
            f"{len(ops)} operators vs {len(gt_images)} images"
        )
    if not ops:
        raise ViewMismatchError("need at least one view")

    per_view = []
    scored = []
    total_pixels = 0
    for idx, (op, img) in enumerate(zip(ops, gt_images)):
        rendered = apply_forward(op, texture)
        valid = op.coverage() & img.coverage
        if not valid.any():
            logger.warning("view %d has zero coverage; excluded", idx)
            per_view.append(float("nan"))
            continue
        diff = (rendered.rgb[valid] - img.rgb[valid]) * PEAK
        value = _psnr_from_mse(float(np.mean(diff * diff)))
        per_view.append(value)
        scored.append(value)
        total_pixels += int(valid.sum())

    if not scored:
        raise NoObservationsError("every view has zero coverage")
    return MetricReport(
        psnr=float(np.mean(scored)),
        ssim=None,
        active_texel_count=total_pixels,
        per_view_psnr=per_view,
    )


def write_report_csv(rows, path) -> None:
    """Write metric rows with the standard evaluation columns.

    Each row is a mapping with keys scene, subset, method, scale,
    psnr_db, ssim, active_texels. Infinite PSNR serializes as "inf".
    """
    columns = ["scene", "subset", "method", "scale",
               "psnr_db", "ssim", "active_texels"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in columns})
