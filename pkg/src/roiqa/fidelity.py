"""Deterministic full-reference fidelity oracle and score discretization.

The oracle is a multi-scale structural fidelity composite on [0,1]:
windowed luminance/contrast/structure statistics on luma at up to three
dyadic scales, multiplied by a chroma-difference penalty per scale, and
combined by geometric mean. It is exactly 1.0 for identical inputs and
symmetric in its structural terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    DistortionType,
    ImageBuffer,
    LevelScale,
    RegionMask,
)
from .masks import crop_to_min_rect

WINDOW = 8
STRIDE = 4
N_SCALES = 3
# Stabilizers for unit data range, and the chroma penalty rate.
C1 = 0.01 ** 2
C2 = 0.03 ** 2
CHROMA_RATE = 4.0
# Oracle scores above this threshold count as visually clean.
CLEAN_THRESHOLD = 0.92

_LUMA = np.array([0.299, 0.587, 0.114])
_CB = np.array([-0.168736, -0.331264, 0.5])
_CR = np.array([0.5, -0.418688, -0.081312])


@dataclass(frozen=True)
class FidelityScore:
    value: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.value <= 1.0):
            raise ValueError(f"fidelity {self.value} outside [0,1]")


def _planes(data: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return data @ _LUMA, data @ _CB, data @ _CR


def _halve(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    h2, w2 = h // 2, w // 2
    return plane[: h2 * 2, : w2 * 2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _window_view(plane: np.ndarray) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(plane, (WINDOW, WINDOW))
    return win[::STRIDE, ::STRIDE]


def _scale_score(
    yd: np.ndarray, yr: np.ndarray, cbd: np.ndarray, cbr: np.ndarray,
    crd: np.ndarray, crr: np.ndarray,
) -> float:
    wd = _window_view(yd).reshape(-1, WINDOW * WINDOW)
    wr = _window_view(yr).reshape(-1, WINDOW * WINDOW)
    mu_d = wd.mean(axis=1)
    mu_r = wr.mean(axis=1)
    dd = wd - mu_d[:, None]
    dr = wr - mu_r[:, None]
    var_d = (dd * dd).mean(axis=1)
    var_r = (dr * dr).mean(axis=1)
    cov = (dd * dr).mean(axis=1)
    ssim = ((2.0 * mu_d * mu_r + C1) * (2.0 * cov + C2)) / (
        (mu_d * mu_d + mu_r * mu_r + C1) * (var_d + var_r + C2)
    )
    structural = min(max(float(ssim.mean()), 0.0), 1.0)
    chroma_diff = 0.5 * float(np.mean(np.abs(cbd - cbr) + np.abs(crd - crr)))
    return structural * math.exp(-CHROMA_RATE * chroma_diff)


def fr_score(dist: ImageBuffer, ref: ImageBuffer) -> FidelityScore:
    """Multi-scale structural fidelity of `dist` against `ref`, in [0,1].

    Scales are dyadic (full, 1/2, 1/4); a scale participates only while both
    sides of an 8×8 window still fit. The per-scale score is the mean
    windowed luminance/contrast/structure statistic times the chroma
    penalty exp(-CHROMA_RATE · mean |chroma difference|).
    """
    if (dist.height, dist.width) != (ref.height, ref.width):
        raise ValueError(
            f"dimension mismatch: {(dist.height, dist.width)} vs {(ref.height, ref.width)}"
        )
    if min(dist.height, dist.width) < WINDOW:
        raise ValueError(f"image smaller than one {WINDOW}×{WINDOW} window")
    yd, cbd, crd = _planes(dist.data)
    yr, cbr, crr = _planes(ref.data)
    scores = []
    for _ in range(N_SCALES):
        if min(yd.shape) < WINDOW:
            break
        scores.append(_scale_score(yd, yr, cbd, cbr, crd, crr))
        yd, yr = _halve(yd), _halve(yr)
        cbd, cbr = _halve(cbd), _halve(cbr)
        crd, crr = _halve(crd), _halve(crr)
    value = float(np.prod(scores) ** (1.0 / len(scores)))
    return FidelityScore(min(max(value, 0.0), 1.0))


def roi_quality_score(
    dist_img: ImageBuffer, ref_img: ImageBuffer, mask: RegionMask
) -> FidelityScore:
    """Fidelity of the masked region: fr_score over both min-rect crops.

    Background pixels are zeroed in both patches, so they compare as
    identical and only in-mask structure drives the score.
    """
    dist_roi = crop_to_min_rect(dist_img, mask)
    ref_roi = crop_to_min_rect(ref_img, mask)
    return fr_score(dist_roi.patch, ref_roi.patch)


def roi_importance_score(
    dist_img: ImageBuffer, ref_img: ImageBuffer, mask: RegionMask
) -> float:
    """Impact of the ROI on whole-image fidelity, in [0,1].

    Overwrites the reference's masked pixels with the distorted ones and
    measures 1 - fr_score(replaced, ref): identity replacement scores 0.
    """
    if not mask.matches(ref_img) or not mask.matches(dist_img):
        raise ValueError("mask does not match image dimensions")
    if mask.popcount == 0:
        raise ValueError("empty mask")
    replaced = np.array(ref_img.data)
    replaced[mask.bits] = dist_img.data[mask.bits]
    score = fr_score(ImageBuffer.from_array(replaced), ref_img)
    return min(max(1.0 - score.value, 0.0), 1.0)


def distortion_label(
    quality: FidelityScore,
    applied: DistortionType,
    threshold: float = CLEAN_THRESHOLD,
) -> tuple[bool, Optional[DistortionType]]:
    """Label an ROI with the applied family, unless its quality clears the
    clean threshold (strictly above ⇒ no distortion)."""
    if quality.value > threshold:
        return (False, None)
    return (True, applied)


def discretize(s: float, scale: LevelScale) -> tuple[int, str]:
    """Map a score to its five-level category: index i with M·i/5 < s ≤ M·(i+1)/5.

    s = 0 falls in no half-open bin and is assigned category 0 by convention.
    Returns (index, category name).
    """
    m = scale.max_value
    if not (0.0 <= s <= m):
        raise ValueError(f"score {s} outside [0,{m}]")
    if s == 0.0:
        return 0, scale.categories[0]
    i = int(math.ceil(5.0 * s / m)) - 1
    i = min(max(i, 0), 4)
    # Float rounding in 5·s/m can land one bin off the half-open definition;
    # nudge until the bin predicate holds exactly.
    while i > 0 and s <= m * i / 5.0:
        i -= 1
    while i < 4 and s > m * (i + 1) / 5.0:
        i += 1
    return i, scale.categories[i]
