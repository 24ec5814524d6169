"""Shared fixtures: procedural photograph stand-ins and mask helpers."""

from __future__ import annotations

import numpy as np
import pytest

from roiqa.core import ImageBuffer, RegionMask


def texture_image(size: int = 64, seed: int = 0) -> ImageBuffer:
    """A photograph stand-in: gentle background gradient, flat-top colored
    blobs acting as objects, and spatially correlated fine texture. Locally
    smooth so mask proposal behaves as it would on real photos."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.zeros((size, size, 3))
    img[:, :, 0] = 0.45 + 0.1 * yy
    img[:, :, 1] = 0.5 + 0.08 * xx
    img[:, :, 2] = 0.55 + 0.08 * np.sin(2 * np.pi * (xx + yy) * 0.5)
    for _ in range(6):
        cy, cx = rng.uniform(0.1, 0.9, 2)
        r = rng.uniform(0.12, 0.35)
        d2 = ((yy - cy) ** 2 + (xx - cx) ** 2) / (r * r)
        blob = np.exp(-(d2 ** 2))  # flat-topped: plateau with a soft rim
        img += blob[:, :, None] * rng.uniform(-0.35, 0.35, 3)
    noise = rng.normal(0, 0.04, img.shape)
    k = 5  # correlate the texture so neighboring pixels stay close
    kernel = np.ones(k) / k
    for ax in (0, 1):
        noise = np.apply_along_axis(
            lambda v: np.convolve(v, kernel, mode="same"), ax, noise
        )
    img += noise
    return ImageBuffer.from_array(np.clip(img, 0.0, 1.0))


def rect_mask(h: int, w: int, r0: int, r1: int, c0: int, c1: int) -> RegionMask:
    bits = np.zeros((h, w), dtype=bool)
    bits[r0:r1, c0:c1] = True
    return RegionMask.from_array(bits)


@pytest.fixture
def photo64() -> ImageBuffer:
    return texture_image(64, seed=11)


@pytest.fixture
def photo96() -> ImageBuffer:
    return texture_image(96, seed=7)
