"""Deterministic synthesis of distorted images across six families.

Each family carries a fixed 20-level parameter grid ordered mildest-first.
Noise is driven by a counter-based generator keyed on content identifiers,
so synthesis order and thread count never change a single output pixel.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.fft

from .core import (
    DatasetManifest,
    DistortionType,
    ImageBuffer,
    ManifestRecord,
    content_hash,
)

GRID_LEVELS = 20


def _interleaved(mild_lo: float, far_lo: float, mild_hi: float, far_hi: float) -> tuple[float, ...]:
    # Two-sided family: walk both sides mildest-first, alternating below/above.
    below = np.linspace(mild_lo, far_lo, GRID_LEVELS // 2)
    above = np.linspace(mild_hi, far_hi, GRID_LEVELS // 2)
    grid = np.empty(GRID_LEVELS)
    grid[0::2] = below
    grid[1::2] = above
    return tuple(float(v) for v in grid)


_EXPOSURE_MAGS = np.linspace(0.25, 3.0, GRID_LEVELS)
_PARAM_GRIDS: dict[DistortionType, tuple[float, ...]] = {
    # EV shift, alternating sign, magnitude growing 0.25 → 3.0.
    DistortionType.EXPOSURE: tuple(
        float(m) if i % 2 == 0 else float(-m) for i, m in enumerate(_EXPOSURE_MAGS)
    ),
    # Gaussian sigma, strictly increasing.
    DistortionType.NOISE: tuple(float(v) for v in np.linspace(0.01, 0.35, GRID_LEVELS)),
    # Gaussian blur sigma, strictly increasing.
    DistortionType.BLUR: tuple(float(v) for v in np.linspace(0.5, 8.0, GRID_LEVELS)),
    # Contrast gain, both sides of 1, mildest first.
    DistortionType.CONTRAST: _interleaved(0.9, 0.15, 1.2, 2.5),
    # Chroma gain, both sides of 1, mildest first (0.0 = full desaturation).
    DistortionType.COLORFULNESS: _interleaved(0.9, 0.0, 1.3, 2.2),
    # DCT quality factor, strictly decreasing (lower = harsher quantization).
    DistortionType.COMPRESSION: tuple(
        float(int(round(v))) for v in np.linspace(60, 2, GRID_LEVELS)
    ),
}


def param_grid(dtype: DistortionType) -> tuple[float, ...]:
    """The fixed 20-value parameter grid for a family, level 0 mildest."""
    return _PARAM_GRIDS[dtype]


@dataclass(frozen=True)
class DistortionSpec:
    """One point on a family's parameter grid plus the synthesis seed."""

    dtype: DistortionType
    level_index: int
    parameter: float
    seed: int
    image_id: str = ""  # enters the noise generator key

    def __post_init__(self) -> None:
        if not (0 <= self.level_index < GRID_LEVELS):
            raise ValueError(f"level_index {self.level_index} outside 0..{GRID_LEVELS - 1}")
        expected = param_grid(self.dtype)[self.level_index]
        if self.parameter != expected:
            raise ValueError(
                f"parameter {self.parameter} is not grid value {expected} "
                f"for {self.dtype.value} level {self.level_index}"
            )

    @staticmethod
    def for_level(dtype: DistortionType, level_index: int, seed: int, image_id: str = "") -> "DistortionSpec":
        if not (0 <= level_index < GRID_LEVELS):
            raise ValueError(f"level_index {level_index} outside 0..{GRID_LEVELS - 1}")
        return DistortionSpec(
            dtype=dtype,
            level_index=level_index,
            parameter=param_grid(dtype)[level_index],
            seed=seed,
            image_id=image_id,
        )


def _noise_rng(spec: DistortionSpec) -> np.random.Generator:
    # Counter-based Philox keyed by (seed, image_id, dtype, level); independent
    # of draw order, so parallel synthesis stays bit-reproducible.
    material = f"{spec.seed}:{spec.image_id}:{spec.dtype.value}:{spec.level_index}"
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _clamp01(a: np.ndarray) -> np.ndarray:
    return np.clip(a, 0.0, 1.0)


def _apply_exposure(data: np.ndarray, ev: float) -> np.ndarray:
    return _clamp01(data * (2.0 ** ev))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian with radius ceil(3·sigma)."""
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _apply_blur(data: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel(sigma)
    radius = (len(k) - 1) // 2
    h, w = data.shape[:2]
    if radius >= h or radius >= w:
        raise ValueError(f"blur radius {radius} too large for {h}×{w} image")
    padded = np.pad(data, ((radius, radius), (radius, radius), (0, 0)), mode="reflect")
    # Separable convolution: rows then columns (symmetric kernel, so
    # correlation == convolution).
    tmp = np.zeros((h, padded.shape[1], 3))
    for i, kv in enumerate(k):
        tmp += kv * padded[i : i + h, :, :]
    out = np.zeros((h, w, 3))
    for j, kv in enumerate(k):
        out += kv * tmp[:, j : j + w, :]
    return _clamp01(out)


def _apply_contrast(data: np.ndarray, gain: float) -> np.ndarray:
    # (x-0.5)·c + 0.5 rewritten so gain 1 is the bitwise identity.
    return _clamp01(data + (data - 0.5) * (gain - 1.0))


# Full-range BT.601 RGB <-> YCbCr.
_RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCC_TO_RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136, -0.714136],
        [1.0, 1.772, 0.0],
    ]
)


def _apply_colorfulness(data: np.ndarray, gain: float) -> np.ndarray:
    ycc = data @ _RGB_TO_YCC.T
    ycc[:, :, 1] *= gain
    ycc[:, :, 2] *= gain
    return _clamp01(ycc @ _YCC_TO_RGB.T)


# JPEG Annex K luminance quantization table.
JPEG_LUMA_QTABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


def scaled_qtable(quality: float) -> np.ndarray:
    """JPEG quality scaling of the luminance table, entries clipped to [1,255]."""
    if quality < 50:
        s = 5000.0 / quality
    else:
        s = 200.0 - 2.0 * quality
    return np.clip(np.floor((s * JPEG_LUMA_QTABLE + 50.0) / 100.0), 1.0, 255.0)


def _apply_compression(data: np.ndarray, quality: float) -> np.ndarray:
    q = scaled_qtable(quality)
    h, w = data.shape[:2]
    ph = (-h) % 8
    pw = (-w) % 8
    padded = np.pad(data, ((0, ph), (0, pw), (0, 0)), mode="edge")
    out = np.empty_like(padded)
    for ch in range(3):
        plane = padded[:, :, ch] * 255.0 - 128.0
        hb, wb = plane.shape[0] // 8, plane.shape[1] // 8
        blocks = plane.reshape(hb, 8, wb, 8)
        coefs = scipy.fft.dct(scipy.fft.dct(blocks, axis=1, norm="ortho"), axis=3, norm="ortho")
        coefs = np.rint(coefs / q[None, :, None, :]) * q[None, :, None, :]
        rec = scipy.fft.idct(scipy.fft.idct(coefs, axis=1, norm="ortho"), axis=3, norm="ortho")
        out[:, :, ch] = (rec.reshape(plane.shape) + 128.0) / 255.0
    return _clamp01(out[:h, :w, :])


def apply_transfer(
    img: ImageBuffer,
    dtype: DistortionType,
    parameter: float,
    noise_rng: Optional[np.random.Generator] = None,
) -> ImageBuffer:
    """Apply one family's transfer function at an arbitrary parameter.

    Grid validation lives in DistortionSpec/apply_distortion; this is the
    raw map (useful for identity-parameter checks like ev=0 or gain=1).
    """
    data = img.data
    if data.size == 0:
        raise ValueError("zero-sized image")
    if dtype is DistortionType.EXPOSURE:
        out = _apply_exposure(data, parameter)
    elif dtype is DistortionType.NOISE:
        if noise_rng is None:
            raise ValueError("noise requires a generator")
        out = _clamp01(data + noise_rng.normal(0.0, parameter, size=data.shape))
    elif dtype is DistortionType.BLUR:
        out = _apply_blur(data, parameter)
    elif dtype is DistortionType.CONTRAST:
        out = _apply_contrast(data, parameter)
    elif dtype is DistortionType.COLORFULNESS:
        out = _apply_colorfulness(data, parameter)
    elif dtype is DistortionType.COMPRESSION:
        out = _apply_compression(data, parameter)
    else:  # pragma: no cover - closed enumeration
        raise ValueError(f"unknown distortion type {dtype}")
    return ImageBuffer.from_array(out)


def apply_distortion(img: ImageBuffer, spec: DistortionSpec) -> ImageBuffer:
    """Apply one grid distortion; output keeps dimensions, values clamped to [0,1]."""
    if spec.dtype is DistortionType.NOISE:
        return apply_transfer(img, spec.dtype, spec.parameter, noise_rng=_noise_rng(spec))
    return apply_transfer(img, spec.dtype, spec.parameter)


IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def load_image(path: str | Path, *, require_pipeline_size: bool = True) -> ImageBuffer:
    """Load an RGB image file as an ImageBuffer in [0,1]."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return ImageBuffer.from_array(arr, require_pipeline_size=require_pipeline_size)


def save_png(img: ImageBuffer, path: str | Path) -> None:
    """Write an 8-bit lossless PNG, rounding to the nearest code value."""
    from PIL import Image

    arr = np.round(img.data * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(str(path), format="PNG")


def list_reference_images(ref_dir: str | Path) -> list[Path]:
    d = Path(ref_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"reference directory {d} does not exist")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)


def synth_dataset(
    ref_dir: str | Path,
    out_dir: str | Path,
    families: Sequence[DistortionType],
    levels: Sequence[int],
    seed: int,
    jobs: int = 1,
) -> DatasetManifest:
    """Synthesize one distorted PNG per (reference, family, level) and a manifest.

    The manifest is assembled in canonical (image_id, family, level) order and
    every output is independent of processing order, so reruns and different
    --jobs settings produce byte-identical artifacts.
    """
    refs = list_reference_images(ref_dir)
    if not refs:
        raise ValueError(f"no decodable reference images in {ref_dir}")
    if not families:
        raise ValueError("no distortion families selected")
    levels = sorted(set(int(l) for l in levels))
    for l in levels:
        if not (0 <= l < GRID_LEVELS):
            raise ValueError(f"level {l} outside 0..{GRID_LEVELS - 1}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    loaded: list[tuple[str, Path, ImageBuffer]] = []
    for p in refs:
        img = load_image(p)
        loaded.append((content_hash(p), p, img))
    loaded.sort(key=lambda t: t[0])

    tasks = [
        (image_id, ref_path, img, fam, lvl)
        for image_id, ref_path, img in loaded
        for fam in families
        for lvl in levels
    ]

    def run_one(task) -> ManifestRecord:
        image_id, ref_path, img, fam, lvl = task
        spec = DistortionSpec.for_level(fam, lvl, seed, image_id)
        dist = apply_distortion(img, spec)
        name = f"{image_id[:12]}_{fam.value}_{lvl:02d}.png"
        save_png(dist, out / name)
        return ManifestRecord(
            image_id=image_id,
            reference_path=str(ref_path),
            distorted_path=str(out / name),
            distortion_type=fam,
            parameter_index=lvl,
            parameter_value=spec.parameter,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(run_one, tasks))
    else:
        records = [run_one(t) for t in tasks]

    records.sort(key=lambda r: (r.image_id, r.distortion_type.value, r.parameter_index))
    return DatasetManifest(records=tuple(records))
