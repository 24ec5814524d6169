"""ROI mask machinery: RLE wire form, synthetic proposals, filtering,
minimum-rectangle cropping and coverage-weighted mask pooling.

Masks may always be supplied externally (1-channel PNG or JSON RLE); the
built-in proposal generator is a deliberately simple seeded region grower.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .core import ImageBuffer, RegionMask

# RGB Euclidean color-distance threshold for region growing.
GROW_TAU = 0.08
# A region stops growing once it reaches this fraction of the image area.
GROW_AREA_CAP = 0.25
# Masks smaller than 32×32 pixels worth of area are discarded.
MIN_MASK_AREA = 32 * 32


@dataclass(frozen=True)
class RleMask:
    """Run-length encoded mask: row-major runs, first run counts zeros."""

    size: tuple[int, int]  # (H, W)
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        h, w = self.size
        if h < 1 or w < 1:
            raise ValueError(f"bad RLE size {self.size}")
        if any(c < 0 for c in self.counts):
            raise ValueError("negative run length")
        if sum(self.counts) != h * w:
            raise ValueError(f"runs sum to {sum(self.counts)}, expected {h * w}")

    def to_json_dict(self) -> dict:
        return {"size": [self.size[0], self.size[1]], "counts": list(self.counts)}

    @staticmethod
    def from_json_dict(d: dict) -> "RleMask":
        size = d["size"]
        return RleMask(size=(int(size[0]), int(size[1])), counts=tuple(int(c) for c in d["counts"]))


def encode_mask(mask: RegionMask) -> RleMask:
    """Encode a binary mask as alternating run lengths (zeros first)."""
    flat = mask.bits.ravel()
    n = flat.size
    if n == 0:
        raise ValueError("empty mask array")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [n]))
    runs = (ends - starts).tolist()
    if flat[0]:  # first run must count zeros
        runs = [0] + runs
    return RleMask(size=(mask.height, mask.width), counts=tuple(runs))


def decode_rle(rle: RleMask) -> RegionMask:
    """Decode an RleMask back to bits; inverse of encode_mask."""
    h, w = rle.size
    values = np.zeros(len(rle.counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(rle.counts, dtype=np.int64))
    return RegionMask.from_array(flat.reshape(h, w))


def decode_mask(source: dict | bytes | str | Path) -> RegionMask:
    """Decode a mask from a JSON RLE dict or a 1-channel PNG (nonzero ⇒ inside).

    `source` may be an RLE dict, PNG bytes, or a path to either a `.json`
    RLE file or a PNG file.
    """
    if isinstance(source, dict):
        return decode_rle(RleMask.from_json_dict(source))
    if isinstance(source, (str, Path)):
        p = Path(source)
        if p.suffix.lower() == ".json":
            with open(p, "r", encoding="utf-8") as f:
                return decode_rle(RleMask.from_json_dict(json.load(f)))
        with Image.open(p) as im:
            return _mask_from_pil(im)
    if isinstance(source, bytes):
        import io

        with Image.open(io.BytesIO(source)) as im:
            return _mask_from_pil(im)
    raise TypeError(f"cannot decode mask from {type(source)!r}")


def _mask_from_pil(im: Image.Image) -> RegionMask:
    if im.mode not in ("1", "L", "I", "I;16"):
        im = im.convert("L")
    arr = np.asarray(im)
    if arr.ndim != 2:
        raise ValueError(f"expected 1-channel mask image, got shape {arr.shape}")
    return RegionMask.from_array(arr != 0)


def save_mask_json(mask: RegionMask, path: str | Path) -> None:
    import os

    p = Path(path)
    tmp = p.with_name(p.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(encode_mask(mask).to_json_dict(), f)
        f.write("\n")
    os.replace(tmp, p)


def propose_masks(img: ImageBuffer, n: int, seed: int) -> list[RegionMask]:
    """Propose up to `n` connected region masks by seeded region growing.

    A uniformly sampled start pixel grows a 4-connected region: a frontier
    pixel joins while its RGB Euclidean distance to the running region mean
    stays within GROW_TAU, until the region reaches GROW_AREA_CAP of the
    image area. Deterministic per seed; exact duplicates are dropped.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    h, w = img.height, img.width
    cap = max(1, int(GROW_AREA_CAP * h * w))
    rng = np.random.default_rng(seed)
    data = img.data
    out: list[RegionMask] = []
    seen: set[bytes] = set()
    for _ in range(n):
        r0 = int(rng.integers(0, h))
        c0 = int(rng.integers(0, w))
        grown = _grow_region(data, r0, c0, cap)
        key = grown.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(RegionMask.from_array(grown))
    return out


def _grow_region(data: np.ndarray, r0: int, c0: int, cap: int) -> np.ndarray:
    h, w = data.shape[:2]
    inside = np.zeros((h, w), dtype=bool)
    queued = np.zeros((h, w), dtype=bool)
    queue: deque[tuple[int, int]] = deque()
    queue.append((r0, c0))
    queued[r0, c0] = True
    mean = np.zeros(3)
    count = 0
    while queue and count < cap:
        r, c = queue.popleft()
        px = data[r, c]
        if count > 0:
            if np.sqrt(np.sum((px - mean) ** 2)) > GROW_TAU:
                continue
        mean = (mean * count + px) / (count + 1)
        count += 1
        inside[r, c] = True
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and not queued[rr, cc]:
                queued[rr, cc] = True
                queue.append((rr, cc))
    return inside


def filter_small(masks: Sequence[RegionMask]) -> list[RegionMask]:
    """Keep masks whose area is at least 32×32 = 1024 pixels."""
    return [m for m in masks if m.popcount >= MIN_MASK_AREA]


@dataclass(frozen=True)
class CroppedRoi:
    """Minimum bounding-rectangle crop of a masked region, background zeroed."""

    patch: ImageBuffer
    mask: RegionMask  # aligned to the patch
    top: int
    left: int


def crop_to_min_rect(img: ImageBuffer, mask: RegionMask) -> CroppedRoi:
    """Crop img to the mask's tight bounding box, zeroing out-of-mask pixels."""
    if not mask.matches(img):
        raise ValueError(
            f"mask {mask.bits.shape} does not match image {(img.height, img.width)}"
        )
    if mask.popcount == 0:
        raise ValueError("empty mask")
    rows = np.flatnonzero(mask.bits.any(axis=1))
    cols = np.flatnonzero(mask.bits.any(axis=0))
    r0, r1 = int(rows[0]), int(rows[-1]) + 1
    c0, c1 = int(cols[0]), int(cols[-1]) + 1
    inner = mask.bits[r0:r1, c0:c1]
    patch = img.data[r0:r1, c0:c1] * inner[:, :, None]
    return CroppedRoi(
        patch=ImageBuffer.from_array(patch),
        mask=RegionMask.from_array(inner),
        top=r0,
        left=c0,
    )


def embed_patch(roi: CroppedRoi, height: int, width: int) -> ImageBuffer:
    """Re-embed a cropped ROI at its recorded offset on a zero canvas."""
    canvas = np.zeros((height, width, 3))
    ph, pw = roi.patch.height, roi.patch.width
    canvas[roi.top : roi.top + ph, roi.left : roi.left + pw] = roi.patch.data
    return ImageBuffer.from_array(canvas)


def coverage_fractions(mask: RegionMask, h: int, w: int) -> np.ndarray:
    """Downsample a binary mask to h×w cells as per-cell coverage fractions.

    Pixel (r, c) belongs to cell (floor(r·h/H), floor(c·w/W)); the fraction
    is the mean of the mask over each cell's pixel footprint.
    """
    H, W = mask.height, mask.width
    if h < 1 or w < 1 or h > H or w > W:
        raise ValueError(f"bad cell grid {h}×{w} for mask {H}×{W}")
    row_cell = (np.arange(H, dtype=np.int64) * h) // H
    col_cell = (np.arange(W, dtype=np.int64) * w) // W
    ones = np.ones((H, W))
    cell_of = row_cell[:, None] * w + col_cell[None, :]
    area = np.bincount(cell_of.ravel(), weights=ones.ravel(), minlength=h * w)
    hits = np.bincount(cell_of.ravel(), weights=mask.bits.astype(np.float64).ravel(), minlength=h * w)
    return (hits / area).reshape(h, w)


def mask_pool(featmap: np.ndarray, mask: RegionMask) -> np.ndarray:
    """Coverage-weighted mean of a C×h×w feature map over a full-res mask.

    Returns a length-C vector: sum_cells cov·feat / sum_cells cov per channel.
    A full mask reduces to the exact unweighted global mean.
    """
    f = np.asarray(featmap, dtype=np.float64)
    if f.ndim != 3:
        raise ValueError(f"expected C×h×w feature map, got shape {f.shape}")
    if mask.popcount == 0:
        raise ValueError("empty mask")
    _, h, w = f.shape
    cov = coverage_fractions(mask, h, w)
    total = cov.sum()
    if total <= 0.0:
        raise RuntimeError("all coverage fractions are zero for a nonempty mask")
    return np.tensordot(f, cov, axes=([1, 2], [0, 1])) / total
