"""Shared domain types, enumerations and dataset record schemas.

Images are H×W×3 float64 arrays in [0,1]; masks are H×W booleans. Both are
wrapped in thin immutable value objects so every downstream module shares
one validation point. Records serialize as JSON-lines, one record per line,
UTF-8, lower_snake_case field names.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

MIN_PIPELINE_SIDE = 32


class DistortionType(str, Enum):
    """The six supported distortion families (closed enumeration)."""

    EXPOSURE = "exposure"
    NOISE = "noise"
    BLUR = "blur"
    CONTRAST = "contrast"
    COLORFULNESS = "colorfulness"
    COMPRESSION = "compression"


DISTORTION_TYPES = tuple(DistortionType)

QUALITY_CATEGORIES = ("Bad", "Poor", "Fair", "Good", "Excellent")
IMPORTANCE_CATEGORIES = ("Unimportant", "Minor", "Normal", "Important", "Essential")
SEVERITY_CATEGORIES = ("Extreme", "Severe", "Moderate", "Minor", "Trivial")


class ScaleKind(str, Enum):
    QUALITY = "quality"
    IMPORTANCE = "importance"
    SEVERITY = "severity"


_CATEGORIES_BY_KIND = {
    ScaleKind.QUALITY: QUALITY_CATEGORIES,
    ScaleKind.IMPORTANCE: IMPORTANCE_CATEGORIES,
    ScaleKind.SEVERITY: SEVERITY_CATEGORIES,
}


@dataclass(frozen=True)
class LevelScale:
    """A five-level categorical scale over a continuous score range [0, max_value]."""

    kind: ScaleKind
    max_value: float
    categories: tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        if self.max_value <= 0:
            raise ValueError(f"max_value must be positive, got {self.max_value}")
        object.__setattr__(self, "categories", _CATEGORIES_BY_KIND[self.kind])


# Human annotators rate on 0..4; the fidelity oracle scores on [0,1].
QUALITY_HUMAN = LevelScale(ScaleKind.QUALITY, 4.0)
IMPORTANCE_HUMAN = LevelScale(ScaleKind.IMPORTANCE, 4.0)
SEVERITY_HUMAN = LevelScale(ScaleKind.SEVERITY, 4.0)
QUALITY_ORACLE = LevelScale(ScaleKind.QUALITY, 1.0)
IMPORTANCE_ORACLE = LevelScale(ScaleKind.IMPORTANCE, 1.0)

# Score scale tags: "oracle" scores live in [0,1], "human" scores in [0,4].
SCORE_SCALES = {"oracle": 1.0, "human": 4.0}


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ImageBuffer:
    """An H×W×3 RGB image with float64 values in [0,1]."""

    data: np.ndarray

    @staticmethod
    def from_array(arr: np.ndarray, *, require_pipeline_size: bool = False) -> "ImageBuffer":
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError(f"expected H×W×3 array, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("zero-sized image")
        if not np.all(np.isfinite(a)):
            raise ValueError("image contains non-finite values")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("image values outside [0,1]")
        if require_pipeline_size and min(a.shape[0], a.shape[1]) < MIN_PIPELINE_SIDE:
            raise ValueError(
                f"pipeline inputs need min side >= {MIN_PIPELINE_SIDE}, got {a.shape[:2]}"
            )
        return ImageBuffer(_as_readonly(a))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self) -> int:
        return hash((self.data.shape, self.data.tobytes()))


@dataclass(frozen=True)
class RegionMask:
    """A binary H×W inclusion mask aligned to its parent image."""

    bits: np.ndarray

    @staticmethod
    def from_array(arr: np.ndarray) -> "RegionMask":
        a = np.asarray(arr)
        if a.ndim != 2:
            raise ValueError(f"expected H×W mask, got shape {a.shape}")
        return RegionMask(_as_readonly(a.astype(bool)))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def popcount(self) -> int:
        return int(self.bits.sum())

    def matches(self, img: ImageBuffer) -> bool:
        return (self.height, self.width) == (img.height, img.width)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RegionMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self) -> int:
        return hash((self.bits.shape, self.bits.tobytes()))


@dataclass(frozen=True)
class DistortionEntry:
    """One distortion-family verdict on an ROI: present or not, severity if present.

    Severity lives on [0,4] (Extreme..Trivial direction: higher is milder) and
    must be given exactly when present is true.
    """

    dtype: DistortionType
    present: bool
    severity: Optional[float] = None

    def __post_init__(self) -> None:
        if self.present and self.severity is None:
            raise ValueError(f"{self.dtype.value}: present distortion needs a severity")
        if not self.present and self.severity is not None:
            raise ValueError(f"{self.dtype.value}: absent distortion cannot carry a severity")
        if self.severity is not None and not (0.0 <= self.severity <= 4.0):
            raise ValueError(f"severity {self.severity} outside [0,4]")

    def to_json_dict(self) -> dict:
        return {
            "dtype": self.dtype.value,
            "present": self.present,
            "severity": self.severity,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "DistortionEntry":
        return DistortionEntry(
            dtype=DistortionType(d["dtype"]),
            present=bool(d["present"]),
            severity=d.get("severity"),
        )


@dataclass(frozen=True)
class RoiLabelRecord:
    """Full label set for one ROI: quality, importance, per-family distortions."""

    roi_id: str
    image_id: str
    mask_reference: str
    quality_score: float
    quality_scale: str  # "oracle" ([0,1]) or "human" ([0,4])
    importance_score: float
    importance_scale: str
    distortions: tuple[DistortionEntry, ...]
    source: str  # "synthetic-oracle" or "human-aggregated"

    def __post_init__(self) -> None:
        for name, score, scale in (
            ("quality", self.quality_score, self.quality_scale),
            ("importance", self.importance_score, self.importance_scale),
        ):
            if scale not in SCORE_SCALES:
                raise ValueError(f"unknown {name} scale tag {scale!r}")
            hi = SCORE_SCALES[scale]
            if not (0.0 <= score <= hi):
                raise ValueError(f"{name} score {score} outside [0,{hi}] for scale {scale!r}")
        if self.source not in ("synthetic-oracle", "human-aggregated"):
            raise ValueError(f"unknown source {self.source!r}")

    def present_types(self) -> set[DistortionType]:
        return {d.dtype for d in self.distortions if d.present}

    def to_json_dict(self) -> dict:
        return {
            "roi_id": self.roi_id,
            "image_id": self.image_id,
            "mask_reference": self.mask_reference,
            "quality_score": self.quality_score,
            "quality_scale": self.quality_scale,
            "importance_score": self.importance_score,
            "importance_scale": self.importance_scale,
            "distortions": [d.to_json_dict() for d in self.distortions],
            "source": self.source,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "RoiLabelRecord":
        return RoiLabelRecord(
            roi_id=d["roi_id"],
            image_id=d["image_id"],
            mask_reference=d["mask_reference"],
            quality_score=float(d["quality_score"]),
            quality_scale=d["quality_scale"],
            importance_score=float(d["importance_score"]),
            importance_scale=d["importance_scale"],
            distortions=tuple(DistortionEntry.from_json_dict(e) for e in d["distortions"]),
            source=d["source"],
        )


@dataclass(frozen=True)
class ManifestRecord:
    """One synthesized image: reference, distorted output, and its ROI ids."""

    image_id: str
    reference_path: str
    distorted_path: str
    distortion_type: DistortionType
    parameter_index: int
    parameter_value: float
    roi_ids: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "reference_path": self.reference_path,
            "distorted_path": self.distorted_path,
            "distortion_type": self.distortion_type.value,
            "parameter_index": self.parameter_index,
            "parameter_value": self.parameter_value,
            "roi_ids": list(self.roi_ids),
        }

    @staticmethod
    def from_json_dict(d: dict) -> "ManifestRecord":
        return ManifestRecord(
            image_id=d["image_id"],
            reference_path=d["reference_path"],
            distorted_path=d["distorted_path"],
            distortion_type=DistortionType(d["distortion_type"]),
            parameter_index=int(d["parameter_index"]),
            parameter_value=float(d["parameter_value"]),
            roi_ids=tuple(d.get("roi_ids", ())),
        )


@dataclass(frozen=True)
class DatasetManifest:
    """An ordered collection of ManifestRecords, optionally tagged with a split."""

    records: tuple[ManifestRecord, ...]
    split: Optional[str] = None  # None, "train" or "test"

    def __post_init__(self) -> None:
        if self.split not in (None, "train", "test"):
            raise ValueError(f"unknown split tag {self.split!r}")

    def image_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.image_id, None)
        return list(seen)

    def save_jsonl(self, path: str | Path) -> None:
        write_jsonl(path, (self._line_dict(r) for r in self.records))

    def _line_dict(self, rec: ManifestRecord) -> dict:
        d = rec.to_json_dict()
        if self.split is not None:
            d["split"] = self.split
        return d

    @staticmethod
    def load_jsonl(path: str | Path) -> "DatasetManifest":
        records = []
        split = None
        for d in read_jsonl(path):
            split = d.pop("split", split)
            records.append(ManifestRecord.from_json_dict(d))
        return DatasetManifest(records=tuple(records), split=split)


def content_hash(path: str | Path) -> str:
    """SHA-256 hex digest of a file's bytes; the pipeline's image identity."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def split_dataset(
    manifest: DatasetManifest, train_fraction: float, seed: int
) -> tuple[DatasetManifest, DatasetManifest]:
    """Partition a manifest into train/test by image_id.

    All records sharing an image_id land in the same split, so reference
    content never appears on both sides. Deterministic for a fixed seed.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ValueError(f"train_fraction must be in (0,1), got {train_fraction}")
    ids = sorted(manifest.image_ids())
    if len(ids) < 2:
        raise ValueError(f"need at least 2 distinct image_ids to split, got {len(ids)}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    n_train = int(round(train_fraction * len(ids)))
    n_train = min(max(n_train, 1), len(ids) - 1)
    train_ids = {ids[i] for i in perm[:n_train]}
    train_recs = tuple(r for r in manifest.records if r.image_id in train_ids)
    test_recs = tuple(r for r in manifest.records if r.image_id not in train_ids)
    return (
        DatasetManifest(records=train_recs, split="train"),
        DatasetManifest(records=test_recs, split="test"),
    )


def write_jsonl(path: str | Path, dicts: Iterable[dict]) -> None:
    """Atomically write dicts as JSON-lines (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        for d in dicts:
            f.write(json.dumps(d, ensure_ascii=False))
            f.write("\n")
    os.replace(tmp, path)


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def save_label_records(path: str | Path, records: Sequence[RoiLabelRecord]) -> None:
    write_jsonl(path, (r.to_json_dict() for r in records))


def load_label_records(path: str | Path) -> list[RoiLabelRecord]:
    return [RoiLabelRecord.from_json_dict(d) for d in read_jsonl(path)]
