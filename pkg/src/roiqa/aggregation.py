"""Human annotation protocol: rating records, majority-vote aggregation,
and the append-only event log behind the annotation service.

Aggregation rules: a distortion is absent iff strictly more than half of the
raters marked it non-existent (5); severity averages only the sub-5 ratings;
quality and importance are plain means. All means discretize at M=4. An ROI
finalizes at 7 distinct raters.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .core import (
    DISTORTION_TYPES,
    DistortionEntry,
    DistortionType,
    IMPORTANCE_HUMAN,
    QUALITY_HUMAN,
    RoiLabelRecord,
    SEVERITY_HUMAN,
)
from .fidelity import discretize

NON_EXISTENT = 5
FINALIZE_RATERS = 7


@dataclass(frozen=True)
class RatingRecord:
    """One annotator's full rating of one ROI."""

    roi_id: str
    annotator_id: str
    distortions: dict[str, int]  # family -> 0..5 (5 = non-existent)
    quality: int  # 0..4
    importance: int  # 0..4
    timestamp: float

    def validate(self) -> list[str]:
        errors = []
        if not self.roi_id:
            errors.append("roi_id is required")
        if not self.annotator_id:
            errors.append("annotator_id is required")
        for dt in DISTORTION_TYPES:
            if dt.value not in self.distortions:
                errors.append(f"missing rating for {dt.value}")
            else:
                v = self.distortions[dt.value]
                if not isinstance(v, int) or not (0 <= v <= 5):
                    errors.append(f"{dt.value} rating {v!r} outside 0..5")
        extra = set(self.distortions) - {dt.value for dt in DISTORTION_TYPES}
        if extra:
            errors.append(f"unknown distortion keys: {sorted(extra)}")
        if not isinstance(self.quality, int) or not (0 <= self.quality <= 4):
            errors.append(f"quality {self.quality!r} outside 0..4")
        if not isinstance(self.importance, int) or not (0 <= self.importance <= 4):
            errors.append(f"importance {self.importance!r} outside 0..4")
        return errors

    def to_json_dict(self) -> dict:
        return {
            "roi_id": self.roi_id,
            "annotator_id": self.annotator_id,
            "distortions": dict(self.distortions),
            "quality": self.quality,
            "importance": self.importance,
            "timestamp": self.timestamp,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "RatingRecord":
        return RatingRecord(
            roi_id=d["roi_id"],
            annotator_id=d["annotator_id"],
            distortions={k: v for k, v in d["distortions"].items()},
            quality=d["quality"],
            importance=d["importance"],
            timestamp=float(d.get("timestamp", 0.0)),
        )


@dataclass(frozen=True)
class DistortionVerdict:
    dtype: DistortionType
    present: bool
    mean_severity: Optional[float]
    severity_category: Optional[str]


@dataclass(frozen=True)
class AggregatedLabel:
    roi_id: str
    rater_count: int
    distortions: tuple[DistortionVerdict, ...]
    mean_quality: float
    quality_category: str
    mean_importance: float
    importance_category: str
    finalized: bool

    def to_json_dict(self) -> dict:
        return {
            "roi_id": self.roi_id,
            "rater_count": self.rater_count,
            "distortions": [
                {
                    "dtype": v.dtype.value,
                    "present": v.present,
                    "mean_severity": v.mean_severity,
                    "severity_category": v.severity_category,
                }
                for v in self.distortions
            ],
            "mean_quality": self.mean_quality,
            "quality_category": self.quality_category,
            "mean_importance": self.mean_importance,
            "importance_category": self.importance_category,
            "finalized": self.finalized,
        }


def aggregate_roi(ratings: Sequence[RatingRecord]) -> AggregatedLabel:
    """Aggregate one ROI's ratings (already deduplicated per annotator)."""
    if not ratings:
        raise ValueError("no ratings to aggregate")
    roi_id = ratings[0].roi_id
    if any(r.roi_id != roi_id for r in ratings):
        raise ValueError("ratings span multiple ROIs")
    annotators = {r.annotator_id for r in ratings}
    if len(annotators) != len(ratings):
        raise ValueError("duplicate annotator in ratings")
    n = len(ratings)

    verdicts = []
    for dt in DISTORTION_TYPES:
        votes = [r.distortions[dt.value] for r in ratings]
        absent_votes = sum(1 for v in votes if v == NON_EXISTENT)
        if absent_votes * 2 > n:  # strictly more than half say non-existent
            verdicts.append(DistortionVerdict(dt, False, None, None))
        else:
            severities = [v for v in votes if v != NON_EXISTENT]
            mean_sev = sum(severities) / len(severities)
            _, category = discretize(mean_sev, SEVERITY_HUMAN)
            verdicts.append(DistortionVerdict(dt, True, mean_sev, category))

    mean_q = sum(r.quality for r in ratings) / n
    mean_i = sum(r.importance for r in ratings) / n
    return AggregatedLabel(
        roi_id=roi_id,
        rater_count=n,
        distortions=tuple(verdicts),
        mean_quality=mean_q,
        quality_category=discretize(mean_q, QUALITY_HUMAN)[1],
        mean_importance=mean_i,
        importance_category=discretize(mean_i, IMPORTANCE_HUMAN)[1],
        finalized=n >= FINALIZE_RATERS,
    )


def aggregated_to_label(agg: AggregatedLabel, image_id: str = "", mask_reference: str = "") -> RoiLabelRecord:
    """Convert a finalized aggregate to a human-scale RoiLabelRecord."""
    entries = tuple(
        DistortionEntry(v.dtype, v.present, v.mean_severity if v.present else None)
        for v in agg.distortions
    )
    return RoiLabelRecord(
        roi_id=agg.roi_id,
        image_id=image_id,
        mask_reference=mask_reference,
        quality_score=agg.mean_quality,
        quality_scale="human",
        importance_score=agg.mean_importance,
        importance_scale="human",
        distortions=entries,
        source="human-aggregated",
    )


@dataclass(frozen=True)
class RoiTask:
    """One ROI offered to annotators: image file plus inline RLE mask."""

    roi_id: str
    image_path: str
    mask_rle: dict  # {"size": [H, W], "counts": [...]}
    image_id: str = ""
    mask_reference: str = ""

    def to_json_dict(self) -> dict:
        return {
            "roi_id": self.roi_id,
            "image_path": self.image_path,
            "mask_rle": self.mask_rle,
            "image_id": self.image_id,
            "mask_reference": self.mask_reference,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "RoiTask":
        return RoiTask(
            roi_id=d["roi_id"],
            image_path=d["image_path"],
            mask_rle=d["mask_rle"],
            image_id=d.get("image_id", ""),
            mask_reference=d.get("mask_reference", ""),
        )


class AnnotationStore:
    """Event-sourced rating store: one serialized writer, replayable log.

    State is exactly the fold of the event log: per (roi, annotator) the
    last rating wins. Reads hold the same lock briefly to copy state, so
    concurrent submissions from many annotators stay safe.
    """

    def __init__(self, tasks: Sequence[RoiTask], log_path: Optional[str | Path] = None):
        self.tasks = {t.roi_id: t for t in tasks}
        self.log_path = Path(log_path) if log_path else None
        self._lock = threading.Lock()
        self._ratings: dict[str, dict[str, RatingRecord]] = {t.roi_id: {} for t in tasks}
        if self.log_path and self.log_path.exists():
            with open(self.log_path, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if line:
                        self._apply(RatingRecord.from_json_dict(json.loads(line)))

    def _apply(self, rec: RatingRecord) -> None:
        self._ratings.setdefault(rec.roi_id, {})[rec.annotator_id] = rec

    def submit(self, rec: RatingRecord) -> dict:
        """Validate and append a rating; replaces the annotator's prior one.

        Raises KeyError for unknown ROIs, ValueError for range errors, and
        PermissionError when resubmitting to a finalized ROI.
        """
        errors = rec.validate()
        if errors:
            raise ValueError("; ".join(errors))
        with self._lock:
            if rec.roi_id not in self.tasks:
                raise KeyError(f"unknown roi_id {rec.roi_id!r}")
            existing = self._ratings.get(rec.roi_id, {})
            if rec.annotator_id in existing and len(existing) >= FINALIZE_RATERS:
                raise PermissionError(f"ROI {rec.roi_id} is finalized; rating is immutable")
            if self.log_path:
                with open(self.log_path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(rec.to_json_dict(), ensure_ascii=False))
                    f.write("\n")
            self._apply(rec)
            return {"roi_id": rec.roi_id, "rater_count": len(self._ratings[rec.roi_id])}

    def ratings_for(self, roi_id: str) -> list[RatingRecord]:
        with self._lock:
            return sorted(self._ratings.get(roi_id, {}).values(), key=lambda r: r.annotator_id)

    def next_task(self, annotator_id: str) -> Optional[RoiTask]:
        """The unrated ROI closest to finalization (most ratings below 7)."""
        if not annotator_id:
            raise ValueError("annotator_id is required")
        with self._lock:
            candidates = []
            for roi_id in self.tasks:
                ratings = self._ratings.get(roi_id, {})
                if annotator_id in ratings or len(ratings) >= FINALIZE_RATERS:
                    continue
                candidates.append((FINALIZE_RATERS - len(ratings), roi_id))
            if not candidates:
                return None
            _, roi_id = min(candidates)
            return self.tasks[roi_id]

    def aggregate(self, roi_id: str) -> AggregatedLabel:
        ratings = self.ratings_for(roi_id)
        if not ratings:
            raise ValueError(f"no ratings for {roi_id!r}")
        return aggregate_roi(ratings)

    def progress(self) -> dict:
        with self._lock:
            per_roi = {
                roi_id: len(self._ratings.get(roi_id, {})) for roi_id in self.tasks
            }
        finalized = sum(1 for c in per_roi.values() if c >= FINALIZE_RATERS)
        return {
            "total_rois": len(self.tasks),
            "finalized": finalized,
            "target_raters": FINALIZE_RATERS,
            "per_roi": per_roi,
        }

    def export_labels(self) -> list[RoiLabelRecord]:
        """Finalized aggregates as human-scale label records."""
        out = []
        for roi_id in sorted(self.tasks):
            ratings = self.ratings_for(roi_id)
            if len(ratings) < FINALIZE_RATERS:
                continue
            agg = aggregate_roi(ratings)
            task = self.tasks[roi_id]
            out.append(aggregated_to_label(agg, task.image_id, task.mask_reference))
        return out


def save_tasks(path: str | Path, tasks: Sequence[RoiTask]) -> None:
    from .core import write_jsonl

    write_jsonl(path, (t.to_json_dict() for t in tasks))


def load_tasks(path: str | Path) -> list[RoiTask]:
    from .core import read_jsonl

    return [RoiTask.from_json_dict(d) for d in read_jsonl(path)]
