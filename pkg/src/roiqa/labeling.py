"""Dataset-side ROI collection and oracle labeling.

`attach_proposal_masks` grows masks on each reference image, persists them
as JSON RLE files, and stamps roi_ids into the manifest. `label_manifest`
scores every (distorted image, mask) pair with the fidelity oracle and
emits RoiLabelRecords. Both steps are order-independent and reproducible.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .aggregation import RoiTask
from .core import (
    DISTORTION_TYPES,
    DatasetManifest,
    DistortionEntry,
    ImageBuffer,
    ManifestRecord,
    RegionMask,
    RoiLabelRecord,
)
from .distortions import load_image
from .fidelity import (
    CLEAN_THRESHOLD,
    distortion_label,
    roi_importance_score,
    roi_quality_score,
)
from .masks import decode_mask, filter_small, propose_masks, save_mask_json

# Oracle severity rides the quality score, rescaled onto the 0..4 band.
ORACLE_SEVERITY_FACTOR = 4.0


def _image_seed(seed: int, image_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{image_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def mask_filename(image_id: str, k: int) -> str:
    return f"{image_id[:12]}_m{k}.json"


def roi_identifier(image_id: str, family: str, level: int, k: int) -> str:
    return f"{image_id[:12]}:{family}:{level:02d}:m{k}"


def attach_proposal_masks(
    manifest: DatasetManifest,
    masks_dir: str | Path,
    per_image: int,
    seed: int,
) -> tuple[DatasetManifest, list[RoiTask]]:
    """Propose, filter, and persist masks per reference; fill manifest roi_ids."""
    masks_dir = Path(masks_dir)
    masks_dir.mkdir(parents=True, exist_ok=True)
    ref_by_image: dict[str, str] = {}
    for rec in manifest.records:
        ref_by_image.setdefault(rec.image_id, rec.reference_path)

    kept_by_image: dict[str, list[int]] = {}
    for image_id, ref_path in sorted(ref_by_image.items()):
        img = load_image(ref_path)
        candidates = propose_masks(img, per_image * 4, _image_seed(seed, image_id))
        kept = filter_small(candidates)[:per_image]
        indices = []
        for k, mask in enumerate(kept):
            save_mask_json(mask, masks_dir / mask_filename(image_id, k))
            indices.append(k)
        kept_by_image[image_id] = indices

    new_records = []
    tasks: list[RoiTask] = []
    for rec in manifest.records:
        roi_ids = tuple(
            roi_identifier(rec.image_id, rec.distortion_type.value, rec.parameter_index, k)
            for k in kept_by_image.get(rec.image_id, ())
        )
        new_records.append(replace(rec, roi_ids=roi_ids))
        for k, roi_id in zip(kept_by_image.get(rec.image_id, ()), roi_ids):
            mask_ref = mask_filename(rec.image_id, k)
            with open(masks_dir / mask_ref, "r", encoding="utf-8") as f:
                rle = json.load(f)
            tasks.append(
                RoiTask(
                    roi_id=roi_id,
                    image_path=rec.distorted_path,
                    mask_rle=rle,
                    image_id=rec.image_id,
                    mask_reference=mask_ref,
                )
            )
    return DatasetManifest(records=tuple(new_records), split=manifest.split), tasks


def label_roi(
    dist_img: ImageBuffer,
    ref_img: ImageBuffer,
    mask: RegionMask,
    roi_id: str,
    image_id: str,
    mask_reference: str,
    applied,
    threshold: float = CLEAN_THRESHOLD,
) -> RoiLabelRecord:
    """Oracle labels for one ROI of one distorted image."""
    quality = roi_quality_score(dist_img, ref_img, mask)
    importance = roi_importance_score(dist_img, ref_img, mask)
    present, dtype = distortion_label(quality, applied, threshold)
    entries = []
    for dt in DISTORTION_TYPES:
        if present and dt is dtype:
            severity = min(quality.value * ORACLE_SEVERITY_FACTOR, 4.0)
            entries.append(DistortionEntry(dt, True, severity))
        else:
            entries.append(DistortionEntry(dt, False, None))
    return RoiLabelRecord(
        roi_id=roi_id,
        image_id=image_id,
        mask_reference=mask_reference,
        quality_score=quality.value,
        quality_scale="oracle",
        importance_score=importance,
        importance_scale="oracle",
        distortions=tuple(entries),
        source="synthetic-oracle",
    )


def label_manifest(
    manifest: DatasetManifest,
    masks_dir: str | Path,
    threshold: float = CLEAN_THRESHOLD,
    jobs: int = 1,
) -> tuple[list[RoiLabelRecord], int]:
    """Label every ROI in the manifest; returns (records, skipped_count).

    ROIs whose min-rect patch is too small for the oracle window are skipped
    and counted rather than aborting the run.
    """
    masks_dir = Path(masks_dir)
    ref_cache: dict[str, ImageBuffer] = {}
    mask_cache: dict[str, RegionMask] = {}

    def ref_image(rec: ManifestRecord) -> ImageBuffer:
        if rec.image_id not in ref_cache:
            ref_cache[rec.image_id] = load_image(rec.reference_path)
        return ref_cache[rec.image_id]

    def mask_for(image_id: str, k: int) -> RegionMask:
        name = mask_filename(image_id, k)
        if name not in mask_cache:
            mask_cache[name] = decode_mask(masks_dir / name)
        return mask_cache[name]

    # Warm caches serially so worker threads only read.
    for rec in manifest.records:
        ref_image(rec)
        for roi_id in rec.roi_ids:
            mask_for(rec.image_id, int(roi_id.rsplit(":m", 1)[1]))

    def label_record(rec: ManifestRecord) -> tuple[list[RoiLabelRecord], int]:
        out = []
        skipped = 0
        dist_img = load_image(rec.distorted_path)
        ref = ref_image(rec)
        for roi_id in rec.roi_ids:
            k = int(roi_id.rsplit(":m", 1)[1])
            mask = mask_for(rec.image_id, k)
            try:
                out.append(
                    label_roi(
                        dist_img, ref, mask, roi_id, rec.image_id,
                        mask_filename(rec.image_id, k), rec.distortion_type, threshold,
                    )
                )
            except ValueError:
                skipped += 1
        return out, skipped

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(label_record, manifest.records))
    else:
        results = [label_record(rec) for rec in manifest.records]
    records = [r for chunk, _ in results for r in chunk]
    skipped = sum(s for _, s in results)
    return records, skipped
