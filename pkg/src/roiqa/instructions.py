"""Analysis and judgment instruction-response generation from labeled ROIs.

AIR pairs ask the model to analyze quality / importance / distortions and
answer with the discretized category; JIR pairs pose a yes/no condition
sampled to be true half the time. Every text response travels with a
structured target so downstream training never parses text.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    DISTORTION_TYPES,
    IMPORTANCE_CATEGORIES,
    IMPORTANCE_HUMAN,
    IMPORTANCE_ORACLE,
    QUALITY_CATEGORIES,
    QUALITY_HUMAN,
    QUALITY_ORACLE,
    RoiLabelRecord,
    SEVERITY_CATEGORIES,
    SEVERITY_HUMAN,
)
from .fidelity import discretize

SEQUENCE_PREFIX = "<image>\n. This is the overview of the image. Here is the region <global> <local>. "

AIR_QUALITY_TEMPLATES = (
    "Analyze the quality of this region",
    "Assess the quality of this region",
    "Evaluate the quality of this region",
)
AIR_IMPORTANCE_TEMPLATES = (
    "Consider the impact of this region on the overall image quality. Analyze it's importance",
    "Consider the impact of this region on the overall image quality. Assess it's importance",
    "Consider how this region affects the overall image quality. Analyze it's importance",
)
AIR_DISTORTION_TEMPLATES = (
    "Analyze the distortions of this region",
    "Assess the distortions of this region",
    "Describe the distortions of this region",
)
JIR_QUALITY_TEMPLATES = (
    "Is the quality of this region {}",
    "Would you say the quality of this region is {}",
    "Do you consider the quality of this region {}",
)
JIR_IMPORTANCE_TEMPLATES = (
    "Is this region {} to the overall quality",
    "Would you say this region is {} to the overall quality",
    "Do you consider this region {} to the overall quality",
)
JIR_DISTORTION_TEMPLATES = (
    "Is this region in {} distortion",
    "Would you say this region is in {} distortion",
    "Do you consider this region in {} distortion",
)

NO_DISTORTION_TEXT = "Without distortions"


@dataclass(frozen=True)
class InstructionRecord:
    roi_id: str
    kind: str  # AIR-quality | AIR-importance | AIR-distortion | JIR-*
    instruction: str
    response: str
    target: dict

    def to_json_dict(self) -> dict:
        return {
            "roi_id": self.roi_id,
            "kind": self.kind,
            "instruction": self.instruction,
            "response": self.response,
            "target": self.target,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "InstructionRecord":
        return InstructionRecord(
            roi_id=d["roi_id"],
            kind=d["kind"],
            instruction=d["instruction"],
            response=d["response"],
            target=d["target"],
        )


def _record_rng(seed: int, roi_id: str, salt: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{roi_id}:{salt}".encode()).digest()
    return np.random.Generator(np.random.Philox(key=np.frombuffer(digest[:16], dtype=np.uint64)))


def _pick(templates: tuple[str, ...], mode: str, rng: Optional[np.random.Generator]) -> str:
    if mode == "fixed" or rng is None:
        return templates[0]
    return templates[int(rng.integers(0, len(templates)))]


def _levels(record: RoiLabelRecord) -> tuple[int, int]:
    q_scale = QUALITY_ORACLE if record.quality_scale == "oracle" else QUALITY_HUMAN
    i_scale = IMPORTANCE_ORACLE if record.importance_scale == "oracle" else IMPORTANCE_HUMAN
    return discretize(record.quality_score, q_scale)[0], discretize(record.importance_score, i_scale)[0]


def _severity_category(severity: float) -> str:
    return discretize(severity, SEVERITY_HUMAN)[1]


def gen_air(record: RoiLabelRecord, mode: str = "fixed", seed: int = 0) -> list[InstructionRecord]:
    """The three analysis pairs for one labeled ROI."""
    if mode not in ("fixed", "random"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = _record_rng(seed, record.roi_id, "air") if mode == "random" else None
    q_level, i_level = _levels(record)

    present = [(d.dtype, d.severity) for d in record.distortions if d.present]
    if present:
        parts = [
            f"With {dt.value} distortion in {_severity_category(sev)} degree"
            for dt, sev in sorted(present, key=lambda x: DISTORTION_TYPES.index(x[0]))
        ]
        distortion_response = "; ".join(parts)
        distortion_target = {
            "present": [dt.value for dt, _ in present],
            "severity_levels": {dt.value: discretize(sev, SEVERITY_HUMAN)[0] for dt, sev in present},
        }
    else:
        distortion_response = NO_DISTORTION_TEXT
        distortion_target = {"present": [], "severity_levels": {}}

    return [
        InstructionRecord(
            roi_id=record.roi_id,
            kind="AIR-quality",
            instruction=_pick(AIR_QUALITY_TEMPLATES, mode, rng),
            response=f"The quality of this region is {QUALITY_CATEGORIES[q_level]}",
            target={"level": q_level},
        ),
        InstructionRecord(
            roi_id=record.roi_id,
            kind="AIR-importance",
            instruction=_pick(AIR_IMPORTANCE_TEMPLATES, mode, rng),
            response=f"This region is {IMPORTANCE_CATEGORIES[i_level]} to the overall image quality",
            target={"level": i_level},
        ),
        InstructionRecord(
            roi_id=record.roi_id,
            kind="AIR-distortion",
            instruction=_pick(AIR_DISTORTION_TEMPLATES, mode, rng),
            response=distortion_response,
            target=distortion_target,
        ),
    ]


def gen_jir(record: RoiLabelRecord, rng_seed: int, mode: str = "fixed") -> list[InstructionRecord]:
    """One yes/no judgment pair per task, queried condition true w.p. 0.5."""
    if mode not in ("fixed", "random"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = _record_rng(rng_seed, record.roi_id, "jir")
    tmpl_rng = rng if mode == "random" else None
    q_level, i_level = _levels(record)
    out = []

    for kind, true_level, categories, templates in (
        ("JIR-quality", q_level, QUALITY_CATEGORIES, JIR_QUALITY_TEMPLATES),
        ("JIR-importance", i_level, IMPORTANCE_CATEGORIES, JIR_IMPORTANCE_TEMPLATES),
    ):
        want_yes = bool(rng.integers(0, 2))
        if want_yes:
            queried = true_level
        else:
            queried = int(rng.choice([i for i in range(5) if i != true_level]))
        answer = "Yes" if queried == true_level else "No"
        out.append(
            InstructionRecord(
                roi_id=record.roi_id,
                kind=kind,
                instruction=_pick(templates, mode, tmpl_rng).format(categories[queried].lower()),
                response=answer,
                target={"queried_level": queried, "expected": answer},
            )
        )

    present = sorted(d.dtype for d in record.distortions if d.present)
    absent = [dt for dt in DISTORTION_TYPES if dt not in set(present)]
    want_yes = bool(rng.integers(0, 2))
    if want_yes and present:
        queried_dt = present[int(rng.integers(0, len(present)))]
    elif absent:
        queried_dt = absent[int(rng.integers(0, len(absent)))]
    else:
        queried_dt = present[int(rng.integers(0, len(present)))]
    answer = "Yes" if queried_dt in set(present) else "No"
    out.append(
        InstructionRecord(
            roi_id=record.roi_id,
            kind="JIR-distortion",
            instruction=_pick(JIR_DISTORTION_TEMPLATES, mode, tmpl_rng).format(queried_dt.value),
            response=answer,
            target={"queried_dtype": queried_dt.value, "expected": answer},
        )
    )
    return out


def render_sequence(record: InstructionRecord) -> str:
    """The model-facing token sequence with its three literal placeholders."""
    if not record.instruction:
        raise ValueError("empty instruction")
    return SEQUENCE_PREFIX + record.instruction


def generate_instructions(
    records: list[RoiLabelRecord], mode: str, seed: int
) -> list[InstructionRecord]:
    out = []
    for rec in records:
        out.extend(gen_air(rec, mode=mode, seed=seed))
        out.extend(gen_jir(rec, rng_seed=seed, mode=mode))
    return out
