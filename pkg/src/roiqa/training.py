"""Desk-scale training loop and the evaluation harness.

Losses: cross-entropy for the quality/importance/severity levels and the
judgment head, independent per-type binary cross-entropy for presence.
Optimizer: adaptive moments (0.9/0.999) with a cosine-annealed rate.
Deterministic given the config seed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    DISTORTION_TYPES,
    DatasetManifest,
    ImageBuffer,
    IMPORTANCE_HUMAN,
    IMPORTANCE_ORACLE,
    QUALITY_HUMAN,
    QUALITY_ORACLE,
    RegionMask,
    RoiLabelRecord,
    SEVERITY_HUMAN,
)
from .fidelity import discretize
from .masks import decode_mask
from .metrics import closed_set_score, plcc, sample_prf, srocc
from .model import RoiQualityModel, TaskQuery
from .nn.tensor import Tensor, add, cross_entropy, mean_all, mul, row_select, softplus, sub, sum_all


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    lr_floor: float = 1e-6
    batch_size: int = 8
    epochs: int = 10
    seed: int = 0
    freeze_encoder: bool = False  # stage-1 mode: encoder fixed
    loss_weights: dict = field(
        default_factory=lambda: {
            "quality": 1.0,
            "importance": 1.0,
            "presence": 1.0,
            "severity": 1.0,
            "judgment": 1.0,
        }
    )

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.lr_floor < 0:
            raise ValueError("rates must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "lr_floor": self.lr_floor,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "freeze_encoder": self.freeze_encoder,
            "loss_weights": dict(self.loss_weights),
        }

    @staticmethod
    def from_json_dict(d: dict) -> "TrainConfig":
        known = {
            "learning_rate", "lr_floor", "batch_size", "epochs", "seed",
            "freeze_encoder", "loss_weights",
        }
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return TrainConfig(**d)


def cosine_lr(epoch: float, total_epochs: int, lr_max: float, lr_floor: float) -> float:
    """Cosine annealing from lr_max (epoch 0) to lr_floor (epoch total)."""
    t = min(max(epoch / total_epochs, 0.0), 1.0)
    return lr_floor + (lr_max - lr_floor) * 0.5 * (1.0 + math.cos(math.pi * t))


@dataclass(frozen=True)
class RoiSample:
    """One training/eval item: a distorted image, its mask and targets."""

    roi_id: str
    image: ImageBuffer
    mask: RegionMask
    quality_score: float  # continuous gt on its native scale
    importance_score: float
    quality_level: int
    importance_level: int
    presence: tuple[bool, ...]  # per DISTORTION_TYPES
    severity_levels: tuple[Optional[int], ...]  # per type, None when absent


def sample_from_record(
    record: RoiLabelRecord, image: ImageBuffer, mask: RegionMask
) -> RoiSample:
    q_scale = QUALITY_ORACLE if record.quality_scale == "oracle" else QUALITY_HUMAN
    i_scale = IMPORTANCE_ORACLE if record.importance_scale == "oracle" else IMPORTANCE_HUMAN
    q_level, _ = discretize(record.quality_score, q_scale)
    i_level, _ = discretize(record.importance_score, i_scale)
    by_type = {e.dtype: e for e in record.distortions}
    presence = []
    severities: list[Optional[int]] = []
    for dt in DISTORTION_TYPES:
        e = by_type.get(dt)
        if e is not None and e.present:
            presence.append(True)
            severities.append(discretize(e.severity, SEVERITY_HUMAN)[0])
        else:
            presence.append(False)
            severities.append(None)
    return RoiSample(
        roi_id=record.roi_id,
        image=image,
        mask=mask,
        quality_score=record.quality_score,
        importance_score=record.importance_score,
        quality_level=q_level,
        importance_level=i_level,
        presence=tuple(presence),
        severity_levels=tuple(severities),
    )


def load_samples(
    manifest: DatasetManifest,
    labels: Sequence[RoiLabelRecord],
    masks_dir: str | Path,
) -> list[RoiSample]:
    """Join manifest records with their ROI labels and mask files."""
    from .distortions import load_image

    by_roi = {r.roi_id: r for r in labels}
    masks_dir = Path(masks_dir)
    samples = []
    image_cache: dict[str, ImageBuffer] = {}
    mask_cache: dict[str, RegionMask] = {}
    for rec in manifest.records:
        for roi_id in rec.roi_ids:
            label = by_roi.get(roi_id)
            if label is None:
                continue
            if rec.distorted_path not in image_cache:
                image_cache[rec.distorted_path] = load_image(rec.distorted_path)
            ref = label.mask_reference
            if ref not in mask_cache:
                mask_cache[ref] = decode_mask(masks_dir / ref)
            samples.append(sample_from_record(label, image_cache[rec.distorted_path], mask_cache[ref]))
    return samples


def _judgment_query(sample: RoiSample, rng: np.random.Generator) -> tuple[TaskQuery, int]:
    """Sample a balanced yes/no judgment condition for one ROI."""
    kind = ("JIR-quality", "JIR-importance", "JIR-distortion")[int(rng.integers(0, 3))]
    want_yes = bool(rng.integers(0, 2))
    if kind == "JIR-quality":
        true_level = sample.quality_level
        level = true_level if want_yes else int(rng.choice([i for i in range(5) if i != true_level]))
        return TaskQuery(kind, queried_level=level), int(level == true_level)
    if kind == "JIR-importance":
        true_level = sample.importance_level
        level = true_level if want_yes else int(rng.choice([i for i in range(5) if i != true_level]))
        return TaskQuery(kind, queried_level=level), int(level == true_level)
    present = [i for i, p in enumerate(sample.presence) if p]
    absent = [i for i, p in enumerate(sample.presence) if not p]
    if want_yes and present:
        idx = int(rng.choice(present))
    elif absent:
        idx = int(rng.choice(absent))
    else:
        idx = int(rng.choice(present))
    return TaskQuery(kind, queried_dtype=idx), int(sample.presence[idx])


def sample_loss(model: RoiQualityModel, sample: RoiSample, weights: dict,
                rng: Optional[np.random.Generator] = None) -> Tensor:
    """Weighted multi-task loss of one ROI (graph-building)."""
    query = None
    judgment_target = None
    if weights.get("judgment", 0.0) > 0 and rng is not None:
        query, judgment_target = _judgment_query(sample, rng)
    logits = model.forward(sample.image, sample.mask, query)

    total = mul(cross_entropy(logits.quality, sample.quality_level), weights.get("quality", 0.0))
    total = add(total, mul(cross_entropy(logits.importance, sample.importance_level),
                           weights.get("importance", 0.0)))
    # Per-type BCE on presence logits: softplus(x) - t·x averaged over types.
    t = np.array([1.0 if p else 0.0 for p in sample.presence])
    bce = mean_all(sub(softplus(logits.presence), mul(logits.presence, Tensor(t))))
    total = add(total, mul(bce, weights.get("presence", 0.0)))

    present_idx = [i for i, p in enumerate(sample.presence) if p]
    if present_idx and weights.get("severity", 0.0) > 0:
        sev_terms = None
        for i in present_idx:
            term = cross_entropy(row_select(logits.severity, i), sample.severity_levels[i])
            sev_terms = term if sev_terms is None else add(sev_terms, term)
        total = add(total, mul(sev_terms, weights.get("severity", 0.0) / len(present_idx)))

    if judgment_target is not None:
        total = add(total, mul(cross_entropy(logits.judgment, judgment_target),
                               weights.get("judgment", 0.0)))
    return total


class AdamOptimizer:
    """Adaptive-moment estimation with decay rates 0.9/0.999."""

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * (g * g)
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def train(model: RoiQualityModel, samples: Sequence[RoiSample], cfg: TrainConfig,
          log_every: int = 0) -> list[float]:
    """Train in place; returns the per-epoch mean loss curve."""
    if not samples:
        raise ValueError("empty training split")
    params = model.parameters(freeze_encoder=cfg.freeze_encoder)
    opt = AdamOptimizer(params)
    losses: list[float] = []
    order_rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.learning_rate, cfg.lr_floor)
        perm = order_rng.permutation(len(samples))
        epoch_loss = 0.0
        seen = 0
        for start in range(0, len(perm), cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            opt.zero_grads()
            batch_loss = None
            for idx in batch:
                s = samples[idx]
                jr = _per_item_rng(cfg.seed, epoch, s.roi_id)
                loss = sample_loss(model, s, cfg.loss_weights, jr)
                batch_loss = loss if batch_loss is None else add(batch_loss, loss)
            batch_loss = mul(batch_loss, 1.0 / len(batch))
            value = batch_loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss {value} at epoch {epoch} step {start // cfg.batch_size}"
                )
            batch_loss.backward()
            opt.step(lr)
            epoch_loss += value * len(batch)
            seen += len(batch)
        losses.append(epoch_loss / seen)
        if log_every and (epoch % log_every == 0 or epoch == cfg.epochs - 1):
            print(f"epoch {epoch}: loss {losses[-1]:.4f} lr {lr:.2e}")
    return losses


def _per_item_rng(seed: int, epoch: int, roi_id: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{epoch}:{roi_id}".encode()).digest()
    return np.random.Generator(np.random.Philox(key=np.frombuffer(digest[:16], dtype=np.uint64)))


# -- evaluation --------------------------------------------------------------


@dataclass
class EvalReport:
    quality_srocc: float
    quality_plcc: float
    quality_degenerate: bool
    importance_srocc: float
    importance_plcc: float
    importance_degenerate: bool
    severity_precision: float
    severity_recall: float
    severity_f1: float
    type_precision: float
    type_recall: float
    type_f1: float
    per_type_f1: dict[str, float]
    n_samples: int

    def to_json_dict(self) -> dict:
        return {
            "quality": {
                "srocc": self.quality_srocc,
                "plcc": self.quality_plcc,
                "degenerate": self.quality_degenerate,
            },
            "importance": {
                "srocc": self.importance_srocc,
                "plcc": self.importance_plcc,
                "degenerate": self.importance_degenerate,
            },
            "severity": {
                "precision": self.severity_precision,
                "recall": self.severity_recall,
                "f1": self.severity_f1,
            },
            "distortion_type": {
                "precision": self.type_precision,
                "recall": self.type_recall,
                "f1": self.type_f1,
            },
            "per_type_f1": dict(self.per_type_f1),
            "n_samples": self.n_samples,
        }


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _safe_corr(fn, x, y) -> tuple[float, bool]:
    try:
        return fn(x, y), False
    except ZeroDivisionError:
        return 0.0, True


def predict_sample(model: RoiQualityModel, sample: RoiSample) -> dict:
    """Deterministic head read-out for one ROI."""
    logits = model.forward(sample.image, sample.mask)
    presence_prob = _sigmoid(logits.presence.data)
    pred_types = {DISTORTION_TYPES[i] for i in range(len(DISTORTION_TYPES)) if presence_prob[i] > 0.5}
    severity_pairs = {
        (dt, int(np.argmax(logits.severity.data[DISTORTION_TYPES.index(dt)]))) for dt in pred_types
    }
    return {
        "quality": closed_set_score(logits.quality.data),
        "importance": closed_set_score(logits.importance.data),
        "types": pred_types,
        "severity_pairs": severity_pairs,
    }


def evaluate(model: Optional[RoiQualityModel], samples: Sequence[RoiSample],
             predictor=None) -> EvalReport:
    """Metric suite over a test split: correlations plus sample-average P/R/F1.

    `predictor(sample) -> dict` overrides the model read-out (used to feed
    oracle or null predictions through the exact same metric path).
    """
    if not samples:
        raise ValueError("empty evaluation split")
    if predictor is None:
        if model is None:
            raise ValueError("need a model or a predictor")
        predictor = lambda s: predict_sample(model, s)
    pred_q, gt_q, pred_i, gt_i = [], [], [], []
    prf_sev, prf_type = [], []
    tp = {dt: 0 for dt in DISTORTION_TYPES}
    fp = {dt: 0 for dt in DISTORTION_TYPES}
    fn = {dt: 0 for dt in DISTORTION_TYPES}
    clean_tp = clean_fp = clean_fn = 0
    for s in samples:
        pred = predictor(s)
        pred_q.append(pred["quality"])
        gt_q.append(s.quality_score)
        pred_i.append(pred["importance"])
        gt_i.append(s.importance_score)
        gt_types = {DISTORTION_TYPES[i] for i, p in enumerate(s.presence) if p}
        gt_pairs = {
            (DISTORTION_TYPES[i], s.severity_levels[i])
            for i, p in enumerate(s.presence)
            if p
        }
        prf_type.append(sample_prf(gt_types, pred["types"]))
        prf_sev.append(sample_prf(gt_pairs, pred["severity_pairs"]))
        for dt in DISTORTION_TYPES:
            in_gt, in_pred = dt in gt_types, dt in pred["types"]
            tp[dt] += in_gt and in_pred
            fp[dt] += in_pred and not in_gt
            fn[dt] += in_gt and not in_pred
        gt_clean, pred_clean = not gt_types, not pred["types"]
        clean_tp += gt_clean and pred_clean
        clean_fp += pred_clean and not gt_clean
        clean_fn += gt_clean and not pred_clean

    q_srocc, q_deg1 = _safe_corr(srocc, pred_q, gt_q)
    q_plcc, q_deg2 = _safe_corr(plcc, pred_q, gt_q)
    i_srocc, i_deg1 = _safe_corr(srocc, pred_i, gt_i)
    i_plcc, i_deg2 = _safe_corr(plcc, pred_i, gt_i)

    def mean_col(rows, col):
        return float(np.mean([r[col] for r in rows]))

    def binary_f1(tp_, fp_, fn_):
        return 2.0 * tp_ / (2.0 * tp_ + fp_ + fn_) if (2 * tp_ + fp_ + fn_) > 0 else 1.0

    per_type = {dt.value: binary_f1(tp[dt], fp[dt], fn[dt]) for dt in DISTORTION_TYPES}
    per_type["clean"] = binary_f1(clean_tp, clean_fp, clean_fn)

    return EvalReport(
        quality_srocc=q_srocc,
        quality_plcc=q_plcc,
        quality_degenerate=q_deg1 or q_deg2,
        importance_srocc=i_srocc,
        importance_plcc=i_plcc,
        importance_degenerate=i_deg1 or i_deg2,
        severity_precision=mean_col(prf_sev, 0),
        severity_recall=mean_col(prf_sev, 1),
        severity_f1=mean_col(prf_sev, 2),
        type_precision=mean_col(prf_type, 0),
        type_recall=mean_col(prf_type, 1),
        type_f1=mean_col(prf_type, 2),
        per_type_f1=per_type,
        n_samples=len(samples),
    )
