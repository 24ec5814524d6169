"""Correlation and set-overlap metrics, plus closed-set probability scoring."""

from __future__ import annotations

from typing import Hashable, Sequence

import numpy as np


def closed_set_score(level_logits: Sequence[float]) -> float:
    """Expected level index under the softmax of 5 level logits, in [0,4]."""
    z = np.asarray(level_logits, dtype=np.float64)
    if z.shape != (5,):
        raise ValueError(f"expected 5 logits, got shape {z.shape}")
    if not np.isfinite(z).all():
        raise ValueError("non-finite logits")
    e = np.exp(z - z.max())
    p = e / e.sum()
    return float(np.dot(p, np.arange(5.0)))


def average_ranks(x: Sequence[float]) -> np.ndarray:
    """Ranks 1..n with ties replaced by the mean rank of the tied block."""
    a = np.asarray(x, dtype=np.float64)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(len(a), dtype=np.float64)
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def plcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson product-moment correlation in double precision."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape:
        raise ValueError(f"length mismatch: {xa.shape} vs {ya.shape}")
    if len(xa) < 3:
        raise ValueError(f"need at least 3 points, got {len(xa)}")
    xd = xa - xa.mean()
    yd = ya - ya.mean()
    vx = float(np.dot(xd, xd))
    vy = float(np.dot(yd, yd))
    if vx == 0.0 or vy == 0.0:
        raise ZeroDivisionError("zero variance input")
    return float(np.dot(xd, yd) / np.sqrt(vx * vy))


def srocc(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson over average-tie ranks."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape:
        raise ValueError(f"length mismatch: {xa.shape} vs {ya.shape}")
    if len(xa) < 3:
        raise ValueError(f"need at least 3 points, got {len(xa)}")
    return plcc(average_ranks(xa), average_ranks(ya))


def sample_prf(gt: set[Hashable], pred: set[Hashable]) -> tuple[float, float, float]:
    """Per-sample precision/recall/F1 over label sets.

    Empty/empty counts as perfect agreement (clean/clean convention);
    otherwise an empty side scores 0 on its ratio.
    """
    if not gt and not pred:
        return (1.0, 1.0, 1.0)
    hits = len(gt & pred)
    precision = hits / len(pred) if pred else 0.0
    recall = hits / len(gt) if gt else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return (precision, recall, f1)
