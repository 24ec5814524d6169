"""Evaluation report rendering: delimited metric rows plus matplotlib figures."""

from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .training import EvalReport


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    """Flat task/metric/value rows for spreadsheet consumption."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["task", "metric", "value"])
        d = report.to_json_dict()
        for task in ("quality", "importance"):
            for metric in ("srocc", "plcc"):
                w.writerow([task, metric, f"{d[task][metric]:.6f}"])
        for task in ("severity", "distortion_type"):
            for metric in ("precision", "recall", "f1"):
                w.writerow([task, metric, f"{d[task][metric]:.6f}"])
        for name, value in d["per_type_f1"].items():
            w.writerow(["per_type_f1", name, f"{value:.6f}"])
        w.writerow(["dataset", "n_samples", str(d["n_samples"])])
    os.replace(tmp, path)


def plot_loss_curve(losses: Sequence[float], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(losses)), losses, marker="o", ms=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.set_title("Training loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_score_scatter(pred: Sequence[float], gt: Sequence[float], label: str,
                       corr: float, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(gt, pred, s=12, alpha=0.6)
    ax.set_xlabel(f"ground-truth {label}")
    ax.set_ylabel(f"predicted {label}")
    ax.set_title(f"{label} (SROCC {corr:.3f})")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_per_type_f1(per_type_f1: dict[str, float], path: str | Path) -> None:
    names = list(per_type_f1)
    values = [per_type_f1[n] for n in names]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(np.arange(len(names)), values)
    ax.set_xticks(np.arange(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("F1")
    ax.set_title("Per-distortion-type F1")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_eval_outputs(
    report: EvalReport,
    out_dir: str | Path,
    pred_quality: Optional[Sequence[float]] = None,
    gt_quality: Optional[Sequence[float]] = None,
    pred_importance: Optional[Sequence[float]] = None,
    gt_importance: Optional[Sequence[float]] = None,
    losses: Optional[Sequence[float]] = None,
) -> list[str]:
    """Write the CSV and all applicable figures; returns created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    created = []
    csv_path = out / "report.csv"
    write_report_csv(report, csv_path)
    created.append(str(csv_path))
    if pred_quality is not None and gt_quality is not None:
        p = out / "quality_scatter.png"
        plot_score_scatter(pred_quality, gt_quality, "quality", report.quality_srocc, p)
        created.append(str(p))
    if pred_importance is not None and gt_importance is not None:
        p = out / "importance_scatter.png"
        plot_score_scatter(pred_importance, gt_importance, "importance", report.importance_srocc, p)
        created.append(str(p))
    p = out / "per_type_f1.png"
    plot_per_type_f1(report.per_type_f1, p)
    created.append(str(p))
    if losses is not None:
        p = out / "loss_curve.png"
        plot_loss_curve(losses, p)
        created.append(str(p))
    return created
