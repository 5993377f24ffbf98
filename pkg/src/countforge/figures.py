"""Matplotlib figures rendered next to evaluation tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import AnnotationSet
from .inference import InferenceResult
from .metrics import EvalReport


def save_band_errors(report: EvalReport, path: str | Path) -> Path:
    """Grouped MAE/RMSE bars per density band."""
    path = Path(path)
    names = list(report.per_band) or ["overall"]
    cells = [report.per_band[n] for n in report.per_band] or [report.overall]
    x = np.arange(len(names))
    width = 0.38

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.bar(x - width / 2, [c.mae for c in cells], width, label="MAE", color="#4878d0")
    ax.bar(x + width / 2, [c.rmse for c in cells], width, label="RMSE", color="#ee854a")
    ax.set_xticks(x)
    ax.set_xticklabels([f"{n}\n(n={c.n})" for n, c in zip(names, cells)], fontsize=9)
    ax.set_ylabel("counting error")
    ax.set_title("Error by density band (ground-truth banding)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_pred_scatter(
    results: list[InferenceResult], truth: AnnotationSet, path: str | Path
) -> Path:
    """Prediction vs ground truth, one point per image."""
    path = Path(path)
    pairs = [
        (truth.get(r.image_id).count, r.fused)
        for r in results
        if truth.get(r.image_id) is not None
    ]
    gts = np.array([g for g, _ in pairs], dtype=float)
    preds = np.array([p for _, p in pairs], dtype=float)

    fig, ax = plt.subplots(figsize=(4.8, 4.8))
    if len(gts):
        top = max(gts.max(), preds.max(), 1.0) * 1.05
        ax.plot([0, top], [0, top], color="gray", lw=1, ls="--", label="perfect")
        ax.scatter(gts, preds, s=12, alpha=0.5, color="#4878d0")
        ax.set_xlim(0, top)
        ax.set_ylim(0, top)
    ax.set_xlabel("ground-truth count")
    ax.set_ylabel("predicted count")
    ax.set_title("Prediction vs ground truth")
    ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_report_figures(
    report: EvalReport,
    results: list[InferenceResult],
    truth: AnnotationSet,
    out_dir: str | Path,
    stem: str = "eval",
) -> list[Path]:
    """Write the standard figure set; returns the created paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [
        save_band_errors(report, out_dir / f"{stem}_band_errors.png"),
        save_pred_scatter(results, truth, out_dir / f"{stem}_pred_scatter.png"),
    ]
