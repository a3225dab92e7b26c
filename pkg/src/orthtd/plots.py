"""Figure rendering for run artifacts (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import EvaluationReport
from .training import EpochRecord


def save_curve_figures(report: EvaluationReport, out_dir: str | Path) -> list[Path]:
    """Overlayed per-task ROC and PR curves -> roc.png, pr.png."""
    out_dir = Path(out_dir)
    written = []

    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    for name, cs in report.curve_sets.items():
        if cs is None:
            continue
        xs, ys = zip(*cs.roc)
        label = name
        if report.tasks[name].auc is not None:
            label += f" (AUC {report.tasks[name].auc:.3f})"
        ax.plot(xs, ys, label=label)
    ax.plot([0, 1], [0, 1], linestyle=":", color="grey", linewidth=1)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title("ROC curves")
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    roc_path = out_dir / "roc.png"
    fig.savefig(roc_path, dpi=150)
    plt.close(fig)
    written.append(roc_path)

    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    for name, cs in report.curve_sets.items():
        if cs is None:
            continue
        xs, ys = zip(*cs.pr)
        label = name
        if report.tasks[name].auprc is not None:
            label += f" (AP {report.tasks[name].auprc:.3f})"
        ax.plot(xs, ys, label=label)
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("Precision-recall curves")
    ax.legend(fontsize=8, loc="upper right")
    fig.tight_layout()
    pr_path = out_dir / "pr.png"
    fig.savefig(pr_path, dpi=150)
    plt.close(fig)
    written.append(pr_path)
    return written


def save_history_figure(history: list[EpochRecord], path: str | Path) -> Path:
    """Training loss (and the orthogonality trajectory when present)."""
    path = Path(path)
    epochs = [h.epoch for h in history]
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.plot(epochs, [h.loss for h in history], label="train loss", color="tab:blue")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Loss")
    orthos = [h.ortho for h in history]
    if any(o is not None for o in orthos):
        ax2 = ax.twinx()
        ax2.plot(epochs, orthos, label="|cos| penalty", color="tab:red", linestyle="--")
        ax2.set_ylabel("Mean |cosine|")
        ax2.set_ylim(0, 1)
    fig.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_comparison_figure(
    summary: dict[str, dict[str, dict[str, float]]],
    path: str | Path,
    title: str,
    metrics: tuple[str, ...] = ("macro_auc", "macro_auprc"),
) -> Path:
    """Grouped bars (mean +- std over seeds) per variant and metric.

    ``summary`` maps variant -> metric -> {"mean": m, "std": s}.
    """
    path = Path(path)
    variants = list(summary)
    x = np.arange(len(variants), dtype=float)
    width = 0.8 / len(metrics)
    fig, ax = plt.subplots(figsize=(max(6.0, 1.4 * len(variants)), 4.0))
    for i, metric in enumerate(metrics):
        means = [summary[v][metric]["mean"] for v in variants]
        stds = [summary[v][metric]["std"] for v in variants]
        ax.bar(x + i * width, means, width, yerr=stds, capsize=3, label=metric)
    ax.set_xticks(x + width * (len(metrics) - 1) / 2)
    ax.set_xticklabels(variants, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("Score")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
