"""Per-task evaluation reports with curve exports.

Tasks that lack a class in the evaluated cohort report None for the
undefined metric (never a misleading zero); macro averages are the
unweighted mean over tasks where the metric is defined.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from .cohort import Cohort
from .encoders import TextEncoderConfig, slice_batch, tensorize_cohort
from .metrics import CurveSet, auc, auprc, brier, curves


@dataclass(frozen=True)
class TaskMetrics:
    auc: Optional[float]
    auprc: Optional[float]
    brier: float
    n_pos: int
    n: int


@dataclass
class EvaluationReport:
    tasks: dict[str, TaskMetrics]
    macro_auc: Optional[float]
    macro_auprc: Optional[float]
    macro_brier: float
    curve_sets: dict[str, Optional[CurveSet]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tasks": {
                name: {
                    "auc": m.auc,
                    "auprc": m.auprc,
                    "brier": m.brier,
                    "n_pos": m.n_pos,
                    "n": m.n,
                }
                for name, m in self.tasks.items()
            },
            "macro": {
                "auc": self.macro_auc,
                "auprc": self.macro_auprc,
                "brier": self.macro_brier,
            },
        }


def predict_probs(model: nn.Module, tensors: dict, batch_size: int = 512) -> np.ndarray:
    """No-grad batched forward over pre-tensorized records -> (N, K) probs."""
    model.eval()
    n = tensors["labels"].shape[0]
    chunks = []
    with torch.no_grad():
        for start in range(0, n, batch_size):
            idx = torch.arange(start, min(start + batch_size, n))
            out = model(slice_batch(tensors, idx))
            chunks.append(out.probs.double().numpy())
    return np.concatenate(chunks, axis=0)


def _macro(values: list[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def evaluate(
    model: nn.Module,
    cohort: Cohort,
    text_config: TextEncoderConfig,
    with_curves: bool = True,
) -> EvaluationReport:
    """Forward the whole cohort and compute per-task metrics honoring the
    label mask."""
    tensors = tensorize_cohort(cohort, text_config)
    probs = predict_probs(model, tensors)
    labels = tensors["labels"].numpy()
    mask = tensors["label_mask"].numpy()

    tasks: dict[str, TaskMetrics] = {}
    curve_sets: dict[str, Optional[CurveSet]] = {}
    for k, name in enumerate(cohort.schema.task_names):
        present = mask[:, k]
        y = labels[present, k]
        p = probs[present, k]
        n = int(present.sum())
        n_pos = int(y.sum())
        has_both = 0 < n_pos < n
        task_auc = auc(p, y) if has_both else None
        task_ap = auprc(p, y) if n_pos > 0 else None
        tasks[name] = TaskMetrics(auc=task_auc, auprc=task_ap, brier=brier(p, y), n_pos=n_pos, n=n)
        curve_sets[name] = curves(p, y) if (with_curves and has_both) else None

    report = EvaluationReport(
        tasks=tasks,
        macro_auc=_macro([m.auc for m in tasks.values()]),
        macro_auprc=_macro([m.auprc for m in tasks.values()]),
        macro_brier=float(np.mean([m.brier for m in tasks.values()])),
        curve_sets=curve_sets,
    )
    return report


def write_report(report: EvaluationReport, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_curve_files(report: EvaluationReport, out_dir: str | Path) -> list[Path]:
    """One roc_task{k}.csv and pr_task{k}.csv per task (1-based task index),
    each with a header row. Tasks without curves get no files."""
    out_dir = Path(out_dir)
    written = []
    for k, (name, cs) in enumerate(report.curve_sets.items(), start=1):
        if cs is None:
            continue
        roc_path = out_dir / f"roc_task{k}.csv"
        with roc_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fpr", "tpr"])
            writer.writerows(cs.roc)
        pr_path = out_dir / f"pr_task{k}.csv"
        with pr_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["recall", "precision"])
            writer.writerows(cs.pr)
        written.extend([roc_path, pr_path])
    return written


def format_report(report: EvaluationReport) -> str:
    """Human-readable per-task summary table."""

    def fmt(v: Optional[float]) -> str:
        return "undefined" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4f}"

    lines = [f"{'task':<16}{'AUC':>10}{'AUPRC':>10}{'Brier':>10}{'pos':>8}{'n':>8}"]
    for name, m in report.tasks.items():
        lines.append(
            f"{name:<16}{fmt(m.auc):>10}{fmt(m.auprc):>10}{fmt(m.brier):>10}{m.n_pos:>8}{m.n:>8}"
        )
    lines.append(
        f"{'macro':<16}{fmt(report.macro_auc):>10}{fmt(report.macro_auprc):>10}"
        f"{fmt(report.macro_brier):>10}"
    )
    return "\n".join(lines)
