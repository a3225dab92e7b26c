"""Discrimination and calibration metrics with explicit tie handling.

AUC is the Mann-Whitney statistic (tied pairs credited 0.5) computed by
sort-and-rank. AUPRC is average precision over descending-score prefix cuts,
with tied scores entering a cut together. Curve exports share the same cut
structure, so the trapezoid over the ROC points reproduces the AUC exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _as_arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def _group_counts(scores: np.ndarray, labels: np.ndarray):
    """Cumulative true/false positive counts at each distinct-score cut,
    scanning thresholds from high to low."""
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    boundary = np.flatnonzero(np.r_[s[1:] != s[:-1], True])  # last index of each group
    tp = np.cumsum(y)[boundary]
    fp = np.cumsum(1 - y)[boundary]
    return tp.astype(np.float64), fp.astype(np.float64)


def auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative, ties 0.5."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs at least one positive and one negative")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # average 1-based ranks within tie groups
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], sorted_s.size]
    group_rank = (starts + ends - 1) / 2.0 + 1.0
    group_id = np.cumsum(np.r_[True, sorted_s[1:] != sorted_s[:-1]]) - 1
    ranks = np.empty(s.size, dtype=np.float64)
    ranks[order] = group_rank[group_id]
    u_stat = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision over descending-score prefix cuts."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("auprc needs at least one positive")
    tp, fp = _group_counts(s, y)
    ap = 0.0
    prev_recall = 0.0
    for tp_i, fp_i in zip(tp, fp):
        recall = tp_i / n_pos
        precision = tp_i / (tp_i + fp_i)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return float(ap)


def brier(probs, labels) -> float:
    """Mean squared difference between probability and label."""
    p, y = _as_arrays(probs, labels)
    return float(np.mean((p - y) ** 2))


def roc_points(scores, labels) -> list[tuple[float, float]]:
    """(FPR, TPR) at every distinct-score cut, anchored at (0, 0); the final
    cut is (1, 1)."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc needs both classes")
    tp, fp = _group_counts(s, y)
    pts = [(0.0, 0.0)]
    pts.extend((fp_i / n_neg, tp_i / n_pos) for tp_i, fp_i in zip(tp, fp))
    return pts


def pr_points(scores, labels) -> list[tuple[float, float]]:
    """(recall, precision) at every distinct-score cut; the first point is
    the top-scored cut."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("pr curve needs at least one positive")
    tp, fp = _group_counts(s, y)
    return [(tp_i / n_pos, tp_i / (tp_i + fp_i)) for tp_i, fp_i in zip(tp, fp)]


def trapezoid_area(points: list[tuple[float, float]]) -> float:
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


@dataclass(frozen=True)
class CurveSet:
    roc: list[tuple[float, float]]
    pr: list[tuple[float, float]]


def curves(scores, labels) -> CurveSet:
    return CurveSet(roc=roc_points(scores, labels), pr=pr_points(scores, labels))
