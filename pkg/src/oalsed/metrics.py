"""Evaluation: confusion counts, error rates, detection cost, PR curves.

The detection cost is the weighted combination 0.75 * FNR + 0.25 * FPR by
default (missed detections three times as costly as false alarms). The
decision threshold is 0.5 with ties counted positive, matching the
classifier's hard predictions. Area under the precision-recall curve uses
the average-precision step convention sum_k (R_k - R_{k-1}) * P_k over the
distinct score thresholds in descending order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfusionCounts",
    "ErrorRates",
    "MacroAuprc",
    "confusion_counts",
    "error_rates",
    "dcf",
    "pr_curve",
    "auprc",
    "auprc_score",
    "macro_auprc",
    "DCF_W_FN",
    "DCF_W_FP",
]

DCF_W_FN = 0.75
DCF_W_FP = 0.25

DECISION_THRESHOLD = 0.5


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ErrorRates:
    fnr: float
    fpr: float
    flags: tuple[str, ...] = ()


def confusion_counts(
    posteriors: np.ndarray, labels: np.ndarray, threshold: float = DECISION_THRESHOLD
) -> ConfusionCounts:
    """Count decisions at the given threshold; score >= threshold is positive."""
    p = np.asarray(posteriors, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    pred = p >= threshold
    pos = y == 1
    return ConfusionCounts(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def error_rates(counts: ConfusionCounts) -> ErrorRates:
    """FNR = fn/(fn+tp) and FPR = fp/(fp+tn); an empty class yields rate 0, flagged."""
    flags: list[str] = []
    if counts.fn + counts.tp > 0:
        fnr = counts.fn / (counts.fn + counts.tp)
    else:
        fnr = 0.0
        flags.append("degenerate_fnr")
    if counts.fp + counts.tn > 0:
        fpr = counts.fp / (counts.fp + counts.tn)
    else:
        fpr = 0.0
        flags.append("degenerate_fpr")
    return ErrorRates(fnr=fnr, fpr=fpr, flags=tuple(flags))


def dcf(fnr: float, fpr: float, w_fn: float = DCF_W_FN, w_fp: float = DCF_W_FP) -> float:
    """Weighted detection cost of a pair of error rates."""
    if not (0.0 <= fnr <= 1.0 and 0.0 <= fpr <= 1.0):
        raise ValueError("error rates must lie in [0, 1]")
    return w_fn * fnr + w_fp * fpr


def pr_curve(posteriors: np.ndarray, labels: np.ndarray) -> list[tuple[float, float]]:
    """(recall, precision) at each distinct score threshold, descending.

    Predictions at threshold t count score >= t as positive. Returns []
    when the labels contain no positive, in which case the curve (and any
    area under it) is undefined.
    """
    p = np.asarray(posteriors, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if p.shape != y.shape:
        raise ValueError("posteriors and labels must have matching lengths")
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        return []

    order = np.argsort(-p, kind="stable")
    p_sorted = p[order]
    y_sorted = y[order]
    cum_tp = np.cumsum(y_sorted == 1)
    cum_fp = np.cumsum(y_sorted == 0)
    # Last index of each run of equal scores marks one distinct threshold.
    last_of_run = np.flatnonzero(
        np.append(p_sorted[1:] != p_sorted[:-1], True)
    )
    curve: list[tuple[float, float]] = []
    for i in last_of_run:
        tp = int(cum_tp[i])
        fp = int(cum_fp[i])
        recall = tp / n_pos
        precision = tp / (tp + fp)
        curve.append((recall, precision))
    return curve


def auprc(curve: list[tuple[float, float]]) -> float | None:
    """Average-precision area of a pr_curve; None for an undefined curve."""
    if not curve:
        return None
    area = 0.0
    prev_recall = 0.0
    for recall, precision in curve:
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


def auprc_score(posteriors: np.ndarray, labels: np.ndarray) -> float | None:
    """Convenience wrapper: AUPRC straight from scores and labels."""
    return auprc(pr_curve(posteriors, labels))


@dataclass(frozen=True)
class MacroAuprc:
    value: float | None
    skipped: int


def macro_auprc(curves: list[list[tuple[float, float]]]) -> MacroAuprc:
    """Unweighted mean AUPRC over the classes whose curve is defined."""
    areas = [a for a in (auprc(c) for c in curves) if a is not None]
    skipped = len(curves) - len(areas)
    if not areas:
        return MacroAuprc(value=None, skipped=skipped)
    return MacroAuprc(value=float(np.mean(areas)), skipped=skipped)
