"""Evaluation: per-time-bin confusion metrics and event-level average IoU."""

from dataclasses import dataclass

import numpy as np

from boweldet.errors import MaskLengthError

METRIC_COLUMNS = ("avg_iou", "accuracy", "precision", "recall", "specificity", "f1_score")


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def binary_mask(intervals, n_bins: int, time_bins_per_s: int) -> np.ndarray:
    """Bin t is set iff its center time (t + 0.5)/R lies in some interval."""
    mask = np.zeros(n_bins, dtype=bool)
    centers = (np.arange(n_bins, dtype=np.float64) + 0.5) / float(time_bins_per_s)
    for a, b in intervals:
        mask |= (a <= centers) & (centers < b)
    return mask


def confusion(pred_mask: np.ndarray, gt_mask: np.ndarray) -> ConfusionCounts:
    if len(pred_mask) != len(gt_mask):
        raise MaskLengthError(f"mask lengths differ: {len(pred_mask)} vs {len(gt_mask)}")
    p = np.asarray(pred_mask, dtype=bool)
    g = np.asarray(gt_mask, dtype=bool)
    return ConfusionCounts(
        tp=int((p & g).sum()),
        fp=int((p & ~g).sum()),
        tn=int((~p & ~g).sum()),
        fn=int((~p & g).sum()),
    )


def metrics_from_counts(c: ConfusionCounts) -> dict:
    accuracy = (c.tp + c.tn) / c.total if c.total else 0.0
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else 0.0
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else 0.0
    specificity = c.tn / (c.tn + c.fp) if (c.tn + c.fp) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return {
        "accuracy": accuracy,
        "precision": precision,
        "recall": recall,
        "specificity": specificity,
        "f1_score": f1,
    }


def classification_metrics(pred_mask: np.ndarray, gt_mask: np.ndarray) -> dict:
    return metrics_from_counts(confusion(pred_mask, gt_mask))


def _iou_1d(a_lo, a_hi, b_lo, b_hi) -> float:
    inter = min(a_hi, b_hi) - max(a_lo, b_lo)
    if inter <= 0:
        return 0.0
    union = (a_hi - a_lo) + (b_hi - b_lo) - inter
    return inter / union


def avg_event_iou(pred_intervals, gt_events) -> float:
    """Mean over ground-truth events of the best IoU any predicted
    interval achieves against that event; 0 when there are no events."""
    if not gt_events:
        return 0.0
    total = 0.0
    for e in gt_events:
        best = 0.0
        for a, b in pred_intervals:
            best = max(best, _iou_1d(a, b, e.start_s, e.end_s))
        total += best
    return total / len(gt_events)
