"""Classification metrics: per-class precision, macro/micro averages, AP/mAP.

Definitions are fixed here for all in-repo comparisons: precision at argmax
decisions, micro as pooled TP/(TP+FP) (identical to accuracy for
single-label argmax predictions), and AP as the area under the
max-interpolated precision-recall curve over records ranked by the class
score. Classes absent from the ground truth are excluded from macro and
mAP denominators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np


@dataclass(frozen=True)
class PredictionRecord:
    class_scores: np.ndarray
    predicted: int
    gt: int
    sample_id: int = 0
    frame_id: int = 0

    @classmethod
    def from_scores(cls, scores: Sequence[float], gt: int, sample_id: int = 0, frame_id: int = 0) -> "PredictionRecord":
        scores = np.asarray(scores, dtype=np.float64)
        if abs(scores.sum() - 1.0) > 1e-6:
            raise ValueError("class_scores must sum to 1")
        return cls(scores, int(np.argmax(scores)), int(gt), sample_id, frame_id)


@dataclass
class ClassMetrics:
    precision: float
    ap: float
    support: int
    predicted_count: int
    no_predictions: bool


@dataclass
class MetricsReport:
    macro_avg_precision: float
    micro_avg_precision: float
    map: float
    per_class: Dict[int, ClassMetrics] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "macro_avg_precision": self.macro_avg_precision,
            "micro_avg_precision": self.micro_avg_precision,
            "map": self.map,
            "per_class": {
                str(c): {
                    "precision": m.precision,
                    "ap": m.ap,
                    "support": m.support,
                    "predicted_count": m.predicted_count,
                    "no_predictions": m.no_predictions,
                }
                for c, m in self.per_class.items()
            },
        }


def average_precision(scores: np.ndarray, positives: np.ndarray, order_keys: np.ndarray) -> float:
    """AP over records ranked by score (desc), ties broken by stable record id.

    Uses the standard interpolation: precision at each recall level is the
    maximum precision at that or any higher recall.
    """
    n_pos = int(positives.sum())
    if n_pos == 0:
        return 0.0
    order = np.lexsort((order_keys, -scores))
    hits = positives[order].astype(np.float64)
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    recall = tp / n_pos
    interp = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_recall = 0.0
    for i in range(len(hits)):
        if hits[i]:
            ap += (recall[i] - prev_recall) * interp[i]
            prev_recall = recall[i]
    return float(ap)


def compute_metrics(records: Sequence[PredictionRecord], n_classes: int) -> MetricsReport:
    """Metrics over argmax predictions and ranked scores; order-invariant."""
    if not records:
        raise ValueError("compute_metrics needs at least one record")
    for r in records:
        if len(r.class_scores) != n_classes:
            raise ValueError(f"record score length {len(r.class_scores)} != n_classes {n_classes}")
        if not 0 <= r.gt < n_classes:
            raise ValueError("gt index out of range")

    gt = np.array([r.gt for r in records])
    pred = np.array([r.predicted for r in records])
    scores = np.stack([r.class_scores for r in records])
    # stable permutation-invariant tie-break for ranking
    order_keys = np.array([r.sample_id * 1_000_003 + r.frame_id for r in records], dtype=np.int64)

    per_class: Dict[int, ClassMetrics] = {}
    supported = []
    for c in range(n_classes):
        support = int((gt == c).sum())
        predicted_count = int((pred == c).sum())
        tp = int(((pred == c) & (gt == c)).sum())
        precision = tp / predicted_count if predicted_count else 0.0
        ap = average_precision(scores[:, c], gt == c, order_keys)
        per_class[c] = ClassMetrics(precision, ap, support, predicted_count, predicted_count == 0)
        if support > 0:
            supported.append(c)

    macro = float(np.mean([per_class[c].precision for c in supported])) if supported else 0.0
    micro = float((pred == gt).mean())  # pooled TP/(TP+FP) == accuracy at argmax
    mean_ap = float(np.mean([per_class[c].ap for c in supported])) if supported else 0.0
    return MetricsReport(macro, micro, mean_ap, per_class)
