"""Utility and fairness evaluation of anomaly scores.

AUC-ROC uses the rank statistic with half credit for ties, AUC-PR is
step-interpolated average precision with tied scores grouped into a single
threshold.  Scores turn into binary predictions by flagging the top-k nodes
at the assumed contamination rate; ties at the cutoff break by ascending
node id so evaluation is deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "EvalReport",
    "MetricError",
    "auc_roc",
    "auc_pr",
    "predict_labels",
    "delta_dp",
    "delta_eo",
    "evaluate",
]


class MetricError(ValueError):
    pass


def _scores_labels(scores, y):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if scores.shape != y.shape:
        raise MetricError("scores and labels must have equal length")
    return scores, y


def auc_roc(scores, y) -> float:
    """P(score of a random positive > score of a random negative), counting
    ties as half; identical to trapezoidal ROC integration."""
    scores, y = _scores_labels(scores, y)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("auc_roc needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_pr(scores, y) -> float:
    """Average precision over descending-score thresholds, tied scores
    grouped as one threshold."""
    scores, y = _scores_labels(scores, y)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("auc_pr needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_y = y[order]
    # last index of each tie group
    boundaries = np.flatnonzero(np.diff(sorted_scores) != 0)
    group_ends = np.concatenate([boundaries, [len(scores) - 1]])
    tp_cum = np.cumsum(sorted_y)[group_ends].astype(np.float64)
    counts = (group_ends + 1).astype(np.float64)
    precision = tp_cum / counts
    recall = tp_cum / n_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def predict_labels(scores, k: int) -> np.ndarray:
    """Flag exactly k nodes; cutoff ties break by ascending node id."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = len(scores)
    if not (0 <= k <= n):
        raise MetricError(f"k={k} out of range for {n} nodes")
    yhat = np.zeros(n, dtype=np.int64)
    if k:
        order = np.lexsort((np.arange(n), -scores))
        yhat[order[:k]] = 1
    return yhat


def _group_masks(s):
    s = np.asarray(s, dtype=np.int64).reshape(-1)
    return s == 0, s == 1


def delta_dp(yhat, s) -> float:
    """Absolute gap in positive-prediction rates between the groups."""
    yhat = np.asarray(yhat, dtype=np.int64).reshape(-1)
    m0, m1 = _group_masks(s)
    if not m0.any() or not m1.any():
        raise MetricError("delta_dp requires both sensitive groups to be nonempty")
    return float(abs(yhat[m0].mean() - yhat[m1].mean()))


def delta_eo(yhat, y, s) -> float:
    """Absolute gap in true positive rates between the groups, over true
    anomalies only; undefined when a group has no true anomalies."""
    yhat = np.asarray(yhat, dtype=np.int64).reshape(-1)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    m0, m1 = _group_masks(s)
    pos0 = m0 & (y == 1)
    pos1 = m1 & (y == 1)
    if not pos0.any() or not pos1.any():
        raise MetricError("delta_eo undefined: a group has no true anomalies")
    return float(abs(yhat[pos0].mean() - yhat[pos1].mean()))


@dataclass
class EvalReport:
    auc_roc: float
    auc_pr: float
    delta_dp: float
    delta_eo: float | None
    k_threshold: int
    n: int
    per_group: dict

    def to_flat_dict(self, seed=None) -> dict:
        return {
            "auc_roc": self.auc_roc,
            "auc_pr": self.auc_pr,
            "delta_dp": self.delta_dp,
            "delta_eo": self.delta_eo,
            "k": self.k_threshold,
            "n": self.n,
            "seed": seed,
        }

    def to_json(self, seed=None) -> str:
        return json.dumps(self.to_flat_dict(seed), indent=2, sort_keys=True)


def evaluate(scores, y, s, contamination: float | None = None) -> EvalReport:
    """All four metrics on one thresholding of the scores.

    ``contamination`` defaults to the true anomaly rate; ``delta_eo`` is
    reported as None (never silently 0) when undefined for these groups.
    """
    scores, y = _scores_labels(scores, y)
    s = np.asarray(s, dtype=np.int64).reshape(-1)
    n = len(scores)
    if contamination is None:
        contamination = float(y.mean())
    if not (0.0 <= contamination <= 1.0):
        raise MetricError("contamination must lie in [0, 1]")
    k = int(round(contamination * n))
    yhat = predict_labels(scores, k)
    try:
        eo = delta_eo(yhat, y, s)
    except MetricError:
        eo = None
    per_group = {}
    for val in (0, 1):
        mask = s == val
        per_group[val] = {
            "n": int(mask.sum()),
            "predicted": int(yhat[mask].sum()),
            "true": int(y[mask].sum()),
            "both": int((yhat[mask] & y[mask]).sum()),
        }
    return EvalReport(
        auc_roc=auc_roc(scores, y),
        auc_pr=auc_pr(scores, y),
        delta_dp=delta_dp(yhat, s),
        delta_eo=eo,
        k_threshold=k,
        n=n,
        per_group=per_group,
    )
