"""AUROC and AUPR with outliers as the positive class.

``anomaly_score`` follows the convention "higher means more anomalous"; feed
it ``-S(x)`` when ranking with the pipeline's normality scores.

AUROC is the Mann-Whitney statistic from tie-averaged ranks, so tied pairs
count one half. AUPR is step-interpolated (average precision): the scores are
swept in decreasing order, each group of equal scores is admitted at once, and
the area adds ``(recall_i - recall_{i-1}) * precision_i`` per group.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from rpad.errors import ConfigurationError, UndefinedMetricError


def _validate(anomaly_score, is_outlier) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(anomaly_score, dtype=np.float64).ravel()
    y = np.asarray(is_outlier).astype(bool).ravel()
    if s.shape != y.shape:
        raise ConfigurationError(f"scores ({s.size}) and labels ({y.size}) differ in length")
    if not np.all(np.isfinite(s)):
        raise ConfigurationError("scores must be finite")
    if y.all() or not y.any():
        raise UndefinedMetricError("both outliers and inliers are needed")
    return s, y


def auroc(anomaly_score, is_outlier) -> float:
    s, y = _validate(anomaly_score, is_outlier)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(anomaly_score, is_outlier) -> float:
    s, y = _validate(anomaly_score, is_outlier)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    tp = np.cumsum(y[order])
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tp_at = tp[ends].astype(np.float64)
    precision = tp_at / (ends + 1)
    recall = tp_at / tp[-1]
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
