"""Probabilistic classification metrics: log loss, Brier score, AUC,
reliability (calibration) tables.

Predictions are clamped to [CLAMP, 1 - CLAMP] before the log loss so it
stays finite; the clamp value is reported alongside results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLAMP = 1e-6


def clamp_probs(p: np.ndarray) -> np.ndarray:
    return np.clip(p, CLAMP, 1.0 - CLAMP)


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    """Mean negative log likelihood of binary labels."""
    y = np.asarray(y, dtype=np.float64)
    p = clamp_probs(np.asarray(p, dtype=np.float64))
    if len(y) == 0:
        raise ValueError("log_loss of empty input")
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def brier_score(y: np.ndarray, p: np.ndarray) -> float:
    """Mean squared error between labels and predicted probabilities."""
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("brier_score of empty input")
    return float(np.mean((p - y) ** 2))


def accuracy(y: np.ndarray, p: np.ndarray, threshold: float = 0.5) -> float:
    y = np.asarray(y)
    p = np.asarray(p)
    if len(y) == 0:
        raise ValueError("accuracy of empty input")
    return float(np.mean((p >= threshold) == (y == 1)))


def auc(y: np.ndarray, p: np.ndarray) -> float:
    """Area under the ROC curve via the rank statistic.

    Tied predictions contribute half credit per pair (midranks), so a
    constant predictor scores exactly 0.5. Invariant under any strictly
    monotone transform of the predictions.
    """
    y = np.asarray(y, dtype=np.int8)
    p = np.asarray(p, dtype=np.float64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined with a single label class")
    ranks = _midranks(p)
    rank_sum = float(ranks[y == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def _midranks(p: np.ndarray) -> np.ndarray:
    order = np.argsort(p, kind="mergesort")
    ranks = np.empty(len(p), dtype=np.float64)
    sorted_p = p[order]
    n = len(p)
    # Average the 1-based ranks across each tie group.
    boundaries = np.flatnonzero(np.diff(sorted_p)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + 1 + e) / 2.0
    return ranks


@dataclass(frozen=True)
class CalibrationBin:
    bin_index: int
    mean_predicted: float
    mean_observed: float
    count: int


def calibration_table(y: np.ndarray, p: np.ndarray, n_bins: int = 100
                      ) -> list[CalibrationBin]:
    """Reliability table over equal-width prediction bins on [0, 1].

    Empty bins are omitted. A prediction of exactly 1.0 falls in the top
    bin.
    """
    if n_bins < 2:
        raise ValueError("calibration needs at least 2 bins")
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    idx = np.minimum((p * n_bins).astype(np.int64), n_bins - 1)
    out = []
    counts = np.bincount(idx, minlength=n_bins)
    sum_p = np.bincount(idx, weights=p, minlength=n_bins)
    sum_y = np.bincount(idx, weights=y, minlength=n_bins)
    for b in range(n_bins):
        c = int(counts[b])
        if c == 0:
            continue
        out.append(CalibrationBin(
            bin_index=b,
            mean_predicted=float(sum_p[b] / c),
            mean_observed=float(sum_y[b] / c),
            count=c,
        ))
    return out
