"""Evaluation metrics (accuracy, binary F1, rank-statistic AUC) and the
within-group vs between-group pairwise-correlation density analysis."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "MetricsReport",
    "CorrelationDensity",
    "accuracy",
    "f1_binary",
    "auc_roc",
    "pearson",
    "correlation_density",
]


@dataclass
class MetricsReport:
    accuracy: float
    f1: float
    auc: float
    n_samples: int
    positive_class: int = 1

    CSV_HEADER = "accuracy,f1,auc,n_samples,positive_class"

    def to_csv_row(self) -> str:
        return (
            f"{self.accuracy:.17g},{self.f1:.17g},{self.auc:.17g},"
            f"{self.n_samples},{self.positive_class}"
        )


def _check_lengths(predictions, labels):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ValueError("predictions and labels must be equal-length and non-empty")
    return predictions, labels


def accuracy(predictions, labels) -> float:
    predictions, labels = _check_lengths(predictions, labels)
    return float(np.mean(predictions == labels))


def f1_binary(predictions, labels, positive_class: int = 1) -> float:
    """2 P R / (P + R). Degenerate convention: 0 unless there are neither
    predicted nor actual positives, in which case 1."""
    predictions, labels = _check_lengths(predictions, labels)
    pred_pos = predictions == positive_class
    true_pos = labels == positive_class
    tp = int(np.sum(pred_pos & true_pos))
    if not pred_pos.any() and not true_pos.any():
        return 1.0
    if tp == 0:
        return 0.0
    precision = tp / pred_pos.sum()
    recall = tp / true_pos.sum()
    return float(2 * precision * recall / (precision + recall))


def auc_roc(scores, labels) -> float:
    """ROC AUC via the Mann-Whitney rank statistic; ties get half credit."""
    scores, labels = _check_lengths(np.asarray(scores, dtype=np.float64), labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC requires at least one positive and one negative label")
    ranks = rankdata(scores)  # average ranks handle ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        raise ValueError("zero-variance vector has undefined correlation")
    return float((xc * yc).sum() / denom)


@dataclass
class CorrelationDensity:
    within_group: list[float]
    between_group: list[float]
    bin_edges: np.ndarray
    within_counts: np.ndarray
    between_counts: np.ndarray
    skipped_pairs: int

    def density(self, group: str) -> np.ndarray:
        counts = self.within_counts if group == "within" else self.between_counts
        total = counts.sum()
        width = self.bin_edges[1] - self.bin_edges[0]
        if total == 0:
            return np.zeros_like(counts, dtype=np.float64)
        return counts / (total * width)

    def bin_centers(self) -> np.ndarray:
        return (self.bin_edges[:-1] + self.bin_edges[1:]) / 2.0


def correlation_density(samples, bins: int = 50) -> CorrelationDensity:
    """Pearson correlation for every unordered sample pair, routed to the
    within-group or between-group list by label equality."""
    labels = [s.label for s in samples]
    if any(l is None for l in labels):
        raise ValueError("correlation_density requires labeled samples")
    for cls in set(labels):
        if labels.count(cls) < 2:
            raise ValueError("need at least 2 samples per class")
    within: list[float] = []
    between: list[float] = []
    skipped = 0
    for a, b in combinations(samples, 2):
        try:
            rho = pearson(a.features, b.features)
        except ValueError:
            skipped += 1
            continue
        (within if a.label == b.label else between).append(rho)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    w_counts, _ = np.histogram(within, bins=edges)
    b_counts, _ = np.histogram(between, bins=edges)
    return CorrelationDensity(within, between, edges, w_counts, b_counts, skipped)
