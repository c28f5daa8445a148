"""Ranking metrics for imbalanced binary scores.

ROC-AUC uses the Mann-Whitney rank formulation (ties count one half),
PR-AUC is step-wise average precision with equal scores processed as one
block, and filter-rate-at-recall picks the largest realizable threshold
that still hits the recall target. Every distinct score is a curve cut
point; nothing is binned or interpolated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .errors import EmptyInput, OneClass


@dataclass(frozen=True)
class ScoredSet:
    scores: tuple
    labels: tuple

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple]) -> "ScoredSet":
        scores = []
        labels = []
        for score, label in pairs:
            score = float(score)
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"score {score} outside [0, 1]")
            scores.append(score)
            labels.append(bool(label))
        return cls(scores=tuple(scores), labels=tuple(labels))

    @property
    def n_pos(self) -> int:
        return sum(self.labels)

    @property
    def n_neg(self) -> int:
        return len(self.labels) - self.n_pos


PairsLike = Union[ScoredSet, Iterable[tuple]]


def _as_arrays(pairs: PairsLike) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(pairs, ScoredSet):
        pairs = ScoredSet.from_pairs(pairs)
    if not pairs.scores:
        raise EmptyInput("no scored pairs")
    scores = np.asarray(pairs.scores, dtype=np.float64)
    labels = np.asarray(pairs.labels, dtype=bool)
    if labels.all() or not labels.any():
        raise OneClass("need at least one positive and one negative")
    return scores, labels


def roc_auc(pairs: PairsLike) -> float:
    """P(random positive outscores random negative), ties at one half."""
    scores, labels = _as_arrays(pairs)
    n = scores.shape[0]
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(n, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average 1-based rank
        i = j + 1
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _blocks(scores: np.ndarray, labels: np.ndarray):
    """Iterate distinct scores descending, yielding cumulative counts.

    Yields (threshold, tp, positives_and_negatives_at_or_above) after each
    tie block, i.e. the confusion counts for the rule "review score >= t".
    """
    order = np.argsort(-scores, kind="mergesort")
    tp = 0
    seen = 0
    n = scores.shape[0]
    i = 0
    while i < n:
        j = i
        threshold = scores[order[i]]
        while j + 1 < n and scores[order[j + 1]] == threshold:
            j += 1
        for k in range(i, j + 1):
            tp += int(labels[order[k]])
        seen = j + 1
        yield float(threshold), tp, seen
        i = j + 1


def pr_auc(pairs: PairsLike) -> float:
    """Average precision over descending-score cut points, block ties."""
    scores, labels = _as_arrays(pairs)
    n_pos = int(labels.sum())
    area = 0.0
    prev_recall = 0.0
    for _, tp, seen in _blocks(scores, labels):
        recall = tp / n_pos
        precision = tp / seen
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return float(area)


@dataclass(frozen=True)
class FilterRateResult:
    filter_rate: float
    achieved_recall: float
    threshold: float
    no_threshold: bool  # true when every edit must be reviewed to hit target

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.filter_rate, self.achieved_recall, self.threshold)


def filter_rate_at_recall(pairs: PairsLike, target_recall: float) -> FilterRateResult:
    """Largest threshold whose review set (score >= t) reaches the target.

    filter_rate is the fraction of all edits scoring below the threshold,
    i.e. the share of incoming edits patrollers skip. When even the top
    threshold reviews everything the filter rate is zero and the result is
    flagged.
    """
    if not 0.0 < target_recall <= 1.0:
        raise ValueError(f"target_recall must be in (0, 1], got {target_recall}")
    scores, labels = _as_arrays(pairs)
    n = scores.shape[0]
    n_pos = int(labels.sum())
    for threshold, tp, seen in _blocks(scores, labels):
        recall = tp / n_pos
        if recall >= target_recall:
            filter_rate = (n - seen) / n
            return FilterRateResult(
                filter_rate=float(filter_rate),
                achieved_recall=float(recall),
                threshold=float(threshold),
                no_threshold=filter_rate == 0.0,
            )
    # Unreachable: the lowest threshold reviews everything, recall 1.
    raise AssertionError("no threshold reached the target recall")


def max_recall_with_filter(pairs: PairsLike) -> float:
    """Highest recall still achievable with a nonzero filter rate.

    The default operating point for reports: push recall as far as possible
    before the threshold degenerates to reviewing every edit. Falls back to
    full recall when no threshold filters anything (constant scores).
    """
    scores, labels = _as_arrays(pairs)
    n = scores.shape[0]
    n_pos = int(labels.sum())
    best = 0.0
    for _, tp, seen in _blocks(scores, labels):
        if n - seen > 0:
            best = max(best, tp / n_pos)
    return best if best > 0.0 else 1.0


def pr_curve(pairs: PairsLike) -> list[tuple[float, float, float]]:
    """(recall, precision, threshold) rows, recall non-decreasing."""
    scores, labels = _as_arrays(pairs)
    n_pos = int(labels.sum())
    return [
        (tp / n_pos, tp / seen, threshold) for threshold, tp, seen in _blocks(scores, labels)
    ]


def filter_curve(pairs: PairsLike) -> list[tuple[float, float, float]]:
    """(recall, filter_rate, threshold) rows, recall non-decreasing."""
    scores, labels = _as_arrays(pairs)
    n = scores.shape[0]
    n_pos = int(labels.sum())
    return [
        (tp / n_pos, (n - seen) / n, threshold)
        for threshold, tp, seen in _blocks(scores, labels)
    ]


def roc_curve(pairs: PairsLike) -> list[tuple[float, float, float]]:
    """(false_positive_rate, true_positive_rate, threshold) rows."""
    scores, labels = _as_arrays(pairs)
    n = scores.shape[0]
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    return [
        ((seen - tp) / n_neg, tp / n_pos, threshold)
        for threshold, tp, seen in _blocks(scores, labels)
    ]
