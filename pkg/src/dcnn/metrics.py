"""Classification metrics for probability scores: accuracy at the 0.5
threshold, auROC (rank form), and auPRC (average precision).

A metric that is mathematically undefined for the given labels — auROC
with a single class, auPRC with no positives — is reported as None, so
callers can surface "undefined" instead of propagating NaN.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def _as_arrays(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ValidationError(
            f"scores shape {scores.shape} and labels shape {labels.shape} "
            f"must be equal 1-D"
        )
    if scores.shape[0] == 0:
        raise ValidationError("metrics need at least one sample")
    if not np.isin(labels, (0, 1)).all():
        raise ValidationError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def accuracy(scores, labels) -> float:
    """Fraction predicted correctly at threshold 0.5; a score exactly at
    the threshold classifies as negative, keeping the rule deterministic."""
    scores, labels = _as_arrays(scores, labels)
    predicted = (scores > 0.5).astype(np.int64)
    return float((predicted == labels).mean())


def auroc(scores, labels):
    """Probability that a random positive outranks a random negative,
    ties counting 1/2 (Mann-Whitney / rank formulation); None if only
    one class is present."""
    scores, labels = _as_arrays(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    # midranks: average 1-based rank within each tie block
    ranks = np.empty(scores.shape[0], dtype=np.float64)
    i = 0
    while i < sorted_scores.shape[0]:
        j = i
        while j + 1 < sorted_scores.shape[0] and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    rank_sum_pos = float(ranks[labels == 1].sum())
    u_statistic = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u_statistic / (n_pos * n_neg)


def auprc(scores, labels):
    """Average precision: sum over descending-score prefixes of
    (recall increment x precision), tied scores processed as one block;
    None if there are no positives."""
    scores, labels = _as_arrays(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels)
    taken = np.arange(1, labels.shape[0] + 1)
    # prefix boundaries: last index of each tied block
    is_block_end = np.ones(labels.shape[0], dtype=bool)
    is_block_end[:-1] = sorted_scores[:-1] != sorted_scores[1:]
    total = 0.0
    prev_recall = 0.0
    for k in np.nonzero(is_block_end)[0]:
        precision = tp[k] / taken[k]
        recall = tp[k] / n_pos
        total += (recall - prev_recall) * precision
        prev_recall = recall
    return float(total)
