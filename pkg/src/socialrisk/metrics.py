"""Rank-based discrimination metrics with no model dependencies.

AUROC follows the pairwise definition: (concordant + 0.5 * tied) pairs over
(positives * negatives). The implementation uses tie-averaged ranks, which is
algebraically the same quantity.
"""

from __future__ import annotations

import numpy as np

from socialrisk.util import check_binary_labels


def tie_averaged_ranks(values):
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    n = values.shape[0]
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        # ranks are 1-based; tied scores share the average rank of the block
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels):
    """Area under the ROC curve with half credit for tied pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite values")
    labels = check_binary_labels(labels)
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    ranks = tie_averaged_ranks(scores)
    rank_sum = float(ranks[labels == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_points(scores, labels):
    """(threshold, fpr, tpr) rows at every distinct score, descending."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = check_binary_labels(labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    tps = np.cumsum(y)
    fps = np.cumsum(1.0 - y)
    distinct = np.r_[s[1:] != s[:-1], True]
    n_pos = tps[-1]
    n_neg = fps[-1]
    rows = [(np.inf, 0.0, 0.0)]
    for i in np.flatnonzero(distinct):
        rows.append((float(s[i]), float(fps[i] / n_neg), float(tps[i] / n_pos)))
    return rows
