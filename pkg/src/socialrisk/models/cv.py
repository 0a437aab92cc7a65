"""Stratified k-fold grid search over linear and boosted-tree candidates.

The folds are fixed by the seed and shared by every grid point, so candidate
scores are comparable. Mean-AUROC ties break toward the larger total penalty,
then fewer boosting rounds, then the lexicographically smallest parameter
set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from socialrisk.metrics import auroc
from socialrisk.models.gbdt import GBDTParams, fit_gbdt
from socialrisk.models.linear import fit_penalized_logistic
from socialrisk.util import check_binary_labels

_GBDT_KEYS = {
    "max_depth",
    "learning_rate",
    "reg_lambda",
    "gamma",
    "min_child_weight",
    "subsample",
    "colsample",
    "max_rounds",
    "early_stopping_patience",
}


def stratified_kfold(labels, k, seed):
    """Fold ids (0..k-1) with per-class counts balanced within one patient."""
    labels = check_binary_labels(labels)
    if k < 2:
        raise ValueError("need at least 2 folds")
    n = labels.shape[0]
    if min(int(labels.sum()), int(n - labels.sum())) < k:
        raise ValueError(
            f"the rarer class has fewer than k={k} members; use fewer folds"
        )
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        folds[idx] = np.arange(idx.size) % k
    return folds


def _fit_candidate(params, x_tr, y_tr, x_va, y_va, base_seed):
    family = params.get("family")
    if family == "linear":
        model = fit_penalized_logistic(
            x_tr, y_tr, l1=params.get("l1", 0.0), l2=params.get("l2", 0.0)
        )
        return model.predict_margin(x_va), 0
    if family == "gbdt":
        kwargs = {k: v for k, v in params.items() if k in _GBDT_KEYS}
        gp = GBDTParams(seed=base_seed, **kwargs)
        model = fit_gbdt(x_tr, y_tr, gp, validation=(x_va, y_va))
        return model.predict_margin(x_va), len(model.trees)
    raise ValueError(f"unknown model family: {family!r}")


def _total_penalty(params):
    if params.get("family") == "linear":
        return params.get("l1", 0.0) + params.get("l2", 0.0)
    return params.get("reg_lambda", 1.0) + params.get("gamma", 0.0)


@dataclass
class CVResult:
    params: dict
    fold_aucs: list[float]
    mean_auc: float
    rounds: int


SELECTION_RULE = (
    "highest mean fold AUROC; ties to the larger total penalty, then fewer "
    "boosting rounds, then the lexicographically smallest parameter set"
)


@dataclass
class CVSelection:
    results: list[CVResult]
    best_index: int
    folds: np.ndarray = field(repr=False)
    selection_rule: str = SELECTION_RULE

    @property
    def best_params(self):
        return self.results[self.best_index].params


def grid_search_cv(x, y, grid, k=5, seed=0):
    """Score every grid point with the same stratified folds; pick the best.

    Each point is a dict with a "family" key ("linear" or "gbdt") plus that
    family's hyperparameters. Returns a CVSelection; the caller refits the
    winning point on the full training data.
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    folds = stratified_kfold(y, k, seed)
    y = np.asarray(y, dtype=np.float64)

    results = []
    for params in grid:
        fold_aucs = []
        rounds = []
        for f in range(k):
            va = folds == f
            tr = ~va
            margins, used = _fit_candidate(
                params, x[tr], y[tr], x[va], y[va], base_seed=seed + f
            )
            fold_aucs.append(auroc(margins, y[va]))
            rounds.append(used)
        results.append(
            CVResult(
                params=dict(params),
                fold_aucs=fold_aucs,
                mean_auc=float(np.mean(fold_aucs)),
                rounds=int(max(rounds)),
            )
        )

    def sort_key(i):
        r = results[i]
        return (
            -r.mean_auc,
            -_total_penalty(r.params),
            r.rounds,
            json.dumps(r.params, sort_keys=True),
        )

    best = min(range(len(results)), key=sort_key)
    return CVSelection(results=results, best_index=best, folds=folds)
