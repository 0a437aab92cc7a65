"""Second-order gradient-boosted trees for binary outcomes.

Each round fits one regression tree to the Newton statistics of the logistic
loss (g = p - y, h = p(1-p)) by exact greedy split search. Split quality is

    gain = 1/2 * [ G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda)
                   - (G_L+G_R)^2/(H_L+H_R+lambda) ]

and a node is split only when that gain is at least gamma (and positive).
Leaf weights are stored unscaled as -G/(H+lambda); the learning rate scales
them at prediction time, so the margin is base_score + eta * sum(leaf
weights). Routing sends a row left iff its value is strictly below the
threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from socialrisk.metrics import auroc
from socialrisk.util import (
    check_binary_labels,
    check_finite_matrix,
    clamp_proba,
    logit,
    sigmoid,
)


@dataclass
class GBDTParams:
    max_depth: int = 3
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    subsample: float = 1.0
    colsample: float = 1.0
    max_rounds: int = 200
    early_stopping_patience: int = 20
    seed: int = 0

    def validate(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ValueError("reg_lambda, gamma, min_child_weight must be >= 0")
        if not 0.0 < self.subsample <= 1.0 or not 0.0 < self.colsample <= 1.0:
            raise ValueError("subsample and colsample must be in (0, 1]")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")


@dataclass
class Tree:
    """Preorder node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    def predict(self, x):
        node = np.zeros(x.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = np.flatnonzero(feat >= 0)
            if active.size == 0:
                break
            cur = node[active]
            go_left = x[active, self.feature[cur]] < self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]


@dataclass
class TreeEnsemble:
    trees: list[Tree]
    base_score: float
    params: GBDTParams
    best_round: int | None = None
    val_history: list[float] = field(default_factory=list)
    feature_names: list[str] | None = None

    def predict_margin(self, x):
        x = check_finite_matrix(x, "feature matrix")
        margin = np.full(x.shape[0], self.base_score)
        for tree in self.trees:
            margin += self.params.learning_rate * tree.predict(x)
        return margin

    def predict_proba(self, x):
        return clamp_proba(sigmoid(self.predict_margin(x)))


class _TreeBuilder:
    def __init__(self, x, grad, hess, params, columns):
        self.x = x
        self.grad = grad
        self.hess = hess
        self.p = params
        self.columns = columns
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.gain = []

    def _best_split(self, rows):
        best = None  # (gain, col, threshold, left_rows, right_rows)
        g_tot = float(self.grad[rows].sum())
        h_tot = float(self.hess[rows].sum())
        lam = self.p.reg_lambda
        parent_term = g_tot * g_tot / (h_tot + lam)
        for j in self.columns:
            vals = self.x[rows, j]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            if sv[0] == sv[-1]:
                continue
            gs = np.cumsum(self.grad[rows][order])[:-1]
            hs = np.cumsum(self.hess[rows][order])[:-1]
            distinct = sv[:-1] < sv[1:]
            hl = hs
            hr = h_tot - hs
            ok = distinct & (hl >= self.p.min_child_weight) & (hr >= self.p.min_child_weight)
            if not ok.any():
                continue
            gl = gs
            gr = g_tot - gs
            with np.errstate(divide="ignore", invalid="ignore"):
                gains = 0.5 * (
                    gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_term
                )
            gains[~ok] = -np.inf
            mid = 0.5 * (sv[:-1] + sv[1:])
            # A midpoint that rounds onto the lower value would misroute it.
            gains[mid <= sv[:-1]] = -np.inf
            k = int(np.argmax(gains))
            if gains[k] == -np.inf:
                continue
            if best is None or gains[k] > best[0]:
                cut = float(mid[k])
                left_rows = rows[vals < cut]
                right_rows = rows[vals >= cut]
                best = (float(gains[k]), j, cut, left_rows, right_rows)
        return best

    def _new_node(self):
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        self.gain.append(np.nan)
        return len(self.feature) - 1

    def build(self, rows, depth=0):
        node = self._new_node()
        split = None
        if depth < self.p.max_depth and rows.size >= 2:
            split = self._best_split(rows)
            if split is not None and not (split[0] >= self.p.gamma and split[0] > 0.0):
                split = None
        if split is None:
            g = float(self.grad[rows].sum())
            h = float(self.hess[rows].sum())
            self.value[node] = -g / (h + self.p.reg_lambda)
            return node
        gain, col, cut, left_rows, right_rows = split
        self.feature[node] = col
        self.threshold[node] = cut
        self.gain[node] = gain
        self.left[node] = self.build(left_rows, depth + 1)
        self.right[node] = self.build(right_rows, depth + 1)
        return node

    def to_tree(self):
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
            gain=np.asarray(self.gain, dtype=np.float64),
        )


def fit_gbdt(x, y, params=None, validation=None, feature_names=None):
    """Boost trees with optional early stopping on validation AUROC.

    Args:
        x: (n, p) training matrix.
        y: 0/1 labels, both classes present.
        params: GBDTParams; defaults applied when None.
        validation: optional (x_val, y_val) used for early stopping. The
            kept rounds are truncated to the AUROC-best round.
        feature_names: carried on the ensemble.

    Returns:
        TreeEnsemble.
    """
    params = params or GBDTParams()
    params.validate()
    x = check_finite_matrix(x, "feature matrix")
    y = check_binary_labels(y)
    if x.shape[0] != y.shape[0]:
        raise ValueError("row count mismatch between matrix and labels")

    n, p = x.shape
    rng = np.random.default_rng(params.seed)
    base = float(logit(np.mean(y)))
    margin = np.full(n, base)

    x_val = y_val = margin_val = None
    if validation is not None:
        x_val = check_finite_matrix(validation[0], "validation matrix")
        if np.unique(np.asarray(validation[1])).size < 2:
            raise ValueError(
                "validation labels are single-class; AUROC early stopping "
                "is impossible"
            )
        y_val = check_binary_labels(validation[1], "validation labels")
        margin_val = np.full(x_val.shape[0], base)

    trees: list[Tree] = []
    history: list[float] = []
    best_auc = -np.inf
    best_round = None

    for _ in range(params.max_rounds):
        prob = sigmoid(margin)
        grad = prob - y
        hess = prob * (1.0 - prob)

        if params.subsample < 1.0:
            size = max(1, int(np.floor(params.subsample * n)))
            rows = np.sort(rng.choice(n, size=size, replace=False))
        else:
            rows = np.arange(n)
        if params.colsample < 1.0:
            k = max(1, int(np.floor(params.colsample * p)))
            cols = np.sort(rng.choice(p, size=k, replace=False))
        else:
            cols = np.arange(p)

        builder = _TreeBuilder(x, grad, hess, params, cols)
        builder.build(rows)
        tree = builder.to_tree()
        trees.append(tree)
        margin += params.learning_rate * tree.predict(x)

        if validation is not None:
            margin_val += params.learning_rate * tree.predict(x_val)
            auc = auroc(margin_val, y_val)
            history.append(auc)
            if auc > best_auc + 1e-12:
                best_auc = auc
                best_round = len(trees) - 1
            elif len(trees) - 1 - (best_round if best_round is not None else 0) >= params.early_stopping_patience:
                break

    if validation is not None and best_round is not None:
        trees = trees[: best_round + 1]

    return TreeEnsemble(
        trees=trees,
        base_score=base,
        params=params,
        best_round=best_round,
        val_history=history,
        feature_names=list(feature_names) if feature_names is not None else None,
    )
