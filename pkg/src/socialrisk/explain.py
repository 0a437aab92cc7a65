"""Coalition-game feature attributions on the margin (log-odds) scale.

The game is interventional: the value of coalition S for an explained row x
is the background-mean margin of hybrid rows that take columns in S from x
and the rest from the background row. Attributions satisfy efficiency:
base_value + sum(phi) equals the model margin for every explained row, and
that identity is asserted to 1e-8.

For trees the exact Shapley values come from a per-leaf closed form. Along a
root-to-leaf path, each feature where x and the background row diverge must
be taken either from x (weight (a-1)! c! / (a+c)!) or from the background
(weight -a! (c-1)! / (a+c)!), where a and c count the x-side and
background-side forced features; features that never diverge carry no
weight. The brute-force oracle enumerates all 2^p coalitions of the same
game and is kept as an independent second route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from socialrisk.models.gbdt import TreeEnsemble
from socialrisk.models.linear import LinearModel
from socialrisk.util import check_finite_matrix

EFFICIENCY_TOL = 1e-8
ORACLE_MAX_FEATURES = 15
DEFAULT_BACKGROUND_SIZE = 256


@dataclass
class Attribution:
    """Per-row, per-column attribution values on the margin scale."""

    values: np.ndarray
    base_value: float
    feature_names: list[str]
    scale: str = "margin"

    @property
    def n_features(self):
        return self.values.shape[1]

    def mean_abs(self):
        return np.mean(np.abs(self.values), axis=0)


def _names_for(model, p):
    names = getattr(model, "feature_names", None)
    if names is None:
        names = [f"x{j}" for j in range(p)]
    if len(names) != p:
        raise ValueError("feature_names length does not match matrix width")
    return list(names)


def _assert_efficiency(values, base, margins):
    total = base + values.sum(axis=1)
    gap = np.max(np.abs(total - margins))
    if gap > EFFICIENCY_TOL:
        raise AssertionError(
            f"attribution efficiency violated: max gap {gap:.3g} > {EFFICIENCY_TOL:g}"
        )


def choose_background(x, size=DEFAULT_BACKGROUND_SIZE, seed=0):
    """Fixed-seed background sample of the training matrix."""
    x = check_finite_matrix(x, "background source")
    if x.shape[0] <= size:
        return x.copy()
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(x.shape[0], size=size, replace=False))
    return x[idx]


def shap_linear(model: LinearModel, x, background):
    """phi_j = w_j * (x_j - background mean_j); exact for linear margins."""
    x = check_finite_matrix(x, "explained matrix")
    background = check_finite_matrix(background, "background")
    mu = background.mean(axis=0)
    values = model.weights[None, :] * (x - mu[None, :])
    base = float(mu @ model.weights + model.intercept)
    _assert_efficiency(values, base, model.predict_margin(x))
    return Attribution(
        values=values, base_value=base, feature_names=_names_for(model, x.shape[1])
    )


def _leaf_paths(tree):
    """(value, feats, thresholds, go_left) per leaf, DFS order."""
    out = []
    stack = [(0, [], [], [])]
    while stack:
        node, feats, thrs, dirs = stack.pop()
        f = tree.feature[node]
        if f < 0:
            out.append(
                (
                    float(tree.value[node]),
                    np.asarray(feats, dtype=np.int64),
                    np.asarray(thrs, dtype=np.float64),
                    np.asarray(dirs, dtype=bool),
                )
            )
        else:
            t = tree.threshold[node]
            stack.append((tree.right[node], feats + [f], thrs + [t], dirs + [False]))
            stack.append((tree.left[node], feats + [f], thrs + [t], dirs + [True]))
    return out


def _weight_table(max_players):
    w = np.zeros((max_players + 1, max_players + 1))
    for i in range(max_players + 1):
        for j in range(max_players + 1):
            w[i, j] = (
                math.factorial(i) * math.factorial(j) / math.factorial(i + j + 1)
            )
    return w


def _feature_side_ok(matrix, feats, thrs, dirs):
    """Per row and per distinct path feature: does this source satisfy every
    constraint the path places on that feature?"""
    sat = (matrix[:, feats] < thrs[None, :]) == dirs[None, :]
    uniq, inverse = np.unique(feats, return_inverse=True)
    ok = np.ones((matrix.shape[0], uniq.size), dtype=bool)
    for pos in range(uniq.size):
        cols = inverse == pos
        ok[:, pos] = sat[:, cols].all(axis=1)
    return uniq, ok


def shap_tree(ensemble: TreeEnsemble, x, background):
    """Exact interventional Shapley values for a boosted-tree ensemble."""
    x = check_finite_matrix(x, "explained matrix")
    background = check_finite_matrix(background, "background")
    if background.shape[1] != x.shape[1]:
        raise ValueError("background width does not match explained matrix")
    n, p = x.shape
    n_bg = background.shape[0]
    depth_cap = max(1, ensemble.params.max_depth)
    wtab = _weight_table(2 * depth_cap + 1)
    # Leaf weights are stored unscaled; the margin applies the learning rate.
    eta = ensemble.params.learning_rate

    values = np.zeros((n, p))
    # Keep the row x background x path-feature block around a few million
    # entries so memory stays flat on large explanation batches.
    chunk = max(1, int(4_000_000 / max(1, n_bg * depth_cap)))

    for tree in ensemble.trees:
        for leaf_value, feats, thrs, dirs in _leaf_paths(tree):
            if feats.size == 0:
                continue  # root-leaf tree: constant, no feature credit
            uniq, ok_bg = _feature_side_ok(background, feats, thrs, dirs)
            for start in range(0, n, chunk):
                rows = slice(start, min(start + chunk, n))
                _, ok_x = _feature_side_ok(x[rows], feats, thrs, dirs)
                need_x = ok_x[:, None, :] & ~ok_bg[None, :, :]
                need_bg = ~ok_x[:, None, :] & ok_bg[None, :, :]
                dead = ~ok_x[:, None, :] & ~ok_bg[None, :, :]
                reach = ~dead.any(axis=2)
                a = need_x.sum(axis=2)
                c = need_bg.sum(axis=2)
                wa = wtab[np.maximum(a - 1, 0), c]
                wc = wtab[a, np.maximum(c - 1, 0)]
                for pos, col in enumerate(uniq):
                    plus = (need_x[:, :, pos] & reach) * wa
                    minus = (need_bg[:, :, pos] & reach) * wc
                    values[rows, col] += eta * leaf_value / n_bg * (
                        plus.sum(axis=1) - minus.sum(axis=1)
                    )

    base = float(np.mean(ensemble.predict_margin(background)))
    _assert_efficiency(values, base, ensemble.predict_margin(x))
    return Attribution(values=values, base_value=base, feature_names=_names_for(ensemble, p))


def shap_exact_oracle(margin_fn, x, background, max_features=ORACLE_MAX_FEATURES):
    """Brute-force Shapley values of the interventional game.

    Enumerates all 2^p coalitions; refuses more than `max_features` columns.
    `margin_fn` maps a matrix to margins. This is the slow second route used
    to verify the closed-form explainers; do not optimize it.
    """
    x = check_finite_matrix(x, "explained matrix")
    background = check_finite_matrix(background, "background")
    n, p = x.shape
    if p > max_features:
        raise ValueError(
            f"{p} features exceeds the {max_features}-column oracle limit"
        )

    subsets = 1 << p
    weights = np.array(
        [
            math.factorial(s) * math.factorial(p - s - 1) / math.factorial(p)
            for s in range(p)
        ]
    )
    values = np.zeros((n, p))
    base = float(np.mean(margin_fn(background)))
    for r in range(n):
        v = np.empty(subsets)
        for mask in range(subsets):
            hybrid = background.copy()
            for j in range(p):
                if mask >> j & 1:
                    hybrid[:, j] = x[r, j]
            v[mask] = np.mean(margin_fn(hybrid))
        for j in range(p):
            bit = 1 << j
            for mask in range(subsets):
                if mask & bit:
                    continue
                size = bin(mask).count("1")
                values[r, j] += weights[size] * (v[mask | bit] - v[mask])
    return Attribution(
        values=values,
        base_value=base,
        feature_names=[f"x{j}" for j in range(p)],
    )


def rank_features(attr: Attribution, top_k=None):
    """(name, mean |phi|) pairs, descending; stable on ties by column order."""
    scores = attr.mean_abs()
    order = np.argsort(-scores, kind="stable")
    ranked = [(attr.feature_names[i], float(scores[i])) for i in order]
    return ranked if top_k is None else ranked[:top_k]


@dataclass
class ComboScore:
    members: tuple
    mean_abs: float
    mean_score: float
    per_row: np.ndarray


def combination_attribution(attr: Attribution, combos, order="mean_abs"):
    """Score feature sets by the per-row sum of member attributions.

    Each combination gets a mean absolute combined attribution and a signed
    mean. `order` picks the ranking key: "mean_abs" (default, largest first)
    or "mean" (most positive first). Unknown or repeated member names are an
    error.
    """
    if order not in ("mean_abs", "mean"):
        raise ValueError(f"order must be 'mean_abs' or 'mean', got {order!r}")
    index = {name: i for i, name in enumerate(attr.feature_names)}
    out = []
    for combo in combos:
        members = tuple(combo)
        if len(set(members)) != len(members):
            raise ValueError(f"combination has repeated members: {members}")
        missing = [m for m in members if m not in index]
        if missing:
            raise ValueError(f"unknown feature names in combination: {missing}")
        cols = [index[m] for m in members]
        per_row = attr.values[:, cols].sum(axis=1)
        out.append(
            ComboScore(
                members=members,
                mean_abs=float(np.mean(np.abs(per_row))),
                mean_score=float(np.mean(per_row)),
                per_row=per_row,
            )
        )
    if order == "mean_abs":
        out.sort(key=lambda c: (-c.mean_abs, c.members))
    else:
        out.sort(key=lambda c: (-c.mean_score, c.members))
    return out
