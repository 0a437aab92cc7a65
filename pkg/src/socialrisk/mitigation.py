"""Bias mitigation: feature repair, adversarial training, score equalization.

Three strategies at three points in the pipeline. Feature repair rewrites a
continuous column before training so its within-group distributions agree.
Adversarial training penalizes a linear predictor when a small adversary
can read group membership off its margins. Score equalization post-hoc
mixes the cheaper group's scores toward a trivial prediction until the
generalized miss rates match.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from socialrisk.metrics import tie_averaged_ranks
from socialrisk.models.linear import LinearModel
from socialrisk.util import check_binary_labels, check_finite_matrix, sigmoid

PROJECTION_EPS = 1e-12


def repair_column(values, groups, repair_level):
    """Blend a column toward the cross-group common quantile function.

    Each value maps to its within-group quantile u (tie-averaged midrank
    over the group size) and is pulled toward the unweighted mean of the
    group quantile functions at u. repair_level 0 returns the input copied
    bit for bit; 1 removes all group signal the ranks can see. Groups with
    fewer than two rows pass through untouched and do not shape the target.
    """
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups)
    if values.ndim != 1 or values.shape != groups.shape:
        raise ValueError("values and groups must be matching 1-d arrays")
    if not 0.0 <= repair_level <= 1.0:
        raise ValueError(f"repair_level {repair_level} outside [0, 1]")
    out = values.copy()
    if repair_level == 0.0:
        return out

    labels = sorted(set(groups.tolist()), key=str)
    usable = []
    for g in labels:
        idx = np.flatnonzero(groups == g)
        if idx.size < 2:
            warnings.warn(
                f"group {g!r} has {idx.size} row(s); passed through unrepaired",
                RuntimeWarning,
                stacklevel=2,
            )
        else:
            usable.append((g, idx))
    if not usable:
        raise ValueError("no group has the two rows repair needs")
    if len(usable) == 1:
        # The common quantile function is the lone group's own inverse CDF,
        # so repair is the identity; skip the float round trip.
        return out

    grids = {}
    for g, idx in usable:
        sorted_vals = np.sort(values[idx])
        n = idx.size
        grids[g] = ((np.arange(1, n + 1) - 0.5) / n, sorted_vals)

    def common_quantile(u):
        return np.mean(
            [np.interp(u, grid, vals) for grid, vals in grids.values()], axis=0
        )

    for g, idx in usable:
        n = idx.size
        u = (tie_averaged_ranks(values[idx]) - 0.5) / n
        out[idx] = (1.0 - repair_level) * values[idx] + repair_level * common_quantile(u)
    return out


def mitigate_dir(matrix, groups, repair_level):
    """Quantile-repair every continuous column of a feature matrix.

    One-hot columns pass through untouched; all column metadata is carried
    over. repair_level 0 returns a bit-exact copy of the values.
    """
    values = matrix.values.copy()
    if repair_level != 0.0:
        for j, col in enumerate(matrix.columns):
            if col.kind == "continuous":
                values[:, j] = repair_column(matrix.values[:, j], groups, repair_level)
    return replace(matrix, values=values)


@dataclass
class AdversarialResult:
    model: LinearModel
    adversary_slope: float
    adversary_label_slope: float
    adversary_intercept: float
    final_pred_loss: float
    final_adv_loss: float


def _logloss(margins, targets):
    return float(np.mean(np.logaddexp(0.0, margins) - targets * margins))


def mitigate_adversarial(
    x,
    y,
    protected,
    adversary_weight=1.0,
    steps=500,
    learning_rate=0.5,
    adversary_learning_rate=0.5,
    adversary_sees_label=False,
    seed=0,
):
    """Gradient-descent logistic predictor trained against an adversary.

    The adversary is a logistic model reading group membership from the
    predictor margin (plus the true label when adversary_sees_label is on,
    which shifts the pressure from overall parity to within-class parity).
    Each full-batch step moves the predictor along its own gradient minus
    both the component the adversary's gradient explains and an
    `adversary_weight` multiple of that gradient. A zero adversary_weight
    skips the adversary entirely, which makes the run identical to plain
    gradient descent.
    """
    x = check_finite_matrix(x, "design")
    y = check_binary_labels(np.asarray(y, dtype=float))
    protected = np.asarray(protected, dtype=float)
    if protected.shape != y.shape:
        raise ValueError("protected mask must align with labels")
    if not np.isin(np.unique(protected), (0.0, 1.0)).all():
        raise ValueError("protected must be a 0/1 group indicator")
    if adversary_weight < 0:
        raise ValueError("adversary_weight must be non-negative")
    n, p = x.shape
    rng = np.random.default_rng(seed)
    w = 0.01 * rng.standard_normal(p)
    b = 0.0
    adv_u = 0.0
    adv_y = 0.0
    adv_v = 0.0

    for _ in range(steps):
        margin = x @ w + b
        if not np.isfinite(margin).all():
            raise ValueError(
                "adversarial training diverged (margins are not finite); "
                "use a smaller learning_rate"
            )
        resid = sigmoid(margin) - y
        grad_w = x.T @ resid / n
        grad_b = float(resid.mean())

        if adversary_weight == 0.0:
            w -= learning_rate * grad_w
            b -= learning_rate * grad_b
            continue

        adv_margin = adv_u * margin + adv_y * (y if adversary_sees_label else 0.0) + adv_v
        adv_resid = sigmoid(adv_margin) - protected
        # adversary's own ascent on its parameters
        adv_grad_u = float(adv_resid @ margin) / n
        adv_grad_y = float(adv_resid @ y) / n if adversary_sees_label else 0.0
        adv_grad_v = float(adv_resid.mean())
        # adversary loss gradient through the predictor parameters; the
        # label input is constant, so only the margin path contributes
        dl_dm = adv_resid * adv_u / n
        adv_w = x.T @ dl_dm
        adv_b = float(dl_dm.sum())

        gnorm_sq = adv_w @ adv_w + adv_b * adv_b
        if gnorm_sq > PROJECTION_EPS**2:
            scale = (grad_w @ adv_w + grad_b * adv_b) / gnorm_sq
            grad_w = grad_w - scale * adv_w - adversary_weight * adv_w
            grad_b = grad_b - scale * adv_b - adversary_weight * adv_b
        w -= learning_rate * grad_w
        b -= learning_rate * grad_b
        adv_u -= adversary_learning_rate * adv_grad_u
        adv_y -= adversary_learning_rate * adv_grad_y
        adv_v -= adversary_learning_rate * adv_grad_v

    margin = x @ w + b
    if not np.isfinite(margin).all():
        raise ValueError(
            "adversarial training diverged (margins are not finite); "
            "use a smaller learning_rate"
        )
    model = LinearModel(
        weights=w,
        intercept=b,
        l1=0.0,
        l2=0.0,
        converged=True,
        objective=_logloss(margin, y),
        n_sweeps=steps,
    )
    adv_final = adv_u * margin + adv_y * (y if adversary_sees_label else 0.0) + adv_v
    return AdversarialResult(
        model=model,
        adversary_slope=adv_u,
        adversary_label_slope=adv_y,
        adversary_intercept=adv_v,
        final_pred_loss=model.objective,
        final_adv_loss=_logloss(adv_final, protected),
    )


def generalized_fnr(scores, y_true):
    """Mean predicted miss mass among actual positives: E[1 - s | y = 1]."""
    scores = np.asarray(scores, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    pos = y_true == 1
    if not pos.any():
        raise ValueError("no positive outcomes; miss rate is undefined")
    return float(np.mean(1.0 - scores[pos]))


@dataclass
class CalibratedEOResult:
    scores: np.ndarray
    mixing: dict
    gfnr_before: dict
    gfnr_after_expected: float
    mixed_group: object


def mitigate_calibrated_eo(scores, y_true, groups, cost="fnr", seed=0):
    """Equalize generalized miss rates by mixing toward trivial scores.

    The group with the higher miss rate keeps its scores byte for byte.
    The other group has each score replaced, with a seeded per-row coin of
    probability p, by that group's base rate; p solves
    (1 - base_rate) * p + gfnr * (1 - p) = target. A target the mix cannot
    reach exactly clamps p into [0, 1] with a warning instead of
    extrapolating.
    """
    if cost != "fnr":
        raise ValueError(f"only the generalized-FNR cost is supported, got {cost!r}")
    scores = np.asarray(scores, dtype=float)
    y_true = check_binary_labels(np.asarray(y_true, dtype=float))
    groups = np.asarray(groups)
    if not (scores.shape == y_true.shape == groups.shape):
        raise ValueError("scores, labels and groups must align")
    if scores.min() < 0 or scores.max() > 1:
        raise ValueError("scores must be probabilities in [0, 1]")

    labels = sorted(set(groups.tolist()), key=str)
    if len(labels) != 2:
        raise ValueError(f"exactly two groups are required, got {len(labels)}")
    stats = {}
    for g in labels:
        m = groups == g
        base = float(y_true[m].mean())
        if base in (0.0, 1.0):
            raise ValueError(f"group {g!r} has a degenerate base rate of {base}")
        stats[g] = (base, generalized_fnr(scores[m], y_true[m]))

    target = max(gfnr for _, gfnr in stats.values())
    mixed = min(labels, key=lambda g: (stats[g][1], str(g)))
    mixing = {g: 0.0 for g in labels}
    out = scores.copy()
    rng = np.random.default_rng(seed)

    base, gfnr = stats[mixed]
    if gfnr < target:
        trivial = 1.0 - base
        denom = trivial - gfnr
        if denom == 0:
            raise ValueError(
                f"group {mixed!r} already scores at its trivial miss rate; cannot mix"
            )
        p = (target - gfnr) / denom
        if not 0.0 <= p <= 1.0:
            warnings.warn(
                f"mix probability {p:.4f} for group {mixed!r} clamped into [0, 1]",
                RuntimeWarning,
                stacklevel=2,
            )
            p = min(max(p, 0.0), 1.0)
        idx = np.flatnonzero(groups == mixed)
        coin = rng.uniform(size=idx.size) < p
        out[idx[coin]] = base
        mixing[mixed] = p

    return CalibratedEOResult(
        scores=out,
        mixing=mixing,
        gfnr_before={g: stats[g][1] for g in labels},
        gfnr_after_expected=target,
        mixed_group=mixed,
    )
