"""Group fairness metrics over binarized predictions.

Each metric compares one or more confusion-matrix rates between a protected
and a privileged group as a ratio (protected over privileged). A ratio
inside the four-fifths band [0.80, 1.25], endpoints included, counts as
fair. A rate whose denominator is empty yields no ratio at all; the verdict
is then "undefined" rather than a spurious zero or infinity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from socialrisk.evaluate import auroc

FAIR_RATIO_LOW = 0.80
FAIR_RATIO_HIGH = 1.25

MITIGATION_METHODS = ("dir", "adversarial", "calibrated_eo")


@dataclass
class GroupConfusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_predictions(cls, y_true, y_pred):
        y_true = np.asarray(y_true, dtype=float)
        y_pred = np.asarray(y_pred, dtype=float)
        return cls(
            tp=int(((y_pred == 1) & (y_true == 1)).sum()),
            fp=int(((y_pred == 1) & (y_true == 0)).sum()),
            tn=int(((y_pred == 0) & (y_true == 0)).sum()),
            fn=int(((y_pred == 0) & (y_true == 1)).sum()),
        )

    def _rate(self, num, den):
        return None if den == 0 else num / den

    def ppv(self):
        return self._rate(self.tp, self.tp + self.fp)

    def npv(self):
        return self._rate(self.tn, self.tn + self.fn)

    def tpr(self):
        return self._rate(self.tp, self.tp + self.fn)

    def fpr(self):
        return self._rate(self.fp, self.fp + self.tn)

    def fnr(self):
        return self._rate(self.fn, self.tp + self.fn)

    def accuracy(self):
        n = self.tp + self.fp + self.tn + self.fn
        return self._rate(self.tp + self.tn, n)

    def fn_per_fp(self):
        return self._rate(self.fn, self.fp)


@dataclass
class FairnessConfig:
    """Which groups to compare, against whom, and what counts as fair."""

    protected_groups: tuple
    privileged_group: str
    band: tuple = (FAIR_RATIO_LOW, FAIR_RATIO_HIGH)
    threshold_policy: str = "train_prevalence_quantile"

    def __post_init__(self):
        self.protected_groups = tuple(self.protected_groups)
        if not self.protected_groups:
            raise ValueError("at least one protected group is required")
        if len(set(self.protected_groups)) != len(self.protected_groups):
            raise ValueError("protected groups must be distinct")
        if self.privileged_group in self.protected_groups:
            raise ValueError("the privileged group cannot also be protected")
        low, high = self.band
        if not low < 1.0 < high:
            raise ValueError("fair band must straddle 1: low < 1 < high")


@dataclass
class MetricComponent:
    component: str
    protected: float | None
    privileged: float | None
    ratio: float | None
    verdict: str


@dataclass
class FairnessRow:
    metric: str
    protected_group: str
    components: list
    verdict: str


METRIC_COMPONENTS = {
    "predictive_parity": ("ppv",),
    "predictive_equality": ("fpr",),
    "equalized_odds": ("tpr", "fpr"),
    "conditional_use_accuracy": ("ppv", "npv"),
    "treatment_equality": ("fn_per_fp",),
    "equality_of_opportunity": ("fnr",),
    "overall_accuracy": ("accuracy",),
}


def _component_row(name, prot_value, priv_value, band):
    if prot_value is None or priv_value is None or priv_value == 0:
        return MetricComponent(name, prot_value, priv_value, None, "undefined")
    ratio = prot_value / priv_value
    verdict = "fair" if band[0] <= ratio <= band[1] else "unfair"
    return MetricComponent(name, prot_value, priv_value, ratio, verdict)


def classify_ratio(ratio, band=(FAIR_RATIO_LOW, FAIR_RATIO_HIGH)):
    """Band verdict for a precomputed ratio; None means undefined."""
    if ratio is None:
        return "undefined"
    return "fair" if band[0] <= ratio <= band[1] else "unfair"


def _metric_rows(prot, priv, band, group_name):
    rows = []
    for metric, components in METRIC_COMPONENTS.items():
        comp_rows = [
            _component_row(c, getattr(prot, c)(), getattr(priv, c)(), band)
            for c in components
        ]
        if any(c.verdict == "undefined" for c in comp_rows):
            verdict = "undefined"
        elif all(c.verdict == "fair" for c in comp_rows):
            verdict = "fair"
        else:
            verdict = "unfair"
        rows.append(
            FairnessRow(
                metric=metric,
                protected_group=group_name,
                components=comp_rows,
                verdict=verdict,
            )
        )
    return rows


def group_confusions(y_true, y_pred, groups):
    """One GroupConfusion per distinct group label."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    groups = np.asarray(groups)
    if y_true.shape != y_pred.shape or y_true.shape != groups.shape:
        raise ValueError("labels, predictions and groups must share a shape")
    return {
        g: GroupConfusion.from_predictions(y_true[groups == g], y_pred[groups == g])
        for g in np.unique(groups)
    }


def fairness_metrics(confusions, config: FairnessConfig):
    """The seven metric rows for every protected group in the config.

    `confusions` maps group label to its GroupConfusion; the privileged
    group and every protected group must be present.
    """
    missing = [
        g
        for g in (config.privileged_group, *config.protected_groups)
        if g not in confusions
    ]
    if missing:
        raise ValueError(f"groups missing from the confusion map: {missing}")
    priv = confusions[config.privileged_group]
    rows = []
    for g in config.protected_groups:
        rows.extend(_metric_rows(confusions[g], priv, config.band, str(g)))
    return rows


def confusion_by_group(y_true, y_pred, protected_mask):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    mask = np.asarray(protected_mask, dtype=bool)
    if y_true.shape != y_pred.shape or y_true.shape != mask.shape:
        raise ValueError("labels, predictions and mask must share a shape")
    if mask.all() or not mask.any():
        raise ValueError("both a protected and a privileged group are required")
    return (
        GroupConfusion.from_predictions(y_true[mask], y_pred[mask]),
        GroupConfusion.from_predictions(y_true[~mask], y_pred[~mask]),
    )


def evaluate_fairness(y_true, y_pred, protected_mask):
    """All seven metric rows for one protected/privileged boolean split."""
    prot, priv = confusion_by_group(y_true, y_pred, protected_mask)
    return _metric_rows(
        prot, priv, (FAIR_RATIO_LOW, FAIR_RATIO_HIGH), "protected"
    )


def fnr_curve(scores, labels, groups, thresholds):
    """Per-group miss rate P(score < t | y = 1) across thresholds.

    Groups without a single positive outcome have no miss rate; they are
    dropped with a warning. Raising the threshold can only add misses, so
    each curve is checked to be non-decreasing before it is returned.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if not np.isin(np.unique(labels), (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    groups = np.asarray(groups)
    if scores.shape != labels.shape or scores.shape != groups.shape:
        raise ValueError("scores, labels and groups must share a shape")
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(thresholds) <= 0):
        raise ValueError("thresholds must be strictly increasing")
    out = {}
    for g in np.unique(groups):
        pos = scores[(groups == g) & (labels == 1)]
        if pos.size == 0:
            warnings.warn(
                f"group {g!r} has no positive outcomes; excluded from the FNR curve",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        curve = np.array([(pos < t).mean() for t in thresholds])
        assert np.all(np.diff(curve) >= 0), "miss rate must not fall as t rises"
        out[g] = curve
    if not out:
        raise ValueError("no group has a positive outcome; no curve to draw")
    return out


@dataclass
class MitigationResult:
    """Before/after record of one mitigation run at stated thresholds."""

    method: str
    scores: np.ndarray = field(repr=False)
    predictions: np.ndarray = field(repr=False)
    auroc_before: float
    auroc_after: float
    rows_before: list
    rows_after: list

    def _ratio(self, rows, metric, group):
        for row in rows:
            if row.metric == metric and row.protected_group == group:
                return row.components[0].ratio
        raise KeyError(f"no {metric} row for group {group!r}")

    def fnr_ratio(self, group, when="after"):
        rows = self.rows_after if when == "after" else self.rows_before
        return self._ratio(rows, "equality_of_opportunity", str(group))


def summarize_mitigation(
    method,
    labels,
    groups,
    scores_before,
    scores_after,
    threshold_before,
    threshold_after,
    config: FairnessConfig,
):
    """Score both prediction sets on the same rows and compare fairness."""
    if method not in MITIGATION_METHODS:
        raise ValueError(f"method must be one of {MITIGATION_METHODS}, got {method!r}")
    labels = np.asarray(labels, dtype=float)
    scores_before = np.asarray(scores_before, dtype=float)
    scores_after = np.asarray(scores_after, dtype=float)
    pred_before = (scores_before >= threshold_before).astype(np.int64)
    pred_after = (scores_after >= threshold_after).astype(np.int64)
    rows_before = fairness_metrics(group_confusions(labels, pred_before, groups), config)
    rows_after = fairness_metrics(group_confusions(labels, pred_after, groups), config)
    return MitigationResult(
        method=method,
        scores=scores_after,
        predictions=pred_after,
        auroc_before=float(auroc(scores_before, labels)),
        auroc_after=float(auroc(scores_after, labels)),
        rows_before=rows_before,
        rows_after=rows_after,
    )
