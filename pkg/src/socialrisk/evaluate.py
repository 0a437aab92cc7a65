"""Model evaluation: threshold metrics, risk grouping, and group-level
effect estimates. Pure rank metrics (AUROC, ROC points) live in
socialrisk.metrics and are re-exported here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from socialrisk.metrics import auroc, roc_points  # noqa: F401  (public API)
from socialrisk.models.irls import IRLSFit, fit_logistic_irls
from socialrisk.util import check_binary_labels, clamp_proba

# Risk-group boundaries: nine deciles, the 90-95% band, and the top 5%.
GROUP_QUANTILES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95)
N_RISK_GROUPS = 11


@dataclass
class MetricReport:
    auroc: float | None
    sensitivity: float
    specificity: float
    precision: float
    npv: float
    f1: float
    accuracy: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    n: int
    positives: int


def threshold_metrics(scores, labels, threshold, include_auroc=True):
    """Confusion-based metrics at a fixed threshold (positive iff score >= t).

    Precision is 0 when nothing is predicted positive, NPV is 0 when nothing
    is predicted negative, and F1 is 0 when precision + recall is 0.
    Single-class label vectors are an error.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = check_binary_labels(labels)
    pred = scores >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))

    sens = tp / (tp + fn)
    spec = tn / (tn + fp)
    prec = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    npv = tn / (tn + fn) if (tn + fn) > 0 else 0.0
    f1 = 2 * prec * sens / (prec + sens) if (prec + sens) > 0 else 0.0
    acc = (tp + tn) / labels.shape[0]
    return MetricReport(
        auroc=auroc(scores, labels) if include_auroc else None,
        sensitivity=sens,
        specificity=spec,
        precision=prec,
        npv=npv,
        f1=f1,
        accuracy=acc,
        threshold=float(threshold),
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        n=int(labels.shape[0]),
        positives=tp + fn,
    )


def default_threshold(train_scores, prevalence):
    """Score cut at the (1 - prevalence) quantile of the training scores."""
    if not 0.0 < prevalence < 1.0:
        raise ValueError("prevalence must be strictly between 0 and 1")
    return float(np.quantile(np.asarray(train_scores, dtype=np.float64), 1.0 - prevalence))


@dataclass
class RiskGroupTable:
    """Group assignment (1..11) per patient plus the per-group event rates."""

    group: np.ndarray
    patient_ids: np.ndarray
    sizes: np.ndarray
    events: np.ndarray
    event_rates: np.ndarray
    boundaries: np.ndarray

    def rate_ratio_top_bottom(self):
        if self.event_rates[0] == 0.0:
            raise ZeroDivisionError("bottom group has no events; ratio undefined")
        return float(self.event_rates[-1] / self.event_rates[0])


def risk_groups(scores, labels, patient_ids):
    """Assign the 11 score groups: deciles 1-9, the 90-95% band, the top 5%.

    Boundary ties are resolved by ascending patient id, so the assignment is
    a total function of (score, patient_id).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = check_binary_labels(labels)
    patient_ids = np.asarray(patient_ids)
    n = scores.shape[0]
    if n < 2 * N_RISK_GROUPS:
        raise ValueError(
            f"need at least {2 * N_RISK_GROUPS} patients for "
            f"{N_RISK_GROUPS} groups, got {n}"
        )
    if np.unique(patient_ids).shape[0] != n:
        raise ValueError("patient ids must be unique")

    order = np.lexsort((patient_ids, scores))
    cuts = [int(np.floor(n * q)) for q in GROUP_QUANTILES]
    bounds = [0] + cuts + [n]
    group = np.empty(n, dtype=np.int64)
    for g in range(N_RISK_GROUPS):
        group[order[bounds[g] : bounds[g + 1]]] = g + 1

    sizes = np.bincount(group, minlength=N_RISK_GROUPS + 1)[1:]
    events = np.zeros(N_RISK_GROUPS)
    for g in range(1, N_RISK_GROUPS + 1):
        events[g - 1] = labels[group == g].sum()
    with np.errstate(invalid="ignore"):
        rates = np.where(sizes > 0, events / np.maximum(sizes, 1), np.nan)
    return RiskGroupTable(
        group=group,
        patient_ids=patient_ids,
        sizes=sizes,
        events=events,
        event_rates=rates,
        boundaries=scores[order[cuts]].copy(),
    )


def format_odds_ratio(or_value, ci_low, ci_high):
    return f"{or_value:.2f} ({ci_low:.2f}–{ci_high:.2f})"


@dataclass
class AdjustedOddsRatio:
    odds_ratio: float
    ci_low: float
    ci_high: float
    formatted: str
    fit: IRLSFit = field(repr=False)


def adjusted_or_per_group(group_index, age, sex_female, race, cci, outcomes,
                          reference_race="NHW"):
    """Odds ratio per one-step increase in risk group, adjusted for
    age, sex, race and comorbidity burden.

    The group index enters as a single ordinal covariate; race enters as
    dummies against `reference_race`.
    """
    group_index = np.asarray(group_index, dtype=np.float64)
    race = np.asarray(race)
    levels = [r for r in dict.fromkeys(race.tolist()) if r != reference_race]
    cols = [group_index, np.asarray(age, float), np.asarray(sex_female, float)]
    names = ["risk_group", "age", "sex_female"]
    for level in sorted(levels):
        cols.append((race == level).astype(float))
        names.append(f"race={level}")
    cols.append(np.asarray(cci, float))
    names.append("cci")
    design = np.column_stack(cols)
    fit = fit_logistic_irls(design, outcomes, feature_names=names)
    beta, lo, hi = fit.coef[1], fit.ci_low[1], fit.ci_high[1]
    return AdjustedOddsRatio(
        odds_ratio=float(np.exp(beta)),
        ci_low=float(np.exp(lo)),
        ci_high=float(np.exp(hi)),
        formatted=format_odds_ratio(np.exp(beta), np.exp(lo), np.exp(hi)),
        fit=fit,
    )


def mcfadden_r2(outcomes, design):
    """McFadden pseudo R^2 of an MLE logistic fit (1 - ll_model / ll_null)."""
    y = check_binary_labels(outcomes)
    fit = fit_logistic_irls(design, y)
    pbar = clamp_proba(np.array([y.mean()]))[0]
    ll_null = float(np.sum(y * np.log(pbar) + (1 - y) * np.log(1 - pbar)))
    return 1.0 - fit.loglik / ll_null


def explained_risk_fraction(outcomes, base_covariates, group_index):
    """Share of the full-model pseudo R^2 contributed by the risk grouping.

    (R2[base + group] - R2[base]) / R2[base + group], McFadden pseudo R^2,
    group index as a single ordinal covariate.
    """
    base = np.asarray(base_covariates, dtype=np.float64)
    if base.ndim == 1:
        base = base[:, None]
    group_index = np.asarray(group_index, dtype=np.float64)[:, None]
    r2_base = mcfadden_r2(outcomes, base)
    r2_full = mcfadden_r2(outcomes, np.hstack([base, group_index]))
    if r2_full <= 0.0:
        raise ValueError("full model has no explanatory power; fraction undefined")
    return (r2_full - r2_base) / r2_full
