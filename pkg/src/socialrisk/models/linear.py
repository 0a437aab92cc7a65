"""Penalized logistic regression via cyclic coordinate descent.

Minimizes

    mean logistic loss + l1 * ||w||_1 + (l2 / 2) * ||w||_2^2

with an unpenalized intercept. Each coordinate takes a proximal Newton step
(soft-thresholding against the l1 penalty) with backtracking, so the
objective never increases between sweeps; that monotonicity is asserted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from socialrisk.util import (
    check_binary_labels,
    check_finite_matrix,
    clamp_proba,
    logit,
    mean_logloss,
    sigmoid,
)

# Coefficients whose converged magnitude stays below this are floating-point
# residue of an exactly-zero solution (e.g. at the l1 null threshold) and are
# snapped to 0.0.
ZERO_SNAP = 1e-12


@dataclass
class LinearModel:
    """Logistic scorer: margin(x) = x @ weights + intercept."""

    weights: np.ndarray
    intercept: float
    l1: float
    l2: float
    converged: bool
    objective: float
    n_sweeps: int
    feature_names: list[str] | None = field(default=None)

    def predict_margin(self, x):
        x = check_finite_matrix(x, "feature matrix")
        if x.shape[1] != self.weights.shape[0]:
            raise ValueError(
                f"feature count mismatch: model has {self.weights.shape[0]}, "
                f"matrix has {x.shape[1]}"
            )
        return x @ self.weights + self.intercept

    def predict_proba(self, x):
        return clamp_proba(sigmoid(self.predict_margin(x)))


def _objective(y, margin, w, l1, l2):
    return (
        mean_logloss(y, sigmoid(margin))
        + l1 * float(np.sum(np.abs(w)))
        + 0.5 * l2 * float(w @ w)
    )


def _soft_threshold(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def smooth_gradient(x, y, w, b, l2):
    """Gradient of the smooth objective part (mean log-loss + ridge).

    Returns (grad_w, grad_b); the solver's per-coordinate steps use exactly
    these quantities.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pr = sigmoid(x @ w + b)
    grad_w = x.T @ (pr - y) / x.shape[0] + l2 * np.asarray(w, dtype=np.float64)
    grad_b = float(np.mean(pr - y))
    return grad_w, grad_b


def fit_penalized_logistic(
    x,
    y,
    l1=0.0,
    l2=0.0,
    max_sweeps=500,
    tol=1e-10,
    feature_names=None,
):
    """Fit the elastic-net logistic model by cyclic coordinate descent.

    Args:
        x: (n, p) feature matrix, finite values only.
        y: (n,) 0/1 labels with both classes present.
        l1: lasso penalty weight, >= 0.
        l2: ridge penalty weight, >= 0.
        max_sweeps: cap on full coordinate sweeps.
        tol: convergence threshold on the largest parameter change in a sweep.
        feature_names: optional column names carried on the model.

    Returns:
        LinearModel with converged flag and the final objective value.
    """
    x = check_finite_matrix(x, "feature matrix")
    y = check_binary_labels(y)
    if x.shape[0] != y.shape[0]:
        raise ValueError("row count mismatch between matrix and labels")
    if l1 < 0 or l2 < 0:
        raise ValueError("penalties must be non-negative")

    n, p = x.shape
    w = np.zeros(p)
    # With all weights zero the optimal intercept is the log-odds of the
    # observed prevalence, in closed form.
    b = float(logit(np.mean(y)))
    margin = np.full(n, b)

    sq_cols = np.einsum("ij,ij->j", x, x) / n
    obj = _objective(y, margin, w, l1, l2)
    converged = False
    sweeps = 0

    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        sweep_start_obj = obj
        max_delta = 0.0

        for j in range(p):
            if sq_cols[j] == 0.0:
                continue
            pr = sigmoid(margin)
            col = x[:, j]
            grad = float(col @ (pr - y)) / n + l2 * w[j]
            hess = float(col @ (col * (pr * (1.0 - pr)))) / n + l2
            # Curvature can vanish at saturated probabilities; the floor keeps
            # the step finite and backtracking keeps it monotone.
            hess = max(hess, 1e-12)
            z = hess * w[j] - grad
            w_new = _soft_threshold(z, l1) / hess
            step = w_new - w[j]
            if step == 0.0:
                continue
            # Backtrack until the true objective does not increase.
            for _ in range(60):
                cand = w[j] + step
                cand_margin = margin + col * step
                cand_w = w.copy()
                cand_w[j] = cand
                cand_obj = _objective(y, cand_margin, cand_w, l1, l2)
                if cand_obj <= obj + 1e-15:
                    break
                step *= 0.5
            else:
                continue
            max_delta = max(max_delta, abs(step))
            w[j] = cand
            margin = cand_margin
            obj = cand_obj

        # Intercept: plain Newton step with the same backtracking guard.
        pr = sigmoid(margin)
        g0 = float(np.mean(pr - y))
        h0 = max(float(np.mean(pr * (1.0 - pr))), 1e-12)
        step = -g0 / h0
        for _ in range(60):
            cand_margin = margin + step
            cand_obj = _objective(y, cand_margin, w, l1, l2)
            if cand_obj <= obj + 1e-15:
                break
            step *= 0.5
        else:
            step = 0.0
        if step != 0.0:
            b += step
            margin = cand_margin
            obj = cand_obj
            max_delta = max(max_delta, abs(step))

        assert obj <= sweep_start_obj + 1e-10, "objective increased within a sweep"

        if max_delta < tol:
            converged = True
            break

    snapped = np.where(np.abs(w) < ZERO_SNAP, 0.0, w)
    if not np.array_equal(snapped, w):
        w = snapped
        margin = x @ w + b
        obj = _objective(y, margin, w, l1, l2)

    return LinearModel(
        weights=w,
        intercept=float(b),
        l1=float(l1),
        l2=float(l2),
        converged=converged,
        objective=float(obj),
        n_sweeps=sweeps,
        feature_names=list(feature_names) if feature_names is not None else None,
    )


def null_l1_threshold(x, y):
    """Smallest l1 at which the lasso path is all-zero: max_j |sum((y-ybar)x_j)|/n."""
    x = check_finite_matrix(x)
    y = np.asarray(y, dtype=np.float64)
    centered = y - y.mean()
    return float(np.max(np.abs(centered @ x)) / x.shape[0])
