"""Unpenalized logistic regression by iteratively reweighted least squares.

Produces the maximum-likelihood fit together with the Wald covariance
(inverse observed Fisher information at the optimum), standard errors and
95% confidence intervals. Raises explicit errors on rank-deficient designs
(naming the collinear columns) and on separated data (diverging fit).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.stats import norm

from socialrisk.errors import RankDeficiencyError, SeparationError, SocialriskError
from socialrisk.util import check_binary_labels, check_finite_matrix, clamp_proba, sigmoid

# Fitted log-odds beyond this bound mean some observation's probability has
# saturated past any useful precision; with an unconverged score vector that
# is the signature of separation.
MARGIN_BOUND = 30.0

WALD_Z = float(norm.ppf(0.975))


@dataclass
class IRLSFit:
    """MLE logistic fit. coef[0] is the intercept."""

    coef: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    loglik: float
    n_iter: int
    converged: bool
    feature_names: list[str]

    def predict_proba(self, x):
        x = check_finite_matrix(x)
        margin = self.coef[0] + x @ self.coef[1:]
        return clamp_proba(sigmoid(margin))


def _check_rank(design, names):
    _, r, piv = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    threshold = diag.max() * max(design.shape) * np.finfo(np.float64).eps
    rank = int(np.sum(diag > threshold))
    if rank < design.shape[1]:
        bad = sorted(piv[rank:])
        raise RankDeficiencyError([names[i] for i in bad])


def _loglik(y, margin):
    # log p for y=1 and log(1-p) for y=0 in a numerically stable form
    return float(np.sum(y * margin - np.logaddexp(0.0, margin)))


def fit_logistic_irls(x, y, max_iter=100, tol=1e-8, feature_names=None):
    """Maximum-likelihood logistic fit with Wald inference.

    An intercept column is prepended internally; `coef[0]` is the intercept.

    Raises:
        RankDeficiencyError: collinear design, names the offending columns.
        SeparationError: the fit diverged (perfect or quasi separation).
        SocialriskError: no convergence within max_iter.
    """
    x = check_finite_matrix(x, "feature matrix")
    y = check_binary_labels(y)
    if x.shape[0] != y.shape[0]:
        raise ValueError("row count mismatch between matrix and labels")

    n, p = x.shape
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(p)]
    names = ["(intercept)"] + list(feature_names)
    design = np.hstack([np.ones((n, 1)), x])
    _check_rank(design, names)

    beta = np.zeros(p + 1)
    margin = design @ beta
    ll = _loglik(y, margin)
    converged = False
    iterations = 0

    for it in range(max_iter):
        iterations = it + 1
        prob = sigmoid(margin)
        score = design.T @ (y - prob)
        if np.max(np.abs(score)) <= tol:
            converged = True
            break
        wdiag = prob * (1.0 - prob)
        info = design.T @ (design * wdiag[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise SeparationError(
                "Fisher information became singular before convergence"
            ) from None
        # Step-halving keeps the log-likelihood ascending. When no scale
        # yields a measurable ascent the concave objective is maxed out to
        # float precision; on large unscaled designs this happens while the
        # absolute score criterion is still out of reach, so a stalled line
        # search is itself convergence.
        scale = 1.0
        improved = False
        for _ in range(40):
            cand = beta + scale * step
            cand_margin = design @ cand
            cand_ll = _loglik(y, cand_margin)
            if cand_ll > ll:
                improved = True
                break
            if cand_ll >= ll - 1e-12:
                break
            scale *= 0.5
        beta, margin, ll = cand, cand_margin, cand_ll
        if not improved:
            converged = True
            break
        if np.max(np.abs(margin)) > MARGIN_BOUND:
            raise SeparationError(
                "logistic fit diverged (max |log-odds| exceeded "
                f"{MARGIN_BOUND:g}); data are separated or nearly so"
            )
    else:
        raise SocialriskError(
            f"IRLS did not converge in {max_iter} iterations "
            f"(score sup-norm {np.max(np.abs(design.T @ (y - sigmoid(margin)))):.3g})"
        )

    prob = sigmoid(margin)
    wdiag = prob * (1.0 - prob)
    info = design.T @ (design * wdiag[:, None])
    cov = np.linalg.inv(info)
    se = np.sqrt(np.diag(cov))
    return IRLSFit(
        coef=beta,
        se=se,
        cov=cov,
        ci_low=beta - WALD_Z * se,
        ci_high=beta + WALD_Z * se,
        loglik=ll,
        n_iter=iterations,
        converged=converged,
        feature_names=names,
    )
