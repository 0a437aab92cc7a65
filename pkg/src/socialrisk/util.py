"""Small numeric helpers used across modules."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

# Probabilities leaving any model are clamped to this open interval so that
# log-loss and odds stay finite.
PROB_EPS = 1e-12


def sigmoid(z):
    return expit(z)


def clamp_proba(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def logit(p):
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return np.log(p / (1.0 - p))


def check_finite_matrix(x, name="matrix"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_binary_labels(y, name="labels"):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional")
    values = np.unique(y)
    if not np.all(np.isin(values, (0, 1))):
        raise ValueError(f"{name} must be 0/1, got values {values[:8]}")
    if values.size < 2:
        raise ValueError(f"{name} contain a single class; need both outcomes")
    return y.astype(np.float64)


def mean_logloss(y, p):
    p = clamp_proba(np.asarray(p, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
