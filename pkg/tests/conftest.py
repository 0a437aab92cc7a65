import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)


def make_logistic_data(n, p, seed, intercept=-0.5, scale=1.0):
    """Well-conditioned, non-separable logistic data for solver tests."""
    gen = np.random.default_rng(seed)
    x = gen.standard_normal((n, p))
    w = scale * gen.uniform(-1.0, 1.0, size=p)
    prob = 1.0 / (1.0 + np.exp(-(intercept + x @ w)))
    y = (gen.uniform(size=n) < prob).astype(float)
    if y.sum() in (0, n):  # pragma: no cover - seeds are chosen to avoid this
        raise AssertionError("degenerate draw; pick another seed")
    return x, y, w
