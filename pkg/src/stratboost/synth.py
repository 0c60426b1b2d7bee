"""Synthetic datasets used by the benchmarks and the acceptance suite."""

from __future__ import annotations

import numpy as np


def planted_stump(n: int, dim: int = 10, edge: float = 0.3, feature: int = 0,
                  threshold: float = 0.5, seed: int = 0):
    """Uniform features; the label agrees with ``x[feature] <= threshold``
    with probability ``(1 + edge) / 2``, so that stump has true edge
    ``edge`` and every other stump has edge 0 (features are independent).
    """
    rng = np.random.default_rng(seed)
    X = rng.random((n, dim)).astype(np.float32)
    base = np.where(X[:, feature] <= threshold, 1, -1)
    agree = rng.random(n) < (1.0 + edge) / 2.0
    y = np.where(agree, base, -base).astype(np.int8)
    return X, y


def imbalanced(n: int, dim: int = 20, positive_rate: float = 0.05, seed: int = 0):
    """Rare positives from a nonlinear logit; most features are weak or noise.

    The log-odds mix a few threshold effects, a smooth term and a small
    interaction, then get shifted so positives make up ``positive_rate``.
    """
    rng = np.random.default_rng(seed)
    X = rng.random((n, dim)).astype(np.float32)
    z = (
        2.2 * (X[:, 0] > 0.7)
        + 1.6 * (X[:, 1] < 0.25)
        + 1.2 * np.sin(3.0 * np.pi * X[:, 2])
        + 1.5 * (X[:, 3] - 0.5)
        + 1.4 * ((X[:, 4] > 0.5) & (X[:, 5] > 0.5))
        - 1.0 * X[:, 6]
    )
    # pick the intercept so the mean positive rate matches the target
    lo, hi = -20.0, 20.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        rate = np.mean(1.0 / (1.0 + np.exp(-(z + mid))))
        lo, hi = (mid, hi) if rate < positive_rate else (lo, mid)
    p = 1.0 / (1.0 + np.exp(-(z + 0.5 * (lo + hi))))
    y = np.where(rng.random(n) < p, 1, -1).astype(np.int8)
    return X, y


def smooth_logistic(n: int, dim: int = 8, seed: int = 0, scale: float = 2.0):
    """Balanced labels from a smooth additive logit over a few features."""
    rng = np.random.default_rng(seed)
    X = rng.random((n, dim)).astype(np.float32)
    s = 3.0 * (X[:, 0] - 0.5) + 2.0 * (X[:, 1] - 0.5) + np.sin(6.0 * X[:, 2])
    if dim > 3:
        s = s + 1.5 * (X[:, 3] > 0.8)
    p = 1.0 / (1.0 + np.exp(-scale * s))
    y = np.where(rng.random(n) < p, 1, -1).astype(np.int8)
    return X, y
