"""Full-scan AdaBoost on a uniform subsample, used as a comparison point.

Every round evaluates all root-level splits over the whole subsample with
per-bin histograms and adds the split with the largest absolute edge, with
the usual weight ``0.5 * ln((1 + e) / (1 - e))``.
"""

from __future__ import annotations

import numpy as np

from .core import MAX_WEIGHT, MIN_WEIGHT
from .weak_learner import ROOT, BinningConfig, Ensemble, SplitRule, build_bins


def adaboost_stumps(X, y, rounds: int, bins: BinningConfig | None = None,
                    n_bins: int = 64) -> Ensemble:
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.float64)
    if bins is None:
        bins = build_bins(X, n_bins)
    d = bins.dim
    J = bins.max_cuts
    nb = J + 1
    binned = bins.bin_index(X).astype(np.int64) + (np.arange(d) * nb)[None, :]
    valid = np.arange(J)[None, :] < bins.counts[:, None]
    w = np.full(len(y), 1.0 / len(y))
    ensemble = Ensemble()
    for _ in range(rounds):
        hist = np.bincount(binned.ravel(), weights=np.repeat(w * y, d), minlength=d * nb).reshape(d, nb)
        P = np.cumsum(hist, axis=1)
        A = np.where(valid, 2.0 * P[:, :J] - P[:, -1:], 0.0) / w.sum()
        f, j = np.unravel_index(int(np.argmax(np.abs(A))), A.shape)
        edge = float(A[f, j])
        pol = 1 if edge >= 0 else -1
        e = min(abs(edge), 1.0 - 1e-12)
        if e <= 0:
            break
        alpha = 0.5 * np.log((1.0 + e) / (1.0 - e))
        rule = SplitRule(ROOT, int(f), float(bins.thresholds[f][j]), pol)
        ensemble = ensemble.append(rule, alpha)
        h = np.where(X[:, f] <= rule.threshold, pol, -pol)
        w = np.clip(w * np.exp(-alpha * h * y), MIN_WEIGHT, MAX_WEIGHT)
        w /= w.sum()
    return ensemble


def uniform_subsample(n_total: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    k = max(1, int(round(fraction * n_total)))
    return np.sort(rng.choice(n_total, size=k, replace=False))
