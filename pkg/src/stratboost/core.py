"""Domain types and closed-form boosting quantities.

Weights follow the exponential potential ``w = exp(-score * label)``.  Scores
are clamped to ``[-SCORE_CLAMP, SCORE_CLAMP]`` before exponentiation, so every
weight lies in ``[exp(-30), exp(30)]`` and the stratum index stays bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

SCORE_CLAMP = 30.0
MIN_WEIGHT = math.exp(-SCORE_CLAMP)
MAX_WEIGHT = math.exp(SCORE_CLAMP)


@dataclass(frozen=True)
class LabeledExample:
    features: np.ndarray
    label: int

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise InvalidInputError(f"label must be -1 or +1, got {self.label!r}")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1:
            raise InvalidInputError("features must be a 1-d vector")
        if not np.all(np.isfinite(feats)):
            raise InvalidInputError("features must be finite")
        object.__setattr__(self, "features", feats)

    @property
    def dim(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class StampedExample:
    """An example with the weight last computed for it and the ensemble
    version (number of rules) that weight corresponds to."""

    example: LabeledExample
    last_weight: float = 1.0
    last_version: int = 0

    def __post_init__(self):
        if not (self.last_weight > 0 and math.isfinite(self.last_weight)):
            raise InvalidInputError(f"weight must be positive and finite, got {self.last_weight}")
        if self.last_version < 0:
            raise InvalidInputError("version must be nonnegative")


@dataclass(frozen=True)
class EdgeEstimate:
    weighted_correlation_sum: float
    weight_sum: float

    def __post_init__(self):
        if not self.weight_sum > 0:
            raise InvalidInputError("weight_sum must be positive")
        if abs(self.weighted_correlation_sum) > self.weight_sum * (1 + 1e-12):
            raise InvalidInputError("|correlation sum| cannot exceed weight sum")

    @property
    def edge(self) -> float:
        return self.weighted_correlation_sum / self.weight_sum


def clamp_score(score):
    return np.clip(score, -SCORE_CLAMP, SCORE_CLAMP)


def example_weight(score: float, label: int) -> float:
    if not math.isfinite(score):
        raise InvalidInputError(f"score must be finite, got {score}")
    if label not in (-1, 1):
        raise InvalidInputError(f"label must be -1 or +1, got {label!r}")
    return math.exp(-score * label)


def example_weights(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Vectorised ``example_weight`` with the score clamp applied."""
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise InvalidInputError("scores must be finite")
    return np.exp(-clamp_score(scores) * np.asarray(labels, dtype=np.float64))


def _as_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise InvalidInputError("weights must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise InvalidInputError("weights must be positive and finite")
    return w


def empirical_edge(predictions: Sequence[float], labels: Sequence[int], weights: Sequence[float]) -> float:
    """Weighted correlation ``sum(w h y) / sum(w)`` of a rule with the labels."""
    w = _as_weights(weights)
    h = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if h.shape != w.shape or y.shape != w.shape:
        raise InvalidInputError("predictions, labels and weights must have equal lengths")
    if np.any(np.abs(h) > 1):
        raise InvalidInputError("predictions must lie in [-1, 1]")
    est = EdgeEstimate(float(np.sum(w * h * y)), float(np.sum(w)))
    return est.edge


def effective_sample_size(weights: Sequence[float]) -> float:
    """``(sum w)^2 / sum w^2``; lies in ``[1, len(weights)]``.

    Weights are rescaled by their maximum first so squaring cannot overflow.
    ``np.sum`` uses pairwise summation, which keeps the result stable over
    millions of terms.
    """
    w = _as_weights(weights)
    w = w / w.max()
    s1 = np.sum(w)
    s2 = np.sum(w * w)
    return float(min(max(s1 * s1 / s2, 1.0), w.size))


def rule_weight(gamma: float) -> float:
    if not 0.0 < gamma < 0.5:
        raise InvalidInputError(f"gamma must lie in (0, 0.5), got {gamma}")
    return 0.5 * math.log((0.5 + gamma) / (0.5 - gamma))
