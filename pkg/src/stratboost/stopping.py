"""Sequential stopping rule for certifying that a rule's edge exceeds gamma.

For a candidate rule the scanner accumulates

    m = sum_i w_i * (h(x_i) y_i - gamma)        v = sum_i w_i ** 2

and the rule fires once ``count > t0`` and

    m > c * sqrt(v * (loglog(v / m) + b)),

with ``b = ln(1 / sigma)``.  ``loglog`` is guarded as
``ln(max(1, ln(max(e, r))))`` so the bracket never drops below ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

DEFAULT_T0 = 256
DEFAULT_CHECK_INTERVAL = 16
DEFAULT_SIGMA_NUMERATOR = 0.001


@dataclass(frozen=True)
class ScanState:
    m: float = 0.0
    v: float = 0.0
    count: int = 0


@dataclass(frozen=True)
class StoppingConfig:
    c: float = 1.0
    b: float = math.log(1000.0)
    t0: int = DEFAULT_T0
    check_interval: int = DEFAULT_CHECK_INTERVAL

    def __post_init__(self):
        if not (self.c > 0 and self.b > 0):
            raise InvalidInputError("c and b must be positive")
        if self.t0 < 0:
            raise InvalidInputError("t0 must be nonnegative")
        if self.check_interval < 1:
            raise InvalidInputError("check_interval must be >= 1")

    @classmethod
    def from_sigma(cls, sigma: float, c: float = 1.0, t0: int = DEFAULT_T0,
                   check_interval: int = DEFAULT_CHECK_INTERVAL) -> "StoppingConfig":
        if not 0 < sigma < 1:
            raise InvalidInputError(f"sigma must lie in (0, 1), got {sigma}")
        return cls(c=c, b=math.log(1.0 / sigma), t0=t0, check_interval=check_interval)


def default_config(num_candidates: int, t0: int = DEFAULT_T0,
                   check_interval: int = DEFAULT_CHECK_INTERVAL) -> StoppingConfig:
    """C = 1 and sigma = 0.001 / num_candidates (union bound over the rules)."""
    if num_candidates < 1:
        raise InvalidInputError("num_candidates must be >= 1")
    sigma = DEFAULT_SIGMA_NUMERATOR / num_candidates
    return StoppingConfig.from_sigma(sigma, t0=t0, check_interval=check_interval)


def update_state(state: ScanState, weight: float, correlation: float, gamma: float) -> ScanState:
    if not (weight > 0 and math.isfinite(weight)):
        raise InvalidInputError(f"weight must be positive and finite, got {weight}")
    if abs(correlation) > 1:
        raise InvalidInputError(f"correlation must lie in [-1, 1], got {correlation}")
    return ScanState(
        m=state.m + weight * (correlation - gamma),
        v=state.v + weight * weight,
        count=state.count + 1,
    )


def loglog_term(ratio):
    """Guarded ``ln ln ratio``; always >= 0, works on scalars and arrays."""
    r = np.maximum(ratio, math.e)
    return np.log(np.maximum(1.0, np.log(r)))


def stopping_threshold(m, v, cfg: StoppingConfig):
    """Right-hand side of the rule; only meaningful where ``m > 0``."""
    m = np.asarray(m, dtype=np.float64)
    safe_m = np.where(m > 0, m, 1.0)
    return cfg.c * np.sqrt(v * (loglog_term(v / safe_m) + cfg.b))


def fires(m, v, count, cfg: StoppingConfig):
    """Vectorised rule over arrays of ``m`` (``v`` and ``count`` broadcast)."""
    m = np.asarray(m, dtype=np.float64)
    ok = (np.asarray(count) > cfg.t0) & (m > 0)
    return ok & (m > stopping_threshold(m, v, cfg))


def should_stop(state: ScanState, cfg: StoppingConfig) -> bool:
    if state.count <= cfg.t0 or state.m <= 0:
        return False
    return bool(state.m > float(stopping_threshold(state.m, state.v, cfg)))
