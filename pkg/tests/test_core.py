import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stratboost.core import (
    EdgeEstimate,
    LabeledExample,
    StampedExample,
    effective_sample_size,
    empirical_edge,
    example_weight,
    example_weights,
    rule_weight,
)
from stratboost.errors import InvalidInputError

positive = st.floats(min_value=1e-6, max_value=1e6, allow_nan=False)


def exact_ess(weights):
    ws = [Fraction(w) for w in weights]
    return sum(ws) ** 2 / sum(w * w for w in ws)


@pytest.mark.parametrize("score,label,expected", [
    (0.0, 1, 1.0),
    (math.log(2), 1, 0.5),
    (math.log(2), -1, 2.0),
])
def test_example_weight(score, label, expected):
    assert example_weight(score, label) == pytest.approx(expected, rel=1e-15)


def test_example_weight_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        example_weight(float("inf"), 1)
    with pytest.raises(InvalidInputError):
        example_weight(float("nan"), -1)


def test_example_weights_clamp_keeps_weights_finite():
    w = example_weights(np.array([1e4, -1e4]), np.array([1, 1]))
    assert np.all(np.isfinite(w))
    assert w[0] == pytest.approx(math.exp(-30))
    assert w[1] == pytest.approx(math.exp(30))


@given(st.floats(min_value=-30, max_value=30), st.sampled_from([-1, 1]))
def test_weight_reciprocity(s, y):
    assert example_weight(s, y) * example_weight(-s, y) == pytest.approx(1.0, rel=1e-12)


def test_empirical_edge_examples():
    y = [1, -1, 1, -1, 1, 1]
    assert empirical_edge(y, y, [1] * 6) == 1.0
    half = [y[i] if i < 3 else -y[i] for i in range(6)]
    assert empirical_edge(half, y, [1] * 6) == 0.0
    preds, labels, weights = [1, -1, 1], [1, 1, 1], [1, 2, 1]
    brute = sum(w * h * l for h, l, w in zip(preds, labels, weights)) / sum(weights)
    assert brute == 0.0
    assert empirical_edge(preds, labels, weights) == brute


def test_empirical_edge_errors():
    with pytest.raises(InvalidInputError):
        empirical_edge([], [], [])
    with pytest.raises(InvalidInputError):
        empirical_edge([1], [1], [0.0])
    with pytest.raises(InvalidInputError):
        empirical_edge([1, 1], [1], [1, 1])


@given(st.lists(st.tuples(st.floats(-1, 1), st.sampled_from([-1, 1]), positive), min_size=1, max_size=40),
       st.floats(min_value=1e-3, max_value=1e3))
def test_edge_bounded_and_scale_invariant(rows, c):
    h, y, w = map(list, zip(*rows))
    e = empirical_edge(h, y, w)
    assert -1 - 1e-12 <= e <= 1 + 1e-12
    assert empirical_edge(h, y, [c * x for x in w]) == pytest.approx(e, abs=1e-9)


def test_ess_examples():
    assert effective_sample_size([1.0] * 10) == 10.0
    k = 7
    assert effective_sample_size([1.0 / k] * k) == pytest.approx(k, rel=1e-14)
    weights = [1.0] * 20 + [1.0 / 99] * 1980
    oracle = float(exact_ess(weights))
    assert oracle == pytest.approx(1600 / (20 + 1980 / 99 ** 2), rel=1e-12)
    assert effective_sample_size(weights) == pytest.approx(oracle, rel=1e-12)
    assert 79 < oracle < 80


def test_ess_errors():
    for bad in ([], [0.0, 1.0], [-1.0], [float("inf")]):
        with pytest.raises(InvalidInputError):
            effective_sample_size(bad)


@given(st.lists(positive, min_size=1, max_size=50), st.floats(min_value=1e-3, max_value=1e3))
def test_ess_bounds_and_scale_invariance(w, c):
    e = effective_sample_size(w)
    assert 1.0 <= e <= len(w)
    assert effective_sample_size([c * x for x in w]) == pytest.approx(e, rel=1e-9)
    assert e == pytest.approx(float(exact_ess(w)), rel=1e-9)


def test_ess_equals_n_only_for_equal_weights():
    assert effective_sample_size([2.0] * 5) == 5.0
    assert effective_sample_size([2.0] * 4 + [2.0001]) < 5.0


def test_ess_stable_over_many_terms():
    rng = np.random.default_rng(0)
    w = np.exp(rng.normal(size=2_000_000))
    s1 = math.fsum(w.tolist())
    s2 = math.fsum((w * w).tolist())
    assert effective_sample_size(w) == pytest.approx(s1 * s1 / s2, rel=1e-12)


def test_rule_weight():
    assert rule_weight(0.25) == pytest.approx(0.5 * math.log(3), rel=1e-15)
    assert rule_weight(0.3) == pytest.approx(math.log(2), rel=1e-15)
    assert 0 < rule_weight(1e-9) < 1e-8
    for bad in (0.0, 0.5, -0.1, 0.7):
        with pytest.raises(InvalidInputError):
            rule_weight(bad)


@given(st.floats(min_value=1e-6, max_value=0.499), st.floats(min_value=1e-6, max_value=0.499))
def test_rule_weight_increasing(a, b):
    if a < b:
        assert rule_weight(a) < rule_weight(b)


def test_rule_weight_diverges_near_half():
    assert rule_weight(0.5 - 1e-12) > 13


def test_types_validate():
    with pytest.raises(InvalidInputError):
        LabeledExample(np.array([1.0]), 0)
    with pytest.raises(InvalidInputError):
        LabeledExample(np.array([np.nan]), 1)
    ex = LabeledExample([1.0, 2.0], -1)
    assert ex.dim == 2
    with pytest.raises(InvalidInputError):
        StampedExample(ex, 0.0, 0)
    with pytest.raises(InvalidInputError):
        EdgeEstimate(2.0, 1.0)
    assert EdgeEstimate(-0.5, 2.0).edge == -0.25
