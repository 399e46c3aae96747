import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from floorcast.capacity import (ALPHA_AT_MINIMUM, CapacityProfile, capacity_g, critical_width,
                                representable_features)
from floorcast.errors import DomainError


@pytest.mark.parametrize("alpha, expected", [
    (0.90, 4.343),
    (0.95, 6.68),
    (0.99, 21.71),
])
def test_capacity_reference_values(alpha, expected):
    assert capacity_g(alpha) == pytest.approx(expected, abs=0.05)


def test_capacity_minimum_is_e():
    assert capacity_g(ALPHA_AT_MINIMUM) == pytest.approx(math.e, rel=1e-12)
    # neighbours on both sides are larger
    assert capacity_g(ALPHA_AT_MINIMUM - 0.01) > math.e
    assert capacity_g(ALPHA_AT_MINIMUM + 0.01) > math.e


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_capacity_rejects_out_of_domain(alpha):
    with pytest.raises(DomainError):
        capacity_g(alpha)


def test_capacity_accepts_arrays():
    g = capacity_g(np.array([0.8, 0.9]))
    assert isinstance(g, np.ndarray)
    assert g == pytest.approx([capacity_g(0.8), capacity_g(0.9)])


def test_capacity_strictly_increasing_above_0_7():
    alphas = np.linspace(0.7, 0.999, 2000)
    assert np.all(np.diff(capacity_g(alphas)) > 0)


def test_critical_width_examples():
    assert critical_width(28665, 0.9924) == pytest.approx(1065, abs=5)
    # 10 / g(0.8) with g(0.8) = 1 / (0.2 ln 5) = 3.1067
    assert critical_width(10, 0.80) == pytest.approx(3.22, abs=0.02)
    assert critical_width(1, 0.93) == pytest.approx(1 / capacity_g(0.93))


def test_critical_width_rejects_bad_inputs():
    with pytest.raises(DomainError):
        critical_width(0, 0.9)
    with pytest.raises(DomainError):
        critical_width(10, 0.0)


LAYER12_ALPHA = 1 - 218.3 / 28665  # 0.992384..., g = 26.92


def test_representable_features_table_values():
    # published 3,446 looks rounded rather than floored; +-1 either way
    assert representable_features(128, LAYER12_ALPHA, 28665) == pytest.approx(3446, abs=1)
    assert representable_features(1024, LAYER12_ALPHA, 28665) == pytest.approx(27568, abs=2)


def test_five_digit_alpha_is_too_coarse_for_large_widths():
    # g is steep near 0.992: the rounded 0.99239 moves 1024 * g by ~15
    assert abs(representable_features(1024, 0.99239, 28665) - 27568) > 2


def test_representable_features_capped():
    assert representable_features(100, 0.9, 40) == 40


def test_capacity_profile():
    p = CapacityProfile.from_alpha(0.95, 40)
    assert p.d_crit * p.g == pytest.approx(40, rel=1e-12)
    assert p.g >= math.e


alphas = st.floats(min_value=0.05, max_value=0.9995)
counts = st.integers(min_value=1, max_value=100_000)


@given(counts, alphas)
def test_critical_width_times_g_is_f(n, alpha):
    assert critical_width(n, alpha) * capacity_g(alpha) == pytest.approx(n, rel=1e-9)


@given(counts, alphas, st.integers(min_value=1, max_value=5000))
def test_representable_features_monotone_in_width(n, alpha, d):
    assert representable_features(d, alpha, n) <= representable_features(d + 1, alpha, n)


@given(counts, alphas)
def test_width_beyond_critical_keeps_everything(n, alpha):
    d = math.ceil(critical_width(n, alpha)) + 1
    assert representable_features(d, alpha, n) == n
