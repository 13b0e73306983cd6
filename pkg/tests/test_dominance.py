import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from pelsd.dominance import (
    WeightedEmpirical,
    dominance_fn,
    dominance_fn_parametric,
    iterated_cdf_integrals,
    kernel,
    r_kernel,
)
from pelsd.specialfn import DegenerateCDF, GeneralizedArcsine, UniformCDF

THREE = WeightedEmpirical.unweighted([1.0, 2.0, 3.0])


def _integrate_lower_order(dist, s, x):
    """Oracle: integrate D^{s-1} from below the smallest point to x, splitting at the atoms."""
    lo = float(dist.values.min()) - 1.0
    if x <= lo:
        return 0.0
    knots = sorted({lo, x, *[v for v in dist.values.tolist() if lo < v < x]})
    return math.fsum(
        quad(lambda u: dominance_fn(dist, s - 1, u), a, b, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
        for a, b in zip(knots[:-1], knots[1:])
    )


@pytest.mark.parametrize("s, x, expected", [(1, 2.0, 2 / 3), (2, 2.0, 1 / 3), (2, 3.0, 1.0)])
def test_dominance_fn_examples(s, x, expected):
    assert dominance_fn(THREE, s, x) == pytest.approx(expected, abs=1e-15)
    if s > 1:
        assert _integrate_lower_order(THREE, s, x) == pytest.approx(expected, abs=1e-8)


def test_kernel_zero_power_convention():
    assert kernel(2.0, 2.0, 1) == 1.0
    assert kernel(np.nan, 2.0, 3) == 0.0


def test_invalid_order():
    with pytest.raises(ValueError):
        dominance_fn(THREE, 0, 1.0)
    with pytest.raises(ValueError):
        kernel(1.0, 2.0, 1.5)


def test_weighted_empirical_invariants():
    d = WeightedEmpirical([1.0, 2.0], [0.25, 0.5])
    assert abs(d.total_weight - 0.75) <= 1e-12
    assert d.points == [(1.0, 0.25), (2.0, 0.5)]
    with pytest.raises(ValueError):
        WeightedEmpirical([1.0], [-1.0])
    with pytest.raises(ValueError):
        dominance_fn(WeightedEmpirical([1.0], [0.0]), 1, 2.0)


@pytest.mark.parametrize("j, y, x, expected", [(0, 1.0, 2.0, 1.0), (2, 1.0, 3.0, 2.0), (3, 4.0, 3.0, 0.0)])
def test_r_kernel_examples(j, y, x, expected):
    assert r_kernel(j, y, x) == expected


def _nested_r(j, y, x):
    if j == 0:
        return 1.0 if y <= x else 0.0
    if x <= y:
        return 0.0
    return quad(lambda u: _nested_r(j - 1, y, u), y, x, epsabs=1e-12, epsrel=1e-12)[0]


@given(st.integers(0, 4), st.floats(-2, 2), st.floats(-2, 2))
def test_r_kernel_matches_recursion(j, y, x):
    assert abs(r_kernel(j, y, x) - _nested_r(j, y, x)) <= 1e-8


def test_parametric_examples():
    assert dominance_fn_parametric(UniformCDF((0, 1)), 2, 1.0, 0.0) == pytest.approx(0.5, abs=1e-9)
    g = GeneralizedArcsine(0.3, (0, 1))
    assert dominance_fn_parametric(g, 1, 0.4, 0.0) == g(0.4)
    for x in (0.5, 2.0, 3.5):
        got = dominance_fn_parametric(DegenerateCDF(1.5, (0, 4)), 2, x, 0.0)
        assert got == pytest.approx(max(x - 1.5, 0.0), abs=1e-9)


def test_iterated_integrals_match_scalar_path():
    g = GeneralizedArcsine(0.6, (0, 2))
    xs = np.array([0.0, 0.3, 1.0, 1.9, 2.0])
    got = iterated_cdf_integrals(g, [1, 2, 3], xs, 0.0)
    for k in (1, 2, 3):
        want = [dominance_fn_parametric(g, k, float(x), 0.0) for x in xs]
        np.testing.assert_allclose(got[k], want, atol=1e-8)


samples = st.lists(
    st.tuples(st.floats(0, 10), st.floats(0.01, 5)), min_size=1, max_size=50
).map(lambda pts: WeightedEmpirical([p[0] for p in pts], [p[1] for p in pts]))


@given(samples, st.integers(2, 4), st.floats(-1, 11))
def test_recursion_against_numeric_integral(dist, s, x):
    assert abs(dominance_fn(dist, s, x) - _integrate_lower_order(dist, s, x)) <= 1e-8


@given(samples, st.integers(1, 4))
def test_nondecreasing_and_convex(dist, s):
    xs = np.linspace(-1, 11, 121)
    d = dominance_fn(dist, s, xs)
    assert np.all(np.diff(d) >= -1e-12)
    if s >= 2:
        assert np.all(d[:-2] - 2 * d[1:-1] + d[2:] >= -1e-9)


@given(samples, st.floats(0.01, 100), st.integers(1, 3), st.floats(0, 10))
def test_weight_scale_invariance(dist, c, s, x):
    scaled = WeightedEmpirical(dist.values, c * dist.weights)
    assert dominance_fn(scaled, s, x) == pytest.approx(dominance_fn(dist, s, x), rel=1e-10, abs=1e-12)
