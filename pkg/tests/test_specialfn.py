import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special, stats

from pelsd.errors import ConfigurationError
from pelsd.specialfn import (
    DegenerateCDF,
    GeneralizedArcsine,
    TabulatedCDF,
    UniformCDF,
    arcsine_cdf,
    betainc_reg,
    chi2_1_quantile,
    chi2_cdf,
    gammainc_reg,
)


def test_arcsine_examples():
    g = GeneralizedArcsine(0.5, (2.0, 6.0))
    assert arcsine_cdf(g, 4.0) == pytest.approx(0.5, abs=1e-12)
    assert arcsine_cdf(g, 3.0) == pytest.approx(1 / 3, abs=1e-12)
    assert arcsine_cdf(g, 3.0) == pytest.approx(2 / math.pi * math.asin(0.5), abs=1e-12)
    assert arcsine_cdf(g, 1.0) == 0.0 and arcsine_cdf(g, 2.0) == 0.0
    assert arcsine_cdf(g, 6.0) == 1.0 and arcsine_cdf(g, 9.0) == 1.0


@pytest.mark.parametrize("xi", [0.0, 1.0, -0.2, 1.5])
def test_arcsine_shape_domain(xi):
    with pytest.raises(ConfigurationError):
        GeneralizedArcsine(xi, (0, 1))


@given(st.floats(0.01, 20), st.floats(0.01, 20), st.floats(0, 1))
def test_betainc_against_scipy(a, b, u):
    assert abs(betainc_reg(a, b, u) - special.betainc(a, b, u)) <= 1e-12


@given(st.floats(0.05, 50), st.floats(0, 200))
def test_gammainc_against_scipy(a, x):
    assert abs(gammainc_reg(a, x) - special.gammainc(a, x)) <= 1e-12


@given(st.floats(0.01, 0.99), st.floats(0.001, 0.999))
def test_arcsine_matches_scipy_beta(xi, u):
    g = GeneralizedArcsine(xi, (0.0, 1.0))
    assert abs(g(u) - stats.beta(1 - xi, xi).cdf(u)) <= 1e-12


def test_stochastic_ordering_on_lattice():
    xis = np.linspace(0.05, 0.95, 19)
    xs = np.linspace(0, 1, 41)
    vals = np.array([GeneralizedArcsine(x, (0, 1))(xs) for x in xis])
    assert np.all(np.diff(vals, axis=0) >= -1e-15)


@given(st.floats(0.05, 0.95), st.floats(0.02, 0.98))
def test_density_is_derivative(xi, u):
    g = GeneralizedArcsine(xi, (1.0, 3.0))
    x = 1.0 + 2.0 * u
    h = 1e-6
    numeric = (g(x + h) - g(x - h)) / (2 * h)
    assert numeric == pytest.approx(g.pdf(x), rel=1e-6)


def test_strictly_increasing_inside():
    g = GeneralizedArcsine(0.2, (0, 1))
    assert np.all(np.diff(g(np.linspace(1e-6, 1 - 1e-6, 500))) > 0)


@pytest.mark.parametrize("alpha, expected", [(0.05, 3.84146), (0.5, 0.45494)])
def test_chi2_quantile_examples(alpha, expected):
    assert round(chi2_1_quantile(alpha), 5) == expected


@pytest.mark.parametrize("alpha", np.linspace(0.1, 0.9, 9))
def test_chi2_quantile_is_squared_normal(alpha):
    z = stats.norm.ppf(1 - alpha / 2)
    assert chi2_1_quantile(alpha) == pytest.approx(z * z, rel=1e-10)


@given(st.floats(0.001, 0.999))
def test_chi2_round_trip(alpha):
    assert abs(chi2_cdf(chi2_1_quantile(alpha)) - (1 - alpha)) <= 1e-9


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 2.0])
def test_chi2_domain(alpha):
    with pytest.raises(ValueError):
        chi2_1_quantile(alpha)


def test_other_handles(tmp_path):
    u = UniformCDF((0, 4))
    assert u(-1.0) == 0.0 and u(2.0) == 0.5 and u(5.0) == 1.0
    d = DegenerateCDF(1.0)
    assert d(0.999) == 0.0 and d(1.0) == 1.0
    p = tmp_path / "t.csv"
    p.write_text("# x,p\n0,0\n1,0.5\n2,1\n")
    t = TabulatedCDF.from_file(p)
    assert t(0.5) == 0.25 and t.support == (0.0, 2.0)
    with pytest.raises(ConfigurationError):
        TabulatedCDF([0, 1], [0.6, 0.5])
