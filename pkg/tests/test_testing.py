import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_sample
from pelsd.bounds import AssumptionSpec, Direction, Family, KsParams
from pelsd.data import FinitePopulation
from pelsd.errors import ConfigurationError
from pelsd.specialfn import chi2_1_quantile
from pelsd.testing import (
    TestConfig,
    arcsine_grid,
    arcsine_spec,
    emit_bound_curves,
    grid_refine_check,
    ks_grid,
    min_t_statistic,
    run_test,
    sensitivity_sweep,
)

A, B = Direction.A_DOMINATES_B, Direction.B_DOMINATES_A
CFG = TestConfig(s=1, t_range=(0.2, 0.8), grid_size=31)
KS0 = AssumptionSpec(Family.KS, A)


@pytest.fixture
def dominant(rng):
    """Wave B sits well below wave A, so A dominates B on [0.2, 0.8]."""
    return make_sample(rng, k=2000, shift_b=-0.15)


def test_no_dominance_in_sample_gives_zero(rng):
    smp = make_sample(rng, k=500, shift_b=0.15)
    rep = run_test(smp, KS0, CFG)
    assert not rep.dominance_in_sample
    assert rep.lr_statistic == 0.0 and rep.min_t2_statistic == 0.0
    assert rep.decision_lr == "fail_to_reject" and rep.argmin_x is None


def test_dominant_sample_rejects(dominant):
    rep = run_test(dominant, KS0, CFG)
    assert rep.dominance_in_sample and rep.reject_lr and rep.reject_min_t
    ok = np.setdiff1d(np.arange(rep.grid.size), rep.degenerate_points)
    assert rep.lr_statistic == np.min(rep.lr_pointwise[ok])
    assert rep.argmin_index == int(np.flatnonzero(rep.lr_pointwise == rep.lr_statistic)[0])
    assert rep.argmin_x == rep.grid[rep.argmin_index]
    assert rep.critical_value == pytest.approx(3.841458820694124)
    assert "decision (LR)     : reject" in rep.summary()
    assert len(rep.grid_rows()) == 31


def test_min_t_examples():
    assert min_t_statistic([-2.0], [1.0]) == 4.0
    assert min_t_statistic(np.zeros(5), np.ones(5)) == 0.0
    assert min_t_statistic([-1.0, -3.0], [0.0, 1.0]) == 9.0


def test_range_must_lie_in_support(sample):
    with pytest.raises(ConfigurationError):
        run_test(sample, KS0, CFG, t_range=(0.5, 1.5))


@pytest.mark.parametrize("bad", [dict(alpha=0.0), dict(alpha=1.0), dict(s=0), dict(t_range=(1, 1)), dict(grid_size=1)])
def test_config_validation(bad):
    with pytest.raises(ConfigurationError):
        dataclasses.replace(CFG, **bad)


def test_points_below_the_data_are_degenerate(dominant):
    wide = dataclasses.replace(dominant, support_a=(-1.0, 1.0), support_b=(-1.0, 1.0))
    rep = run_test(wide, KS0, CFG, t_range=(-0.3, 0.8))
    below = np.flatnonzero(rep.grid < 0)
    np.testing.assert_array_equal(rep.degenerate_points, below)
    assert np.all(np.isnan(rep.lr_pointwise[below]))
    assert rep.degenerate_warning and "more than 10% of the grid" in rep.summary()
    # theta-hat is exactly zero there, so strict dominance fails on this grid
    assert np.all(rep.theta_hat[below] == 0.0)
    assert not rep.dominance_in_sample and rep.lr_statistic == 0.0


def test_zero_variance_points_are_excluded(dominant):
    flat = dataclasses.replace(dominant, replicate_weights=np.repeat(dominant.weight[:, None], 10, axis=1))
    rep = run_test(flat, KS0, CFG)
    assert rep.dominance_in_sample
    assert rep.degenerate_points.size == rep.grid.size
    assert rep.lr_statistic == 0.0 and rep.argmin_index is None and rep.decision_lr == "fail_to_reject"


def test_variance_options(rng):
    smp = make_sample(rng, k=3000, groups=50, shift_b=-0.15)
    base = run_test(smp, KS0, CFG)
    srs = run_test(smp, KS0, CFG, variance_method="srs_closed_form")
    full = run_test(smp, KS0, CFG, full_replicate=True)
    np.testing.assert_array_equal(base.theta_hat, srs.theta_hat)
    np.testing.assert_array_equal(base.theta_hat, full.theta_hat)
    # the closed form ignores the variability of the plug-in shares, the jackknife holds them fixed too
    assert np.mean(base.var_hat / srs.var_hat) == pytest.approx(1.0, abs=0.2)
    assert not np.allclose(full.var_hat, base.var_hat)


def test_grid_refine_check(dominant):
    out = grid_refine_check(dominant, KS0, CFG)
    assert out["refined_grid_size"] == 61
    assert out["drift"] <= 1e-12  # the refined grid contains the coarse one
    assert out["decision"] == out["decision_refined"] == "reject"


@settings(max_examples=15)
@given(st.integers(0, 2**31), st.floats(0.1, 50.0), st.sampled_from([A, B]), st.floats(-0.2, 0.2))
def test_argmin_scale_invariance(seed, c, direction, shift):
    smp = make_sample(np.random.default_rng(seed), k=300, shift_b=shift)
    scaled = dataclasses.replace(smp, y_a=c * smp.y_a, y_b=c * smp.y_b, support_a=(0, c), support_b=(0, c))
    spec = AssumptionSpec(Family.KS, direction, ks=KsParams(0.1, 0.2, 0.0))
    r1 = run_test(smp, spec, CFG)
    r2 = run_test(scaled, spec, CFG, t_range=(0.2 * c, 0.8 * c))
    assert r1.dominance_in_sample == r2.dominance_in_sample
    assert r1.decision_lr == r2.decision_lr
    assert r1.argmin_index == r2.argmin_index


@settings(max_examples=15)
@given(st.integers(0, 2**31), st.floats(0.001, 0.5), st.floats(0.001, 0.5), st.floats(-0.2, 0.0))
def test_decision_monotone_in_alpha(seed, a1, a2, shift):
    lo, hi = sorted((a1, a2))
    smp = make_sample(np.random.default_rng(seed), k=300, shift_b=shift)
    r_lo = run_test(smp, KS0, CFG, alpha=lo)
    r_hi = run_test(smp, KS0, CFG, alpha=hi)
    assert r_lo.lr_statistic >= 0 and r_lo.min_t2_statistic >= 0
    assert r_lo.lr_statistic == r_hi.lr_statistic
    if r_lo.reject_lr:
        assert r_hi.reject_lr
    assert chi2_1_quantile(hi) <= chi2_1_quantile(lo)


# ---------------------------------------------------------------- sweeps


def test_grids():
    assert len(ks_grid()) == 11**3 and ks_grid()[0] == (0.0, 0.0, 0.0)
    assert len(arcsine_grid()) == 9**3 and arcsine_grid()[-1] == (0.9, 0.9, 0.9)


def test_ks_sweep(dominant):
    res = sensitivity_sweep(dominant, "ks", ks_grid(0.5), CFG, direction=A)
    assert (0.0, 0.0, 0.0) in res.reject_set
    assert set(res.reject_set) <= set(res.parameter_grid)
    assert (1.0, 1.0, 1.0) not in res.reject_set
    assert res.monotonicity_violations() == []
    assert len(res.rows()) == 27 and not res.failures
    again = sensitivity_sweep(dominant, "ks", ks_grid(0.5), CFG, direction=A)
    assert again.rows() == res.rows()


def test_arcsine_sweep(dominant):
    res = sensitivity_sweep(dominant, "arcsine", arcsine_grid((0.2, 0.8)), CFG, direction=A)
    assert len(res.rows()) == 8 and not res.failures
    assert {r["p1"] for r in res.rows()} == {0.2, 0.8}


def test_sweep_errors(dominant):
    with pytest.raises(ConfigurationError):
        sensitivity_sweep(dominant, "ks", [], CFG)
    with pytest.raises(ConfigurationError):
        sensitivity_sweep(dominant, "gaussian", [(0, 0, 0)], CFG)


def test_arcsine_spec_unused_handles_are_trivial():
    spec = arcsine_spec((0.3, 0.5, 0.7), B, (0.0, 1.0))
    p = spec.propensity
    xs = np.linspace(0.0, 0.99, 7)
    np.testing.assert_array_equal(p.u_a00(xs), 1.0)
    np.testing.assert_array_equal(p.l_b00(xs), 0.0)
    np.testing.assert_array_equal(p.l_10(xs), 0.0)


# ---------------------------------------------------------------- curves


def test_curve_cardinality(sample):
    specs = [AssumptionSpec(Family.WORST_CASE), AssumptionSpec(Family.MCAR_UNIT)]
    rows = emit_bound_curves(sample, specs, 1, np.linspace(0, 1, 101))
    assert len(rows) == 2 * 2 * 101
    assert set(rows[0]) == {"spec", "population", "x", "lower", "upper"}


def test_curves_collapse(rng):
    ya = rng.uniform(size=200)
    full = FinitePopulation(ya, ya**2, np.ones(200), np.ones(200), (0, 1), (0, 1))
    for r in emit_bound_curves(full, [AssumptionSpec(Family.WORST_CASE)], 2, np.linspace(0, 1, 11)):
        assert r["lower"] == pytest.approx(r["upper"], abs=1e-12)
    smp = make_sample(rng, k=300)
    ks = emit_bound_curves(smp, [KS0], 2, np.linspace(0, 1, 11))
    mcar = emit_bound_curves(smp, [AssumptionSpec(Family.MCAR_UNIT)], 2, np.linspace(0, 1, 11))
    for rk, rm in zip(ks, mcar):
        assert abs(rk["lower"] - rk["upper"]) <= 1e-12
        if rk["population"] == "A":
            assert abs(rk["lower"] - rm["lower"]) <= 1e-12
