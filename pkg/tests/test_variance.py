import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_sample
from pelsd.bounds import AssumptionSpec, Family, PhiVector, build_phi, moment_matrix
from pelsd.data import FinitePopulation, PairedSample, ResponseShares, estimate_shares, responder_weights
from pelsd.errors import ConfigurationError, DegenerateMomentError
from pelsd.simulate import DesignSpec, PopulationSpec, draw_sample, generate_population
from pelsd.testing import TestConfig, run_test
from pelsd.variance import (
    design_effect,
    hajek_second_moment,
    jackknife_from_replicates,
    jackknife_variance,
    replicate_responder_weights,
    sampling_fraction,
    srs_variance,
)

X = np.array([0.3, 0.5, 0.7])


def _phi(sample, s=1, spec=None):
    spec = spec or AssumptionSpec(Family.MCAR_UNIT)
    return build_phi(spec, estimate_shares(sample), s, sample)


def test_identical_replicates_give_zero(sample):
    same = dataclasses.replace(sample, replicate_weights=np.repeat(sample.weight[:, None], 10, axis=1))
    v = jackknife_variance(same, responder_weights(same), _phi(same), 1, X)
    np.testing.assert_allclose(v.var_hat, 0.0, atol=1e-28)
    assert v.replicates_used == 10


def test_symmetric_perturbation():
    assert jackknife_from_replicates(np.array([1.0]), np.array([[1.3], [0.7]]), np.array([0.5, 0.5]))[0] == pytest.approx(0.09)


def test_missing_replicates(sample):
    bare = dataclasses.replace(sample, replicate_weights=None)
    with pytest.raises(ConfigurationError):
        jackknife_variance(bare, responder_weights(bare), _phi(bare), 1, X)


def test_replicates_renormalized_to_n(sample):
    rw = replicate_responder_weights(sample)
    np.testing.assert_allclose(rw.sum(axis=0), sample.n)


def test_jackknife_permutation_invariant(rng, sample):
    perm = rng.permutation(sample.k)
    shuffled = dataclasses.replace(
        sample,
        **{f: getattr(sample, f)[perm] for f in ("y_a", "y_b", "z_a", "z_b", "weight", "replicate_weights")},
    )
    a = jackknife_variance(sample, responder_weights(sample), _phi(sample, 2), 2, X).var_hat
    b = jackknife_variance(shuffled, responder_weights(shuffled), _phi(shuffled, 2), 2, X).var_hat
    np.testing.assert_allclose(a, b, rtol=1e-10)


@pytest.mark.parametrize("w, h, expected", [((1, 1), (0, 0), 0.0), ((1, 1), (1, -1), 1.0), ((0.5, 1.5), (2, 2), 4.0)])
def test_hajek_examples(w, h, expected):
    assert hajek_second_moment(np.array(w, float), np.array(h, float)) == pytest.approx(expected)


def test_design_effect_examples():
    w = np.ones(4)
    h = np.array([1.0, -2.0, 0.5, 3.0])
    S = hajek_second_moment(w, h)
    assert design_effect(S / 4, w, h).deff_hat == pytest.approx(1.0)
    assert design_effect(2 * S / 4, w, h).deff_hat == pytest.approx(2.0)
    with pytest.raises(DegenerateMomentError):
        design_effect(0.1, w, np.zeros(4))
    grid = design_effect(np.array([0.1, 0.1]), w, np.column_stack([h, np.zeros(4)]))
    assert np.isfinite(grid.deff_hat[0]) and np.isnan(grid.deff_hat[1])


@given(st.floats(0.01, 100).flatmap(lambda c: st.sampled_from([c, -c])), st.integers(0, 2**31))
def test_design_effect_scale_invariant(c, seed):
    smp = make_sample(np.random.default_rng(seed), k=120)
    w = responder_weights(smp)
    phi = _phi(smp, 2)
    scaled = PhiVector(*(lambda x, f=f: c * f(x) for f in (phi.phi1, phi.phi2, phi.phi3, phi.phi4)), phi.kernel_order)
    d = []
    for p in (phi, scaled):
        v = jackknife_variance(smp, w, p, 2, X)
        d.append(design_effect(v, w, moment_matrix(smp, p, X)).deff_hat)
    np.testing.assert_allclose(d[0], d[1], rtol=1e-9)


def test_srs_closed_form():
    h = np.array([1.0, 2.0, 3.0, 4.0])
    assert srs_variance(np.ones(4), h) == pytest.approx(np.var(h, ddof=1) / 4)
    assert srs_variance(np.ones(4), h, 0.5) == pytest.approx(0.5 * np.var(h, ddof=1) / 4)
    with pytest.raises(ConfigurationError):
        srs_variance(np.ones(1), h[:1])


def test_sampling_fraction(sample):
    assert sampling_fraction(sample) == 0.0
    assert sampling_fraction(dataclasses.replace(sample, population_size=4000)) == pytest.approx(0.1)


@pytest.mark.slow
def test_jackknife_matches_monte_carlo_variance():
    rng = np.random.default_rng(7)
    size, n, groups, reps = 100_000, 1000, 50, 2000
    ya = rng.beta(2, 3, size)
    yb = np.clip(ya + 0.05 * rng.standard_normal(size), 0, 1)
    u = rng.uniform(size=size)
    pop = FinitePopulation(ya, yb, (u >= 0.2).astype(int), (u >= 0.3).astype(int), (0, 1), (0, 1))
    spec = AssumptionSpec(Family.MCAR_UNIT)
    shares = pop.shares()
    x = np.array([0.4])
    theta, jk = [], []
    for _ in range(reps):
        idx = rng.choice(size, n, replace=False)
        grp = rng.permutation(n) % groups
        rw = np.full((n, groups), groups / (groups - 1))
        rw[np.arange(n), grp] = 0.0
        smp = PairedSample(
            y_a=np.where(pop.z_a[idx] == 1, ya[idx], np.nan), y_b=np.where(pop.z_b[idx] == 1, yb[idx], np.nan),
            z_a=pop.z_a[idx], z_b=pop.z_b[idx], weight=np.ones(n), support_a=(0, 1), support_b=(0, 1),
            replicate_weights=rw,
        )
        w = responder_weights(smp)
        # nuisance values fixed at the population shares, as the jackknife holds them fixed
        phi = build_phi(spec, shares, 1, smp)
        theta.append((w.w_prime @ moment_matrix(smp, phi, x))[0] / w.n)
        jk.append(jackknife_variance(smp, w, phi, 1, x).var_hat[0])
    assert np.mean(jk) == pytest.approx(np.var(theta, ddof=1), rel=0.15)


@pytest.mark.slow
def test_clustered_design_inflates_variance():
    sim = generate_population(PopulationSpec(size=50_000, cluster_size=50, icc=0.3, seed=11))
    design = DesignSpec(kind="cluster", m=100, replicate_groups=50)
    cfg = TestConfig(s=2, t_range=(1.0, 4.0), grid_size=51)
    seeds = np.random.SeedSequence(99).spawn(100)
    above = 0
    for sq in seeds:
        rep = run_test(draw_sample(sim, design, sq), sim.spec.assumption, cfg)
        ok = ~np.isnan(rep.deff_hat)
        above += np.median(rep.deff_hat[ok]) > 1.0
    assert above >= 90


def test_unit_share_tuple_oracle():
    # Hajek moment of a constant c is c^2 because the weights average to one
    w = np.array([0.2, 1.8, 1.0])
    assert hajek_second_moment(w, np.full(3, 1.7)) == pytest.approx(1.7**2)
    assert ResponseShares(0.5, 0.25, 0.25).as_tuple() == (0.5, 0.25, 0.25)
