import dataclasses

import numpy as np
import pytest

from pelsd.bounds import AssumptionSpec, Family, population_theta
from pelsd.data import estimate_shares, responder_weights
from pelsd.errors import ConfigurationError, PelsdError
from pelsd.simulate import (
    DesignSpec,
    NonresponseSpec,
    PopulationSpec,
    check_propensity_bracket,
    draw_sample,
    generate_population,
    replication_seed,
    run_experiment,
)
from pelsd.testing import TestConfig

SMALL = PopulationSpec(size=20_000, grid_size=41)
COMPLETE = NonresponseSpec(d00=0.0, d10=0.0)


@pytest.fixture(scope="module")
def boundary():
    return generate_population(SMALL)


def test_boundary_population(boundary):
    j = boundary.binding_index
    assert boundary.binding_x == pytest.approx(2.5)
    assert abs(boundary.theta[j]) <= 1e-9
    assert np.all(np.delete(boundary.theta, j) < 0)
    recomputed = population_theta(boundary.population, SMALL.assumption, SMALL.s, boundary.grid)
    np.testing.assert_allclose(recomputed, boundary.theta, atol=1e-12)


def test_local_alternative_drift():
    sim = generate_population(dataclasses.replace(SMALL, drift=1.0))
    assert sim.theta[sim.binding_index] == pytest.approx(-1.0 / np.sqrt(SMALL.design_size), abs=1e-9)


def test_alternative_and_interior():
    alt = generate_population(dataclasses.replace(SMALL, scenario="alternative"))
    assert np.max(alt.theta) <= -SMALL.epsilon
    inner = generate_population(dataclasses.replace(SMALL, scenario="interior", gap_fraction=0.002))
    assert np.min(inner.theta) >= inner.spec.epsilon
    with pytest.raises(ConfigurationError):
        generate_population(dataclasses.replace(SMALL, scenario="interior"))


def test_mcar_shares_by_law_of_large_numbers():
    spec = PopulationSpec(size=100_000, scenario="none", nonresponse=NonresponseSpec(d00=0.3, d10=0.1))
    sh = generate_population(spec).population.shares()
    assert sh.d00 == pytest.approx(0.3, abs=0.01)
    assert sh.d10 == pytest.approx(0.1, abs=0.01)


def test_complete_response():
    pop = generate_population(dataclasses.replace(SMALL, scenario="none", nonresponse=COMPLETE)).population
    assert np.all(pop.z_a == 1) and np.all(pop.z_b == 1)


def test_generation_is_deterministic():
    a = generate_population(SMALL)
    b = generate_population(SMALL)
    np.testing.assert_array_equal(a.population.y_b, b.population.y_b)
    np.testing.assert_array_equal(a.population.z_b, b.population.z_b)
    c = generate_population(dataclasses.replace(SMALL, seed=SMALL.seed + 1))
    assert not np.array_equal(a.population.y_a, c.population.y_a)


def test_bad_specs():
    with pytest.raises(ConfigurationError):
        PopulationSpec(scenario="sideways")
    with pytest.raises(ConfigurationError):
        NonresponseSpec(mechanism="magic")
    with pytest.raises(ConfigurationError):
        PopulationSpec(t_range=(1.0, 12.0))
    with pytest.raises(ConfigurationError):
        DesignSpec(kind="snowball")


# ---------------------------------------------------------------- designs


def test_srswor_sample(boundary):
    smp = draw_sample(boundary, DesignSpec(k=1000, replicate_groups=20), 1)
    assert smp.k == 1000 and np.all(smp.weight == smp.weight[0])
    assert responder_weights(smp).w_prime.sum() == pytest.approx(smp.n)
    assert smp.population_size == SMALL.size
    zero = smp.replicate_weights == 0
    assert np.all(zero.sum(axis=1) == 1)
    np.testing.assert_allclose(smp.replicate_weights[~zero], smp.weight[0] * 20 / 19)


def test_stratified_proportional_allocation():
    sim = generate_population(dataclasses.replace(SMALL, scenario="none", n_strata=4))
    smp = draw_sample(sim, DesignSpec(kind="stratified", k=800, replicate_groups=10), 2)
    st = sim.population.stratum
    sizes = np.bincount(st)
    # within a stratum every unit carries N_h / n_h
    assert len(np.unique(np.round(smp.weight, 9))) <= 4
    assert smp.weight.sum() == pytest.approx(sizes.sum(), rel=0.01)


def test_cluster_design_errors():
    sim = generate_population(dataclasses.replace(SMALL, scenario="none", cluster_size=100))
    with pytest.raises(ConfigurationError):
        draw_sample(sim, DesignSpec(kind="cluster", m=10_000), 3)
    with pytest.raises(ConfigurationError):
        draw_sample(sim, DesignSpec(kind="stratified"), 3)
    with pytest.raises(ConfigurationError):
        draw_sample(sim, DesignSpec(k=10**7), 3)


@pytest.mark.slow
def test_pps_cluster_hajek_mean_is_unbiased():
    spec = dataclasses.replace(SMALL, size=50_000, scenario="none", nonresponse=COMPLETE,
                               cluster_size=50, cluster_size_spread=0.8, icc=0.3)
    sim = generate_population(spec)
    truth = sim.population.y_a.mean()
    design = DesignSpec(kind="cluster", m=100, pps=True, replicate_groups=10)
    est = []
    for sq in np.random.SeedSequence(5).spawn(2000):
        smp = draw_sample(sim, design, sq)
        est.append(np.average(smp.y_a, weights=smp.weight))
    est = np.asarray(est)
    assert abs(est.mean() - truth) <= 3 * est.std(ddof=1) / np.sqrt(est.size)


def test_hajek_mean_consistent_across_designs():
    spec = dataclasses.replace(SMALL, size=40_000, scenario="none", nonresponse=COMPLETE,
                               cluster_size=20, icc=0.2, n_strata=4)
    sim = generate_population(spec)
    truth = sim.population.y_a.mean()
    designs = {
        "srswor": lambda k: DesignSpec(k=k, replicate_groups=10),
        "stratified": lambda k: DesignSpec(kind="stratified", k=k, replicate_groups=10),
        "cluster": lambda k: DesignSpec(kind="cluster", m=k // 20, replicate_groups=10),
    }
    for name, make in designs.items():
        errs = []
        for k in (200, 800, 3200):
            e = [abs(np.average(s.y_a, weights=s.weight) - truth)
                 for s in (draw_sample(sim, make(k), sq) for sq in np.random.SeedSequence(k).spawn(40))]
            errs.append(np.mean(e))
        assert errs[0] > errs[2], name


# ---------------------------------------------------------------- propensity bracket


def test_propensity_bracket_check():
    mcar = generate_population(dataclasses.replace(SMALL, scenario="none")).population
    # each ratio lies in [0, 1 / share] by construction
    loose = check_propensity_bracket(mcar, _const_handles(0.0, 1.0 / 0.1))
    assert loose["ok"] and loose["a00"] == 0.0
    u_shaped = NonresponseSpec(mechanism="logistic", unit_coef=(-3.0, -8.0, 8.0), wave_coef=(-3.0, -8.0, 8.0))
    logit = generate_population(dataclasses.replace(SMALL, scenario="none", nonresponse=u_shaped)).population
    tight = check_propensity_bracket(logit, _const_handles(0.9, 1.1))
    assert not tight["ok"] and tight["a00"] > 0


def _const_handles(lo, hi):
    from pelsd.bounds import PropensityParams

    def low(x):
        return np.full(np.shape(x), lo)

    def high(x):
        return np.full(np.shape(x), hi)

    return PropensityParams(low, high, low, high, low, high)


# ---------------------------------------------------------------- experiments


def test_experiment_is_reproducible(boundary):
    design = DesignSpec(k=1000, replicate_groups=20)
    cfg = TestConfig(full_replicate=True)
    a = run_experiment(boundary, design, cfg, 6, master_seed=3)
    b = run_experiment(boundary, design, cfg, 6, master_seed=3)
    assert a.summary_dict() == b.summary_dict()
    assert a.as_rows() == b.as_rows()
    assert a.failures == 0 and len(a.results) == 6
    assert set(a.manifest["versions"]) >= {"pelsd", "numpy", "scipy", "python"}
    assert a.manifest["config_hash"] == b.manifest["config_hash"]
    assert 0.0 <= a.reject_rate_lr <= 1.0 and a.reject_rate_lr_se >= 0.0


def test_experiment_independent_of_worker_count(boundary):
    design = DesignSpec(k=500, replicate_groups=10)
    one = run_experiment(boundary, design, TestConfig(), 4, master_seed=9, workers=1)
    two = run_experiment(boundary, design, TestConfig(), 4, master_seed=9, workers=2)
    assert one.as_rows() == two.as_rows()


def test_replication_streams_are_distinct():
    a = np.random.default_rng(replication_seed(1, 0)).uniform(size=3)
    b = np.random.default_rng(replication_seed(1, 1)).uniform(size=3)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, np.random.default_rng(replication_seed(1, 0)).uniform(size=3))


def test_experiment_validation(boundary):
    with pytest.raises(ConfigurationError):
        run_experiment(boundary, DesignSpec(), TestConfig(), 0)


def test_unattainable_pattern_raises_after_retries():
    # the boundary map cannot make the unit-MCAR contrast peak at one point
    spec = dataclasses.replace(SMALL, assumption=AssumptionSpec(Family.MCAR_UNIT), max_attempts=2)
    with pytest.raises(PelsdError, match="after 2 attempts"):
        generate_population(spec)


def test_sampled_shares_track_population():
    smp = draw_sample(generate_population(SMALL), DesignSpec(k=2000), 4)
    assert estimate_shares(smp).d00 == pytest.approx(0.2, abs=0.04)
