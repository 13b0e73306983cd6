"""Finite populations, survey designs, nonresponse and the Monte Carlo runner.

A simulated population pairs a wave-A outcome with a wave-B outcome.  Wave A
is a lognormal (optionally with a cluster random effect) clipped to the
declared support.  Wave B is built in two steps: a latent score that is
wave A plus autoregressive noise decides the *ranks*, and a monotone map
``T`` applied to the sorted wave-A values decides the *values*.  The
wave-B marginal is therefore exactly the image of the wave-A marginal under
``T``, which is what lets one scalar in ``T`` control the contrast curve:

* ``boundary`` uses ``T(y) = y + c (m - y)(y - p) / (m - p)`` below the
  binding point ``m`` and ``T(y) = y - c (y - m)`` above it, with ``p``
  solved numerically so that the population contrast at ``m`` equals
  ``-drift / sqrt(k)`` (zero for the boundary null).  ``T(m) = m`` makes
  ``m`` a local maximum of the contrast.
* ``alternative`` shifts wave B down until the contrast is ``<= -eps``
  on the whole grid; ``interior`` shifts it up until it is ``>= +eps``.
* ``none`` leaves ``T`` the identity.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, stats

from . import __version__
from .bounds import AssumptionSpec, BoundCurves, Direction, Family, KsParams, make_grid, population_bounds, population_dominance
from .data import FinitePopulation, PairedSample
from .errors import ConfigurationError, PelsdError
from .specialfn import chi2_1_quantile
from .testing import TestConfig, _Prepared

SCENARIOS = ("boundary", "alternative", "interior", "none")
MECHANISMS = ("mcar", "logistic", "ks_mixture")
DESIGNS = ("srswor", "stratified", "cluster")


def _logistic(t):
    return 1.0 / (1.0 + np.exp(-t))


def _percentile_rank(v: np.ndarray) -> np.ndarray:
    r = np.empty(v.size)
    r[np.argsort(v, kind="stable")] = (np.arange(v.size) + 0.5) / v.size
    return r


@dataclass(frozen=True)
class NonresponseSpec:
    """Response mechanism.

    ``mcar``
        Unit nonresponse with probability ``d00``; wave nonresponse among
        wave-A responders with probability ``d10 / (1 - d00)``.
    ``logistic``
        ``logit P(unit nonresponse) = a0 + a1 u_A + a2 u_A^2`` and
        ``logit P(wave nonresponse | responded in A) = b0 + b1 u_B + b2 u_B^2``
        with ``u`` the percentile rank of the outcome.  Positive quadratic
        terms give U-shaped propensities.
    ``ks_mixture``
        Nonresponders are a mixture: a ``1 - gamma`` fraction drawn
        uniformly and a ``gamma`` fraction drawn from the ``tail`` of the
        outcome distribution, with shares ``d00`` and ``d10``.
    """

    mechanism: str = "mcar"
    d00: float = 0.2
    d10: float = 0.1
    unit_coef: tuple[float, float, float] = (-1.5, 0.0, 0.0)
    wave_coef: tuple[float, float, float] = (-2.0, 0.0, 0.0)
    gamma_a: float = 0.0
    gamma_b10: float = 0.0
    tail: str = "low"

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ConfigurationError(f"unknown nonresponse mechanism {self.mechanism!r}; expected one of {MECHANISMS}")
        if not (0.0 <= self.d00 < 1.0 and 0.0 <= self.d10 and self.d00 + self.d10 < 1.0):
            raise ConfigurationError("need 0 <= d00, 0 <= d10 and d00 + d10 < 1")
        if not (0.0 <= self.gamma_a <= 1.0 and 0.0 <= self.gamma_b10 <= 1.0):
            raise ConfigurationError("mixture weights must lie in [0, 1]")
        if self.tail not in ("low", "high"):
            raise ConfigurationError("tail must be 'low' or 'high'")
        object.__setattr__(self, "unit_coef", tuple(float(v) for v in self.unit_coef))
        object.__setattr__(self, "wave_coef", tuple(float(v) for v in self.wave_coef))


@dataclass(frozen=True)
class PopulationSpec:
    """A paired finite population and the contrast pattern it must satisfy.

    Parameters
    ----------
    size : int
        Population size (the two waves are paired, so ``N_A = N_B``).
    support : (float, float)
        Declared support of both waves.
    log_mean, log_sd : float
        Lognormal parameters of wave A.
    persistence : float
        Correlation between the wave-A latent and the wave-B rank score.
    cluster_size : int
        Units per cluster; 0 means no clusters.
    cluster_size_spread : float
        Cluster sizes vary uniformly within ``size * (1 +- spread)``.
    icc : float
        Share of latent variance due to the cluster effect.
    n_strata : int
        Strata formed from quantiles of a noisy copy of the latent.
    nonresponse : NonresponseSpec
    scenario : {'boundary', 'alternative', 'interior', 'none'}
    assumption : AssumptionSpec
        Assumption and direction whose population contrast is controlled.
    s : int
    t_range : (float, float)
    grid_size : int
    compression : float
        Slope loss ``c`` of the boundary map above the binding point, in (0, 1).
    gap_fraction : float
        ``eps`` as a fraction of ``(t_hi - t_lo)^(s-1) / (s-1)!``.
    drift : float
        Local-alternative constant; the contrast at the binding point is
        ``-drift / sqrt(design_size)``.
    design_size : int
        Sample size used to scale ``drift``.
    binding_x : float, optional
        Binding point; defaults to the grid midpoint.
    seed : int
    max_attempts : int
    """

    size: int = 200_000
    support: tuple[float, float] = (0.0, 10.0)
    log_mean: float = math.log(2.0)
    log_sd: float = 0.6
    persistence: float = 0.8
    cluster_size: int = 0
    cluster_size_spread: float = 0.0
    icc: float = 0.0
    n_strata: int = 1
    nonresponse: NonresponseSpec = field(default_factory=NonresponseSpec)
    scenario: str = "boundary"
    assumption: AssumptionSpec = field(
        default_factory=lambda: AssumptionSpec(Family.KS, Direction.A_DOMINATES_B, ks=KsParams(0.0, 0.0, 0.0))
    )
    s: int = 2
    t_range: tuple[float, float] = (1.0, 4.0)
    grid_size: int = 101
    compression: float = 0.5
    gap_fraction: float = 0.05
    drift: float = 0.0
    design_size: int = 5000
    binding_x: float | None = None
    seed: int = 20240101
    max_attempts: int = 5

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.size < 2:
            raise ConfigurationError("population size must be at least 2")
        lo, hi = self.support
        if not lo < hi:
            raise ConfigurationError("support must satisfy lo < hi")
        if not (lo <= self.t_range[0] < self.t_range[1] <= hi):
            raise ConfigurationError("range must lie inside the support")
        if not 0.0 < self.compression < 1.0:
            raise ConfigurationError("compression must lie in (0, 1)")
        if not 0.0 <= self.icc < 1.0:
            raise ConfigurationError("icc must lie in [0, 1)")
        if not -1.0 <= self.persistence <= 1.0:
            raise ConfigurationError("persistence must lie in [-1, 1]")
        if self.icc > 0 and self.cluster_size < 1:
            raise ConfigurationError("a positive icc needs cluster_size >= 1")

    @property
    def grid(self) -> np.ndarray:
        return make_grid(self.t_range[0], self.t_range[1], self.grid_size)

    @property
    def epsilon(self) -> float:
        width = self.t_range[1] - self.t_range[0]
        return self.gap_fraction * width ** (self.s - 1) / math.factorial(self.s - 1)


@dataclass(frozen=True)
class DesignSpec:
    """Sampling design and replicate scheme.

    ``srswor`` draws ``k`` units; ``stratified`` draws ``allocation[h]``
    units from stratum ``h`` (proportional to stratum size when
    ``allocation`` is omitted); ``cluster`` draws ``m`` clusters, by simple
    random sampling or by systematic probability-proportional-to-size
    sampling when ``pps`` is set, and keeps every unit in them.  Replicates
    delete one of ``G`` random groups of primary sampling units.
    """

    kind: str = "srswor"
    k: int = 5000
    allocation: tuple[int, ...] | None = None
    m: int = 100
    pps: bool = False
    replicate_groups: int = 50

    def __post_init__(self):
        if self.kind not in DESIGNS:
            raise ConfigurationError(f"unknown design {self.kind!r}; expected one of {DESIGNS}")
        if self.replicate_groups < 2:
            raise ConfigurationError("at least two replicate groups are needed")
        if self.allocation is not None:
            object.__setattr__(self, "allocation", tuple(int(v) for v in self.allocation))


@dataclass(frozen=True, eq=False)
class SimulatedPopulation:
    """A generated population with its true curves.

    ``theta`` is the population contrast targeted by ``spec.assumption`` on
    ``grid``; ``binding_index`` locates the binding point for boundary
    scenarios.
    """

    population: FinitePopulation
    spec: PopulationSpec
    grid: np.ndarray
    theta: np.ndarray
    bounds: BoundCurves
    true_d_a: np.ndarray
    true_d_b: np.ndarray
    parameter: float
    binding_index: int | None
    attempts: int

    @property
    def binding_x(self) -> float | None:
        return None if self.binding_index is None else float(self.grid[self.binding_index])


# --------------------------------------------------------------------------
# population generation


def _cluster_labels(spec: PopulationSpec, rng) -> np.ndarray | None:
    if spec.cluster_size < 1:
        return None
    sizes = []
    total = 0
    lo = max(1, int(round(spec.cluster_size * (1 - spec.cluster_size_spread))))
    hi = max(lo, int(round(spec.cluster_size * (1 + spec.cluster_size_spread))))
    while total < spec.size:
        sz = int(rng.integers(lo, hi + 1))
        sz = min(sz, spec.size - total)
        sizes.append(sz)
        total += sz
    return np.repeat(np.arange(len(sizes)), sizes)


def _latent(n_units: int, clusters, icc: float, rng) -> np.ndarray:
    e = rng.standard_normal(n_units)
    if clusters is None or icc == 0.0:
        return e
    c = rng.standard_normal(int(clusters.max()) + 1)
    return math.sqrt(icc) * c[clusters] + math.sqrt(1.0 - icc) * e


def _responses(nr: NonresponseSpec, u_a: np.ndarray, u_b: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    size = u_a.size
    z_a = np.ones(size, dtype=np.int8)
    z_b = np.ones(size, dtype=np.int8)
    if nr.mechanism == "mcar":
        draw = rng.uniform(size=size)
        z_a[draw < nr.d00] = 0
        z_b[draw < nr.d00 + nr.d10] = 0
    elif nr.mechanism == "logistic":
        a0, a1, a2 = nr.unit_coef
        b0, b1, b2 = nr.wave_coef
        p_unit = _logistic(a0 + a1 * u_a + a2 * u_a**2)
        p_wave = _logistic(b0 + b1 * u_b + b2 * u_b**2)
        z_a = (rng.uniform(size=size) >= p_unit).astype(np.int8)
        z_b = z_a * (rng.uniform(size=size) >= p_wave).astype(np.int8)
    else:
        n00 = int(round(nr.d00 * size))
        n10 = int(round(nr.d10 * size))
        unit = _mixture_pick(np.arange(size), u_a, n00, nr.gamma_a, nr.tail, rng)
        z_a[unit] = 0
        z_b[unit] = 0
        rest = np.flatnonzero(z_a == 1)
        wave = _mixture_pick(rest, u_b[rest], n10, nr.gamma_b10, nr.tail, rng)
        z_b[wave] = 0
    return z_a, z_b


def _mixture_pick(idx: np.ndarray, score: np.ndarray, count: int, gamma: float, tail: str, rng) -> np.ndarray:
    """Pick ``count`` of ``idx``: a ``gamma`` share from the tail, the rest uniformly."""
    n_tail = int(round(gamma * count))
    order = np.argsort(score if tail == "low" else -score, kind="stable")
    # the tail draw is uniform within the lowest (or highest) 2 * n_tail candidates
    pool = order[: min(idx.size, 2 * n_tail)]
    tail_pick = rng.choice(pool, size=n_tail, replace=False) if n_tail else np.empty(0, dtype=int)
    remaining = np.setdiff1d(np.arange(idx.size), tail_pick, assume_unique=False)
    uni = rng.choice(remaining, size=count - n_tail, replace=False)
    return idx[np.concatenate([tail_pick, uni]).astype(int)]


def boundary_map(y: np.ndarray, m: float, p: float, c: float) -> np.ndarray:
    """The monotone map used for boundary populations (see module docstring)."""
    y = np.asarray(y, dtype=float)
    below = y + c * (m - y) * (y - p) / (m - p)
    above = y - c * (y - m)
    return np.where(y <= m, below, above)


def _assemble(spec: PopulationSpec, base: dict, values_b_sorted: np.ndarray) -> FinitePopulation:
    y_b = np.empty_like(values_b_sorted)
    y_b[base["rank_b"]] = values_b_sorted
    return FinitePopulation(
        y_a=base["y_a"],
        y_b=y_b,
        z_a=base["z_a"],
        z_b=base["z_b"],
        support_a=spec.support,
        support_b=spec.support,
        cluster=base["cluster"],
        stratum=base["stratum"],
    )


def _theta_at(spec, base, values_b_sorted, xs) -> np.ndarray:
    from .bounds import population_theta

    pop = _assemble(spec, base, values_b_sorted)
    return population_theta(pop, spec.assumption, spec.s, np.atleast_1d(xs))


def _bracket_root(f, a: float, b: float, expand) -> tuple[float, float]:
    fa, fb = f(a), f(b)
    tries = 0
    while np.sign(fa) == np.sign(fb):
        a, b = expand(a, b)
        fa, fb = f(a), f(b)
        tries += 1
        if tries > 40:
            raise PelsdError("could not bracket the population shape parameter")
    return a, b


def generate_population(spec: PopulationSpec) -> SimulatedPopulation:
    """Generate a population whose contrast follows ``spec.scenario``.

    Deterministic given ``spec.seed``.  When the post-generation check of
    the contrast pattern fails, a fresh draw is tried, up to
    ``spec.max_attempts`` times.

    Raises
    ------
    PelsdError
        If no attempt satisfies the contrast pattern.
    """
    lo, hi = spec.support
    grid = spec.grid
    m = float(grid[spec.grid_size // 2]) if spec.binding_x is None else float(spec.binding_x)
    if spec.scenario == "boundary" and not np.any(np.isclose(grid, m, rtol=0, atol=1e-12)):
        raise ConfigurationError("the binding point must be a grid point")
    children = np.random.SeedSequence(spec.seed).spawn(spec.max_attempts)
    last_reason = ""
    for attempt, child in enumerate(children, start=1):
        rng = np.random.default_rng(child)
        clusters = _cluster_labels(spec, rng)
        n_units = spec.size
        lat_a = _latent(n_units, clusters, spec.icc, rng)
        lat_noise = _latent(n_units, clusters, spec.icc, rng)
        rho = spec.persistence
        score_b = rho * lat_a + math.sqrt(max(0.0, 1.0 - rho * rho)) * lat_noise
        y_a = np.clip(np.exp(spec.log_mean + spec.log_sd * lat_a), lo, hi)
        stratum = None
        if spec.n_strata > 1:
            noisy = lat_a + rng.standard_normal(n_units)
            cuts = np.quantile(noisy, np.linspace(0, 1, spec.n_strata + 1)[1:-1])
            stratum = np.searchsorted(cuts, noisy).astype(np.int64)
        z_a, z_b = _responses(spec.nonresponse, _percentile_rank(y_a), _percentile_rank(score_b), rng)
        base = {
            "y_a": y_a,
            "rank_b": np.argsort(score_b, kind="stable"),
            "z_a": z_a,
            "z_b": z_b,
            "cluster": clusters,
            "stratum": stratum,
        }
        sorted_a = np.sort(y_a)
        param = math.nan
        binding = None

        if spec.scenario == "boundary":
            target = -spec.drift / math.sqrt(spec.design_size)
            c = spec.compression
            span = m - lo if m > lo else 1.0

            def vals(p):
                return np.clip(boundary_map(sorted_a, m, p, c), lo, hi)

            def f(p):
                return float(_theta_at(spec, base, vals(p), m)[0]) - target

            a, b = _bracket_root(f, m - 2.0 * span, m - 1e-3 * span,
                                 lambda a, b: (m - 2.0 * (m - a), b))
            param = optimize.brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
            values = vals(param)
        elif spec.scenario in ("alternative", "interior"):
            sign = -1.0 if spec.scenario == "alternative" else 1.0
            eps = spec.epsilon

            def vals(d):
                return np.clip(sorted_a + sign * d, lo, hi)

            def f(d):
                th = _theta_at(spec, base, vals(d), grid)
                return float(np.max(th) + eps) if sign < 0 else float(np.min(th) - eps)

            try:
                a, b = _bracket_root(f, 0.0, 0.1 * (hi - lo), lambda a, b: (a, min(2.0 * b, hi - lo)))
            except PelsdError:
                raise ConfigurationError(
                    f"a uniform gap of {eps:g} is not attainable by shifting wave B; lower gap_fraction"
                ) from None
            param = optimize.brentq(f, a, b, xtol=1e-12, maxiter=200)
            # step just past the root so that the gap holds with margin
            param = param * (1 + 1e-9) + 1e-12
            values = vals(param)
        else:
            values = sorted_a

        pop = _assemble(spec, base, values)
        theta = population_bounds(pop, spec.assumption, spec.s, grid).contrast(spec.assumption.direction)
        ok, last_reason, binding = _check_pattern(spec, theta, grid, m)
        if ok:
            bounds = population_bounds(pop, spec.assumption, spec.s, grid)
            d_a, d_b = population_dominance(pop, spec.s, grid)
            return SimulatedPopulation(pop, spec, grid, theta, bounds, d_a, d_b, float(param), binding, attempt)
    raise PelsdError(f"population contrast check failed after {spec.max_attempts} attempts: {last_reason}")


def _check_pattern(spec: PopulationSpec, theta: np.ndarray, grid: np.ndarray, m: float):
    if spec.scenario == "boundary":
        j = int(np.argmin(np.abs(grid - m)))
        target = -spec.drift / math.sqrt(spec.design_size)
        if abs(theta[j] - target) > 1e-9:
            return False, f"contrast at the binding point is {theta[j]:.3g}, expected {target:.3g}", None
        others = np.delete(theta, j)
        if not np.all(others < theta[j]):
            return False, "the binding point is not the unique grid maximum of the contrast", None
        return True, "", j
    if spec.scenario == "alternative" and not np.max(theta) <= -spec.epsilon:
        return False, f"max contrast {np.max(theta):.3g} exceeds -eps", None
    if spec.scenario == "interior" and not np.min(theta) >= spec.epsilon:
        return False, f"min contrast {np.min(theta):.3g} is below eps", None
    return True, "", None


def check_propensity_bracket(pop: FinitePopulation, params, points: int = 201) -> dict:
    """Check that the population's conditional nonresponse ratios lie within the handles.

    The ratios are ``P(unit nonresponse | Y_A <= x) / d00``,
    ``P(unit nonresponse | Y_B <= x) / d00`` and
    ``P(wave nonresponse | Y_B <= x) / d10`` on an equally spaced grid.

    Returns
    -------
    dict
        ``ok`` plus the largest violation of each pair of handles.
    """
    sh = pop.shares()
    out = {"ok": True}
    unit = (pop.z_a == 0).astype(float)
    wave = ((pop.z_a == 1) & (pop.z_b == 0)).astype(float)
    cases = (
        ("a00", pop.y_a, unit, sh.d00, params.l_a00, params.u_a00, pop.support_a),
        ("b00", pop.y_b, unit, sh.d00, params.l_b00, params.u_b00, pop.support_b),
        ("10", pop.y_b, wave, sh.d10, params.l_10, params.u_10, pop.support_b),
    )
    for name, y, ind, share, lower, upper, sup in cases:
        if share <= 0:
            out[name] = 0.0
            continue
        order = np.argsort(y, kind="stable")
        ys = y[order]
        cum = np.cumsum(ind[order])
        xs = np.linspace(sup[0], sup[1], points)
        cnt = np.searchsorted(ys, xs, side="right")
        keep = cnt > 0
        ratio = cum[cnt[keep] - 1] / cnt[keep] / share
        xk = xs[keep]
        viol = max(
            float(np.max(np.asarray(lower(xk), dtype=float) - ratio, initial=0.0)),
            float(np.max(ratio - np.asarray(upper(xk), dtype=float), initial=0.0)),
        )
        out[name] = viol
        if viol > 1e-12:
            out["ok"] = False
    return out


# --------------------------------------------------------------------------
# sampling designs


def _random_groups(n_psu: int, groups: int, rng, order: np.ndarray | None = None) -> np.ndarray:
    """Assign ``n_psu`` primary units to ``groups`` groups of near-equal size.

    With ``order`` given (a sort order by stratum, say) the assignment is
    systematic along that order after a random start.
    """
    if groups > n_psu:
        raise ConfigurationError(f"{groups} replicate groups need at least as many sampled units ({n_psu})")
    g = np.empty(n_psu, dtype=int)
    if order is None:
        order = rng.permutation(n_psu)
        g[order] = np.arange(n_psu) % groups
    else:
        start = int(rng.integers(groups))
        g[order] = (np.arange(n_psu) + start) % groups
    return g


def _replicates(weight: np.ndarray, group_of_unit: np.ndarray, groups: int) -> np.ndarray:
    rw = np.repeat(weight[:, None], groups, axis=1) * (groups / (groups - 1.0))
    rw[np.arange(weight.size), group_of_unit] = 0.0
    return rw


def draw_sample(sim: SimulatedPopulation | FinitePopulation, design: DesignSpec, seed) -> PairedSample:
    """Draw a sample and attach design and replicate weights.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.

    Raises
    ------
    ConfigurationError
        If the design cannot be drawn from the population.
    """
    pop = sim.population if isinstance(sim, SimulatedPopulation) else sim
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    N = pop.size
    G = design.replicate_groups
    population_size = None
    if design.kind == "srswor":
        if not 1 <= design.k <= N:
            raise ConfigurationError(f"cannot draw {design.k} units from a population of {N}")
        idx = np.sort(rng.choice(N, size=design.k, replace=False))
        weight = np.full(idx.size, N / design.k)
        groups = _random_groups(idx.size, G, rng)
        population_size = float(N)
    elif design.kind == "stratified":
        if pop.stratum is None:
            raise ConfigurationError("stratified design needs a population with strata")
        labels = np.unique(pop.stratum)
        sizes = np.array([np.sum(pop.stratum == h) for h in labels])
        if design.allocation is None:
            alloc = np.maximum(1, np.round(design.k * sizes / N).astype(int))
        else:
            alloc = np.asarray(design.allocation)
            if alloc.size != labels.size:
                raise ConfigurationError(f"allocation lists {alloc.size} strata, population has {labels.size}")
        if np.any(alloc > sizes) or np.any(alloc < 1):
            raise ConfigurationError("each stratum allocation must lie between 1 and the stratum size")
        parts, wparts = [], []
        for h, nh, Nh in zip(labels, alloc, sizes):
            members = np.flatnonzero(pop.stratum == h)
            parts.append(np.sort(rng.choice(members, size=int(nh), replace=False)))
            wparts.append(np.full(int(nh), Nh / nh))
        idx = np.concatenate(parts)
        weight = np.concatenate(wparts)
        by_stratum = np.argsort(pop.stratum[idx], kind="stable")
        groups = _random_groups(idx.size, G, rng, order=by_stratum)
    else:
        if pop.cluster is None:
            raise ConfigurationError("cluster design needs a population with clusters")
        csize = np.bincount(pop.cluster)
        M = csize.size
        if not 1 <= design.m <= M:
            raise ConfigurationError(f"cannot draw {design.m} clusters from {M}")
        if design.pps:
            pi = design.m * csize / csize.sum()
            if np.any(pi >= 1.0):
                raise ConfigurationError("PPS design has inclusion probabilities of one or more; reduce m")
            perm = rng.permutation(M)
            cum = np.cumsum(pi[perm])
            hits = rng.uniform() + np.arange(design.m)
            chosen = np.sort(perm[np.searchsorted(cum, hits, side="right")])
        else:
            pi = np.full(M, design.m / M)
            chosen = np.sort(rng.choice(M, size=design.m, replace=False))
        in_sample = np.isin(pop.cluster, chosen)
        idx = np.flatnonzero(in_sample)
        weight = 1.0 / pi[pop.cluster[idx]]
        cg = _random_groups(chosen.size, G, rng)
        pos = np.searchsorted(chosen, pop.cluster[idx])
        groups = cg[pos]
    rw = _replicates(weight, groups, G)
    za = pop.z_a[idx]
    zb = pop.z_b[idx]
    return PairedSample(
        y_a=np.where(za == 1, pop.y_a[idx], np.nan),
        y_b=np.where(zb == 1, pop.y_b[idx], np.nan),
        z_a=za,
        z_b=zb,
        weight=weight,
        support_a=pop.support_a,
        support_b=pop.support_b,
        replicate_weights=rw,
        population_size=population_size,
    )


# --------------------------------------------------------------------------
# Monte Carlo runner


@dataclass(frozen=True)
class ReplicationResult:
    """Per-replication output of :func:`run_experiment`."""

    index: int
    ok: bool
    lr_statistic: float = math.nan
    lr_unadjusted: float = math.nan
    min_t2_statistic: float = math.nan
    dominance_in_sample: bool = False
    lr_at_binding: float = math.nan
    lr_unadjusted_at_binding: float = math.nan
    theta_at_binding: float = math.nan
    var_at_binding: float = math.nan
    deff_at_binding: float = math.nan
    n: int = 0
    error: str = ""


@dataclass(frozen=True, eq=False)
class ExperimentSummary:
    """Rejection rates with Monte Carlo standard errors and distribution checks."""

    replications: int
    failures: int
    alpha: float
    critical_value: float
    reject_rate_lr: float
    reject_rate_lr_se: float
    reject_rate_unadjusted: float
    reject_rate_unadjusted_se: float
    reject_rate_min_t: float
    reject_rate_min_t_se: float
    decision_agreement: float
    dominance_rate: float
    ks_distance_binding: float | None
    mean_n: float
    n_var_binding: float | None
    mean_deff_binding: float | None
    results: list[ReplicationResult]
    manifest: dict

    def as_rows(self) -> list[dict]:
        keys = [f for f in ReplicationResult.__dataclass_fields__]
        return [{k: getattr(r, k) for k in keys} for r in self.results]

    def summary_dict(self) -> dict:
        return {
            "replications": self.replications,
            "failures": self.failures,
            "alpha": self.alpha,
            "critical_value": self.critical_value,
            "reject_rate_lr": self.reject_rate_lr,
            "reject_rate_lr_se": self.reject_rate_lr_se,
            "reject_rate_unadjusted": self.reject_rate_unadjusted,
            "reject_rate_unadjusted_se": self.reject_rate_unadjusted_se,
            "reject_rate_min_t": self.reject_rate_min_t,
            "reject_rate_min_t_se": self.reject_rate_min_t_se,
            "decision_agreement": self.decision_agreement,
            "dominance_rate": self.dominance_rate,
            "ks_distance_binding": self.ks_distance_binding,
            "mean_n": self.mean_n,
            "n_var_binding": self.n_var_binding,
            "mean_deff_binding": self.mean_deff_binding,
        }


def replication_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Independent stream for replication ``index``, fixed by the index alone."""
    return np.random.SeedSequence(master_seed, spawn_key=(int(index),))


def _one_replication(args) -> ReplicationResult:
    sim, design, spec, config, master_seed, r = args
    try:
        sample = draw_sample(sim, design, np.random.default_rng(replication_seed(master_seed, r)))
        rep = _Prepared(sample, config, sim.grid).run(spec)
    except (PelsdError, ValueError, ArithmeticError) as exc:
        return ReplicationResult(index=r, ok=False, error=f"{type(exc).__name__}: {exc}")
    j = sim.binding_index
    extra = {}
    if j is not None:
        extra = dict(
            lr_at_binding=float(rep.lr_pointwise[j]),
            lr_unadjusted_at_binding=float(rep.lr_unadjusted_pointwise[j]),
            theta_at_binding=float(rep.theta_hat[j]),
            var_at_binding=float(rep.var_hat[j]),
            deff_at_binding=float(rep.deff_hat[j]),
        )
    return ReplicationResult(
        index=r,
        ok=True,
        lr_statistic=rep.lr_statistic,
        lr_unadjusted=rep.lr_unadjusted,
        min_t2_statistic=rep.min_t2_statistic,
        dominance_in_sample=rep.dominance_in_sample,
        n=rep.n,
        **extra,
    )


def _chunk(args_list):
    return [_one_replication(a) for a in args_list]


def _rate(flags: np.ndarray) -> tuple[float, float]:
    m = flags.size
    if m == 0:
        return math.nan, math.nan
    p = math.fsum(flags.astype(float).tolist()) / m
    return p, math.sqrt(max(p * (1 - p), 0.0) / m)


def run_manifest(sim: SimulatedPopulation, design: DesignSpec, spec: AssumptionSpec, config: TestConfig,
                 replications: int, master_seed: int) -> dict:
    """Machine-readable description of an experiment (specs, seeds, versions)."""
    def _plain(obj):
        if hasattr(obj, "__dataclass_fields__"):
            return {k: _plain(getattr(obj, k)) for k in obj.__dataclass_fields__}
        if isinstance(obj, (list, tuple)):
            return [_plain(v) for v in obj]
        if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
            return obj.value
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        if callable(obj):
            return repr(obj)
        return obj

    body = {
        "population": _plain(sim.spec),
        "population_parameter": sim.parameter,
        "population_attempts": sim.attempts,
        "binding_x": sim.binding_x,
        "design": _plain(design),
        "assumption": spec.label,
        "test": _plain(config),
        "replications": replications,
        "master_seed": master_seed,
        "versions": {
            "pelsd": __version__,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "python": platform.python_version(),
        },
    }
    body["config_hash"] = hashlib.sha256(json.dumps(body, sort_keys=True, default=str).encode()).hexdigest()[:16]
    return body


def run_experiment(
    sim: SimulatedPopulation,
    design: DesignSpec,
    config: TestConfig,
    replications: int,
    master_seed: int = 12345,
    spec: AssumptionSpec | None = None,
    workers: int = 1,
    failure_threshold: float = 0.01,
) -> ExperimentSummary:
    """Monte Carlo rejection rates of the test on repeated samples.

    Parameters
    ----------
    sim : SimulatedPopulation
    design : DesignSpec
    config : TestConfig
        Test options; the grid is the population's grid.
    replications : int
    master_seed : int
        Replication ``r`` uses the stream ``SeedSequence(master_seed, spawn_key=(r,))``,
        so results do not depend on ``workers``.
    spec : AssumptionSpec, optional
        Defaults to the assumption the population was built for.
    workers : int
        Number of worker processes.
    failure_threshold : float
        Largest tolerated fraction of failed replications.

    Raises
    ------
    PelsdError
        If more than ``failure_threshold`` of the replications fail.
    """
    if replications < 1:
        raise ConfigurationError("replications must be at least 1")
    spec = sim.spec.assumption if spec is None else spec
    config = replace(config, s=sim.spec.s, t_range=sim.spec.t_range, grid_size=sim.spec.grid_size)
    args = [(sim, design, spec, config, master_seed, r) for r in range(replications)]
    if workers <= 1:
        results = [_one_replication(a) for a in args]
    else:
        size = max(1, math.ceil(replications / (4 * workers)))
        chunks = [args[i : i + size] for i in range(0, replications, size)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = [r for part in ex.map(_chunk, chunks) for r in part]
    results.sort(key=lambda r: r.index)
    good = [r for r in results if r.ok]
    failures = replications - len(good)
    if failures > failure_threshold * replications:
        first = next(r.error for r in results if not r.ok)
        raise PelsdError(f"{failures} of {replications} replications failed; first error: {first}")
    c = chi2_1_quantile(config.alpha)
    lr = np.array([r.lr_statistic for r in good])
    un = np.array([r.lr_unadjusted for r in good])
    mt = np.array([r.min_t2_statistic for r in good])
    rej_lr, rej_un, rej_mt = lr > c, un > c, mt > c
    p_lr, se_lr = _rate(rej_lr)
    p_un, se_un = _rate(rej_un)
    p_mt, se_mt = _rate(rej_mt)
    agree, _ = _rate(rej_lr == rej_mt)
    dom, _ = _rate(np.array([r.dominance_in_sample for r in good]))
    ks = n_var = deff = None
    if sim.binding_index is not None:
        pts = np.array([r.lr_at_binding for r in good])
        pts = pts[np.isfinite(pts)]
        if pts.size:
            ks = float(stats.kstest(pts, stats.chi2(1).cdf).statistic)
        nv = np.array([r.n * r.var_at_binding for r in good])
        n_var = float(np.mean(nv[np.isfinite(nv)])) if np.any(np.isfinite(nv)) else None
        de = np.array([r.deff_at_binding for r in good])
        deff = float(np.mean(de[np.isfinite(de)])) if np.any(np.isfinite(de)) else None
    return ExperimentSummary(
        replications=replications,
        failures=failures,
        alpha=config.alpha,
        critical_value=c,
        reject_rate_lr=p_lr,
        reject_rate_lr_se=se_lr,
        reject_rate_unadjusted=p_un,
        reject_rate_unadjusted_se=se_un,
        reject_rate_min_t=p_mt,
        reject_rate_min_t_se=se_mt,
        decision_agreement=agree,
        dominance_rate=dom,
        ks_distance_binding=ks,
        mean_n=float(np.mean([r.n for r in good])) if good else math.nan,
        n_var_binding=n_var,
        mean_deff_binding=deff,
        results=results,
        manifest=run_manifest(sim, design, spec, config, replications, master_seed),
    )


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
