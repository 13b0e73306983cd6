"""The dominance test: grid evaluation, adjusted LR statistic, min-t², sweeps.

The statistic is

    LR = min_x 2 (L_UR - L_R(x)) / Deff(x)   if θ̂(x) < 0 at every grid point,
    LR = 0                                   otherwise,

and the null of non-dominance is rejected when ``LR > c(alpha)``, the
``1 - alpha`` quantile of chi-squared(1).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .bounds import (
    AssumptionSpec,
    BoundCurves,
    Direction,
    Family,
    KsParams,
    MomentComponents,
    PropensityParams,
    bound_curves,
    build_phi,
    make_grid,
    population_bounds,
)
from .data import FinitePopulation, PairedSample, estimate_shares, responder_weights
from .errors import ConfigurationError, PelsdError
from .pel import lr_batch
from .specialfn import DegenerateCDF, GeneralizedArcsine, chi2_1_quantile
from .variance import (
    VarianceMethod,
    jackknife_from_replicates,
    replicate_responder_weights,
    sampling_fraction,
    srs_variance,
)

DEGENERATE_WARN_FRACTION = 0.10
VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class TestConfig:
    """Options of a single test run."""

    s: int = 1
    t_range: tuple[float, float] = (0.0, 1.0)
    alpha: float = 0.05
    grid_size: int = 101
    variance_method: VarianceMethod = VarianceMethod.JACKKNIFE
    share_mode: str = "weighted"
    full_replicate: bool = False
    augment_grid: bool = False

    __test__ = False  # not a pytest class

    def __post_init__(self):
        object.__setattr__(self, "variance_method", VarianceMethod(self.variance_method))
        if int(self.s) != self.s or self.s < 1:
            raise ConfigurationError(f"order s must be a positive integer, got {self.s}")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        lo, hi = self.t_range
        if not lo < hi:
            raise ConfigurationError(f"range must satisfy t_lo < t_hi, got {self.t_range}")
        if self.grid_size < 2:
            raise ConfigurationError("grid size must be at least 2")


@dataclass(frozen=True, eq=False)
class TestReport:
    """Everything computed by :func:`run_test`.

    ``lr_pointwise`` is ``2 (L_UR - L_R(x)) / Deff(x)`` at every grid point
    (``inf`` where the constraint is infeasible, ``nan`` where the point is
    degenerate); ``lr_unadjusted_pointwise`` omits the design effect.
    """

    grid: np.ndarray
    theta_hat: np.ndarray
    var_hat: np.ndarray
    hajek: np.ndarray
    deff_hat: np.ndarray
    lr_pointwise: np.ndarray
    lr_unadjusted_pointwise: np.ndarray
    lr_statistic: float
    lr_unadjusted: float
    min_t2_statistic: float
    dominance_in_sample: bool
    critical_value: float
    alpha: float
    argmin_index: int | None
    argmin_x: float | None
    infeasible_points: np.ndarray
    degenerate_points: np.ndarray
    shares: tuple[float, float, float]
    spec_label: str
    n: int
    k: int

    __test__ = False

    @property
    def reject_lr(self) -> bool:
        return bool(self.lr_statistic > self.critical_value)

    @property
    def reject_min_t(self) -> bool:
        return bool(self.min_t2_statistic > self.critical_value)

    @property
    def reject_unadjusted(self) -> bool:
        return bool(self.lr_unadjusted > self.critical_value)

    @property
    def decision_lr(self) -> str:
        return "reject" if self.reject_lr else "fail_to_reject"

    @property
    def decision_min_t(self) -> str:
        return "reject" if self.reject_min_t else "fail_to_reject"

    @property
    def degenerate_warning(self) -> bool:
        return self.degenerate_points.size > DEGENERATE_WARN_FRACTION * self.grid.size

    def summary(self) -> str:
        """A short human-readable report."""
        lines = [
            f"assumption        : {self.spec_label}",
            f"responders n / k  : {self.n} / {self.k}",
            f"shares d11,d10,d00: {self.shares[0]:.4f}, {self.shares[1]:.4f}, {self.shares[2]:.4f}",
            f"dominance in sample: {'yes' if self.dominance_in_sample else 'no'}"
            f" (max theta-hat {np.max(self.theta_hat):.6g})",
            f"LR statistic      : {self.lr_statistic:.6g}",
            f"min-t2 statistic  : {self.min_t2_statistic:.6g}",
            f"critical value    : {self.critical_value:.6g} (alpha={self.alpha:g})",
            f"decision (LR)     : {self.decision_lr}",
            f"decision (min-t2) : {self.decision_min_t}",
            f"argmin x          : {'n/a' if self.argmin_x is None else f'{self.argmin_x:.6g}'}",
            f"infeasible points : {self.infeasible_points.size}",
            f"degenerate points : {self.degenerate_points.size}"
            + ("  (more than 10% of the grid)" if self.degenerate_warning else ""),
        ]
        return "\n".join(lines)

    def grid_rows(self) -> list[dict]:
        rows = []
        for j, x in enumerate(self.grid):
            rows.append(
                {
                    "x": float(x),
                    "theta_hat": float(self.theta_hat[j]),
                    "var_hat": float(self.var_hat[j]),
                    "deff_hat": float(self.deff_hat[j]),
                    "lr_pointwise": float(self.lr_pointwise[j]),
                    "lr_unadjusted": float(self.lr_unadjusted_pointwise[j]),
                }
            )
        return rows


class _Prepared:
    """Spec-independent pieces of a test on one sample and grid.

    Building the kernel matrices and the replicate aggregates once lets a
    sensitivity sweep reuse them for every parameter tuple.
    """

    def __init__(self, sample: PairedSample, config: TestConfig, grid=None):
        self.sample = sample
        self.config = config
        lo, hi = config.t_range
        for sup, name in ((sample.support_a, "A"), (sample.support_b, "B")):
            if not (sup[0] <= lo and hi <= sup[1]):
                raise ConfigurationError(f"range [{lo}, {hi}] is not inside the declared support of {name} {sup}")
        if grid is None:
            extra = None
            if config.augment_grid:
                extra = np.concatenate([sample.y_a[sample.responders], sample.y_b[sample.z_b == 1]])
            grid = make_grid(lo, hi, config.grid_size, extra)
        self.grid = np.asarray(grid, dtype=float)
        self.weights = responder_weights(sample)
        self.w = self.weights.w_prime
        self.n = self.weights.n
        self.shares = estimate_shares(sample, config.share_mode)
        self._comp: dict[int, MomentComponents] = {}
        self._agg: dict[int, tuple] = {}
        self.c_alpha = chi2_1_quantile(config.alpha)
        self.rep_w = None
        if config.variance_method is VarianceMethod.JACKKNIFE:
            self.rep_w = replicate_responder_weights(sample)
            self.rep_c = sample.replicate_constants()
        else:
            self.fpc = sampling_fraction(sample)

    def components(self, order: int) -> MomentComponents:
        if order not in self._comp:
            self._comp[order] = MomentComponents.build(self.sample, self.grid, order)
        return self._comp[order]

    def replicate_sums(self, order: int):
        if order not in self._agg:
            comp = self.components(order)
            rw = self.rep_w
            self._agg[order] = (rw.T @ comp.ka11, rw.T @ comp.ka10, rw.T @ comp.kb11, rw.sum(axis=0)[:, None])
        return self._agg[order]

    def replicate_theta(self, spec: AssumptionSpec, phi, pv) -> np.ndarray:
        a11, a10, b11, tot = self.replicate_sums(phi.kernel_order)
        n = self.n
        if not self.config.full_replicate:
            p1, p2, p3, p4 = pv
            return (a11 * p1 + a10 * p2 + tot * p3 - b11 * p4) / n
        rows = []
        full_rw = self.sample.replicate_weights
        for g in range(full_rw.shape[1]):
            sh = estimate_shares(self.sample, self.config.share_mode, weight=full_rw[:, g])
            phi_g = build_phi(spec, sh, self.config.s, self.sample, self.rep_w[:, g])
            p1, p2, p3, p4 = phi_g.evaluate(self.grid)
            rows.append((a11[g] * p1 + a10[g] * p2 + tot[g] * p3 - b11[g] * p4) / n)
        return np.vstack(rows)

    def run(self, spec: AssumptionSpec) -> TestReport:
        cfg = self.config
        phi = build_phi(spec, self.shares, cfg.s, self.sample, self.weights)
        comp = self.components(phi.kernel_order)
        pv = phi.evaluate(self.grid)
        h = comp.h_matrix(pv)
        n = self.n
        theta = (self.w @ h) / n
        if cfg.variance_method is VarianceMethod.JACKKNIFE:
            reps = self.replicate_theta(spec, phi, pv)
            var = jackknife_from_replicates(theta, reps, self.rep_c)
        else:
            var = np.asarray(srs_variance(self.w, h, self.fpc))
        hajek = (self.w / n) @ (h * h)
        # a variance at rounding level relative to the benchmark counts as zero
        degenerate = ~(hajek > 0) | ~(var > VAR_FLOOR * hajek / n)
        with np.errstate(divide="ignore", invalid="ignore"):
            deff = np.where(degenerate, np.nan, var / (hajek / n))
        dominance = bool(np.all(theta < 0))

        lr_raw, _kappa, feasible = lr_batch(self.w, h)
        with np.errstate(invalid="ignore"):
            lr_adj = np.where(degenerate, np.nan, lr_raw / deff)
        lr_raw_masked = np.where(degenerate, np.nan, lr_raw)
        candidates = ~degenerate
        argmin = None
        stat = unadj = min_t2 = 0.0
        if dominance and candidates.any():
            idx = np.flatnonzero(candidates)
            j = idx[int(np.argmin(lr_adj[idx]))]  # argmin returns the first, i.e. smallest x
            argmin = int(j)
            stat = float(lr_adj[j])
            unadj = float(np.min(lr_raw[idx]))
            with np.errstate(divide="ignore"):
                t2 = theta[idx] ** 2 / var[idx]
            min_t2 = float(np.min(t2))
        return TestReport(
            grid=self.grid,
            theta_hat=theta,
            var_hat=np.asarray(var, dtype=float),
            hajek=hajek,
            deff_hat=deff,
            lr_pointwise=lr_adj,
            lr_unadjusted_pointwise=lr_raw_masked,
            lr_statistic=stat,
            lr_unadjusted=unadj,
            min_t2_statistic=min_t2,
            dominance_in_sample=dominance,
            critical_value=self.c_alpha,
            alpha=cfg.alpha,
            argmin_index=argmin,
            argmin_x=None if argmin is None else float(self.grid[argmin]),
            infeasible_points=np.flatnonzero(~feasible),
            degenerate_points=np.flatnonzero(degenerate),
            shares=self.shares.as_tuple(),
            spec_label=spec.label,
            n=n,
            k=self.sample.k,
        )


def run_test(sample: PairedSample, spec: AssumptionSpec, config: TestConfig | None = None, *,
             grid=None, **overrides) -> TestReport:
    """Run the restricted dominance test.

    Parameters
    ----------
    sample : PairedSample
    spec : AssumptionSpec
        Nonresponse assumption and direction.
    config : TestConfig, optional
        Order, range, level, grid size and variance options.  Keyword
        ``overrides`` replace individual fields.
    grid : array_like, optional
        Explicit evaluation grid; overrides the equally spaced default.
    """
    cfg = config or TestConfig()
    if overrides:
        cfg = replace(cfg, **overrides)
    return _Prepared(sample, cfg, grid).run(spec)


def min_t_statistic(theta_hat, var_hat) -> float:
    """``min θ̂²/var`` over nondegenerate points when θ̂ < 0 everywhere, else 0."""
    th = np.asarray(theta_hat, dtype=float)
    v = np.asarray(var_hat, dtype=float)
    if th.size == 0 or not np.all(th < 0):
        return 0.0
    ok = v > 0
    if not ok.any():
        return 0.0
    return float(np.min(th[ok] ** 2 / v[ok]))


def grid_refine_check(sample: PairedSample, spec: AssumptionSpec, config: TestConfig) -> dict:
    """Rerun the test on a grid with twice the resolution and report the drift."""
    coarse = run_test(sample, spec, config)
    fine = run_test(sample, spec, replace(config, grid_size=2 * config.grid_size - 1))
    return {
        "grid_size": config.grid_size,
        "refined_grid_size": 2 * config.grid_size - 1,
        "lr_statistic": coarse.lr_statistic,
        "lr_statistic_refined": fine.lr_statistic,
        "drift": fine.lr_statistic - coarse.lr_statistic,
        "decision": coarse.decision_lr,
        "decision_refined": fine.decision_lr,
    }


# --------------------------------------------------------------------------
# sensitivity sweeps


@dataclass(frozen=True, eq=False)
class SensitivityResult:
    """Outcome of a sweep over assumption parameters."""

    family: str
    parameter_grid: list[tuple[float, ...]]
    reports: list[dict]
    reject_set: list[tuple[float, ...]] = field(default_factory=list)
    failures: list[tuple[tuple[float, ...], str]] = field(default_factory=list)

    def monotonicity_violations(self) -> list[tuple[tuple, tuple]]:
        """Pairs ``(g, g')`` with ``g' <= g`` componentwise, ``g`` rejecting and ``g'`` not.

        For KS sweeps larger radii widen the bounds, so rejection at a tuple
        should carry over to every smaller tuple.
        """
        rej = set(self.reject_set)
        out = []
        for g in self.reject_set:
            for h in self.parameter_grid:
                if h != g and h not in rej and all(a <= b for a, b in zip(h, g)):
                    out.append((g, h))
        return out

    def rows(self) -> list[dict]:
        return self.reports


def ks_grid(step: float = 0.1) -> list[tuple[float, float, float]]:
    """``{0, step, ..., 1}^3``."""
    m = int(round(1.0 / step))
    vals = [round(i * step, 10) for i in range(m + 1)]
    return list(itertools.product(vals, vals, vals))


def arcsine_grid(values: Sequence[float] = tuple(round(0.1 * i, 10) for i in range(1, 10))):
    """``{0.1, ..., 0.9}^3`` by default."""
    return list(itertools.product(values, values, values))


def arcsine_spec(params: tuple[float, float, float], direction: Direction, support) -> AssumptionSpec:
    """Propensity-bound spec whose three active handles are Generalized Arcsine CDFs.

    For B dominates A the triple sets ``(l_a00, u_b00, u_10)``; for A
    dominates B it sets ``(u_a00, l_b00, l_10)``.  The handles the direction
    does not use are set to the trivial extremes (1 for upper handles, 0 for
    lower handles inside the support) so the bracketing condition holds.
    """
    lo, hi = support
    x1, x2, x3 = (GeneralizedArcsine(v, support) for v in params)
    one = DegenerateCDF(lo, support)
    zero = DegenerateCDF(hi, support)
    direction = Direction(direction)
    if direction is Direction.B_DOMINATES_A:
        prop = PropensityParams(l_a00=x1, u_a00=one, l_b00=zero, u_b00=x2, l_10=zero, u_10=x3)
    else:
        prop = PropensityParams(l_a00=zero, u_a00=x1, l_b00=x2, u_b00=one, l_10=x3, u_10=one)
    return AssumptionSpec(Family.PROPENSITY, direction, propensity=prop)


def _spec_for(family: str, params, direction, support) -> AssumptionSpec:
    if family == "ks":
        return AssumptionSpec(Family.KS, direction, ks=KsParams(*params))
    if family == "arcsine":
        return arcsine_spec(tuple(params), direction, support)
    raise ConfigurationError(f"unknown sweep family {family!r}; expected 'ks' or 'arcsine'")


def sensitivity_sweep(
    sample: PairedSample,
    family: str,
    parameter_grid: Iterable[tuple[float, ...]],
    config: TestConfig,
    direction: Direction | str = Direction.B_DOMINATES_A,
    arcsine_support: tuple[float, float] | None = None,
) -> SensitivityResult:
    """Run the test at every parameter tuple.

    Parameters
    ----------
    family : {'ks', 'arcsine'}
        ``ks`` tuples are ``(gamma_a, gamma_b00, gamma_b10)``; ``arcsine``
        tuples are the three Generalized Arcsine shapes described in
        :func:`arcsine_spec`.
    arcsine_support : (float, float), optional
        Common support of the arcsine CDFs; defaults to the hull of the two
        declared outcome supports.

    Failures at individual tuples are recorded and the sweep continues.
    """
    grid = [tuple(float(v) for v in p) for p in parameter_grid]
    if not grid:
        raise ConfigurationError("empty parameter grid")
    if family not in ("ks", "arcsine"):
        raise ConfigurationError(f"unknown sweep family {family!r}; expected 'ks' or 'arcsine'")
    direction = Direction(direction)
    if arcsine_support is None:
        arcsine_support = (min(sample.support_a[0], sample.support_b[0]), max(sample.support_a[1], sample.support_b[1]))
    prep = _Prepared(sample, config)
    reports, rejects, failures = [], [], []
    for params in grid:
        try:
            rep = prep.run(_spec_for(family, params, direction, arcsine_support))
        except PelsdError as exc:
            failures.append((params, str(exc)))
            continue
        row = {f"p{i + 1}": v for i, v in enumerate(params)}
        row.update(
            lr_statistic=rep.lr_statistic,
            min_t2_statistic=rep.min_t2_statistic,
            dominance_in_sample=int(rep.dominance_in_sample),
            max_theta_hat=float(np.max(rep.theta_hat)),
            argmin_x=math.nan if rep.argmin_x is None else rep.argmin_x,
            reject=int(rep.reject_lr),
        )
        reports.append(row)
        if rep.reject_lr:
            rejects.append(params)
    return SensitivityResult(family, grid, reports, rejects, failures)


# --------------------------------------------------------------------------
# bound curves for plotting


def emit_bound_curves(source, specs: Sequence[AssumptionSpec], s: int, grid, share_mode: str = "weighted") -> list[dict]:
    """Long-format table ``(spec, population, x, lower, upper)``.

    ``source`` is a :class:`PairedSample` (sample-analogue bounds) or a
    :class:`FinitePopulation` (population bounds).
    """
    g = np.asarray(grid, dtype=float)
    rows = []
    for spec in specs:
        if isinstance(source, FinitePopulation):
            bc: BoundCurves = population_bounds(source, spec, s, g)
        else:
            sh = estimate_shares(source, share_mode)
            bc = bound_curves(source, spec, s, g, sh)
        for pop, lo, hi in (("A", bc.lower_a, bc.upper_a), ("B", bc.lower_b, bc.upper_b)):
            for j, x in enumerate(g):
                rows.append({"spec": spec.label, "population": pop, "x": float(x),
                             "lower": float(lo[j]), "upper": float(hi[j])})
    return rows
