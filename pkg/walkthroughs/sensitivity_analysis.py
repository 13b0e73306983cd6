"""Sensitivity analysis of a dominance test across nonresponse assumptions.

This walkthrough follows a panel of two waves of household incomes in which
wave A is a survey year and wave B a later year.  Some households never
respond (unit nonresponse) and some respond in wave A only (wave
nonresponse).  We ask whether the wave-A income distribution dominates the
wave-B one at second order on the poverty-relevant range [1, 4], and how the
answer depends on what we are willing to assume about the nonrespondents.

Steps
-----
1. Build a synthetic finite population with U-shaped logistic nonresponse,
   where both income tails are less likely to respond.
2. Check whether Generalized Arcsine handles bracket the population's
   conditional nonresponse ratios before relying on them.
3. Raise the wave-B nonresponse rate in nested steps by withdrawing extra
   wave-B responses.  The same households are sampled at every step.
4. At each step sweep both assumption families:
   the Kolmogorov-Smirnov neighbourhood of MCAR on {0, 0.1, ..., 1}^3 and
   the arcsine propensity bounds on a 5^3 lattice of shapes.
5. Check the structural properties a sensitivity analysis should have.
   Larger KS radii never turn a rejection into a non-rejection, and adding
   wave nonresponse only shrinks the set of assumptions under which the
   test rejects.

Run it with ``python walkthroughs/sensitivity_analysis.py``.  It takes
about a minute and a half on one core.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from pelsd.bounds import Direction
from pelsd.data import FinitePopulation, ResponseShares
from pelsd.simulate import (
    DesignSpec,
    NonresponseSpec,
    PopulationSpec,
    check_propensity_bracket,
    draw_sample,
    generate_population,
)
from pelsd.testing import SensitivityResult, TestConfig, arcsine_grid, arcsine_spec, ks_grid, sensitivity_sweep

DIRECTION = Direction.A_DOMINATES_B
CONFIG = TestConfig(s=2, t_range=(1.0, 4.0), grid_size=41)
EXTRA_WAVE_DROPOUT = (0.0, 0.05, 0.10)
ARCSINE_SHAPES = (0.1, 0.3, 0.5, 0.7, 0.9)
U_SHAPED = NonresponseSpec(mechanism="logistic", unit_coef=(-2.0, -3.0, 3.0), wave_coef=(-2.5, -3.0, 3.0))


@dataclass
class Level:
    """Sweeps at one wave-nonresponse level."""

    extra_dropout: float
    shares: ResponseShares
    ks: SensitivityResult
    arcsine: SensitivityResult


@dataclass
class Walkthrough:
    population: FinitePopulation
    bracket: dict
    levels: list[Level]

    def ks_monotonicity_violations(self) -> int:
        return sum(len(level.ks.monotonicity_violations()) for level in self.levels)

    def nesting_failures(self) -> list[str]:
        """Families and levels where the reject set grew as wave nonresponse rose."""
        out = []
        for prev, cur in zip(self.levels, self.levels[1:]):
            for fam in ("ks", "arcsine"):
                if not set(getattr(cur, fam).reject_set) <= set(getattr(prev, fam).reject_set):
                    out.append(f"{fam} at extra dropout {cur.extra_dropout}")
        return out


def build_population(size: int = 60_000) -> FinitePopulation:
    """Incomes where wave A sits slightly above wave B across the range."""
    spec = PopulationSpec(size=size, scenario="alternative", gap_fraction=0.01, nonresponse=U_SHAPED,
                          grid_size=CONFIG.grid_size)
    return generate_population(spec).population


def withdraw_wave_b(pop: FinitePopulation, extra: float, seed: int = 5) -> FinitePopulation:
    """Drop wave-B responses for a random ``extra`` share of units.

    One uniform draw per unit is reused for every level, so the dropouts at
    a higher level contain those at a lower level.
    """
    u = np.random.default_rng(seed).uniform(size=pop.z_b.size)
    z_b = np.where((pop.z_b == 1) & (u < extra), 0, pop.z_b).astype(pop.z_b.dtype)
    return dataclasses.replace(pop, z_b=z_b)


def bracket_table(pop: FinitePopulation) -> dict:
    """Largest handle violation per arcsine shape, with the configurations that hold."""
    per_shape = {}
    holding = []
    for params in arcsine_grid(ARCSINE_SHAPES):
        res = check_propensity_bracket(pop, arcsine_spec(params, DIRECTION, pop.support_a).propensity)
        if res["ok"]:
            holding.append(params)
        if params[0] == params[1] == params[2]:
            per_shape[params[0]] = {k: res[k] for k in ("a00", "b00", "10")}
    return {"per_shape": per_shape, "holding": holding}


def run(size: int = 60_000, k: int = 3000) -> Walkthrough:
    pop = build_population(size)
    bracket = bracket_table(pop)
    levels = []
    for extra in EXTRA_WAVE_DROPOUT:
        level_pop = withdraw_wave_b(pop, extra)
        # the same seed picks the same households at every level
        sample = draw_sample(level_pop, DesignSpec(k=k, replicate_groups=30), 11)
        ks = sensitivity_sweep(sample, "ks", ks_grid(0.1), CONFIG, direction=DIRECTION)
        arc = sensitivity_sweep(sample, "arcsine", arcsine_grid(ARCSINE_SHAPES), CONFIG, direction=DIRECTION)
        levels.append(Level(extra, level_pop.shares(), ks, arc))
    return Walkthrough(pop, bracket, levels)


def main() -> None:
    print(__doc__.split("\n\n")[0])
    result = run()
    sh = result.population.shares()
    print(f"\npopulation shares: d11 = {sh.d11:.4f}, d10 = {sh.d10:.4f}, d00 = {sh.d00:.4f}")

    print("\nStep 2: do arcsine handles bracket the conditional nonresponse ratios?")
    print("largest violation per handle pair, equal shapes on all three handles:")
    for xi, v in result.bracket["per_shape"].items():
        print(f"  xi = {xi:.1f}: unit/A {v['a00']:.3f}  unit/B {v['b00']:.3f}  wave/B {v['10']:.3f}")
    n_hold = len(result.bracket["holding"])
    print(f"configurations that bracket the population: {n_hold} of {len(ARCSINE_SHAPES) ** 3}")
    if n_hold == 0:
        print("  The U-shaped mechanism makes the low tail more likely to drop out than average,")
        print("  so P(nonresponse | Y <= x) / d exceeds 1 near the bottom of the support, which no")
        print("  CDF handle can reach.  The arcsine sweep below is a what-if analysis, not a")
        print("  statement about this population.")

    print("\nSteps 3 and 4: sweeps as wave-B nonresponse rises")
    print(f"{'extra':>6} {'d10':>7} {'KS rejects':>11} {'arcsine rejects':>16}")
    for level in result.levels:
        print(f"{level.extra_dropout:>6.2f} {level.shares.d10:>7.4f} "
              f"{len(level.ks.reject_set):>6} / {len(level.ks.parameter_grid)} "
              f"{len(level.arcsine.reject_set):>8} / {len(level.arcsine.parameter_grid)}")

    print("\nStep 5: structural checks")
    print(f"  KS monotonicity violations: {result.ks_monotonicity_violations()}")
    bad = result.nesting_failures()
    print(f"  reject sets nested as nonresponse rises: {'yes' if not bad else 'no, ' + ', '.join(bad)}")
    first = result.levels[0]
    if (0.0, 0.0, 0.0) in first.ks.reject_set:
        largest = max(first.ks.reject_set, key=sum)
        print(f"  at the base level the test rejects under MCAR and up to radii {largest}")


if __name__ == "__main__":
    main()
