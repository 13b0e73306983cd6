"""Design variance of θ̂, the Hajek second moment and the design effect."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .data import PairedSample, ResponderWeights, normalize_to_sum
from .errors import ConfigurationError, DegenerateMomentError, DegenerateWeightsError


class VarianceMethod(str, enum.Enum):
    JACKKNIFE = "jackknife"
    SRS_CLOSED_FORM = "srs_closed_form"


@dataclass(frozen=True, eq=False)
class VarianceEstimate:
    """Variance of θ̂ at one point or along a grid."""

    var_hat: np.ndarray | float
    method: VarianceMethod
    replicates_used: int


@dataclass(frozen=True, eq=False)
class DesignEffect:
    """Ratio of the design variance to ``n^{-1}`` times the Hajek second moment."""

    deff_hat: np.ndarray | float
    numerator: np.ndarray | float
    denominator: np.ndarray | float


def replicate_responder_weights(sample: PairedSample) -> np.ndarray:
    """Replicate weights restricted to the responders, each column summing to ``n``.

    Raises
    ------
    ConfigurationError
        If the sample carries no replicate weights.
    """
    if sample.replicate_weights is None:
        raise ConfigurationError("jackknife variance needs replicate weights (columns rw_1..rw_G)")
    rw = sample.replicate_weights[sample.responders]
    n = rw.shape[0]
    tot = rw.sum(axis=0)
    if np.any(tot <= 0):
        bad = np.flatnonzero(tot <= 0) + 1
        raise DegenerateWeightsError(f"replicate(s) {bad.tolist()} give zero total weight to the responders")
    return rw * (n / tot)


def jackknife_from_replicates(theta: np.ndarray, theta_reps: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """``sum_g c_g (θ̂_g - θ̂)^2``; ``theta_reps`` has one row per replicate."""
    theta = np.asarray(theta, dtype=float)
    reps = np.asarray(theta_reps, dtype=float)
    c = np.asarray(scale, dtype=float)
    dev = reps - theta
    return c @ (dev * dev)


def jackknife_variance(
    sample: PairedSample,
    weights: ResponderWeights,
    phi,
    s: int,
    x,
    scale=None,
) -> VarianceEstimate:
    """Delete-a-group jackknife variance of θ̂ with the nuisance values held fixed.

    Each replicate recomputes θ̂ with its own responder weights renormalized
    to sum to ``n``.  ``scale`` defaults to the sample's constants, which in
    turn default to ``(G - 1) / G``.
    """
    from .bounds import MomentComponents

    grid = np.atleast_1d(np.asarray(x, dtype=float))
    rw = replicate_responder_weights(sample)
    c = sample.replicate_constants() if scale is None else np.asarray(scale, dtype=float)
    if c.shape != (rw.shape[1],):
        raise ConfigurationError("one jackknife constant per replicate is required")
    comp = MomentComponents.build(sample, grid, phi.kernel_order)
    pv = phi.evaluate(grid)
    th = comp.theta(weights.w_prime, pv)
    reps = comp.theta(rw, pv)
    v = jackknife_from_replicates(th, reps, c)
    return VarianceEstimate(float(v[0]) if np.ndim(x) == 0 else v, VarianceMethod.JACKKNIFE, rw.shape[1])


def hajek_second_moment(weights: ResponderWeights | np.ndarray, h) -> np.ndarray | float:
    """``sum_U (w'_i / n) h_i^2``, column-wise when ``h`` is a matrix."""
    w = weights.w_prime if isinstance(weights, ResponderWeights) else np.asarray(weights, dtype=float)
    h = np.asarray(h, dtype=float)
    n = w.shape[0]
    out = (w / n) @ (h * h)
    return float(out) if np.ndim(out) == 0 else out


def srs_variance(weights: ResponderWeights | np.ndarray, h, sampling_fraction: float = 0.0):
    """Closed-form SRSWOR variance ``(1 - f) s_w^2 / n`` of the weighted mean of ``h``."""
    w = weights.w_prime if isinstance(weights, ResponderWeights) else np.asarray(weights, dtype=float)
    h = np.asarray(h, dtype=float)
    n = w.shape[0]
    if n < 2:
        raise ConfigurationError("the closed-form variance needs at least two responders")
    if not (0.0 <= sampling_fraction < 1.0):
        raise ConfigurationError("sampling fraction must lie in [0, 1)")
    mean = (w @ h) / n
    dev = h - mean
    s2 = (w @ (dev * dev)) / (n - 1)
    out = (1.0 - sampling_fraction) * s2 / n
    return float(out) if np.ndim(out) == 0 else out


def design_effect(var_est: VarianceEstimate | np.ndarray | float, weights, h, n: int | None = None) -> DesignEffect:
    """``Deff = var / (n^{-1} S)`` with ``S`` the Hajek second moment.

    Raises
    ------
    DegenerateMomentError
        If ``S = 0`` at a single evaluation point.  For a grid, degenerate
        columns get ``nan`` so the caller can skip them.
    """
    v = var_est.var_hat if isinstance(var_est, VarianceEstimate) else var_est
    v = np.asarray(v, dtype=float)
    w = weights.w_prime if isinstance(weights, ResponderWeights) else np.asarray(weights, dtype=float)
    n = w.shape[0] if n is None else n
    S = np.asarray(hajek_second_moment(w, h), dtype=float)
    if S.ndim == 0:
        if not S > 0:
            raise DegenerateMomentError("all moment values are zero: the design effect is undefined")
        return DesignEffect(float(v / (S / n)), float(v), float(S))
    with np.errstate(divide="ignore", invalid="ignore"):
        deff = np.where(S > 0, v / (S / n), np.nan)
    return DesignEffect(deff, v, S)


def normalize_columns(rw: np.ndarray, total: float) -> np.ndarray:
    """Rescale every column of ``rw`` to sum to ``total``."""
    return np.column_stack([normalize_to_sum(rw[:, g], total) for g in range(rw.shape[1])])


def sampling_fraction(sample: PairedSample) -> float:
    """``k / N`` when the frame size is known, else 0."""
    if sample.population_size is None:
        return 0.0
    f = sample.k / float(sample.population_size)
    if not (0.0 <= f < 1.0) or math.isnan(f):
        raise ConfigurationError("population size must exceed the sample size")
    return f
