"""Pseudo-empirical likelihood under a single moment constraint.

At a grid point the constrained problem is

    max sum_i w'_i log p_i   s.t.  sum_i w'_i p_i = 1,  sum_i w'_i p_i h_i = 0.

Its solution is ``p_i = 1 / (n + kappa h_i)`` where ``kappa`` solves

    f(kappa) = sum_i w'_i h_i / (n + kappa h_i) = 0

on the interval ``(-n / max h, -n / min h)`` on which every ``p_i`` is
positive.  ``f`` is strictly decreasing there, so the root is unique and a
bracketed Newton iteration with bisection fallback always converges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import ResponderWeights
from .errors import NumericalInputError

_MARGIN = 1e-12
_MAX_ITER = 500
_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PelSolution:
    """Solution of the constrained problem at one evaluation point.

    ``l_r`` is ``-inf`` when the constraint cannot be met with positive
    probabilities (all ``h_i`` of one strict sign).
    """

    kappa: float
    p: np.ndarray | None
    l_r: float
    l_ur: float
    feasible: bool
    iterations: int

    @property
    def lr(self) -> float:
        """``2 (l_ur - l_r)``, ``+inf`` when infeasible."""
        if not self.feasible:
            return math.inf
        return 2.0 * (self.l_ur - self.l_r)


def l_unrestricted(weights: ResponderWeights | np.ndarray) -> float:
    """Unconstrained maximum ``sum_i w'_i log(1/n) = -n log n``."""
    w = weights.w_prime if isinstance(weights, ResponderWeights) else np.asarray(weights, dtype=float)
    n = w.shape[0]
    if n < 1:
        raise ValueError("need at least one responder")
    return -math.fsum(w.tolist()) * math.log(n)


def _as_w(weights) -> np.ndarray:
    return weights.w_prime if isinstance(weights, ResponderWeights) else np.asarray(weights, dtype=float)


def solve_kappa(w: np.ndarray, h: np.ndarray):
    """Solve for ``kappa`` column by column.

    Parameters
    ----------
    w : ndarray, shape (n,)
        Responder weights summing to ``n``.
    h : ndarray, shape (n,) or (n, m)
        Moment values, one column per evaluation point.

    Returns
    -------
    kappa : ndarray, shape (m,)
        NaN where infeasible.
    feasible : ndarray of bool, shape (m,)
    iterations : ndarray of int, shape (m,)
    """
    w = np.asarray(w, dtype=float)
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    if not np.all(np.isfinite(h)):
        raise NumericalInputError("moment values must be finite")
    n = w.shape[0]
    m = h.shape[1]
    pos = w > 0
    hp = h[pos]
    wp = w[pos]
    hmax = hp.max(axis=0) if hp.size else np.zeros(m)
    hmin = hp.min(axis=0) if hp.size else np.zeros(m)
    all_zero = (hmax == 0) & (hmin == 0)
    feasible = ((hmin < 0) & (hmax > 0)) | all_zero
    kappa = np.full(m, np.nan)
    iters = np.zeros(m, dtype=int)
    kappa[all_zero] = 0.0

    cols = np.flatnonzero(feasible & ~all_zero)
    if cols.size == 0:
        return kappa, feasible, iters
    H = hp[:, cols]
    lo_pole = -n / hmax[cols]
    hi_pole = -n / hmin[cols]
    width = hi_pole - lo_pole
    lo = lo_pole + _MARGIN * width
    hi = hi_pole - _MARGIN * width
    k = np.clip(np.zeros(cols.size), lo, hi)
    active = np.ones(cols.size, dtype=bool)
    it = np.zeros(cols.size, dtype=int)
    for _ in range(_MAX_ITER):
        if not active.any():
            break
        a = np.flatnonzero(active)
        Ha = H[:, a]
        denom = n + k[a] * Ha
        r = Ha / denom
        f = wp @ r
        fp = -(wp @ (r * r))
        it[a] += 1
        # the moment residual is f and the normalization residual is kappa f / n;
        # stop once both are below the target or at the rounding level of f
        tol = _TOL + 64 * np.finfo(float).eps * (wp @ np.abs(r))
        done = np.abs(f) * np.maximum(1.0, np.abs(k[a]) / n) <= tol
        # update the bracket: f decreasing, so f > 0 means the root is to the right
        lo[a] = np.where(f > 0, k[a], lo[a])
        hi[a] = np.where(f < 0, k[a], hi[a])
        with np.errstate(divide="ignore", invalid="ignore"):
            step = k[a] - f / fp
        mid = 0.5 * (lo[a] + hi[a])
        ok = np.isfinite(step) & (step > lo[a]) & (step < hi[a])
        new = np.where(ok, step, mid)
        stalled = (hi[a] - lo[a]) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(k[a]))
        k[a] = np.where(done, k[a], new)
        active[a] = ~(done | stalled)
    kappa[cols] = k
    iters[cols] = it
    return kappa, feasible, iters


def lr_from_kappa(w: np.ndarray, h: np.ndarray, kappa: np.ndarray, n: int | None = None) -> np.ndarray:
    """``2 (l_ur - l_r) = 2 sum_i w'_i log(1 + kappa h_i / n)`` per column."""
    w = np.asarray(w, dtype=float)
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    n = w.shape[0] if n is None else n
    kap = np.where(np.isfinite(kappa), kappa, 0.0)
    pos = w > 0
    out = 2.0 * (w[pos] @ np.log1p(kap * h[pos] / n))
    return np.where(np.isfinite(kappa), np.maximum(out, 0.0), np.inf)


def lr_batch(weights, h) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized ``lr_core`` over the columns of ``h``.

    Returns ``(lr, kappa, feasible)``; ``lr`` is ``+inf`` where infeasible.
    """
    w = _as_w(weights)
    kappa, feasible, _ = solve_kappa(w, h)
    return lr_from_kappa(w, h, kappa), kappa, feasible


def solve_constrained(weights, h) -> PelSolution:
    """Constrained maximum of the pseudo-empirical likelihood at one point."""
    w = _as_w(weights)
    h = np.asarray(h, dtype=float).ravel()
    if h.shape != w.shape:
        raise ValueError("h and the weights must have the same length")
    n = w.shape[0]
    l_ur = l_unrestricted(w)
    kappa, feasible, iters = solve_kappa(w, h)
    kap = float(kappa[0])
    if not feasible[0]:
        return PelSolution(math.nan, None, -math.inf, l_ur, False, int(iters[0]))
    denom = n + kap * h
    p = np.where(denom > 0, 1.0 / np.where(denom > 0, denom, 1.0), 1.0 / n)
    # l_r = sum w' log p = l_ur - sum w' log1p(kappa h / n), accurate for small kappa
    l_r = l_ur - 0.5 * float(lr_from_kappa(w, h, kappa, n)[0])
    return PelSolution(kap, p, l_r, l_ur, True, int(iters[0]))


def lr_core(weights, h) -> float:
    """``2 (L_UR - L_R)`` at one point; ``+inf`` if the constraint is infeasible."""
    w = _as_w(weights)
    h = np.asarray(h, dtype=float).ravel()
    kappa, feasible, _ = solve_kappa(w, h)
    return float(lr_from_kappa(w, h, kappa)[0])
