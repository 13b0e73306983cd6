"""Dominance functions of arbitrary order.

For a distribution ``F`` the order-``s`` dominance function is
``D^1 = F`` and ``D^s(x) = integral of D^{s-1} over (-inf, x]``.  For an
empirical distribution the iterated integral collapses to the kernel mean

    D^s(x) = sum_i w_i (x - y_i)^{s-1} / (s-1)! * 1[y_i <= x] / sum_i w_i,

which is what :func:`dominance_fn` evaluates.  Parametric CDFs are handled
by a single weighted integral against ``(x - u)^{s-2} / (s-2)!``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, quad_vec

from .errors import QuadratureError


def _check_order(s: int) -> int:
    if int(s) != s or s < 1:
        raise ValueError(f"dominance order must be a positive integer, got {s}")
    return int(s)


def kernel(y, x, s: int):
    """Evaluate ``(x - y)^{s-1} / (s-1)! * 1[y <= x]`` with ``0^0 = 1``.

    ``y`` and ``x`` broadcast against each other.  NaN entries of ``y``
    yield 0 so that missing outcomes never contribute.
    """
    s = _check_order(s)
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore"):
        ind = y <= x
    if s == 1:
        return ind.astype(float)
    diff = np.where(ind, x - y, 0.0)
    return diff ** (s - 1) / math.factorial(s - 1)


def r_kernel(j: int, y, x):
    """``R_j(y, x) = (x - y)^j / j! * 1[y <= x]``.

    This is the closed form of the recursion ``R_0 = 1[y <= x]``,
    ``R_j(y, x) = integral of R_{j-1}(y, u) du over u <= x``.
    """
    if int(j) != j or j < 0:
        raise ValueError("j must be a nonnegative integer")
    return kernel(y, x, int(j) + 1)


@dataclass(frozen=True, eq=False)
class WeightedEmpirical:
    """A discrete distribution with nonnegative point weights."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if v.shape != w.shape:
            raise ValueError("values and weights must have the same length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @classmethod
    def unweighted(cls, values) -> "WeightedEmpirical":
        v = np.asarray(values, dtype=float).ravel()
        return cls(v, np.ones_like(v))

    @property
    def total_weight(self) -> float:
        return math.fsum(self.weights.tolist())

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.weights.tolist()))


def dominance_fn(dist: WeightedEmpirical, s: int, x):
    """Order-``s`` dominance function of a weighted empirical distribution.

    Parameters
    ----------
    dist : WeightedEmpirical
    s : int
        Dominance order, at least 1.
    x : float or array_like
        Evaluation point(s).

    Returns
    -------
    float or ndarray
    """
    tot = dist.total_weight
    if not tot > 0:
        raise ValueError("total weight must be positive")
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    k = kernel(dist.values[None, :], xa[:, None], s)
    out = (k @ dist.weights) / tot
    return float(out[0]) if np.ndim(x) == 0 else out


def dominance_fn_parametric(cdf, s: int, x: float, lower: float, *, epsabs: float = 1e-9,
                            limit: int = 200) -> float:
    """Order-``s`` dominance function of a CDF given as a callable.

    The ``(s-1)``-fold iterated integral starting at ``lower`` is evaluated as
    the single integral ``int_lower^x (x - u)^{s-2} / (s-2)! cdf(u) du``.

    Raises
    ------
    QuadratureError
        If adaptive quadrature does not reach ``epsabs``.
    """
    s = _check_order(s)
    if s == 1:
        return float(cdf(x))
    if x <= lower:
        return 0.0
    c = math.factorial(s - 2)

    def integrand(u):
        return (x - u) ** (s - 2) / c * float(cdf(u))

    val, err = quad(integrand, lower, x, epsabs=epsabs, epsrel=0.0, limit=limit, full_output=False)
    if not err <= epsabs:
        raise QuadratureError(f"quadrature reached {err:.3g}, requested {epsabs:.3g}", achieved=err)
    return float(val)


def iterated_cdf_integrals(cdf, orders, xs, lower: float, *, epsabs: float = 1e-10):
    """Evaluate ``D^k`` of a CDF handle at many points for several orders.

    Vectorized companion of :func:`dominance_fn_parametric` used when a
    whole sample of outcomes needs ``D^k(y_i)``.  The targets are sorted and
    one adaptive rule integrates the shifted moments
    ``int (u - lower)^m cdf(u) du`` over every gap between consecutive
    targets at once; cumulative sums then give each ``D^k`` through the
    binomial expansion of ``(x - u)^(k-2)``.  Each gap is mapped to the unit
    interval through a smoothstep, which flattens power-law endpoint
    singularities of the arcsine laws.  The error is controlled in the
    1-norm over gaps, so it also bounds every cumulative sum.

    Returns
    -------
    dict
        ``{k: ndarray}`` with one array per requested order.
    """
    xs = np.asarray(xs, dtype=float)
    flat = xs.ravel()
    span = np.maximum(flat - lower, 0.0)
    ks = sorted(set(_check_order(int(o)) for o in orders))
    out = {}
    if 1 in ks:
        out[1] = np.asarray(cdf(flat), dtype=float).reshape(xs.shape)
    higher = [k for k in ks if k > 1]
    if not higher:
        return out
    nodes = np.unique(span[span > 0])
    if nodes.size == 0:
        return {**out, **{k: np.zeros(xs.shape) for k in higher}}
    start = np.concatenate([[0.0], nodes[:-1]])
    width = nodes - start
    powers = np.arange(max(higher) - 1)

    def f(tau):
        t = tau * tau * (3.0 - 2.0 * tau)
        r = start + t * width
        g = np.asarray(cdf(lower + r), dtype=float) * width * (6.0 * tau * (1.0 - tau))
        return (g[:, None] * r[:, None] ** powers).ravel()

    val, err = quad_vec(f, 0.0, 1.0, epsabs=epsabs, epsrel=0.0, limit=2000,
                        norm=lambda e: float(np.sum(np.abs(e))))
    if not err <= max(epsabs, 1e-12) * 10:
        raise QuadratureError(f"vector quadrature reached {err:.3g}", achieved=err)
    moments = np.cumsum(val.reshape(nodes.size, powers.size), axis=0)
    pos = span > 0
    y = span[pos]
    cm = moments[np.searchsorted(nodes, y)]
    for k in higher:
        acc = np.zeros(y.size)
        for m in range(k - 1):
            acc += math.comb(k - 2, m) * (-1) ** m * y ** (k - 2 - m) * cm[:, m]
        res = np.zeros(flat.size)
        res[pos] = acc / math.factorial(k - 2)
        out[k] = res.reshape(xs.shape)
    return out
