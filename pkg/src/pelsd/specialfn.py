"""Generalized Arcsine distributions and the chi-squared(1) quantile.

The regularized incomplete beta and gamma functions are evaluated with
modified Lentz continued fractions.  The beta fraction uses the usual
symmetry switch ``I_u(a, b) = 1 - I_{1-u}(b, a)`` when
``u > (a + 1) / (a + b + 2)`` so the fraction always converges quickly,
including near the endpoints where the arcsine densities are unbounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .errors import ConfigurationError

_TINY = 1e-300
_EPS = 1e-16
_MAX_ITER = 10_000


class CdfHandle(Protocol):
    """A vectorized CDF on a bounded interval."""

    support: tuple[float, float]

    def __call__(self, x): ...


def _betacf(a: float, b: float, u: np.ndarray) -> np.ndarray:
    """Continued fraction for I_u(a, b), vectorized over ``u``."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(u)
    d = 1.0 - qab * u / qap
    d = np.where(np.abs(d) < _TINY, _TINY, d)
    d = 1.0 / d
    h = d.copy()
    done = np.zeros(u.shape, dtype=bool)
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * u / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        h = np.where(done, h, h * d * c)
        aa = -(a + m) * (qab + m) * u / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(done, h, h * delta)
        done |= np.abs(delta - 1.0) < _EPS
        if done.all():
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b})")


def betainc_reg(a: float, b: float, u) -> np.ndarray | float:
    """Regularized incomplete beta function ``I_u(a, b)``.

    Values of ``u`` outside ``[0, 1]`` are clamped.
    """
    if not (a > 0 and b > 0):
        raise ValueError("beta parameters must be positive")
    scalar = np.ndim(u) == 0
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    flat = u.ravel()
    out = np.empty_like(flat)
    lo = flat <= 0.0
    hi = flat >= 1.0
    out[lo] = 0.0
    out[hi] = 1.0
    mid = ~(lo | hi)
    if mid.any():
        v = flat[mid]
        lbeta = gammaln(a + b) - gammaln(a) - gammaln(b)
        front = np.exp(lbeta + a * np.log(v) + b * np.log1p(-v))
        direct = v < (a + 1.0) / (a + b + 2.0)
        res = np.empty_like(v)
        if direct.any():
            vd = v[direct]
            res[direct] = front[direct] * _betacf(a, b, vd) / a
        if (~direct).any():
            vs = v[~direct]
            res[~direct] = 1.0 - front[~direct] * _betacf(b, a, 1.0 - vs) / b
        out[mid] = np.clip(res, 0.0, 1.0)
    out = out.reshape(u.shape)
    return float(out) if scalar else out


def gammainc_reg(a: float, x: float) -> float:
    """Lower regularized incomplete gamma ``P(a, x)``."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    lnorm = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        # power series
        ap, total, term = a, 1.0 / a, 1.0 / a
        for _ in range(_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                return min(1.0, total * math.exp(lnorm))
        raise ArithmeticError("incomplete gamma series did not converge")
    # continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return max(0.0, 1.0 - math.exp(lnorm) * h)
    raise ArithmeticError("incomplete gamma continued fraction did not converge")


def chi2_cdf(x: float, df: float = 1.0) -> float:
    """CDF of the chi-squared distribution."""
    return gammainc_reg(df / 2.0, x / 2.0)


def chi2_1_quantile(alpha: float) -> float:
    """Return ``c(alpha)``, the ``1 - alpha`` quantile of chi-squared(1).

    Raises
    ------
    ValueError
        If ``alpha`` is not in the open unit interval.
    """
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    target = 1.0 - alpha
    hi = 1.0
    while chi2_cdf(hi) < target:
        hi *= 2.0
    return brentq(lambda c: chi2_cdf(c) - target, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


# --------------------------------------------------------------------------
# CDF handles used to parameterize propensity bounds


def _check_support(support) -> tuple[float, float]:
    lo, hi = (float(v) for v in support)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ConfigurationError(f"support must be a bounded interval lo < hi, got {support}")
    return lo, hi


@dataclass(frozen=True)
class GeneralizedArcsine:
    """Generalized Arcsine law on ``[lo, hi]`` with shape ``xi`` in (0, 1).

    The density is ``sin(pi xi) / pi * (x - lo)^(-xi) * (hi - x)^(xi - 1)``,
    which is U-shaped.  Larger ``xi`` puts more mass near ``lo``, so the
    CDFs increase with ``xi`` at every point.
    """

    xi: float
    support: tuple[float, float]

    def __post_init__(self):
        if not (0.0 < self.xi < 1.0):
            raise ConfigurationError(f"arcsine shape xi must lie in (0, 1), got {self.xi}")
        object.__setattr__(self, "support", _check_support(self.support))

    def _u(self, x):
        lo, hi = self.support
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)

    def __call__(self, x):
        return arcsine_cdf(self, x)

    def cdf(self, x):
        return arcsine_cdf(self, x)

    def pdf(self, x):
        return arcsine_pdf(self, x)


def arcsine_cdf(dist: GeneralizedArcsine, x):
    """CDF of a Generalized Arcsine law; clamps to 0 below and 1 above the support."""
    return betainc_reg(1.0 - dist.xi, dist.xi, dist._u(x))


def arcsine_pdf(dist: GeneralizedArcsine, x):
    lo, hi = dist.support
    xa = np.asarray(x, dtype=float)
    inside = (xa > lo) & (xa < hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (
            math.sin(math.pi * dist.xi)
            / math.pi
            * np.power(xa - lo, -dist.xi)
            * np.power(hi - xa, dist.xi - 1.0)
        )
    out = np.where(inside, val, 0.0)
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class UniformCDF:
    """Uniform law on ``[lo, hi]``; not a member of the arcsine family."""

    support: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "support", _check_support(self.support))

    def __call__(self, x):
        lo, hi = self.support
        out = np.clip((np.asarray(x, dtype=float) - lo) / (hi - lo), 0.0, 1.0)
        return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class DegenerateCDF:
    """Point mass at ``c``."""

    c: float
    support: tuple[float, float] | None = None

    def __post_init__(self):
        if self.support is None:
            object.__setattr__(self, "support", (self.c, self.c + 1.0))

    def __call__(self, x):
        out = (np.asarray(x, dtype=float) >= self.c).astype(float)
        return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True, eq=False)
class TabulatedCDF:
    """Piecewise-linear CDF through user-supplied knots.

    Knot abscissae must be strictly increasing and the values nondecreasing
    in ``[0, 1]``.  Below the first knot the CDF is the first value, above
    the last knot it is the last value.
    """

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if x.ndim != 1 or x.shape != p.shape or x.size < 2:
            raise ConfigurationError("tabulated CDF needs at least two (x, p) knots of equal length")
        if np.any(np.diff(x) <= 0):
            raise ConfigurationError("tabulated CDF abscissae must be strictly increasing")
        if np.any(np.diff(p) < 0) or p[0] < 0 or p[-1] > 1:
            raise ConfigurationError("tabulated CDF values must be nondecreasing within [0, 1]")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    def __call__(self, xq):
        out = np.interp(np.asarray(xq, dtype=float), self.x, self.p)
        return float(out) if np.ndim(xq) == 0 else out

    @classmethod
    def from_file(cls, path) -> "TabulatedCDF":
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise ConfigurationError(f"{path}: expected two columns x,p")
        return cls(data[:, 0], data[:, 1])


def as_cdf(obj) -> Callable:
    """Return ``obj`` if it is callable, else raise a configuration error."""
    if not callable(obj):
        raise ConfigurationError(f"{obj!r} is not a CDF handle")
    return obj
