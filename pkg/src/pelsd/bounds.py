"""Nonresponse assumptions as nuisance functionals, moment functions and θ̂.

Every assumption family yields bounds of the form ``D_A^side`` and
``D_B^side`` on the two dominance functions.  The test targets the contrast

* ``upper(D_A) - lower(D_B)`` when testing that A dominates B, and
* ``upper(D_B) - lower(D_A)`` when testing that B dominates A.

Both are encoded in one estimating function through a nuisance vector
``phi = (phi1, phi2, phi3, phi4)``; the moment function of a wave-A
responder is

    H_i(x) = K(y_a, x) [1{11} phi1(x) + 1{10} phi2(x)] + phi3(x)
             - K(y_b, x) 1{11} phi4(x),

where ``K`` is the dominance kernel.  The two directions differ only in
which side of each bound is used and in an overall sign ``sigma``, so a
single code path serves both.

For the worst-case, unit-MCAR and Kolmogorov-Smirnov families each side bound
is linear in the pattern-conditional kernel means:

    D_A^side = a11 E_A11[K] + d10 E_A10[K] + cA K(lo_A, x)
    D_B^side = b11 E_B11[K] + cB K(lo_B, x)

and then ``phi1 = sigma a11 (d11 + d10) / d11``, ``phi2 = sigma (d11 + d10)``,
``phi4 = sigma b11 (d11 + d10) / d11`` and
``phi3 = sigma (cA K(lo_A, x) - cB K(lo_B, x))``.

The propensity-bound family works with the indicator kernel and ratio
CDFs ``G``; see :func:`_propensity_terms`.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import FinitePopulation, PairedSample, ResponderWeights, ResponseShares, responder_weights
from .dominance import iterated_cdf_integrals, kernel, r_kernel
from .errors import ConfigurationError, DegenerateSharesError


class Family(str, enum.Enum):
    WORST_CASE = "worst_case"
    MCAR_UNIT = "mcar_unit"
    PROPENSITY = "propensity"
    KS = "ks"


class Direction(str, enum.Enum):
    A_DOMINATES_B = "a_dominates_b"
    B_DOMINATES_A = "b_dominates_a"

    @property
    def sign(self) -> int:
        return 1 if self is Direction.A_DOMINATES_B else -1


@dataclass(frozen=True)
class KsParams:
    """Kolmogorov-Smirnov neighbourhood radii, each in [0, 1]."""

    gamma_a: float = 0.0
    gamma_b00: float = 0.0
    gamma_b10: float = 0.0

    def __post_init__(self):
        for name in ("gamma_a", "gamma_b00", "gamma_b10"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.gamma_a, self.gamma_b00, self.gamma_b10)


@dataclass(frozen=True)
class PropensityParams:
    """CDF handles bracketing the outcome-conditional nonresponse propensities.

    ``l_a00 <= u_a00`` bound ``Prob(unit nonresponse | Y_A <= x) / d00``;
    ``l_b00 <= u_b00`` and ``l_10 <= u_10`` do the same for wave B.
    """

    l_a00: Callable
    u_a00: Callable
    l_b00: Callable
    u_b00: Callable
    l_10: Callable
    u_10: Callable

    def validate(self, support_a, support_b, points: int = 1001) -> None:
        xa = np.linspace(*support_a, points)
        xb = np.linspace(*support_b, points)
        pairs = (("l_a00", "u_a00", xa), ("l_b00", "u_b00", xb), ("l_10", "u_10", xb))
        for lo_name, hi_name, xs in pairs:
            lo = np.asarray(getattr(self, lo_name)(xs), dtype=float)
            hi = np.asarray(getattr(self, hi_name)(xs), dtype=float)
            if np.any(lo > hi + 1e-12):
                raise ConfigurationError(f"{lo_name} exceeds {hi_name} somewhere on the support")
            if np.any(lo < -1e-12) or np.any(hi > 1 + 1e-12):
                raise ConfigurationError(f"{lo_name}/{hi_name} must take values in [0, 1]")


@dataclass(frozen=True)
class AssumptionSpec:
    """A nonresponse assumption together with the test direction.

    ``strict_paper`` only affects the unit-MCAR family when testing that A
    dominates B: it sets ``phi2 = 1``, a variant that does not reproduce the
    unit-MCAR upper bound on ``D_A`` unless ``d11 + d10 = 1``.
    """

    family: Family
    direction: Direction = Direction.A_DOMINATES_B
    ks: KsParams | None = None
    propensity: PropensityParams | None = None
    strict_paper: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "direction", Direction(self.direction))
        if self.family is Family.KS and self.ks is None:
            object.__setattr__(self, "ks", KsParams())
        if self.family is Family.PROPENSITY and self.propensity is None:
            raise ConfigurationError("the propensity family needs six CDF handles")

    @property
    def label(self) -> str:
        if self.family is Family.KS:
            g = self.ks.as_tuple()
            base = f"ks({g[0]:g},{g[1]:g},{g[2]:g})"
        else:
            base = self.family.value
        arrow = "A>B" if self.direction is Direction.A_DOMINATES_B else "B>A"
        return f"{base}:{arrow}"


@dataclass(frozen=True, eq=False)
class PhiVector:
    """Nuisance functionals evaluated through vectorized callables.

    ``kernel_order`` is the order of the kernel that multiplies ``phi1``,
    ``phi2`` and ``phi4`` in the moment function: ``s`` for the linear
    families and 1 (the indicator) for the propensity family.
    """

    phi1: Callable
    phi2: Callable
    phi3: Callable
    phi4: Callable
    kernel_order: int

    def evaluate(self, x) -> np.ndarray:
        """Return a ``(4, len(x))`` array of the components on ``x``."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        rows = []
        for f in (self.phi1, self.phi2, self.phi3, self.phi4):
            v = np.broadcast_to(np.asarray(f(xs), dtype=float), xs.shape)
            rows.append(v)
        return np.vstack(rows)


def _const(c: float) -> Callable:
    c = float(c)
    return lambda x: np.full(np.shape(x), c)


_CHUNK = 20_000

# --------------------------------------------------------------------------
# pattern-conditional subsamples shared by the bound curves


@dataclass(frozen=True, eq=False)
class _Subsamples:
    """Outcomes of the identified subpopulations with normalized weights."""

    a11: tuple[np.ndarray, np.ndarray]
    a10: tuple[np.ndarray, np.ndarray]
    b11: tuple[np.ndarray, np.ndarray]
    support_a: tuple[float, float]
    support_b: tuple[float, float]

    @staticmethod
    def _norm(v, w):
        tot = math.fsum(w.tolist())
        return (v, w / tot) if tot > 0 else (v[:0], w[:0])

    @classmethod
    def from_sample(cls, sample: PairedSample, w_prime: np.ndarray | None = None) -> "_Subsamples":
        if w_prime is None:
            w_prime = responder_weights(sample).w_prime
        u = sample.responders
        ya, yb, zb = sample.y_a[u], sample.y_b[u], sample.z_b[u]
        m11, m10 = zb == 1, zb == 0
        return cls(
            cls._norm(ya[m11], w_prime[m11]),
            cls._norm(ya[m10], w_prime[m10]),
            cls._norm(yb[m11], w_prime[m11]),
            sample.support_a,
            sample.support_b,
        )

    @classmethod
    def from_population(cls, pop: FinitePopulation) -> "_Subsamples":
        m11 = (pop.z_a == 1) & (pop.z_b == 1)
        m10 = (pop.z_a == 1) & (pop.z_b == 0)
        one = np.ones(pop.size)
        return cls(
            cls._norm(pop.y_a[m11], one[m11]),
            cls._norm(pop.y_a[m10], one[m10]),
            cls._norm(pop.y_b[m11], one[m11]),
            pop.support_a,
            pop.support_b,
        )


def _kmean(sub: tuple[np.ndarray, np.ndarray], grid: np.ndarray, order: int) -> np.ndarray:
    v, w = sub
    out = np.zeros_like(grid, dtype=float)
    for start in range(0, v.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        out += kernel(v[None, sl], grid[:, None], order) @ w[sl]
    return out


def _linear_coeffs(spec: AssumptionSpec, shares: ResponseShares, population: str, side: str):
    """Coefficients ``(c11, c_lo)`` of a linear-family side bound.

    ``c11`` multiplies the 11-pattern kernel mean and ``c_lo`` the kernel at
    the support infimum.  Population A additionally carries ``d10`` on the
    10-pattern mean.
    """
    d11, d10, d00 = shares.d11, shares.d10, shares.d00
    fam = spec.family
    upper = side == "upper"
    if fam is Family.WORST_CASE:
        g_a, g00, g10 = 1.0, 1.0, 1.0
    elif fam is Family.KS:
        g_a, g00, g10 = spec.ks.as_tuple()
    elif fam is Family.MCAR_UNIT:
        g_a, g00, g10 = 0.0, 0.0, 1.0
    else:  # pragma: no cover - guarded by callers
        raise ValueError(fam)
    if population == "A":
        return d11 + (1 - g_a) * d00, (g_a * d00 if upper else 0.0)
    return (
        d11 + (1 - g00) * d00 + (1 - g10) * d10,
        (g00 * d00 + g10 * d10) if upper else 0.0,
    )


def _sides(direction: Direction) -> tuple[str, str]:
    """Which side of the A and B bounds enters the contrast."""
    if direction is Direction.A_DOMINATES_B:
        return "upper", "lower"
    return "lower", "upper"


def _check_shares(shares: ResponseShares) -> None:
    if not shares.d11 > 0:
        raise DegenerateSharesError("d11 = 0: no unit responds in both waves, the nuisance functionals are undefined")


# --------------------------------------------------------------------------
# propensity-bound family


def ratio_cdfs(params: PropensityParams, shares: ResponseShares, direction: Direction):
    """The ratio functions ``G_A`` and ``G_B`` for the chosen sides.

    Upper bounds on ``D_A`` use ``u_a00`` and lower bounds ``l_a00``;
    upper bounds on ``D_B`` use ``u_b00`` and ``u_10``, lower bounds the
    ``l`` handles.
    """
    d11, d10, d00 = shares.d11, shares.d10, shares.d00
    if abs((d11 + d10) - (1.0 - d00)) > 1e-12:
        raise DegenerateSharesError("response shares violate d11 + d10 = 1 - d00")
    side_a, side_b = _sides(direction)
    ha = params.u_a00 if side_a == "upper" else params.l_a00
    hb00, hb10 = (params.u_b00, params.u_10) if side_b == "upper" else (params.l_b00, params.l_10)

    return _RatioA(ha, d00), _RatioB(hb00, hb10, d00, d10, d11)


@dataclass(frozen=True)
class _RatioA:
    """``G_A(x) = (1 - d00) / (1 - h(x) d00)``; hashable so tabulations can be reused."""

    h: Callable
    d00: float

    def __call__(self, x):
        return (1.0 - self.d00) / (1.0 - np.asarray(self.h(x), dtype=float) * self.d00)


@dataclass(frozen=True)
class _RatioB:
    """``G_B(x) = d11 / (1 - h00(x) d00 - h10(x) d10)``."""

    h00: Callable
    h10: Callable
    d00: float
    d10: float
    d11: float

    def __call__(self, x):
        h00 = np.asarray(self.h00(x), dtype=float)
        h10 = np.asarray(self.h10(x), dtype=float)
        return self.d11 / (1.0 - h00 * self.d00 - h10 * self.d10)


class _ArrayKey:
    """Hashable wrapper around a float array, compared by value."""

    __slots__ = ("array", "_hash")

    def __init__(self, array):
        self.array = np.ascontiguousarray(array, dtype=float)
        self.array.flags.writeable = False
        self._hash = hash((self.array.shape, self.array.tobytes()))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return isinstance(other, _ArrayKey) and np.array_equal(self.array, other.array)


@functools.lru_cache(maxsize=512)
def _cached_integrals(g, orders: tuple[int, ...], key: _ArrayKey, lower: float) -> dict:
    out = iterated_cdf_integrals(g, orders, key.array, lower)
    for arr in out.values():
        arr.flags.writeable = False
    return out


def _tabulate(g, orders, xs, lower: float) -> dict:
    """``iterated_cdf_integrals`` memoized on the ratio CDF and the targets.

    A sensitivity sweep revisits each wave's ratio CDF for every setting of
    the handles that only enter the other wave, so the tabulations repeat.
    """
    try:
        hash(g)
    except TypeError:  # an unhashable user handle
        return iterated_cdf_integrals(g, orders, xs, lower)
    return _cached_integrals(g, tuple(orders), _ArrayKey(xs), float(lower))


class _Psi:
    """Evaluates ``Psi_G(y, x) = 1[y<=x] D^s_G(x) - sum_j D^{s-j}_G(y) R_j(y, x)``.

    The integrated part of ``Psi`` only depends on ``y`` through
    ``D^{s-j}_G(y)``, which is tabulated once per subsample.
    """

    def __init__(self, g, lower: float, s: int):
        self.g, self.lower, self.s = g, float(lower), int(s)

    def d_s(self, x: np.ndarray) -> np.ndarray:
        return _tabulate(self.g, [self.s], x, self.lower)[self.s]

    def correction(self, sub: tuple[np.ndarray, np.ndarray]) -> Callable:
        """Return ``x -> E_sub[sum_{j=0}^{s-2} D^{s-j}_G(Y) R_j(Y, x)]``."""
        s = self.s
        v, w = sub
        if s == 1 or v.size == 0:
            return lambda x: np.zeros(np.shape(x))
        orders = list(range(2, s + 1))
        tab = _tabulate(self.g, orders, v, self.lower)

        def corr(x):
            xs = np.atleast_1d(np.asarray(x, dtype=float))
            total = np.zeros(xs.shape)
            for j in range(0, s - 1):
                total += r_kernel(j, v[None, :], xs[:, None]) @ (w * tab[s - j])
            return total

        return corr


def _propensity_terms(spec: AssumptionSpec, shares: ResponseShares, s: int, subs: _Subsamples):
    """Pieces of the propensity-family side bounds.

    Returns the callables ``(DsGA, DsGB, corrA, corrB)`` where ``corrA`` is the
    pattern-share-weighted correction over A11 and A10.
    """
    g_a, g_b = ratio_cdfs(spec.propensity, shares, spec.direction)
    psi_a = _Psi(g_a, subs.support_a[0], s)
    psi_b = _Psi(g_b, subs.support_b[0], s)
    d11, d10, d00 = shares.d11, shares.d10, shares.d00
    c11, c10 = psi_a.correction(subs.a11), psi_a.correction(subs.a10)
    cb = psi_b.correction(subs.b11)

    def corr_a(x):
        return d11 / (1 - d00) * c11(x) + d10 / (1 - d00) * c10(x)

    return psi_a.d_s, psi_b.d_s, corr_a, cb


# --------------------------------------------------------------------------
# public construction of phi


def build_phi(
    spec: AssumptionSpec,
    shares: ResponseShares,
    s: int,
    sample: PairedSample,
    weights: ResponderWeights | np.ndarray | None = None,
) -> PhiVector:
    """Nuisance functionals encoding ``spec`` for the chosen direction.

    Parameters
    ----------
    spec : AssumptionSpec
    shares : ResponseShares
        Plug-in response shares.
    s : int
        Dominance order.
    sample : PairedSample
        Supplies the declared supports and, for the propensity family, the
        subsamples whose weighted means enter ``phi3``.
    weights : ResponderWeights or ndarray, optional
        Responder weights for those means; defaults to the sample's own.
    """
    if int(s) != s or s < 1:
        raise ConfigurationError(f"dominance order must be a positive integer, got {s}")
    s = int(s)
    _check_shares(shares)
    sigma = spec.direction.sign
    d11, d10 = shares.d11, shares.d10
    ratio = (d11 + d10) / d11
    lo_a, lo_b = sample.support_a[0], sample.support_b[0]
    if not (math.isfinite(lo_a) and math.isfinite(lo_b)):
        raise ConfigurationError("worst-case terms need finite declared support infima")

    if spec.family is Family.PROPENSITY:
        w = weights.w_prime if isinstance(weights, ResponderWeights) else weights
        subs = _Subsamples.from_sample(sample, w)
        spec.propensity.validate(sample.support_a, sample.support_b)
        ds_a, ds_b, corr_a, corr_b = _propensity_terms(spec, shares, s, subs)
        k_b = (1.0 - shares.d00) / d11

        def phi12(x):
            return sigma * ds_a(np.asarray(x, dtype=float))

        def phi4(x):
            return sigma * k_b * ds_b(np.asarray(x, dtype=float))

        def phi3(x):
            return sigma * (corr_b(x) - corr_a(x))

        return PhiVector(phi12, phi12, phi3, phi4, kernel_order=1)

    side_a, side_b = _sides(spec.direction)
    a11, c_a = _linear_coeffs(spec, shares, "A", side_a)
    b11, c_b = _linear_coeffs(spec, shares, "B", side_b)
    phi1 = sigma * a11 * ratio
    phi2 = sigma * (d11 + d10)
    if spec.strict_paper and spec.family is Family.MCAR_UNIT and spec.direction is Direction.A_DOMINATES_B:
        phi2 = 1.0
    phi4 = sigma * b11 * ratio

    def phi3(x):
        return sigma * (c_a * kernel(lo_a, x, s) - c_b * kernel(lo_b, x, s))

    return PhiVector(_const(phi1), _const(phi2), phi3, _const(phi4), kernel_order=s)


# --------------------------------------------------------------------------
# moment function and theta-hat


def moment_fn(record, x: float, phi: PhiVector, s: int | None = None) -> float:
    """Moment function ``H_i(x)`` of one wave-A responder.

    ``record`` is an :class:`~pelsd.data.ObservationRecord`.  The kernel order
    is taken from ``phi.kernel_order``; ``s`` is accepted for symmetry with
    the other entry points and must agree with it for the linear families.
    """
    if record.z_a != 1:
        raise ValueError("moment function is only defined for wave-A responders (z_a = 1)")
    order = phi.kernel_order
    p1, p2, p3, p4 = phi.evaluate([x])[:, 0]
    h = float(p3)
    ka = float(kernel(record.y_a, x, order))
    if record.z_b == 1:
        h += ka * p1 - float(kernel(record.y_b, x, order)) * p4
    else:
        h += ka * p2
    return h


@dataclass(frozen=True, eq=False)
class MomentComponents:
    """Kernel matrices of the responders on a grid.

    ``ka11``, ``ka10`` and ``kb11`` have shape ``(n, m)``; combining them with
    a ``(4, m)`` array of nuisance values gives the ``(n, m)`` matrix of
    ``H_i(x_j)``.
    """

    grid: np.ndarray
    ka11: np.ndarray
    ka10: np.ndarray
    kb11: np.ndarray

    @classmethod
    def build(cls, sample: PairedSample, grid, order: int) -> "MomentComponents":
        g = np.asarray(grid, dtype=float)
        u = sample.responders
        ya, yb, zb = sample.y_a[u], sample.y_b[u], sample.z_b[u]
        ka = kernel(ya[:, None], g[None, :], order)
        m11 = (zb == 1)[:, None]
        kb = kernel(np.where(zb == 1, yb, np.inf)[:, None], g[None, :], order)
        return cls(g, ka * m11, ka * ~m11, kb * m11)

    def h_matrix(self, phi_values: np.ndarray) -> np.ndarray:
        p1, p2, p3, p4 = phi_values
        return self.ka11 * p1 + self.ka10 * p2 + p3 - self.kb11 * p4

    def theta(self, w_prime: np.ndarray, phi_values: np.ndarray) -> np.ndarray:
        """θ̂ on the grid for one or several (columns of) responder weights."""
        w = np.asarray(w_prime, dtype=float)
        n = w.shape[0]
        p1, p2, p3, p4 = phi_values
        if w.ndim == 1:
            a11, a10, b11 = w @ self.ka11, w @ self.ka10, w @ self.kb11
            tot = w.sum()
        else:
            a11, a10, b11 = w.T @ self.ka11, w.T @ self.ka10, w.T @ self.kb11
            tot = w.sum(axis=0)[:, None]
        return (a11 * p1 + a10 * p2 + tot * p3 - b11 * p4) / n


def moment_matrix(sample: PairedSample, phi: PhiVector, grid) -> np.ndarray:
    """``(n, m)`` matrix of ``H_i(x_j)`` over the responders and the grid."""
    comp = MomentComponents.build(sample, grid, phi.kernel_order)
    return comp.h_matrix(phi.evaluate(comp.grid))


@dataclass(frozen=True, eq=False)
class ThetaCurve:
    """θ̂ on a grid with the number of responders whose ``H_i`` is nonzero."""

    grid: np.ndarray
    theta_hat: np.ndarray
    nonzero: np.ndarray = field(default=None)


def make_grid(t_lo: float, t_hi: float, size: int = 101, augment_with=None) -> np.ndarray:
    """Equally spaced grid with both endpoints, optionally augmented.

    ``augment_with`` values inside ``[t_lo, t_hi]`` are merged in, which
    makes the grid contain the jump points of first-order step functions.
    """
    if not (math.isfinite(t_lo) and math.isfinite(t_hi)) or t_lo > t_hi:
        raise ConfigurationError(f"invalid range [{t_lo}, {t_hi}]")
    if size < 1:
        raise ConfigurationError("grid size must be at least 1")
    g = np.linspace(t_lo, t_hi, size) if size > 1 else np.array([float(t_lo)])
    if augment_with is not None:
        extra = np.asarray(augment_with, dtype=float)
        extra = extra[np.isfinite(extra) & (extra >= t_lo) & (extra <= t_hi)]
        g = np.unique(np.concatenate([g, extra]))
    return g


def theta_hat(
    sample: PairedSample,
    weights: ResponderWeights,
    phi: PhiVector,
    s: int,
    grid,
) -> ThetaCurve:
    """``θ̂(x) = n^{-1} sum_U w'_i H_i(x)`` on ``grid``."""
    g = np.asarray(grid, dtype=float)
    if g.size == 0:
        raise ConfigurationError("empty evaluation grid")
    if g.size > 1 and np.any(np.diff(g) <= 0):
        raise ConfigurationError("grid must be strictly increasing")
    h = moment_matrix(sample, phi, g)
    w = weights.w_prime
    th = (w @ h) / weights.n
    nz = np.count_nonzero(h, axis=0)
    return ThetaCurve(g, th, nz)


# --------------------------------------------------------------------------
# bound curves


@dataclass(frozen=True, eq=False)
class BoundCurves:
    """Lower and upper bounds on ``D_A^s`` and ``D_B^s`` along a grid."""

    grid: np.ndarray
    lower_a: np.ndarray
    upper_a: np.ndarray
    lower_b: np.ndarray
    upper_b: np.ndarray

    def contrast(self, direction: Direction | str) -> np.ndarray:
        d = Direction(direction)
        if d is Direction.A_DOMINATES_B:
            return self.upper_a - self.lower_b
        return self.upper_b - self.lower_a


def _bound_curves(subs: _Subsamples, shares: ResponseShares, spec: AssumptionSpec, s: int, grid) -> BoundCurves:
    g = np.asarray(grid, dtype=float)
    d11, d10, d00 = shares.d11, shares.d10, shares.d00
    if spec.family is Family.PROPENSITY:
        out = {}
        f_a = d11 / (1 - d00) * _kmean(subs.a11, g, 1) + d10 / (1 - d00) * _kmean(subs.a10, g, 1)
        f_b = _kmean(subs.b11, g, 1)
        for direction in Direction:
            side_spec = AssumptionSpec(spec.family, direction, propensity=spec.propensity)
            ds_a, ds_b, corr_a, corr_b = _propensity_terms(side_spec, shares, s, subs)
            side_a, side_b = _sides(direction)
            out[side_a + "_a"] = f_a * ds_a(g) - corr_a(g)
            out[side_b + "_b"] = f_b * ds_b(g) - corr_b(g)
        return BoundCurves(g, out["lower_a"], out["upper_a"], out["lower_b"], out["upper_b"])

    ea11, ea10, eb11 = _kmean(subs.a11, g, s), _kmean(subs.a10, g, s), _kmean(subs.b11, g, s)
    ka_lo = kernel(subs.support_a[0], g, s)
    kb_lo = kernel(subs.support_b[0], g, s)
    curves = {}
    for side in ("lower", "upper"):
        a11, c_a = _linear_coeffs(spec, shares, "A", side)
        b11, c_b = _linear_coeffs(spec, shares, "B", side)
        curves[side + "_a"] = a11 * ea11 + d10 * ea10 + c_a * ka_lo
        curves[side + "_b"] = b11 * eb11 + c_b * kb_lo
    return BoundCurves(g, curves["lower_a"], curves["upper_a"], curves["lower_b"], curves["upper_b"])


def bound_curves(
    sample: PairedSample,
    spec: AssumptionSpec,
    s: int,
    grid,
    shares: ResponseShares,
    weights: ResponderWeights | None = None,
) -> BoundCurves:
    """Sample-analogue bound curves using Hajek-weighted subsample means."""
    w = None if weights is None else weights.w_prime
    return _bound_curves(_Subsamples.from_sample(sample, w), shares, spec, s, grid)


def population_bounds(pop: FinitePopulation, spec: AssumptionSpec, s: int, grid) -> BoundCurves:
    """Bounds on the population dominance functions implied by ``spec``."""
    return _bound_curves(_Subsamples.from_population(pop), pop.shares(), spec, s, grid)


def population_dominance(pop: FinitePopulation, s: int, grid) -> tuple[np.ndarray, np.ndarray]:
    """True ``(D_A^s, D_B^s)`` of a fully known population on ``grid``."""
    g = np.asarray(grid, dtype=float)
    one = np.ones(pop.size) / pop.size
    return _kmean((pop.y_a, one), g, s), _kmean((pop.y_b, one), g, s)


def population_theta(pop: FinitePopulation, spec: AssumptionSpec, s: int, grid) -> np.ndarray:
    """Population contrast targeted by ``spec`` on ``grid``."""
    return population_bounds(pop, spec, s, grid).contrast(spec.direction)
