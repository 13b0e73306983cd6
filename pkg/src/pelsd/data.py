"""Paired panel samples, design weights and response-share estimation.

A sample is stored column-wise as numpy arrays.  Missing outcomes are NaN;
the response indicators say which outcomes were observed.  Unit
nonresponders (``z_a == 0``) are kept in the sample because their design
weights enter the response-share estimates.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateWeightsError,
    EmptySampleError,
    SampleFormatError,
    SampleValidationError,
)

MISSING_CODES = frozenset({"", "NA"})

DEFAULT_SCHEMA = {
    "y_a": "y_a",
    "y_b": "y_b",
    "z_a": "z_a",
    "z_b": "z_b",
    "weight": "weight",
    "replicate_prefix": "rw_",
}

SHARE_MODES = ("weighted", "hilda_partial")


@dataclass(frozen=True)
class ObservationRecord:
    """One sampled unit followed from wave A to wave B."""

    y_a: float | None
    y_b: float | None
    z_a: int
    z_b: int
    base_weight: float
    replicate_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.z_a not in (0, 1) or self.z_b not in (0, 1):
            raise SampleValidationError("response indicators must be 0 or 1")
        if self.z_a == 0 and self.z_b == 1:
            raise SampleValidationError(
                "pattern (z_a=0, z_b=1) cannot occur: wave-A nonresponders are not followed"
            )
        if (self.y_a is not None) != (self.z_a == 1):
            raise SampleValidationError("y_a must be present exactly when z_a = 1")
        if (self.y_b is not None) != (self.z_b == 1):
            raise SampleValidationError("y_b must be present exactly when z_b = 1")
        if not self.base_weight >= 0:
            raise SampleValidationError("base weight must be nonnegative")
        if self.replicate_weights is not None and any(not w >= 0 for w in self.replicate_weights):
            raise SampleValidationError("replicate weights must be nonnegative")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PairedSample:
    """The full sample V with response patterns and design weights.

    Parameters
    ----------
    y_a, y_b : array_like
        Outcomes in waves A and B, NaN where not observed.
    z_a, z_b : array_like of {0, 1}
        Response indicators.
    weight : array_like
        Design weights (inverse inclusion probabilities up to a constant).
    support_a, support_b : (float, float)
        Declared outcome supports.  They are never inferred from data.
    replicate_weights : array_like, optional
        ``(k, G)`` matrix of replicate weights.
    replicate_scale : array_like, optional
        Jackknife constants ``c_g``; defaults to ``(G - 1) / G``.
    population_size : float, optional
        Frame size, used by the SRSWOR closed-form variance.
    """

    y_a: np.ndarray
    y_b: np.ndarray
    z_a: np.ndarray
    z_b: np.ndarray
    weight: np.ndarray
    support_a: tuple[float, float]
    support_b: tuple[float, float]
    replicate_weights: np.ndarray | None = None
    replicate_scale: np.ndarray | None = None
    population_size: float | None = None
    _responders: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        y_a = _frozen(self.y_a, float)
        y_b = _frozen(self.y_b, float)
        z_a = _frozen(self.z_a, np.int8)
        z_b = _frozen(self.z_b, np.int8)
        w = _frozen(self.weight, float)
        k = y_a.shape[0]
        if k == 0:
            raise EmptySampleError("sample has no records")
        for name, arr in (("y_b", y_b), ("z_a", z_a), ("z_b", z_b), ("weight", w)):
            if arr.shape != (k,):
                raise SampleValidationError(f"{name} has shape {arr.shape}, expected ({k},)")
        sa = tuple(float(v) for v in self.support_a)
        sb = tuple(float(v) for v in self.support_b)
        for name, sup in (("support_a", sa), ("support_b", sb)):
            if len(sup) != 2 or not (math.isfinite(sup[0]) and math.isfinite(sup[1])) or sup[0] >= sup[1]:
                raise SampleValidationError(f"{name} must be a bounded interval lo < hi, got {sup}")

        bad = np.flatnonzero(((z_a != 0) & (z_a != 1)) | ((z_b != 0) & (z_b != 1)))
        if bad.size:
            raise SampleValidationError("response indicators must be 0 or 1", bad.tolist())
        bad = np.flatnonzero((z_a == 0) & (z_b == 1))
        if bad.size:
            raise SampleValidationError("forbidden response pattern (z_a=0, z_b=1)", bad.tolist())
        bad = np.flatnonzero(np.isnan(y_a) != (z_a == 0))
        if bad.size:
            raise SampleValidationError("y_a must be observed exactly when z_a = 1", bad.tolist())
        bad = np.flatnonzero(np.isnan(y_b) != (z_b == 0))
        if bad.size:
            raise SampleValidationError("y_b must be observed exactly when z_b = 1", bad.tolist())
        bad = np.flatnonzero(~(w >= 0) | ~np.isfinite(w))
        if bad.size:
            raise SampleValidationError("design weights must be finite and nonnegative", bad.tolist())
        bad = np.flatnonzero((z_a == 1) & ((y_a < sa[0]) | (y_a > sa[1])))
        if bad.size:
            raise SampleValidationError(f"y_a outside declared support {sa}", bad.tolist())
        bad = np.flatnonzero((z_b == 1) & ((y_b < sb[0]) | (y_b > sb[1])))
        if bad.size:
            raise SampleValidationError(f"y_b outside declared support {sb}", bad.tolist())

        rw = self.replicate_weights
        if rw is not None:
            rw = _frozen(rw, float)
            if rw.ndim != 2 or rw.shape[0] != k or rw.shape[1] < 1:
                raise SampleValidationError(f"replicate weights must have shape ({k}, G)")
            bad = np.flatnonzero(~np.all((rw >= 0) & np.isfinite(rw), axis=1))
            if bad.size:
                raise SampleValidationError("replicate weights must be finite and nonnegative", bad.tolist())
        rs = self.replicate_scale
        if rs is not None:
            if rw is None:
                raise SampleValidationError("replicate_scale given without replicate weights")
            rs = _frozen(rs, float)
            if rs.shape != (rw.shape[1],):
                raise SampleValidationError("replicate_scale must have one entry per replicate")
        set_(self, "y_a", y_a)
        set_(self, "y_b", y_b)
        set_(self, "z_a", z_a)
        set_(self, "z_b", z_b)
        set_(self, "weight", w)
        set_(self, "support_a", sa)
        set_(self, "support_b", sb)
        set_(self, "replicate_weights", rw)
        set_(self, "replicate_scale", rs)
        resp = z_a == 1
        resp.setflags(write=False)
        set_(self, "_responders", resp)

    @classmethod
    def from_records(cls, records: Sequence[ObservationRecord], support_a, support_b, **kwargs):
        if not records:
            raise EmptySampleError("sample has no records")
        nan = float("nan")
        reps = [r.replicate_weights for r in records]
        if any(r is None for r in reps) and not all(r is None for r in reps):
            raise SampleValidationError("replicate weights present for some records only")
        rw = None if reps[0] is None else np.array(reps, dtype=float)
        return cls(
            y_a=[nan if r.y_a is None else r.y_a for r in records],
            y_b=[nan if r.y_b is None else r.y_b for r in records],
            z_a=[r.z_a for r in records],
            z_b=[r.z_b for r in records],
            weight=[r.base_weight for r in records],
            support_a=support_a,
            support_b=support_b,
            replicate_weights=rw,
            **kwargs,
        )

    @property
    def k(self) -> int:
        """Full sample size."""
        return int(self.y_a.shape[0])

    @property
    def n(self) -> int:
        """Number of wave-A responders."""
        return int(self._responders.sum())

    @property
    def responders(self) -> np.ndarray:
        """Boolean mask of the responder subsample U."""
        return self._responders

    @property
    def responder_index(self) -> np.ndarray:
        return np.flatnonzero(self._responders)

    @property
    def n_replicates(self) -> int:
        return 0 if self.replicate_weights is None else int(self.replicate_weights.shape[1])

    @property
    def records(self) -> list[ObservationRecord]:
        out = []
        for i in range(self.k):
            rw = None if self.replicate_weights is None else tuple(self.replicate_weights[i].tolist())
            out.append(
                ObservationRecord(
                    y_a=None if self.z_a[i] == 0 else float(self.y_a[i]),
                    y_b=None if self.z_b[i] == 0 else float(self.y_b[i]),
                    z_a=int(self.z_a[i]),
                    z_b=int(self.z_b[i]),
                    base_weight=float(self.weight[i]),
                    replicate_weights=rw,
                )
            )
        return out

    def pattern_counts(self) -> dict[str, int]:
        """Counts of the response patterns 11, 10, 00 and 01 (always zero)."""
        za, zb = self.z_a, self.z_b
        return {
            "11": int(np.sum((za == 1) & (zb == 1))),
            "10": int(np.sum((za == 1) & (zb == 0))),
            "00": int(np.sum((za == 0) & (zb == 0))),
            "01": int(np.sum((za == 0) & (zb == 1))),
        }

    def replicate_constants(self) -> np.ndarray:
        """The jackknife constants ``c_g``."""
        if self.replicate_weights is None:
            raise ValueError("sample carries no replicate weights")
        if self.replicate_scale is not None:
            return self.replicate_scale
        g = self.n_replicates
        return np.full(g, (g - 1) / g)


@dataclass(frozen=True, eq=False)
class ResponderWeights:
    """Design weights on U rescaled to sum to ``n``."""

    w_prime: np.ndarray

    def __post_init__(self):
        w = _frozen(self.w_prime, float)
        object.__setattr__(self, "w_prime", w)

    @property
    def n(self) -> int:
        return int(self.w_prime.shape[0])


@dataclass(frozen=True)
class ResponseShares:
    """Population fractions of the response patterns (d01 is always zero)."""

    d11: float
    d10: float
    d00: float

    @property
    def d01(self) -> float:
        return 0.0

    def __post_init__(self):
        for name in ("d11", "d10", "d00"):
            v = getattr(self, name)
            if not (-1e-12 <= v <= 1 + 1e-12):
                raise ValueError(f"{name}={v} outside [0, 1]")
        if abs(self.d11 + self.d10 + self.d00 - 1.0) > 1e-12:
            raise ValueError("response shares must sum to one")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.d11, self.d10, self.d00)


def normalize_to_sum(w: np.ndarray, total: float) -> np.ndarray:
    s = math.fsum(np.asarray(w, dtype=float).tolist())
    if not s > 0:
        raise DegenerateWeightsError("all weights are zero")
    return np.asarray(w, dtype=float) * (total / s)


def responder_weights(sample: PairedSample, weight: np.ndarray | None = None) -> ResponderWeights:
    """Rescale the responders' design weights so that they sum to ``n``.

    ``weight`` overrides ``sample.weight`` (one replicate column, say).
    """
    w = sample.weight if weight is None else np.asarray(weight, dtype=float)
    wu = w[sample.responders]
    n = wu.shape[0]
    if n == 0:
        raise EmptySampleError("no wave-A responders in the sample")
    if not np.any(wu > 0):
        raise DegenerateWeightsError("all responder design weights are zero")
    return ResponderWeights(normalize_to_sum(wu, n))


def estimate_shares(
    sample: PairedSample, mode: str = "weighted", weight: np.ndarray | None = None
) -> ResponseShares:
    """Estimate the response-pattern shares.

    ``weighted`` computes Hajek shares over the full sample.  ``hilda_partial``
    is for releases that omit the unit nonresponders' weights: the unit
    nonresponse share is the unweighted ``(k - n) / k`` and the wave
    nonresponse share uses responder weights rescaled to total ``n / k``.
    """
    if sample.k == 0:
        raise EmptySampleError("sample has no records")
    w = sample.weight if weight is None else np.asarray(weight, dtype=float)
    za, zb = sample.z_a, sample.z_b
    if mode == "weighted":
        tot = math.fsum(w.tolist())
        if not tot > 0:
            raise DegenerateWeightsError("all design weights are zero")
        d10 = math.fsum(w[(za == 1) & (zb == 0)].tolist()) / tot
        d00 = math.fsum(w[za == 0].tolist()) / tot
    elif mode == "hilda_partial":
        k, n = sample.k, sample.n
        d00 = (k - n) / k
        if n == 0:
            d10 = 0.0
        else:
            wu = w[za == 1]
            tot = math.fsum(wu.tolist())
            if not tot > 0:
                raise DegenerateWeightsError("all responder design weights are zero")
            d10 = (n / k) * math.fsum(w[(za == 1) & (zb == 0)].tolist()) / tot
    else:
        raise ValueError(f"unknown share mode {mode!r}; expected one of {SHARE_MODES}")
    d11 = 1.0 - d10 - d00
    return ResponseShares(d11=max(d11, 0.0) if d11 > -1e-12 else d11, d10=d10, d00=d00)


def shares_from_counts(
    k: int, n: int, d10: float | None = None, responder_wave_share: float | None = None
) -> ResponseShares:
    """Shares from summary counts when only aggregates are published.

    The unit nonresponse share is ``(k - n) / k``.  The wave nonresponse
    share is either given directly as ``d10`` or as the weighted share of
    wave nonresponders among the ``n`` responders, which is rescaled by
    ``n / k``.  Exactly one of the two must be supplied.
    """
    if k < 1:
        raise EmptySampleError("k must be at least one")
    if not 0 <= n <= k:
        raise ValueError(f"need 0 <= n <= k, got n={n}, k={k}")
    if (d10 is None) == (responder_wave_share is None):
        raise ValueError("give exactly one of d10 and responder_wave_share")
    d00 = (k - n) / k
    if d10 is None:
        if not 0.0 <= responder_wave_share <= 1.0:
            raise ValueError("responder_wave_share must lie in [0, 1]")
        d10 = (n / k) * responder_wave_share
    if not 0.0 <= d10 <= 1.0 - d00 + 1e-12:
        raise ValueError(f"d10={d10} is incompatible with d00={d00}")
    return ResponseShares(d11=max(1.0 - d10 - d00, 0.0), d10=float(d10), d00=d00)


# --------------------------------------------------------------------------
# CSV ingestion

def _parse_float(text, line, column):
    try:
        v = float(text)
    except ValueError:
        raise SampleFormatError(f"column {column!r}: cannot parse {text!r} as a number", line) from None
    if not math.isfinite(v):
        raise SampleFormatError(f"column {column!r}: non-finite value {text!r}", line)
    return v


def _parse_indicator(text, line, column):
    t = text.strip()
    if t not in ("0", "1"):
        raise SampleFormatError(f"column {column!r}: response indicator must be 0 or 1, got {text!r}", line)
    return int(t)


def load_sample(
    path: str | Path,
    support_a: Sequence[float],
    support_b: Sequence[float],
    schema: Mapping[str, str] | None = None,
    *,
    replicate_scale: Iterable[float] | None = None,
    population_size: float | None = None,
) -> PairedSample:
    """Read a paired sample from a CSV file with a header row.

    Missing outcomes are encoded as an empty field or ``NA``; replicate
    weights are the columns ``<replicate_prefix>1 .. <replicate_prefix>G``.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"sample file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SampleFormatError("file is empty", 1) from None
        col = {}
        for role in ("y_a", "y_b", "z_a", "z_b", "weight"):
            name = schema[role]
            if name not in header:
                raise SampleFormatError(f"missing column {name!r} for {role}", 1)
            col[role] = header.index(name)
        prefix = schema.get("replicate_prefix") or ""
        rep_cols = []
        if prefix:
            pat = re.compile(re.escape(prefix) + r"(\d+)$")
            found = sorted((int(m.group(1)), j) for j, h in enumerate(header) if (m := pat.match(h)))
            if found and [g for g, _ in found] != list(range(1, len(found) + 1)):
                raise SampleFormatError(f"replicate columns {prefix}1..{prefix}G are not contiguous", 1)
            rep_cols = [j for _, j in found]

        ya, yb, za, zb, wt, rws = [], [], [], [], [], []
        bad_pattern, bad_missing, bad_present = [], [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SampleFormatError(f"expected {len(header)} fields, found {len(row)}", line)
            cells = [c.strip() for c in row]
            z1 = _parse_indicator(cells[col["z_a"]], line, schema["z_a"])
            z2 = _parse_indicator(cells[col["z_b"]], line, schema["z_b"])
            if z1 == 0 and z2 == 1:
                bad_pattern.append(line)
            vals = []
            for role, z in (("y_a", z1), ("y_b", z2)):
                text = cells[col[role]]
                if text in MISSING_CODES:
                    if z == 1:
                        bad_missing.append(line)
                    vals.append(float("nan"))
                else:
                    v = _parse_float(text, line, schema[role])
                    if z == 0:
                        bad_present.append(line)
                    vals.append(v)
            ya.append(vals[0])
            yb.append(vals[1])
            za.append(z1)
            zb.append(z2)
            wt.append(_parse_float(cells[col["weight"]], line, schema["weight"]))
            if rep_cols:
                rws.append([_parse_float(cells[j], line, header[j]) for j in rep_cols])
    if bad_pattern:
        raise SampleValidationError("forbidden response pattern (z_a=0, z_b=1) at lines", bad_pattern)
    if bad_missing:
        raise SampleValidationError("missing outcome for a responding unit at lines", bad_missing)
    if bad_present:
        raise SampleValidationError("outcome recorded for a nonresponding unit at lines", bad_present)
    if not ya:
        raise EmptySampleError(f"{path} contains no data rows")
    return PairedSample(
        y_a=ya,
        y_b=yb,
        z_a=za,
        z_b=zb,
        weight=wt,
        support_a=tuple(support_a),
        support_b=tuple(support_b),
        replicate_weights=np.array(rws) if rep_cols else None,
        replicate_scale=None if replicate_scale is None else list(replicate_scale),
        population_size=population_size,
    )


def write_sample_csv(sample: PairedSample, path: str | Path, prefix: str = "rw_") -> None:
    """Write a sample in the layout :func:`load_sample` reads."""
    header = ["y_a", "y_b", "z_a", "z_b", "weight"]
    g = sample.n_replicates
    header += [f"{prefix}{j + 1}" for j in range(g)]

    def fmt(v):
        return "" if math.isnan(v) else repr(float(v))

    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i in range(sample.k):
            row = [fmt(sample.y_a[i]), fmt(sample.y_b[i]), int(sample.z_a[i]), int(sample.z_b[i]),
                   repr(float(sample.weight[i]))]
            if g:
                row += [repr(float(v)) for v in sample.replicate_weights[i]]
            wr.writerow(row)


@dataclass(frozen=True, eq=False)
class FinitePopulation:
    """A paired finite population with every outcome known.

    Used by the simulation harness and by the population bound curves.  The
    outcomes of nonresponders are kept so that true dominance functions can
    be compared with the bounds.
    """

    y_a: np.ndarray
    y_b: np.ndarray
    z_a: np.ndarray
    z_b: np.ndarray
    support_a: tuple[float, float]
    support_b: tuple[float, float]
    cluster: np.ndarray | None = None
    stratum: np.ndarray | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        y_a = _frozen(self.y_a, float)
        y_b = _frozen(self.y_b, float)
        z_a = _frozen(self.z_a, np.int8)
        z_b = _frozen(self.z_b, np.int8)
        size = y_a.shape[0]
        for arr in (y_b, z_a, z_b):
            if arr.shape != (size,):
                raise SampleValidationError("population arrays must share one length")
        if np.any((z_a == 0) & (z_b == 1)):
            raise SampleValidationError("forbidden response pattern (z_a=0, z_b=1) in population")
        if not (np.all(np.isfinite(y_a)) and np.all(np.isfinite(y_b))):
            raise SampleValidationError("population outcomes must all be finite")
        set_(self, "y_a", y_a)
        set_(self, "y_b", y_b)
        set_(self, "z_a", z_a)
        set_(self, "z_b", z_b)
        set_(self, "support_a", tuple(float(v) for v in self.support_a))
        set_(self, "support_b", tuple(float(v) for v in self.support_b))
        if self.cluster is not None:
            set_(self, "cluster", _frozen(self.cluster, np.int64))
        if self.stratum is not None:
            set_(self, "stratum", _frozen(self.stratum, np.int64))

    @property
    def size(self) -> int:
        return int(self.y_a.shape[0])

    def shares(self) -> ResponseShares:
        """True pattern fractions."""
        size = self.size
        d10 = float(np.sum((self.z_a == 1) & (self.z_b == 0))) / size
        d00 = float(np.sum(self.z_a == 0)) / size
        return ResponseShares(d11=1.0 - d10 - d00, d10=d10, d00=d00)
