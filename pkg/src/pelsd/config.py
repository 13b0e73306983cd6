"""Run configuration: defaults, TOML files, flag overrides and object builders.

Precedence is total: built-in defaults < config file < command-line flags.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .bounds import AssumptionSpec, Direction, Family, KsParams, PropensityParams
from .data import DEFAULT_SCHEMA, PairedSample, load_sample
from .errors import ConfigurationError
from .simulate import DesignSpec, NonresponseSpec, PopulationSpec
from .specialfn import DegenerateCDF, GeneralizedArcsine, TabulatedCDF, UniformCDF
from .testing import TestConfig

DEFAULTS: dict[str, Any] = {
    "data": {
        "input": None,
        "support_a": None,
        "support_b": None,
        "population_size": None,
        "replicate_scale": None,
        "columns": dict(DEFAULT_SCHEMA),
    },
    "test": {
        "s": 1,
        "range": None,
        "alpha": 0.05,
        "grid_size": 101,
        "augment_grid": False,
        "variance_method": "jackknife",
        "share_mode": "weighted",
        "full_replicate": False,
    },
    "assumption": {
        "family": "worst_case",
        "direction": "a_dominates_b",
        "gamma": [0.0, 0.0, 0.0],
        "strict_paper": False,
        "propensity": {},
    },
    "sweep": {
        "family": "ks",
        "step": 0.1,
        "values": None,
        "support": None,
    },
    "curves": {
        "families": ["worst_case", "mcar_unit"],
        "source": "sample",
    },
    "deltas": {
        "k": None,
        "n": None,
        "d10": None,
        "responder_wave_share": None,
    },
    "simulate": {
        "replications": 200,
        "seed": 12345,
        "population": {},
        "nonresponse": {},
        "design": {},
    },
    "output": {
        "path": None,
        "delimiter": "\t",
    },
    "run": {
        "threads": 0,
        "grid_refine_check": False,
    },
}


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive merge; ``override`` wins, ``None`` values in it are ignored."""
    out = copy.deepcopy(base)
    for key, val in override.items():
        if val is None:
            continue
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config_file(path: str | Path) -> dict:
    """Parse a TOML config file.

    Raises
    ------
    ConfigurationError
        If the file is missing, unparsable, or has unknown sections.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        with p.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{p}: {exc}") from None
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigurationError(f"{p}: unknown section(s) {sorted(unknown)}")
    for section, body in raw.items():
        if not isinstance(body, dict):
            raise ConfigurationError(f"{p}: [{section}] must be a table")
        extra = set(body) - set(DEFAULTS[section])
        if extra and section not in ("simulate",):
            raise ConfigurationError(f"{p}: unknown key(s) {sorted(extra)} in [{section}]")
    _resolve_paths(raw, p.parent)
    return raw


def _resolve_paths(raw: dict, base: Path) -> None:
    data = raw.get("data", {})
    if isinstance(data.get("input"), str):
        data["input"] = str((base / data["input"]).resolve()) if not Path(data["input"]).is_absolute() else data["input"]
    handles = raw.get("assumption", {}).get("propensity", {})
    for h in handles.values():
        if isinstance(h, dict) and isinstance(h.get("path"), str) and not Path(h["path"]).is_absolute():
            h["path"] = str((base / h["path"]).resolve())


def effective_config(file_cfg: dict | None, flag_cfg: dict | None) -> dict:
    return deep_merge(deep_merge(DEFAULTS, file_cfg or {}), flag_cfg or {})


def config_hash(cfg: dict) -> str:
    """Short digest of everything that affects results (the output location does not)."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, default=str).encode()).hexdigest()[:16]


def dump_config(cfg: dict) -> str:
    """Render a configuration as TOML-like text (``None`` entries are omitted)."""
    lines: list[str] = []

    def val(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(val(x) for x in v) + "]"
        if isinstance(v, float) and math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)

    def emit(prefix: str, table: dict):
        scalars = {k: v for k, v in table.items() if not isinstance(v, dict) and v is not None}
        subs = {k: v for k, v in table.items() if isinstance(v, dict)}
        if prefix:
            lines.append(f"[{prefix}]")
        for k, v in scalars.items():
            lines.append(f"{k} = {val(v)}")
        if prefix:
            lines.append("")
        for k, v in subs.items():
            emit(f"{prefix}.{k}" if prefix else k, v)

    emit("", cfg)
    return "\n".join(lines).rstrip() + "\n"


# --------------------------------------------------------------------------
# builders


def _interval(value, name: str) -> tuple[float, float]:
    if value is None:
        raise ConfigurationError(f"{name} is required")
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a pair [lo, hi]") from None
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ConfigurationError(f"{name} must be a bounded interval with lo < hi, got {value}")
    return lo, hi


def build_sample(cfg: dict) -> PairedSample:
    data = cfg["data"]
    if not data.get("input"):
        raise ConfigurationError("no input sample given (data.input or --input)")
    path = Path(data["input"])
    if not path.is_file():
        raise ConfigurationError(f"input file not found: {path}")
    sa = _interval(data.get("support_a"), "data.support_a")
    sb = _interval(data.get("support_b"), "data.support_b")
    return load_sample(
        path,
        sa,
        sb,
        data.get("columns"),
        replicate_scale=data.get("replicate_scale"),
        population_size=data.get("population_size"),
    )


def build_test_config(cfg: dict, support: tuple[float, float] | None = None) -> TestConfig:
    t = cfg["test"]
    rng = t.get("range")
    if rng is None:
        if support is None:
            raise ConfigurationError("test.range is required")
        rng = support
    return TestConfig(
        s=int(t["s"]),
        t_range=_interval(rng, "test.range"),
        alpha=float(t["alpha"]),
        grid_size=int(t["grid_size"]),
        variance_method=t["variance_method"],
        share_mode=t["share_mode"],
        full_replicate=bool(t["full_replicate"]),
        augment_grid=bool(t["augment_grid"]),
    )


def build_cdf(desc, support: tuple[float, float]):
    """A CDF handle from its config description.

    Accepted forms: ``{type = "arcsine", xi = 0.3}``, ``{type = "uniform"}``,
    ``{type = "point", at = 1.0}``, ``{type = "one"}`` (identically one on the
    support), ``{type = "zero"}`` (zero below the top of the support) and
    ``{type = "table", path = "file.csv"}``.  ``support`` may be overridden
    per handle.
    """
    if not isinstance(desc, dict) or "type" not in desc:
        raise ConfigurationError(f"CDF handle must be a table with a 'type' key, got {desc!r}")
    sup = _interval(desc.get("support", support), "handle support")
    kind = desc["type"]
    if kind == "arcsine":
        return GeneralizedArcsine(float(desc["xi"]), sup)
    if kind == "uniform":
        return UniformCDF(sup)
    if kind == "point":
        return DegenerateCDF(float(desc["at"]), sup)
    if kind == "one":
        return DegenerateCDF(sup[0], sup)
    if kind == "zero":
        return DegenerateCDF(sup[1], sup)
    if kind == "table":
        return TabulatedCDF.from_file(desc["path"])
    raise ConfigurationError(f"unknown CDF handle type {kind!r}")


PROPENSITY_HANDLES = ("l_a00", "u_a00", "l_b00", "u_b00", "l_10", "u_10")


def build_spec(cfg: dict, support: tuple[float, float]) -> AssumptionSpec:
    a = cfg["assumption"]
    try:
        family = Family(a["family"])
        direction = Direction(a["direction"])
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    ks = None
    prop = None
    if family is Family.KS:
        g = a.get("gamma")
        if g is None or len(g) != 3:
            raise ConfigurationError("assumption.gamma must list three values")
        ks = KsParams(*(float(v) for v in g))
    if family is Family.PROPENSITY:
        handles = a.get("propensity") or {}
        missing = [h for h in PROPENSITY_HANDLES if h not in handles]
        if missing:
            raise ConfigurationError(f"propensity family needs handles {missing}")
        prop = PropensityParams(**{h: build_cdf(handles[h], support) for h in PROPENSITY_HANDLES})
    return AssumptionSpec(family, direction, ks=ks, propensity=prop, strict_paper=bool(a.get("strict_paper")))


def hull(sample: PairedSample) -> tuple[float, float]:
    return (min(sample.support_a[0], sample.support_b[0]), max(sample.support_a[1], sample.support_b[1]))


def _filter(cls, body: dict, name: str) -> dict:
    allowed = set(cls.__dataclass_fields__)
    extra = set(body) - allowed
    if extra:
        raise ConfigurationError(f"unknown key(s) {sorted(extra)} in [simulate.{name}]")
    return dict(body)


def build_simulation(cfg: dict) -> tuple[PopulationSpec, DesignSpec, int, int]:
    """``(population spec, design spec, replications, master seed)``.

    The order, range and grid of a simulation come from
    ``[simulate.population]``; the test section only supplies the level,
    variance options and share mode.
    """
    sim = cfg["simulate"]
    pop_body = _filter(PopulationSpec, sim.get("population", {}), "population")
    nr = NonresponseSpec(**_filter(NonresponseSpec, sim.get("nonresponse", {}), "nonresponse"))
    for key in ("support", "t_range"):
        if key in pop_body:
            pop_body[key] = tuple(pop_body[key])
    if "assumption" in pop_body:
        raise ConfigurationError("set the simulated assumption in the [assumption] section")
    spec = build_spec(cfg, tuple(pop_body.get("support", PopulationSpec.__dataclass_fields__["support"].default)))
    pop = PopulationSpec(nonresponse=nr, assumption=spec, **pop_body)
    design = DesignSpec(**_filter(DesignSpec, sim.get("design", {}), "design"))
    return pop, design, int(sim["replications"]), int(sim["seed"])
