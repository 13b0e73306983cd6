"""Command-line front end.

Subcommands: ``test``, ``sweep``, ``curves``, ``deltas`` and ``simulate``.
Exit status is 0 on success, 2 for usage and configuration errors and 1 for
failures while running.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from . import __version__
from .bounds import Direction, Family
from .config import (
    build_sample,
    build_simulation,
    build_spec,
    build_test_config,
    config_hash,
    dump_config,
    effective_config,
    hull,
    load_config_file,
)
from .data import estimate_shares, shares_from_counts
from .errors import ConfigurationError, PelsdError
from .testing import arcsine_grid, emit_bound_curves, grid_refine_check, ks_grid, run_test, sensitivity_sweep

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Invalid command line or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if v is None:
        return ""
    return str(v)


def render_table(rows: list[dict], meta: dict, delimiter: str = "\t", columns: Sequence[str] | None = None) -> str:
    """Delimiter-separated text with a ``#`` metadata preamble and a header row."""
    lines = [f"# {k}: {_fmt(v)}" for k, v in meta.items()]
    cols = list(columns) if columns is not None else (list(rows[0]) if rows else [])
    lines.append(delimiter.join(cols))
    for r in rows:
        lines.append(delimiter.join(_fmt(r.get(c)) for c in cols))
    return "\n".join(lines) + "\n"


def write_atomic(path: str | Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    p = Path(path)
    if p.parent and not p.parent.exists():
        raise ConfigurationError(f"output directory does not exist: {p.parent}")
    fd, tmp = tempfile.mkstemp(prefix=f".{p.name}.", dir=p.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(cfg: dict, text: str, out=None) -> None:
    path = cfg["output"]["path"]
    if path:
        write_atomic(path, text)
    else:
        (out or sys.stdout).write(text)


def _meta(command: str, cfg: dict, **extra) -> dict:
    meta = {"pelsd": __version__, "command": command, "config_hash": config_hash(cfg)}
    meta.update(extra)
    return meta


# --------------------------------------------------------------------------
# argument parsing


def _pair(text: str) -> list[float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two numbers, got {text!r}")
    return [float(p) for p in parts]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--output", "-o", help="output table (default: standard output)")
    p.add_argument("--delimiter", help="column delimiter of output tables (default: tab)")
    p.add_argument("--print-effective-config", action="store_true",
                   help="print the merged configuration and exit")
    p.add_argument("--threads", type=int, help="worker processes (0 = all available cores)")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", "-i", help="sample CSV file")
    p.add_argument("--support-a", type=_pair, metavar="LO,HI", help="declared support of wave A")
    p.add_argument("--support-b", type=_pair, metavar="LO,HI", help="declared support of wave B")
    p.add_argument("--population-size", type=float, help="frame size N for the closed-form variance")
    p.add_argument("--share-mode", choices=["weighted", "hilda_partial"])


def _add_test(p: argparse.ArgumentParser) -> None:
    p.add_argument("--s", type=int, help="dominance order")
    p.add_argument("--range", type=_pair, metavar="LO,HI", help="test range [t_lo, t_hi]")
    p.add_argument("--alpha", type=float, help="significance level")
    p.add_argument("--grid-size", type=int)
    p.add_argument("--augment-grid", action="store_true", default=None,
                   help="add observed outcomes inside the range to the grid")
    p.add_argument("--variance-method", choices=["jackknife", "srs_closed_form"])
    p.add_argument("--full-replicate", action="store_true", default=None,
                   help="recompute shares and plug-in means in every jackknife replicate")


def _add_assumption(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=[f.value for f in Family])
    p.add_argument("--direction", choices=[d.value for d in Direction])
    p.add_argument("--gamma", type=float, nargs=3, metavar=("G_A", "G_B00", "G_B10"))
    p.add_argument("--strict-paper", action="store_true", default=None,
                   help="unit-MCAR family: use phi2 = 1 when testing that A dominates B")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pelsd", description="Restricted stochastic dominance tests for panel surveys")
    parser.add_argument("--version", action="version", version=f"pelsd {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("test", help="run the dominance test on one sample")
    _add_common(p); _add_data(p); _add_test(p); _add_assumption(p)
    p.add_argument("--grid-refine-check", action="store_true", default=None,
                   help="rerun on a grid of twice the resolution and report the drift")

    p = sub.add_parser("sweep", help="sensitivity sweep over assumption parameters")
    _add_common(p); _add_data(p); _add_test(p); _add_assumption(p)
    p.add_argument("--sweep-family", choices=["ks", "arcsine"])
    p.add_argument("--step", type=float, help="lattice step of the KS sweep")

    p = sub.add_parser("curves", help="bound curves for plotting")
    _add_common(p); _add_data(p); _add_test(p); _add_assumption(p)
    p.add_argument("--families", help="comma-separated assumption families")

    p = sub.add_parser("deltas", help="estimate the response-pattern shares")
    _add_common(p); _add_data(p)
    p.add_argument("--k", type=int, help="full sample size (summary-count mode)")
    p.add_argument("--n", type=int, help="number of wave-A responders (summary-count mode)")
    p.add_argument("--d10", type=float, help="wave nonresponse share (summary-count mode)")
    p.add_argument("--responder-wave-share", type=float,
                   help="weighted share of wave nonresponders among responders (summary-count mode)")

    p = sub.add_parser("simulate", help="Monte Carlo size and power experiment")
    _add_common(p); _add_test(p); _add_assumption(p)
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scenario", choices=["boundary", "alternative", "interior", "none"])
    p.add_argument("--design", choices=["srswor", "stratified", "cluster"])
    return parser


def flags_to_config(ns: argparse.Namespace) -> dict:
    g = lambda name: getattr(ns, name, None)  # noqa: E731
    cfg = {
        "data": {
            "input": os.path.abspath(g("input")) if g("input") else None,
            "support_a": g("support_a"),
            "support_b": g("support_b"),
            "population_size": g("population_size"),
        },
        "test": {
            "s": g("s"),
            "range": g("range"),
            "alpha": g("alpha"),
            "grid_size": g("grid_size"),
            "augment_grid": g("augment_grid"),
            "variance_method": g("variance_method"),
            "share_mode": g("share_mode"),
            "full_replicate": g("full_replicate"),
        },
        "assumption": {
            "family": g("family"),
            "direction": g("direction"),
            "gamma": list(g("gamma")) if g("gamma") else None,
            "strict_paper": g("strict_paper"),
        },
        "sweep": {"family": g("sweep_family"), "step": g("step")},
        "curves": {"families": g("families").split(",") if g("families") else None},
        "deltas": {"k": g("k"), "n": g("n"), "d10": g("d10"), "responder_wave_share": g("responder_wave_share")},
        "simulate": {"replications": g("replications"), "seed": g("seed")},
        "output": {"path": os.path.abspath(g("output")) if g("output") else None, "delimiter": g("delimiter")},
        "run": {"threads": g("threads"), "grid_refine_check": g("grid_refine_check")},
    }
    if g("scenario"):
        cfg["simulate"]["population"] = {"scenario": g("scenario")}
    if g("design"):
        cfg["simulate"]["design"] = {"kind": g("design")}
    return cfg


# --------------------------------------------------------------------------
# commands


def cmd_test(cfg: dict) -> int:
    sample = build_sample(cfg)
    spec = build_spec(cfg, hull(sample))
    tcfg = build_test_config(cfg)
    report = run_test(sample, spec, tcfg)
    meta = _meta(
        "test",
        cfg,
        assumption=spec.label,
        s=tcfg.s,
        range=f"{tcfg.t_range[0]!r},{tcfg.t_range[1]!r}",
        alpha=tcfg.alpha,
        lr_statistic=report.lr_statistic,
        min_t2_statistic=report.min_t2_statistic,
        critical_value=report.critical_value,
        decision_lr=report.decision_lr,
        decision_min_t=report.decision_min_t,
        dominance_in_sample=report.dominance_in_sample,
        argmin_x=report.argmin_x,
        infeasible_points=report.infeasible_points.size,
        degenerate_points=report.degenerate_points.size,
    )
    refine = None
    if cfg["run"].get("grid_refine_check"):
        refine = grid_refine_check(sample, spec, tcfg)
        meta.update({f"refine_{k}": v for k, v in refine.items()})
    _emit(cfg, render_table(report.grid_rows(), meta, cfg["output"]["delimiter"]))
    out = sys.stderr if not cfg["output"]["path"] else sys.stdout
    print(report.summary(), file=out)
    if refine is not None:
        print(f"grid refine check : statistic {refine['lr_statistic']:.6g} -> {refine['lr_statistic_refined']:.6g}"
              f" (drift {refine['drift']:.3g}), decision {refine['decision']} -> {refine['decision_refined']}", file=out)
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    sample = build_sample(cfg)
    tcfg = build_test_config(cfg)
    sw = cfg["sweep"]
    family = sw["family"]
    if family == "ks":
        grid = [tuple(v) for v in sw["values"]] if sw.get("values") else ks_grid(float(sw["step"]))
    elif family == "arcsine":
        grid = arcsine_grid(tuple(sw["values"])) if sw.get("values") else arcsine_grid()
    else:
        raise ConfigurationError(f"unknown sweep family {family!r}")
    support = tuple(sw["support"]) if sw.get("support") else None
    res = sensitivity_sweep(sample, family, grid, tcfg, cfg["assumption"]["direction"], support)
    viol = res.monotonicity_violations() if family == "ks" else []
    meta = _meta("sweep", cfg, family=family, direction=cfg["assumption"]["direction"], points=len(grid),
                 rejections=len(res.reject_set), failures=len(res.failures))
    if family == "ks":
        meta["monotonicity_violations"] = len(viol)
    _emit(cfg, render_table(res.rows(), meta, cfg["output"]["delimiter"]))
    out = sys.stderr if not cfg["output"]["path"] else sys.stdout
    print(f"{len(grid)} parameter tuples, {len(res.reject_set)} rejections, {len(res.failures)} failures"
          + (f", {len(viol)} monotonicity violations" if family == "ks" else ""), file=out)
    for params, msg in res.failures[:5]:
        print(f"  failed at {params}: {msg}", file=out)
    return EXIT_OK


def cmd_curves(cfg: dict) -> int:
    sample = build_sample(cfg)
    tcfg = build_test_config(cfg)
    from .bounds import make_grid

    grid = make_grid(tcfg.t_range[0], tcfg.t_range[1], tcfg.grid_size)
    specs = []
    for fam in cfg["curves"]["families"]:
        sub = {**cfg, "assumption": {**cfg["assumption"], "family": fam}}
        specs.append(build_spec(sub, hull(sample)))
    rows = emit_bound_curves(sample, specs, tcfg.s, grid, tcfg.share_mode)
    meta = _meta("curves", cfg, s=tcfg.s, specs=",".join(s.label for s in specs))
    _emit(cfg, render_table(rows, meta, cfg["output"]["delimiter"]))
    return EXIT_OK


def cmd_deltas(cfg: dict) -> int:
    d = cfg["deltas"]
    if d.get("k") is not None or d.get("n") is not None:
        if d.get("k") is None or d.get("n") is None:
            raise ConfigurationError("summary-count mode needs both --k and --n")
        try:
            sh = shares_from_counts(int(d["k"]), int(d["n"]), d.get("d10"), d.get("responder_wave_share"))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        source = "counts"
        k, n = int(d["k"]), int(d["n"])
        mode = "hilda_partial"
    else:
        sample = build_sample(cfg)
        mode = cfg["test"]["share_mode"]
        sh = estimate_shares(sample, mode)
        source, k, n = "sample", sample.k, sample.n
    rows = [{"d00": round(sh.d00, 12), "d10": round(sh.d10, 12), "d11": round(sh.d11, 12), "k": k, "n": n}]
    meta = _meta("deltas", cfg, source=source, mode=mode)
    _emit(cfg, render_table(rows, meta, cfg["output"]["delimiter"]))
    out = sys.stderr if not cfg["output"]["path"] else sys.stdout
    print(f"d00 = {sh.d00:.4f}, d10 = {sh.d10:.4f}, d11 = {sh.d11:.4f}", file=out)
    return EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    from .simulate import default_workers, generate_population, run_experiment

    pop_spec, design, reps, seed = build_simulation(cfg)
    tcfg = build_test_config(cfg, support=pop_spec.t_range)
    threads = int(cfg["run"]["threads"] or 0) or default_workers()
    sim = generate_population(pop_spec)
    summary = run_experiment(sim, design, tcfg, reps, master_seed=seed, workers=threads)
    manifest = summary.manifest
    rows = [{"metric": k, "value": v} for k, v in summary.summary_dict().items()]
    meta = _meta("simulate", cfg, seed=seed, run_hash=manifest["config_hash"], binding_x=sim.binding_x)
    text = render_table(rows, meta, cfg["output"]["delimiter"], columns=["metric", "value"])
    _emit(cfg, text)
    if cfg["output"]["path"]:
        write_atomic(cfg["output"]["path"] + ".manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
        write_atomic(cfg["output"]["path"] + ".replications.tsv",
                     render_table(summary.as_rows(), meta, cfg["output"]["delimiter"]))
    out = sys.stderr if not cfg["output"]["path"] else sys.stdout
    d = summary.summary_dict()
    print(f"rejection rate (LR)      : {d['reject_rate_lr']:.4f} +- {d['reject_rate_lr_se']:.4f}", file=out)
    print(f"rejection rate (min-t2)  : {d['reject_rate_min_t']:.4f}", file=out)
    print(f"rejection rate (no Deff) : {d['reject_rate_unadjusted']:.4f}", file=out)
    if d["ks_distance_binding"] is not None:
        print(f"KS distance at binding x : {d['ks_distance_binding']:.4f}", file=out)
    return EXIT_OK


COMMANDS = {"test": cmd_test, "sweep": cmd_sweep, "curves": cmd_curves, "deltas": cmd_deltas, "simulate": cmd_simulate}


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit status."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        file_cfg = load_config_file(ns.config) if ns.config else {}
        cfg = effective_config(file_cfg, flags_to_config(ns))
        if ns.print_effective_config:
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        return COMMANDS[ns.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"error: configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PelsdError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
