"""Command-line experiment runner.

``smoothlab run <experiment | config.ini> [options]`` runs one experiment
and writes ``<outdir>/<experiment>/<timestamp>/{manifest.json, report.csv,
summary.json, snapshots/}``.  ``smoothlab report <dir>`` prints a summary of a
finished run and ``smoothlab list-specs`` lists the shipped specifications.

Exit status: 0 when every check passes, 2 when some check fails, 1 on
configuration or input errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as _dt
import json
import os
import platform
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from .escape import EscapeFunction, choose_scales, escape_samples, verify_escape
from .fitting import EstimateReport
from .flow import StepPolicy, nontrapping_probe, sample_energy_shell
from .harness import Ensemble, fit_constant, worker_count
from .multiplier import (
    SmoothingMultiplier,
    AngularMultiplier,
    log_samples,
    verify_smoothing_symbol_bound,
    verify_angular_symbol_bound,
)
from .propagator import spec_hash
from .specs import SPEC_NAMES, make_spec, parse_spec_name
from .symbols import SymbolFn, japanese_bracket, metric_decay_check, seminorm_check
from .weyl import AliasingWarning, GridSpec, garding_form_check

EXPERIMENTS = ("check-symbols", "flow", "escape", "multiplier", "garding", "smoothing-thm1", "smoothing-thm2",
               "yajima-zhang")


class ConfigError(ValueError):
    """Invalid configuration; ``where`` names the field (and line, if known)."""

    def __init__(self, where, message):
        super().__init__(f"{where}: {message}")
        self.where = where


# ------------------------------------------------------------------- config

# key -> (section, type); one table drives both the INI reader and the flags
FIELDS = {
    "kind": ("experiment", str),
    "seed": ("experiment", int),
    "outdir": ("experiment", str),
    "spec": ("spec", str),
    "n": ("spec", int),
    "m": ("spec", float),
    "potential": ("spec", str),
    "eps": ("spec", float),
    "sigma0": ("spec", float),
    "T": ("spec", float),
    "N": ("grid", int),
    "L": ("grid", float),
    "dt": ("propagator", float),
    "stride": ("propagator", int),
    "tol": ("propagator", float),
    "gaussians": ("ensemble", int),
    "omegas": ("ensemble", "floats"),
    "directions": ("ensemble", int),
    "random_fields": ("ensemble", int),
    "band": ("ensemble", float),
    "forced": ("ensemble", bool),
    "top_bands": ("ensemble", "floats"),
    "nu": ("multiplier", float),
    "M0": ("multiplier", float),
    "radius": ("multiplier", float),
    "samples": ("sampling", int),
}

DEFAULTS = {
    "seed": 0, "outdir": "runs", "spec": "flat", "n": 1, "T": 1.0, "N": 128, "L": 8.0, "dt": 1e-3, "stride": 10,
    "tol": 1e-10, "gaussians": 8, "omegas": (4.0, 8.0, 16.0, 32.0), "directions": 3, "random_fields": 4,
    "band": 4.0, "forced": False, "top_bands": (8.0, 16.0, 32.0), "nu": 0.1, "M0": 4.0, "radius": 1.0,
    "samples": 1000,
}


def _convert(kind, raw):
    if kind == "floats":
        if isinstance(raw, (list, tuple)):
            return tuple(float(v) for v in raw)
        return tuple(float(v) for v in str(raw).replace(";", ",").split(",") if v.strip())
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return kind(raw)


def _line_of(path, section, key):
    """Line number of ``key`` inside ``[section]`` (for diagnostics)."""
    current = None
    with open(path) as fh:
        for i, line in enumerate(fh, 1):
            s = line.strip()
            if s.startswith("[") and s.endswith("]"):
                current = s[1:-1].strip()
            elif current == section and s.split("=", 1)[0].split(":", 1)[0].strip() == key:
                return i
    return None


def read_config(path):
    """Parse an INI experiment file into a flat dict of typed values."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep N and L distinct from n and l
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as err:
        raise ConfigError(path, f"malformed config: {err}") from None
    except OSError as err:
        raise ConfigError(path, str(err)) from None
    out, origin = {}, {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            where = f"{path}:{_line_of(path, section, key) or '?'} [{section}] {key}"
            if key not in FIELDS:
                raise ConfigError(where, f"unknown field; known fields: {', '.join(sorted(FIELDS))}")
            want, kind = FIELDS[key]
            if want != section:
                raise ConfigError(where, f"field belongs in section [{want}]")
            try:
                out[key] = _convert(kind, raw)
            except ValueError as err:
                raise ConfigError(where, f"cannot parse {raw!r}: {err}") from None
            origin[key] = where
    return out, origin


@dataclass
class ExperimentConfig:
    """Validated settings of one experiment run."""

    kind: str
    values: dict
    origin: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def as_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(self.values.items())}


def _experiment_defaults(kind):
    """Settings that make each experiment meaningful out of the box."""
    if kind == "smoothing-thm1":
        return {"spec": "quartic", "N": 256, "L": 8.0, "dt": 2.5e-4, "stride": 40}
    if kind == "smoothing-thm2":
        return {"spec": "perturbed_flat", "potential": "quartic", "m": 4.0, "n": 2, "N": 128, "L": 6.0, "dt": 2e-3,
                "stride": 25, "omegas": (4.0, 8.0), "gaussians": 4, "random_fields": 2, "forced": True}
    if kind == "yajima-zhang":
        return {"spec": "quartic", "N": 256, "L": 8.0, "dt": 2.5e-4, "stride": 40}
    if kind == "garding":
        return {"spec": "harmonic", "N": 128, "L": 8.0}
    return {}


def validate(kind, values, origin=None):
    origin = origin or {}

    def where(key):
        return origin.get(key, f"--{key}")

    if kind not in EXPERIMENTS:
        raise ConfigError(origin.get("kind", "experiment"), f"unknown experiment {kind!r}; choose from {EXPERIMENTS}")
    merged = {**DEFAULTS, **_experiment_defaults(kind), **values}
    try:
        base, _ = parse_spec_name(merged["spec"])
    except ValueError as err:
        raise ConfigError(where("spec"), str(err)) from None
    if base not in {k.split("(")[0] for k in SPEC_NAMES}:
        raise ConfigError(where("spec"), f"unknown spec {merged['spec']!r}; see `smoothlab list-specs`")
    m = merged.get("m")
    if m is not None and not m >= 2:
        raise ConfigError(where("m"), f"m must be >= 2 (growth exponent of the potential, superquadratic or quadratic), got {m}")
    if not merged["nu"] > 0:
        raise ConfigError(where("nu"), f"nu must be positive, got {merged['nu']}")
    if merged["n"] not in (1, 2):
        raise ConfigError(where("n"), f"dimension must be 1 or 2, got {merged['n']}")
    N = merged["N"]
    if N < 4 or N & (N - 1):
        raise ConfigError(where("N"), f"grid size must be a power of two >= 4, got {N}")
    for key in ("L", "T", "dt", "tol"):
        if not merged[key] > 0:
            raise ConfigError(where(key), f"must be positive, got {merged[key]}")
    if merged["stride"] < 1 or merged["samples"] < 1:
        raise ConfigError(where("stride" if merged["stride"] < 1 else "samples"), "must be >= 1")
    if kind in ("garding",) and merged["n"] != 1:
        raise ConfigError(where("n"), "the garding experiment runs on the dense 1D path (n = 1)")
    if kind == "smoothing-thm2" and merged["n"] < 2:
        raise ConfigError(where("n"), "the angular estimate needs n >= 2")
    if kind in ("smoothing-thm1", "yajima-zhang") and merged["n"] == 2 and merged["N"] > 256:
        raise ConfigError(where("N"), "2D smoothing runs are limited to N <= 256")
    return ExperimentConfig(kind, merged, origin)


def build_spec(cfg):
    kw = {k: cfg[k] for k in ("n", "T") if k in cfg.values}
    for k in ("m", "potential", "eps", "sigma0"):
        if cfg.get(k) is not None:
            kw[k] = cfg[k]
    try:
        return make_spec(cfg["spec"], **kw)
    except ValueError as err:
        raise ConfigError(cfg.origin.get("spec", "--spec"), str(err)) from None


# -------------------------------------------------------------- experiments


def _rng(cfg):
    return np.random.default_rng(cfg["seed"])


def _ensemble(cfg):
    return Ensemble(gaussians=cfg["gaussians"], omegas=cfg["omegas"], directions=cfg["directions"],
                    random_fields=cfg["random_fields"], band=cfg["band"], seed=cfg["seed"])


def run_check_symbols(spec, cfg):
    reports = [metric_decay_check(spec, rng=_rng(cfg))]
    if spec.potential is not None:
        V = SymbolFn(lambda x: spec.V(0.0, x), arity="x", name=f"V[{spec.name}]")
        reports.append(seminorm_check(V, lambda x, xi: japanese_bracket(x) ** spec.m, order=2, n=spec.n,
                                      rng=_rng(cfg)))
    val = spec.validate(_rng(cfg))
    reports.append(EstimateReport(f"coefficients:{spec.name}", {"check": ["symmetry", "ellipticity_margin"],
                                                                 "value": [val["symmetry"], val["ellipticity_margin"]]},
                                  {"real": val["real"]}, bool(val["ok"])))
    return reports, []


def run_flow(spec, cfg):
    x, xi = sample_energy_shell(spec, cfg["samples"], 2.0, _rng(cfg))
    res = nontrapping_probe(spec, x, xi, t_max=100.0, R_esc=20.0, policy=StepPolicy(dt=2e-2))
    cols = {"status": [v.status for v in res.verdicts],
            "escape_time": [v.escape_time if v.escape_time is not None else float("nan") for v in res.verdicts],
            "max_radius": [v.max_radius for v in res.verdicts]}
    rep = EstimateReport(f"flow:{spec.name}", cols, {**res.counts, "t_K": res.t_K}, res.non_trapping,
                         {"samples": cfg["samples"], "R_esc": 20.0, "t_max": 100.0})
    return [rep], []


def _escape(spec, cfg):
    R, M = choose_scales(spec, _rng(cfg))
    return EscapeFunction(spec, R=R, M=M)


def run_escape(spec, cfg):
    esc = _escape(spec, cfg)
    x, xi = escape_samples(spec, cfg["samples"], 3.0 * esc.M, _rng(cfg))
    return [verify_escape(esc, x, xi)], []


def run_multiplier(spec, cfg):
    esc = _escape(spec, cfg)
    rng = _rng(cfg)
    x, xi = log_samples(spec.n, cfg["samples"], spec.m, rng)
    reports = [verify_smoothing_symbol_bound(SmoothingMultiplier(esc, nu=cfg["nu"], M0=cfg["M0"]), x, xi)]
    if spec.n >= 2:
        sigma0 = spec.params.get("sigma0", 1.0)
        reports.append(verify_angular_symbol_bound(AngularMultiplier(esc, spec.m), x, xi, sigma0=sigma0))
    return reports, []


def run_garding(spec, cfg):
    esc = _escape(spec, cfg)
    grid = GridSpec(1, cfg["N"], cfg["L"])
    members = _ensemble(cfg).members(grid)
    mult = SmoothingMultiplier(esc, nu=cfg["nu"], M0=cfg["M0"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        rep = garding_form_check(spec, mult, grid, [(mb.label, mb.u0) for mb in members], nu=cfg["nu"])
    return [rep], []


def _smoothing(experiment):
    def run(spec, cfg):
        grid = GridSpec(spec.n, cfg["N"], cfg["L"])
        params = {k: cfg[k] for k in ("T", "dt", "stride", "tol", "nu", "radius", "top_bands", "forced")}
        params["workers"] = worker_count()
        if cfg.get("sigma0") is not None:
            params["sigma0"] = cfg["sigma0"]
        report, runs = fit_constant(spec, grid, _ensemble(cfg), experiment, params)
        return [report], runs

    return run


HANDLERS = {
    "check-symbols": run_check_symbols,
    "flow": run_flow,
    "escape": run_escape,
    "multiplier": run_multiplier,
    "garding": run_garding,
    "smoothing-thm1": _smoothing("weighted"),
    "smoothing-thm2": _smoothing("angular"),
    "yajima-zhang": _smoothing("cutoff"),
}


# ------------------------------------------------------------------- output


def _timestamp():
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S_%fZ")


def _run_dir(outdir, kind):
    base = os.path.join(outdir, kind, _timestamp())
    path, i = base, 1
    while os.path.exists(path):
        path = f"{base}-{i}"
        i += 1
    os.makedirs(os.path.join(path, "snapshots"))
    return path


def write_run(path, cfg, spec, reports, runs):
    """Write the artifacts of a finished run.  ``report.csv`` holds the first report."""
    reports[0].to_csv(os.path.join(path, "report.csv"))
    for i, rep in enumerate(reports[1:], 1):
        rep.to_csv(os.path.join(path, f"report_{i}.csv"))
    summary = {"experiment": cfg.kind, "passed": all(r.passed for r in reports),
               "reports": [r.summary() for r in reports]}
    with open(os.path.join(path, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    for run in runs:
        if run.ok:
            run.snapshots[0].save(os.path.join(path, "snapshots", f"{run.member.label}_initial.bin"), run.times[0])
            run.snapshots[-1].save(os.path.join(path, "snapshots", f"{run.member.label}_final.bin"), run.times[-1])
    manifest = {
        "tool": "smoothlab", "version": __version__, "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "experiment": cfg.kind, "config": cfg.as_dict(), "spec": spec.name, "spec_hash": spec_hash(spec),
        "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
        "reports": [r.experiment for r in reports],
        "members": {r.member.label: (r.manifest["norms"][-1] if r.ok else r.error) for r in runs},
    }
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _print_checks(reports, stream):
    for rep in reports:
        flag = "PASS" if rep.passed else "FAIL"
        print(f"  [{flag}] {rep.experiment}", file=stream)


def cmd_run(args):
    values, origin = {}, {}
    target = args.target
    if os.path.isfile(target) or target.endswith((".ini", ".cfg")):
        values, origin = read_config(target)
        kind = values.pop("kind", None)
        if kind is None:
            raise ConfigError(f"{target} [experiment]", "missing field 'kind'")
    else:
        kind = target
    for key in FIELDS:
        val = getattr(args, key, None)
        if val is not None:
            try:
                values[key] = _convert(FIELDS[key][1], val)
            except ValueError as err:
                raise ConfigError(f"--{key}", str(err)) from None
            origin.pop(key, None)
    cfg = validate(kind, values, origin)
    spec = build_spec(cfg)
    reports, runs = HANDLERS[kind](spec, cfg)
    path = _run_dir(cfg["outdir"], kind)
    write_run(path, cfg, spec, reports, runs)
    ok = all(r.passed for r in reports)
    print(f"{kind}: {'all checks passed' if ok else 'some checks failed'} -> {path}")
    _print_checks(reports, sys.stdout)
    return 0 if ok else 2


def _fmt_value(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def cmd_report(args):
    path = args.rundir
    man = os.path.join(path, "manifest.json")
    if not os.path.isfile(man):
        raise ConfigError(path, "no manifest.json here; not a run directory")
    with open(man) as fh:
        manifest = json.load(fh)
    with open(os.path.join(path, "summary.json")) as fh:
        summary = json.load(fh)
    out = [f"experiment: {manifest['experiment']} (spec {manifest['spec']}, hash {manifest['spec_hash']})",
           f"overall: {'PASS' if summary['passed'] else 'FAIL'}"]
    for rep in summary["reports"]:
        out.append(f"[{'PASS' if rep['passed'] else 'FAIL'}] {rep['experiment']} ({rep['n_rows']} rows)")
        consts = rep["constants"]
        for key in sorted(consts):
            val = consts[key]
            if isinstance(val, dict):
                if key.startswith("C_") and "by_omega" in key:
                    out.append(f"  {key}:")
                    out.append("    omega      C")
                    for om in sorted(val, key=float):
                        out.append(f"    {om:>6}  {_fmt_value(val[om])}")
                continue
            out.append(f"  {key} = {_fmt_value(val)}")
    csv_path = os.path.join(path, "report.csv")
    if os.path.isfile(csv_path):
        with open(csv_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        key = next((k for k in ("ratio", "ratio_sigma0", "lhs") if rows and k in rows[0]), None)
        if key:
            def score(row):
                try:
                    return float(row[key])
                except ValueError:
                    return float("-inf")

            worst = sorted(rows, key=score, reverse=True)[:3]
            out.append(f"worst samples by {key}:")
            label = next((k for k in ("member", "x1") if k in rows[0]), None)
            for row in worst:
                out.append(f"  {row.get(label, '?')}: {key} = {row[key]}")
    print("\n".join(out))
    return 0


def cmd_list_specs(args):
    for name, desc in SPEC_NAMES.items():
        print(f"{name:30s} {desc}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="smoothlab", description="Run smoothing-estimate experiments.")
    p.add_argument("--version", action="version", version=f"smoothlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment (by name or from an INI config)")
    r.add_argument("target", help=f"experiment name ({', '.join(EXPERIMENTS)}) or config path")
    for key, (section, _) in FIELDS.items():
        if key != "kind":
            r.add_argument(f"--{key}", default=None, help=f"override [{section}] {key}")
    r.set_defaults(func=cmd_run)
    rp = sub.add_parser("report", help="summarise a finished run directory")
    rp.add_argument("rundir")
    rp.set_defaults(func=cmd_report)
    ls = sub.add_parser("list-specs", help="list shipped specifications")
    ls.set_defaults(func=cmd_list_specs)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
