"""Command line front end: config parsing, dispatch and output writers.

Usage::

    fracenv sweep --config run.json --out results/
    fracenv validate --config run.json --out results/ --seed 7

Exit codes: 0 success, 2 configuration or output error, 3 solver
non-convergence, 4 failed check.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import platform
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
from jsonschema import Draft202012Validator

from . import __version__
from .core import (CATALOG, DatumAuditError, Domain, DirectionSet, ExteriorDatum, FracParams,
                   GridFunction, datum_bounds, make_datum, make_grid)
from .envelope import classical_envelope, hull_oracle_at
from .frac1d import ConvergenceError, LineProblem, solve_dirichlet_1d
from .sweep import SweepConfig, fractional_envelopes, probe_nodes, run_convergence_sweep
from .validate import (BarrierSpec, barrier_lower_check, barrier_upper_check,
                       bounds_and_boundary_check, calibrate_lower_barrier, calibrate_theta,
                       random_segments, s_convexity_check)

log = logging.getLogger("fracenvelope")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_CHECK = 0, 2, 3, 4
S_RANGE = (0.1, 0.995)


class ConfigError(ValueError):
    """Invalid configuration document (or unusable output location)."""


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}


def _obj(props: dict, required=(), default=None) -> dict:
    out = {"type": "object", "properties": props, "additionalProperties": False}
    if required:
        out["required"] = list(required)
    if default is not None:
        out["default"] = default
    return out


_DATUM_PARAMS = {
    "constant": _obj({"level": _num}, required=("level",)),
    "clipped_quadratic": _obj({"weights": _pair, "center": _pair, "cap": _num, "shift": _num}),
    "angular_cosine": _obj({"k": {"type": "integer", "minimum": 1}, "amplitude": _num,
                            "phase": _num, "offset": _num, "center": _pair}),
    "smoothed_step": _obj({"axis": _pair, "position": _num, "width": _pos,
                           "low": _num, "high": _num}),
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "fracenvelope run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["domain", "datum", "fractional"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1, "default": 0},
        "domain": _obj({
            "kind": {"enum": ["disk", "ellipse", "interval"]},
            "center": dict(_pair, default=[0.0, 0.0]),
            "axes": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2,
                     "default": [1.0, 1.0]},
        }, required=("kind",)),
        "datum": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": sorted(CATALOG)},
                "params": {"type": "object", "default": {}},
                "bounds": _pair,
            },
            "allOf": [{"if": {"properties": {"kind": {"const": k}}},
                       "then": {"properties": {"params": p}}} for k, p in _DATUM_PARAMS.items()],
        },
        "grid": _obj({
            "h": dict(_pos, default=1.0 / 32),
            "padding": {"type": "integer", "minimum": 1, "default": 2},
        }, default={}),
        "directions": _obj({
            "width": {"type": "integer", "minimum": 1, "default": 3},
        }, default={}),
        "fractional": _obj({
            "s": {"type": "array", "minItems": 1,
                  "items": {"type": "number", "minimum": S_RANGE[0], "maximum": S_RANGE[1]}},
            "radius_factor": {"type": "number", "exclusiveMinimum": 1, "default": 8.0},
            "k_policy": {"enum": ["ceil_radius"], "default": "ceil_radius"},
            "tol_fp": _pos,
            "tol_res": _pos,
            "max_iter": {"type": "integer", "minimum": 1, "default": 200000},
            "line_nodes": {"type": "integer", "minimum": 4, "default": 256},
        }, required=("s",)),
        "sweep": _obj({
            "thresholds": {"type": "array", "items": _num, "default": [0.6, 0.7, 0.8, 0.9]},
            "c_f": dict(_pos, default=0.5),
            "trend_factor": dict(_pos, default=1e-3),
            "probes": {"type": "integer", "minimum": 1, "default": 25},
            "oracle_samples": {"type": "integer", "minimum": 3},
        }, default={}),
        "validate": _obj({
            "segments": {"type": "integer", "minimum": 1, "default": 50},
            "min_length": dict(_pos, default=0.1),
            "tol_factor": dict(_pos, default=1e-5),
            "c_b": dict(_pos, default=2.0),
            "upper": {"oneOf": [{"type": "null"}, _obj({
                "anchors": {"type": "integer", "minimum": 1, "default": 10},
                "eta": dict(_pos, default=0.2),
                "x_hat": _pair,
                "nodes": {"type": "integer", "minimum": 4, "default": 256},
            })], "default": {}},
            "lower": {"oneOf": [{"type": "null"}, _obj({
                "x0": _pair,
                "eta": dict(_pos, default=0.3),
                "slope": _pos,
                "eps": {"type": "number", "minimum": 0},
                "kappa": _pos,
                "calibrate": {"type": "boolean", "default": False},
            }, required=("x0",))], "default": None},
        }, default={}),
        "output": _obj({
            "directory": {"type": "string", "minLength": 1, "default": "out"},
            "formats": {"type": "array", "items": {"enum": ["grid", "csv"]},
                        "uniqueItems": True, "default": ["grid", "csv"]},
        }, default={}),
    },
}


def _fill_defaults(schema: dict, doc, path: str, applied: list[str]) -> None:
    if not isinstance(doc, dict):
        return
    for key, sub in schema.get("properties", {}).items():
        where = f"{path}.{key}" if path else key
        if key not in doc and "default" in sub:
            doc[key] = copy.deepcopy(sub["default"])
            applied.append(where)
        if key in doc:
            target = sub
            for alt in sub.get("oneOf", []):
                if alt.get("type") == "object":
                    target = alt
            _fill_defaults(target, doc[key], where, applied)


def _relaxed(schema):
    if isinstance(schema, dict):
        return {k: _relaxed(v) for k, v in schema.items() if k != "additionalProperties"}
    if isinstance(schema, list):
        return [_relaxed(v) for v in schema]
    return schema


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _describe(err) -> str:
    where = _path(err.absolute_path)
    if err.validator == "additionalProperties":
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(k for k in err.instance if k not in allowed)
        keys = ", ".join(f"{where}.{k}" if where else k for k in extra)
        return f"unknown key {keys}"
    if err.validator == "oneOf" and err.context:
        best = max(err.context, key=lambda e: len(e.absolute_path))
        return _describe(best)
    return f"{where or '<root>'}: {err.message}"


@dataclass
class Config:
    """Validated configuration with defaults filled in."""

    doc: dict
    defaults_applied: list[str]
    domain: Domain
    datum: ExteriorDatum

    @property
    def s_values(self) -> tuple[float, ...]:
        return tuple(float(s) for s in self.doc["fractional"]["s"])

    @property
    def h(self) -> float:
        return float(self.doc["grid"]["h"])

    @property
    def width(self) -> int:
        return int(self.doc["directions"]["width"])

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def output_dir(self) -> str:
        return self.doc["output"]["directory"]

    @property
    def formats(self) -> list[str]:
        return list(self.doc["output"]["formats"])

    @property
    def tol(self) -> float:
        """Audit tolerance ``tol_factor (M - m + 1)``."""
        return self.doc["validate"]["tol_factor"] * (self.datum.upper - self.datum.lower + 1.0)

    def grid(self) -> GridFunction:
        return make_grid(self.domain, self.h, self.doc["grid"]["padding"])

    def directions(self) -> DirectionSet:
        return DirectionSet.build(self.width, self.h)

    def params(self, s: float) -> FracParams:
        f = self.doc["fractional"]
        kw = {k: f[k] for k in ("tol_fp", "tol_res") if k in f}
        return FracParams.for_domain(s, self.domain, self.datum, f["radius_factor"],
                                     max_iter=f["max_iter"], **kw)

    def sweep_config(self) -> SweepConfig:
        f, sw = self.doc["fractional"], self.doc["sweep"]
        return SweepConfig(self.domain, self.datum, self.h, self.width, self.s_values,
                           radius_factor=f["radius_factor"], tol_fp=f.get("tol_fp"),
                           tol_res=f.get("tol_res"), max_iter=f["max_iter"],
                           padding=self.doc["grid"]["padding"],
                           thresholds=tuple(sw["thresholds"]), c_f=sw["c_f"],
                           trend_factor=sw["trend_factor"], probes=sw["probes"],
                           oracle_samples=sw.get("oracle_samples"))


def parse_config(document: str, strict: bool = True) -> Config:
    """Parse and validate a JSON configuration document.

    In strict mode unknown keys are errors; otherwise they are ignored.
    Defaults are filled in and the filled paths recorded.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    applied: list[str] = []
    _fill_defaults(SCHEMA, doc, "", applied)
    validator = Draft202012Validator(SCHEMA if strict else _relaxed(SCHEMA))
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)),
                                                               e.validator))
    if errors:
        raise ConfigError(_describe(errors[0]))

    s = doc["fractional"]["s"]
    if any(b <= a for a, b in zip(s, s[1:])):
        raise ConfigError("fractional.s must be ascending")
    try:
        dom = doc["domain"]
        domain = Domain(dom["kind"], tuple(dom["center"]), tuple(dom["axes"]))
    except ValueError as exc:
        raise ConfigError(f"domain: {exc}") from None
    dat = doc["datum"]
    try:
        datum = make_datum(dat["kind"], dat["params"], dat.get("bounds"))
        datum_bounds(datum, domain)
    except (ValueError, TypeError) as exc:
        kind = "datum" if not isinstance(exc, DatumAuditError) else "datum.bounds"
        raise ConfigError(f"{kind}: {exc}") from None
    for key in ("tol_fp", "tol_res"):
        if key not in doc["fractional"]:
            applied.append(f"fractional.{key}")
    return Config(doc, sorted(applied), domain, datum)


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return "" if x is None else str(x)


@dataclass
class RunOutputs:
    """Everything a subcommand wants written, keyed by file stem."""

    grids: dict[str, tuple[GridFunction, float | None]] = field(default_factory=dict)
    tables: dict[str, tuple[list[str], list[tuple]]] = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)


def write_grid(path, grid: GridFunction, s: float | None = None) -> None:
    """Text header (nx, ny, origin, h, s), then row-major values with 17 digits."""
    nx, ny = grid.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"nx {nx}\nny {ny}\n")
        fh.write(f"origin {_fmt(grid.origin[0])} {_fmt(grid.origin[1])}\n")
        fh.write(f"h {_fmt(grid.h)}\n")
        fh.write(f"s {'none' if s is None else _fmt(s)}\n")
        for v in grid.values.ravel(order="C"):
            fh.write("%.17g\n" % v)


def read_grid(path) -> tuple[dict, np.ndarray]:
    """Inverse of :func:`write_grid`; returns ``(header, values)``."""
    with open(path, encoding="utf-8") as fh:
        head = [fh.readline().split() for _ in range(5)]
        values = np.array([float(line) for line in fh if line.strip()])
    nx, ny = int(head[0][1]), int(head[1][1])
    header = {"nx": nx, "ny": ny, "origin": (float(head[2][1]), float(head[2][2])),
              "h": float(head[3][1]), "s": None if head[4][1] == "none" else float(head[4][1])}
    return header, values.reshape(nx, ny)


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outputs(results: RunOutputs, directory, formats=("grid", "csv"),
                  config: Config | None = None, command: str | None = None) -> dict:
    """Write grids, tables, report and manifest; returns the manifest.

    Files are staged in a hidden directory and moved into place only once
    all of them were written; on failure nothing partial is left behind.
    Wall-clock timings go to a separate ``timings.json`` so that every
    other file is reproducible bit for bit.
    """
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        stage = Path(tempfile.mkdtemp(prefix=".partial-", dir=out))
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    try:
        names = []
        if "grid" in formats:
            for name, (grid, s) in sorted(results.grids.items()):
                write_grid(stage / f"{name}.txt", grid, s)
                names.append(f"{name}.txt")
        if "csv" in formats:
            for name, (header, rows) in sorted(results.tables.items()):
                write_csv(stage / f"{name}.csv", header, rows)
                names.append(f"{name}.csv")
        if results.report:
            (stage / "report.json").write_text(
                json.dumps(results.report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            names.append("report.json")
        manifest = {
            "command": command,
            "config": None if config is None else config.doc,
            "defaults_applied": [] if config is None else config.defaults_applied,
            "versions": {"fracenvelope": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "files": {n: _sha256(stage / n) for n in sorted(names)},
            "failures": results.failures,
            "timings_file": "timings.json" if results.timings else None,
        }
        (stage / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        names.append("manifest.json")
        if results.timings:
            (stage / "timings.json").write_text(
                json.dumps(results.timings, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            names.append("timings.json")
        for n in names:
            os.replace(stage / n, out / n)
    except OSError as exc:
        raise ConfigError(f"writing outputs to {out} failed: {exc}") from None
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return manifest


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _tag(s: float) -> str:
    return f"s={s:g}"


def cmd_solve1d(cfg: Config, args) -> RunOutputs:
    """Dirichlet problem on the interval domain with the datum as exterior data."""
    d, g = cfg.domain, cfg.datum
    if not d.is_interval:
        raise ConfigError("domain.kind: solve1d needs an interval domain")
    lo, hi = d.center[0] - d.axes[0], d.center[0] + d.axes[0]
    y = d.center[1]
    nodes = cfg.doc["fractional"]["line_nodes"]
    res = RunOutputs()

    def on_line(t):
        t = np.asarray(t, dtype=float)
        return np.stack([t, np.full_like(t, y)], axis=-1)

    rows = []
    for s in cfg.s_values:
        prob = LineProblem.on_interval(
            lo, hi, nodes, lambda t: g(on_line(t)),
            lambda t: g.far_value(on_line(t), np.array([-1.0, 0.0])),
            lambda t: g.far_value(on_line(t), np.array([1.0, 0.0])))
        t0 = time.perf_counter()
        v = solve_dirichlet_1d(prob, cfg.params(s))
        res.timings[f"solve1d_{_tag(s)}"] = time.perf_counter() - t0
        t = prob.coords(np.arange(prob.n))
        rows.extend((s, ti, vi) for ti, vi in zip(t, v))
        full = np.concatenate([[g(on_line(lo))], v, [g(on_line(hi))]])
        grid = GridFunction((lo, y), prob.spacing, full[:, None],
                            np.r_[False, np.ones(prob.n, bool), False][:, None])
        res.grids[f"line_{_tag(s)}"] = (grid, s)
    res.tables["solve1d"] = (["s", "t", "v"], rows)
    return res


def _envelopes(cfg: Config, workers: int):
    return fractional_envelopes(cfg.sweep_config(), workers)


def cmd_envelope(cfg: Config, args) -> RunOutputs:
    res = RunOutputs()
    rows = []
    for s, (env, dt) in _envelopes(cfg, args.workers).items():
        res.grids[f"envelope_{_tag(s)}"] = (env.solution, s)
        res.timings[f"envelope_{_tag(s)}"] = dt
        rows.append((s, env.iterations, env.final_update, env.report.max_abs_min,
                     env.report.most_negative))
    res.tables["residuals"] = (["s", "iterations", "final_update", "max_abs_min_residual",
                                "most_negative_directional"], rows)
    return res


def cmd_envelope_classical(cfg: Config, args) -> RunOutputs:
    d, g = cfg.domain, cfg.datum
    grid, Z = cfg.grid(), cfg.directions()
    res = RunOutputs()
    t0 = time.perf_counter()
    env = classical_envelope(d, g, grid, Z)
    res.timings["classical"] = time.perf_counter() - t0
    res.grids["classical"] = (env.solution, None)
    sc = cfg.sweep_config()
    probes = probe_nodes(d, grid, sc.probes)
    pts = grid.interior_nodes()[probes]
    t0 = time.perf_counter()
    oracle = hull_oracle_at(d, g, pts, sc.oracle_samples or int(round(4.0 / cfg.h)))
    res.timings["hull_oracle"] = time.perf_counter() - t0
    vals = env.interior[probes]
    res.tables["oracle"] = (["x", "y", "classical", "hull_oracle", "gap"],
                            [(p[0], p[1], a, b, abs(a - b)) for p, a, b in zip(pts, vals, oracle)])
    gap = float(np.max(np.abs(vals - oracle)))
    res.report = {"iterations": env.iterations, "oracle_gap": gap, "floor": sc.floor}
    if gap > sc.floor:
        res.failures.append(f"classical vs hull oracle gap {gap:.3e} > floor {sc.floor:.3e}")
    return res


def _upper_specs(cfg: Config) -> list[BarrierSpec]:
    up = cfg.doc["validate"]["upper"]
    if up is None or cfg.domain.is_interval:
        return []
    x_hat = tuple(up.get("x_hat", cfg.domain.center))
    specs = []
    for k in range(up["anchors"]):
        x0 = cfg.domain.boundary_point(2.0 * math.pi * k / up["anchors"])
        theta = calibrate_theta(cfg.datum, cfg.domain, x0, x_hat, up["eta"])
        specs.append(BarrierSpec("upper", tuple(map(float, x0)), up["eta"], x_hat=x_hat,
                                 theta=theta))
    return specs


def _lower_spec(cfg: Config, grid, Z) -> BarrierSpec | None:
    lo = cfg.doc["validate"]["lower"]
    if lo is None:
        return None
    if lo["calibrate"]:
        spec = calibrate_lower_barrier(cfg.datum, cfg.domain, lo["x0"], lo["eta"],
                                       [cfg.params(s) for s in cfg.s_values], grid, Z)
        if spec is None:
            raise ConfigError("validate.lower: calibration found no admissible barrier")
        return spec
    missing = [k for k in ("slope", "eps", "kappa") if k not in lo]
    if missing:
        raise ConfigError(f"validate.lower: missing {', '.join(missing)} (or set calibrate)")
    return BarrierSpec("lower", tuple(lo["x0"]), lo["eta"], slope=lo["slope"], eps=lo["eps"],
                       kappa=lo["kappa"])


def cmd_validate(cfg: Config, args) -> RunOutputs:
    d, g = cfg.domain, cfg.datum
    v = cfg.doc["validate"]
    grid, Z = cfg.grid(), cfg.directions()
    tol = cfg.tol
    res = RunOutputs()
    envs = _envelopes(cfg, args.workers)
    segments = random_segments(d, v["segments"], cfg.seed, v["min_length"])
    uppers = _upper_specs(cfg)
    lower = _lower_spec(cfg, grid, Z)
    nodes_up = (v["upper"] or {}).get("nodes", 256)

    seg_rows, bound_rows, up_rows, low_rows = [], [], [], []
    for s, (env, dt) in envs.items():
        params = cfg.params(s)
        res.timings[f"envelope_{_tag(s)}"] = dt
        t0 = time.perf_counter()
        rep = s_convexity_check(env.solution, g, d, params, segments, tol, args.workers)
        res.timings[f"s_convexity_{_tag(s)}"] = time.perf_counter() - t0
        for i, (seg, viol) in enumerate(zip(rep.segments, rep.violations)):
            seg_rows.append((s, i, *seg[0], *seg[1], viol))
        if not rep.passed:
            res.failures.append(f"{_tag(s)}: s-convexity violation {rep.max_violation:.3e}")

        b = bounds_and_boundary_check(env, g, d, tol, v["c_b"])
        bound_rows.append((s, b.below, b.above, b.boundary_deviation, b.boundary_threshold,
                           b.passed))
        if not b.passed:
            res.failures.append(f"{_tag(s)}: bounds/boundary check failed")

        for k, spec in enumerate(uppers):
            u = barrier_upper_check(env, spec, g, d, params, tol, nodes_up)
            up_rows.append((s, k, spec.x0[0], spec.x0[1], spec.theta, u.max_violation,
                            u.radius, u.limit_distance))
            if not u.passed:
                res.failures.append(f"{_tag(s)}: upper barrier {k} violated by "
                                    f"{u.max_violation:.3e}")
        if lower is not None:
            lw = barrier_lower_check(env, lower, g, d, [params], grid, Z, tol)
            low_rows.append((s, lw.strip_margin, lw.operator_min[s], lw.sandwich_violation,
                             lw.passed))
            if not lw.passed:
                res.failures.append(f"{_tag(s)}: lower barrier failed (strip {lw.strip_margin:.3e},"
                                    f" operator {lw.operator_min[s]:.3e}, sandwich "
                                    f"{lw.sandwich_violation:.3e})")
        res.grids[f"envelope_{_tag(s)}"] = (env.solution, s)

    res.tables["segments"] = (["s", "segment", "x0", "x1", "y0", "y1", "violation"], seg_rows)
    res.tables["bounds"] = (["s", "below", "above", "boundary_deviation", "boundary_threshold",
                             "passed"], bound_rows)
    if up_rows:
        res.tables["barrier_upper"] = (["s", "anchor", "x0", "x1", "theta", "max_violation",
                                        "radius", "limit_distance"], up_rows)
    if low_rows:
        res.tables["barrier_lower"] = (["s", "strip_margin", "operator_min",
                                        "sandwich_violation", "passed"], low_rows)
    res.report = {"tol": tol, "segments_seed": cfg.seed}
    if lower is not None:
        res.report["lower_barrier"] = {"x0": list(lower.x0), "eta": lower.eta,
                                       "slope": lower.slope, "eps": lower.eps,
                                       "kappa": lower.kappa}
    return res


def cmd_sweep(cfg: Config, args) -> RunOutputs:
    sweep = run_convergence_sweep(cfg.sweep_config(), args.workers, check=False)
    res = RunOutputs(timings=dict(sweep.timings))
    res.tables["distance"] = (["s", "sup_distance", "mean_distance", "iterations"],
                              sweep.distance_rows())
    res.tables["gap"] = (["threshold", "count", "spread", "note"],
                         [(r.threshold, r.count, r.spread, r.note) for r in sweep.gap])
    pts = sweep.classical.solution.interior_nodes()[sweep.probe_nodes]
    res.tables["oracle"] = (["x", "y", "classical", "hull_oracle", "gap"],
                            [(p[0], p[1], a, b, abs(a - b)) for p, a, b in
                             zip(pts, sweep.probe_classical, sweep.probe_oracle)])
    res.grids["classical"] = (sweep.classical.solution, None)
    for s, env in sweep.envelopes.items():
        res.grids[f"envelope_{_tag(s)}"] = (env.solution, s)
    res.report = {"floor": sweep.floor, "trend_slack": sweep.trend_slack,
                  "oracle_gap": sweep.oracle_gap, "improvement": sweep.improvement,
                  "trend_ok": sweep.trend_ok, "floor_ok": sweep.floor_ok,
                  "oracle_ok": sweep.oracle_ok, "gap_nonincreasing": sweep.gap_ok}
    res.failures.extend(sweep.failures())
    return res


COMMANDS = {
    "solve1d": cmd_solve1d,
    "envelope": cmd_envelope,
    "envelope-classical": cmd_envelope_classical,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="JSON config file")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    common.add_argument("--workers", type=int, default=1, metavar="N",
                        help="process count for independent runs (default 1)")
    common.add_argument("--seed", type=int, metavar="U64", help="override the config seed")
    common.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True,
                        help="reject unknown config keys (default on)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="fracenv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve1d": "1-D Dirichlet problem on an interval domain",
        "envelope": "fractional envelope for every s",
        "envelope-classical": "classical convex envelope plus hull-oracle cross-check",
        "validate": "s-convexity, bounds and barrier audits",
        "sweep": "s -> 1 convergence sweep against the classical envelope",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            patched = json.loads(text)
            if isinstance(patched, dict):
                patched["seed"] = args.seed
                text = json.dumps(patched)
        cfg = parse_config(text, strict=args.strict)
        results = COMMANDS[args.command](cfg, args)
        # --out is a location, not part of the experiment: keep it out of the echo
        write_outputs(results, args.out or cfg.output_dir, cfg.formats, cfg, args.command)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"config error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    for msg in results.failures:
        print(f"check failed: {msg}", file=sys.stderr)
    return EXIT_CHECK if results.failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
