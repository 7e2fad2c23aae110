"""Command-line front end.

Usage::

    geomflux <task> --config FILE [--out-dir DIR] [--threads K] [--seed S] [--timing]
    geomflux verify-all [--config FILE] [--out-dir DIR] [--threads K] [--seed S] [--criteria 1,2,...]

Every run writes ``<out-dir>/<task>.csv`` and ``<out-dir>/<task>.json``.
The output directory is ``--out-dir``, else ``output.dir`` from the config,
else ``$GEOMFLUX_OUT_DIR``, else the current directory.  The exit status is
0 only when every check passes and no computation failed; failed rows keep
their place in the CSV with empty numeric fields and the error code in the
``status`` column.

CSV columns (``d`` is the parameter dimension)
-----------------------------------------------
phase
    sample, arc_length, R_1..R_d, energy, omega_1..omega_d, status
tensor
    point, i, j, g_derivative, g_force_states, v_derivative, v_force_states, status
correlation
    point, t, component, Q_heisenberg, Q_spectral, C_AB, C_BA, residual, status
theorem
    point, component, lhs, rhs, residual, deltaB, lambda, quadrature_lhs, quadrature_error, status
susceptibility
    point, component, limit_difference, integral_Q, theorem_rhs, residual, status
classical (theorem)
    component, lhs, lhs_stderr, rhs, rhs_stderr, numerical_error, residual, tolerance, status
classical (correlation)
    t, component, Q, stderr, status
verify-all
    criterion, check, cases, value, comparison, tolerance, passed

Floats are written in the shortest representation that round-trips.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import classical as cl
from .config import TASKS, RunConfig, load_config, time_grid
from .correlation import gii_from_force_correlation, q_correlation, susceptibility, theorem_check
from .errors import GeomfluxError, SchemaError
from .families import family_from_config
from .geometry import (
    ParameterPath,
    cyclic_berry_phase,
    eigen_at,
    gauge_potentials,
    metric_and_geometric_tensor,
    open_path_phase,
    phase_difference,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
OUT_DIR_ENV = "GEOMFLUX_OUT_DIR"


# --------------------------------------------------------------------- report

@dataclass
class Check:
    name: str
    value: float | None
    tolerance: float
    comparison: str = "<="

    @property
    def passed(self) -> bool:
        if self.value is None or not math.isfinite(self.value):
            return False
        return self.value <= self.tolerance if self.comparison == "<=" else self.value >= self.tolerance

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "comparison": self.comparison, "passed": self.passed}


@dataclass
class RunReport:
    """Everything a run emits; the JSON file mirrors :meth:`as_dict`."""

    task: str
    config: dict
    config_hash: str
    columns: list
    rows: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    wall_time: float | None = None
    version: str = __version__

    @property
    def passed(self) -> bool:
        return not self.errors and all(c.passed for c in self.checks)

    def fail(self, exc: GeomfluxError, **where) -> None:
        self.errors.append({**where, **exc.as_dict()})

    def as_dict(self) -> dict:
        out = {
            "task": self.task,
            "version": self.version,
            "config_hash": self.config_hash,
            "config": self.config,
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
            "errors": self.errors,
            "results": self.results,
        }
        if self.wall_time is not None:
            out["wall_time"] = self.wall_time
        return out


def _plain(x):
    """JSON-safe copy: arrays to lists, non-finite floats to ``None``."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return repr(x) if math.isfinite(x) else ""
    return str(x)


def render_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def render_json(doc) -> str:
    return json.dumps(_plain(doc), indent=2, allow_nan=False) + "\n"


def write_outputs(out_dir, name: str, columns, rows, doc) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / f"{name}.csv", out / f"{name}.json"
    csv_path.write_text(render_csv(columns, rows), encoding="utf-8")
    json_path.write_text(render_json(doc), encoding="utf-8")
    return csv_path, json_path


def _pmap(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _worst(values) -> float | None:
    vals = [v for v in values if v is not None]
    return max(vals) if vals else None


# ---------------------------------------------------------------------- tasks

def build_path(spec: dict) -> ParameterPath:
    kind = spec["kind"]
    if kind == "line":
        return ParameterPath.line(spec["start"], spec["end"], spec["samples"])
    if kind == "latitude-circle":
        return ParameterPath.latitude_circle(spec["theta"], spec["samples"], spec["radius"], spec["phi0"])
    if kind == "meridian-arc":
        return ParameterPath.meridian_arc(spec["theta0"], spec["theta1"], spec["phi"], spec["samples"],
                                          spec["radius"])
    if kind == "ellipse":
        return ParameterPath.ellipse(spec["center"], spec["u"], spec["v"], spec["samples"])
    return ParameterPath.from_points(spec["points"], spec["closed"])


def _task_phase(cfg: RunConfig, rep: RunReport, workers: int) -> None:
    family = family_from_config(cfg.family)
    path = build_path(cfg.path)
    n, d = cfg.level, family.param_dim
    samples, arc = path.samples, path.arc_lengths()
    R0 = samples[0]
    tol = cfg.tolerances

    def local(k):
        try:
            e = eigen_at(family, samples[k], n).energy
            om = gauge_potentials(family, samples[k], R0, n, "AP").Omega
            return [e, *om], "ok", None
        except GeomfluxError as exc:
            return [None] * (d + 1), exc.code, exc

    for k, (vals, status, exc) in enumerate(_pmap(local, range(samples.shape[0]), workers)):
        rep.rows.append([k, arc[k], *samples[k], *vals, status])
        if exc is not None:
            rep.fail(exc, stage="sample", sample=k)

    phases = {}
    for route in cfg.phase["routes"]:
        try:
            res = open_path_phase(family, path, n, route=route, refine=cfg.phase["refine"], workers=workers)
            phases[route] = res
            rep.results.setdefault("open_path", {})[route] = {
                "phase": res.phase, "error_estimate": res.error_estimate, "trapezoid": res.trapezoid}
        except GeomfluxError as exc:
            rep.fail(exc, stage=f"open_path_phase[{route}]")
    routes = cfg.phase["routes"]
    if tol["phase_error"] is not None:
        value = _worst([p.error_estimate for p in phases.values()]) if len(phases) == len(routes) else None
        rep.checks.append(Check("phase_error", value, tol["phase_error"]))
    if len(routes) > 1 and tol["route_agreement"] is not None:
        value = None
        if len(phases) == len(routes):
            ref = phases[routes[0]].phase
            value = max(phase_difference(phases[r].phase, ref) for r in routes[1:])
        rep.checks.append(Check("route_agreement", value, tol["route_agreement"]))
    if cfg.phase["cyclic"]:
        value = None
        try:
            cyc = cyclic_berry_phase(family, path, n, refine=cfg.phase["refine"], workers=workers)
            rep.results["cyclic"] = {
                "phase": cyc.phase, "error_estimate": cyc.error_estimate,
                "overlap_product": cyc.overlap_product, "discrepancy": cyc.discrepancy,
                "pivot_switches": cyc.pivot_switches}
            if routes[0] in phases:
                value = phase_difference(phases[routes[0]].phase, cyc.phase)
        except GeomfluxError as exc:
            rep.fail(exc, stage="cyclic_berry_phase")
        rep.checks.append(Check("cyclic_reduction", value, tol["cyclic_reduction"]))


def _task_tensor(cfg: RunConfig, rep: RunReport, workers: int) -> None:
    family = family_from_config(cfg.family)
    n, d = cfg.level, family.param_dim

    def one(R):
        try:
            a = metric_and_geometric_tensor(family, R, n, "derivative")
            b = metric_and_geometric_tensor(family, R, n, "force-states")
            ff = gii_from_force_correlation(family, R, n)
            return a, b, ff, None
        except GeomfluxError as exc:
            return None, None, None, exc

    routes, ffs = [], []
    for p, (a, b, ff, exc) in enumerate(_pmap(one, cfg.points, workers)):
        if exc is not None:
            rep.fail(exc, stage="point", point=p)
            routes.append(None)
            ffs.append(None)
        else:
            routes.append(float(max(np.max(np.abs(a.g - b.g)), np.max(np.abs(a.v - b.v)))))
            ffs.append(float(np.max(np.abs(ff - np.diag(b.g)))))
            rep.results.setdefault("g_force_force", []).append({"point": p, "diagonal": ff})
        for i in range(d):
            for j in range(d):
                if exc is None:
                    rep.rows.append([p, i, j, a.g[i, j], b.g[i, j], a.v[i, j], b.v[i, j], "ok"])
                else:
                    rep.rows.append([p, i, j, None, None, None, None, exc.code])
    failed = any(r is None for r in routes)
    rep.checks.append(Check("metric_routes", None if failed else _worst(routes), cfg.tolerances["metric_routes"]))
    rep.checks.append(Check("force_force", None if failed else _worst(ffs), cfg.tolerances["force_force"]))


def _per_point(cfg: RunConfig, rep: RunReport, workers: int, compute):
    """Run ``compute(family, R)`` at every configured point, recording failures."""
    family = family_from_config(cfg.family)

    def one(R):
        try:
            return compute(family, R), None
        except GeomfluxError as exc:
            return None, exc

    out = []
    for p, (res, exc) in enumerate(_pmap(one, cfg.points, workers)):
        if exc is not None:
            rep.fail(exc, stage="point", point=p)
        out.append((p, res, exc))
    return family, out


def _task_correlation(cfg: RunConfig, rep: RunReport, workers: int) -> None:
    times = time_grid(cfg.times)

    def compute(family, R):
        h = q_correlation(family, R, cfg.R0, cfg.level, times, "heisenberg")
        s = q_correlation(family, R, cfg.R0, cfg.level, times, "spectral")
        return h, s

    family, results = _per_point(cfg, rep, workers, compute)
    worst = []
    for p, res, exc in results:
        if exc is not None:
            worst.append(None)
            for k, t in enumerate(times):
                for i in range(family.param_dim):
                    rep.rows.append([p, t, i, None, None, None, None, None, exc.code])
            continue
        h, s = res
        resid = np.abs(h.Q - s.Q)
        worst.append(float(np.max(resid)))
        for k, t in enumerate(times):
            for i in range(family.param_dim):
                rep.rows.append([p, t, i, h.Q[i, k], s.Q[i, k], h.C_AB[i, k], h.C_BA[i, k], resid[i, k], "ok"])
    value = None if any(w is None for w in worst) else _worst(worst)
    rep.checks.append(Check("form_agreement", value, cfg.tolerances["form_agreement"]))


def _task_theorem(cfg: RunConfig, rep: RunReport, workers: int) -> None:
    def compute(family, R):
        return theorem_check(family, R, cfg.R0, cfg.level, cfg.s_sequence, quadrature=cfg.quadrature)

    family, results = _per_point(cfg, rep, workers, compute)
    resid, ratio = [], []
    for p, r, exc in results:
        if exc is not None:
            resid.append(None)
            ratio.append(None)
            for i in range(family.param_dim):
                rep.rows.append([p, i] + [None] * 7 + [exc.code])
            continue
        resid.append(float(np.max(r.residuals)))
        if cfg.quadrature:
            err = np.maximum(r.quadrature_error_by_s, 1e-300)
            ratio.append(float(np.max(np.abs(r.quadrature_by_s - r.mode_sum_by_s) / err)))
            rep.results.setdefault("quadrature", []).append({
                "point": p, "s": r.s_values, "quadrature": r.quadrature_by_s,
                "error": r.quadrature_error_by_s, "mode_sum": r.mode_sum_by_s})
        for i in range(family.param_dim):
            q = (r.quadrature_lhs[i], r.quadrature_lhs_error[i]) if cfg.quadrature else (None, None)
            rep.rows.append([p, i, r.lhs[i], r.rhs[i], r.residuals[i], r.deltaB[i], r.lam[i], *q, "ok"])
    failed = any(v is None for v in resid)
    rep.checks.append(Check("residual", None if failed else _worst(resid), cfg.tolerances["residual"]))
    if cfg.quadrature:
        rep.checks.append(Check("quadrature_ratio", None if failed else _worst(ratio),
                                cfg.tolerances["quadrature_ratio"]))


def _task_susceptibility(cfg: RunConfig, rep: RunReport, workers: int) -> None:
    def compute(family, R):
        return susceptibility(family, R, cfg.R0, cfg.level, cfg.z_sequence)

    family, results = _per_point(cfg, rep, workers, compute)
    resid = []
    for p, r, exc in results:
        if exc is not None:
            resid.append(None)
            for i in range(family.param_dim):
                rep.rows.append([p, i, None, None, None, None, exc.code])
            continue
        res = r.residual
        resid.append(float(max(np.max(res), np.max(np.abs(r.extrapolated_difference - r.integral_Q)))))
        rep.results.setdefault("chi", []).append({
            "point": p, "z": r.z_values,
            "chi_AB": {"re": np.real(r.chi_AB), "im": np.imag(r.chi_AB)},
            "chi_BA": {"re": np.real(r.chi_BA), "im": np.imag(r.chi_BA)}})
        for i in range(family.param_dim):
            rep.rows.append([p, i, r.extrapolated_difference[i], r.integral_Q[i], r.theorem_rhs[i], res[i], "ok"])
    failed = any(v is None for v in resid)
    rep.checks.append(Check("residual", None if failed else _worst(resid), cfg.tolerances["residual"]))


def _task_classical(cfg: RunConfig, rep: RunReport, workers: int) -> None:
    c = cfg.classical
    tol = cfg.tolerances
    system = cl.system_from_config(c["system"])
    if c["analysis"] == "theorem":
        rep.columns = ["component", "lhs", "lhs_stderr", "rhs", "rhs_stderr", "numerical_error",
                       "residual", "tolerance", "status"]
        value = None
        try:
            ens_value = c["actions"] if c["ensemble"] == "torus" else c["energy"]
            r = cl.classical_theorem_check(system, c["R"], c["ensemble"], ens_value, c["s_sequence"],
                                           c["lam_c"], count=c["count"], seed=cfg.seed, t_max=c["t_max"],
                                           record_dt=c["record_dt"], dt=c["dt"], drift_tol=tol["drift"],
                                           workers=workers)
            sigma = r.residual / np.maximum(r.combined_error, 1e-300)
            value = float(np.max(sigma))
            for i in range(r.lhs.size):
                rep.rows.append([i, r.lhs[i], r.lhs_stderr[i], r.rhs[i], r.rhs_stderr[i],
                                 r.numerical_error[i], r.residual[i], r.tolerance[i], "ok"])
            rep.results = {"s": r.s_values, "lhs_by_s": r.lhs_by_s, "lam_c": r.lam_c}
            if r.decay is not None:
                rep.results["decay"] = dict(zip(("early", "late", "ratio"), r.decay))
        except GeomfluxError as exc:
            rep.fail(exc, stage="classical_theorem_check")
        rep.checks.append(Check("theorem_sigma", value, tol["theorem_sigma"]))
        return
    rep.columns = ["t", "component", "Q", "stderr", "status"]
    times = time_grid(c["times"])
    drift = ratio = None
    try:
        tr = cl.windowed_correlation(system, c["R"], c["energy"], times, c["count"], cfg.seed, sigma=c["sigma"],
                                     dt=c["dt"], drift_tol=tol["drift"], workers=workers)
        drift = tr.max_drift
        for k, t in enumerate(tr.times):
            for i in range(tr.Q.shape[1]):
                rep.rows.append([t, i, tr.Q[k, i], tr.stderr[k, i], "ok"])
        rep.results = {"max_drift": drift}
        try:
            early, late, ratio = tr.decay()
            rep.results["decay"] = {"early": early, "late": late, "ratio": ratio}
        except ValueError:
            pass
    except GeomfluxError as exc:
        rep.fail(exc, stage="windowed_correlation")
    rep.checks.append(Check("drift", drift, tol["drift"]))
    if tol["decay_ratio_max"] is not None:
        rep.checks.append(Check("decay_ratio_max", ratio, tol["decay_ratio_max"]))
    if tol["decay_ratio_min"] is not None:
        rep.checks.append(Check("decay_ratio_min", ratio, tol["decay_ratio_min"], ">="))


def _columns(cfg: RunConfig) -> list:
    if cfg.task == "phase":
        d = cfg.family["param_dim"]
        return (["sample", "arc_length"] + [f"R_{i + 1}" for i in range(d)] + ["energy"]
                + [f"omega_{i + 1}" for i in range(d)] + ["status"])
    return {
        "tensor": ["point", "i", "j", "g_derivative", "g_force_states", "v_derivative", "v_force_states", "status"],
        "correlation": ["point", "t", "component", "Q_heisenberg", "Q_spectral", "C_AB", "C_BA", "residual",
                        "status"],
        "theorem": ["point", "component", "lhs", "rhs", "residual", "deltaB", "lambda", "quadrature_lhs",
                    "quadrature_error", "status"],
        "susceptibility": ["point", "component", "limit_difference", "integral_Q", "theorem_rhs", "residual",
                           "status"],
        "classical": [],
    }[cfg.task]


_TASKS = {
    "phase": _task_phase,
    "tensor": _task_tensor,
    "correlation": _task_correlation,
    "theorem": _task_theorem,
    "susceptibility": _task_susceptibility,
    "classical": _task_classical,
}


def run(cfg: RunConfig, workers: int = 1, timing: bool = False) -> RunReport:
    """Execute one task.  Library errors are recorded in the report, not raised."""
    t0 = time.perf_counter()
    rep = RunReport(cfg.task, cfg.to_document(), cfg.config_hash(), _columns(cfg))
    _TASKS[cfg.task](cfg, rep, max(1, int(workers)))
    if timing:
        rep.wall_time = time.perf_counter() - t0
    return rep


def resolve_out_dir(cli_value, cfg: RunConfig | None = None) -> Path:
    if cli_value:
        return Path(cli_value)
    if cfg is not None and cfg.output.get("dir"):
        return Path(cfg.output["dir"])
    return Path(os.environ.get(OUT_DIR_ENV) or ".")


# ----------------------------------------------------------------- verify-all

VERIFY_COLUMNS = ["criterion", "check", "cases", "value", "comparison", "tolerance", "passed"]


def verify_all(seed: int = 0, workers: int = 1, criteria=None, out=sys.stdout) -> tuple[list, dict]:
    from .verification import CRITERIA, CheckResult

    rows, errors = [], []
    for k in sorted(criteria or CRITERIA):
        try:
            rows.extend(CRITERIA[k](seed=seed, workers=workers))
        except GeomfluxError as exc:
            errors.append({"criterion": k, **exc.as_dict()})
            rows.append(CheckResult(k, f"criterion {k} raised {exc.code}", 0, math.inf, 0.0))
    for r in rows:
        mark = "PASS" if r.passed else "FAIL"
        print(f"[{mark}] {r.criterion:>2} {r.check}: {r.value:.3e} {r.comparison} {r.tolerance:g} "
              f"({r.cases} cases)", file=out)
    doc = {"task": "verify-all", "version": __version__, "seed": seed,
           "criteria": sorted(criteria or CRITERIA), "passed": all(r.passed for r in rows) and not errors,
           "errors": errors, "results": [r.as_dict() for r in rows]}
    table = [[r.criterion, r.check, r.cases, r.value, r.comparison, r.tolerance, r.passed] for r in rows]
    return table, doc


# ------------------------------------------------------------------------ main

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geomflux", description=__doc__.split("\n")[0])
    ap.add_argument("task", choices=TASKS + ("verify-all",))
    ap.add_argument("--config", help="JSON configuration file (optional for verify-all)")
    ap.add_argument("--out-dir", help=f"output directory (default: ${OUT_DIR_ENV} or .)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads; never changes the output")
    ap.add_argument("--seed", type=int, help="override the configuration seed")
    ap.add_argument("--timing", action="store_true", help="record wall time in the JSON report")
    ap.add_argument("--criteria", help="verify-all only: comma-separated criterion numbers")
    return ap


def _criteria(text):
    if not text:
        return None
    return [int(x) for x in text.split(",") if x.strip()]


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.task == "verify-all":
            seed = 0
            if args.config:
                with open(args.config, encoding="utf-8") as fh:
                    seed = int(json.load(fh).get("seed", 0))
            if args.seed is not None:
                seed = args.seed
            table, doc = verify_all(seed, args.threads, _criteria(args.criteria))
            write_outputs(resolve_out_dir(args.out_dir), "verify-all", VERIFY_COLUMNS, table, doc)
            return EXIT_OK if doc["passed"] else EXIT_FAILED
        if not args.config:
            print(f"error: {args.task} needs --config", file=sys.stderr)
            return EXIT_USAGE
        cfg = load_config(args.config)
        if cfg.task != args.task:
            raise SchemaError([("task", f"config is for task {cfg.task!r} but {args.task!r} was requested")])
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rep = run(cfg, args.threads, args.timing)
    csv_path, json_path = write_outputs(resolve_out_dir(args.out_dir, cfg), cfg.task, rep.columns, rep.rows,
                                        rep.as_dict())
    for c in rep.checks:
        shown = "n/a" if c.value is None else f"{c.value:.3e}"
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {shown} {c.comparison} {c.tolerance:g}")
    seen: dict = {}
    for e in rep.errors:
        seen.setdefault(e["code"], [0, e.get("message", "")])[0] += 1
    for code, (count, message) in seen.items():
        more = f" (and {count - 1} more)" if count > 1 else ""
        print(f"[ERROR] {code}: {message}{more}", file=sys.stderr)
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK if rep.passed else EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
