"""Run configuration: schema validation, defaults and serialisation.

A configuration is a single JSON document.  Complex matrices are nested
arrays of ``[re, im]`` pairs.  :func:`validate_config` collects every
problem it finds (as ``(path, reason)`` pairs) before raising one
:class:`~geomflux.errors.SchemaError`; unknown keys get a nearest-key
suggestion.

Defaults
--------
``family.hbar = 1``, ``path.samples = 512``, ``level = 0``, ``seed = 0``,
``s_sequence = z_sequence = [0.2, 0.1, 0.05]`` and
``times = {"start": 0, "stop": 50, "count": 101}``.  Tolerances default to
the values in :data:`DEFAULT_TOLERANCES`.
"""
from __future__ import annotations

import copy
import difflib
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import SchemaError

TASKS = ("phase", "tensor", "correlation", "theorem", "susceptibility", "classical")
FAMILY_KINDS = ("builtin-spin", "builtin-avoided-crossing", "matrix-polynomial", "seeded-random-polynomial")
PATH_KINDS = ("line", "latitude-circle", "meridian-arc", "ellipse", "points")
PHASE_ROUTES = ("AP", "fluctuation", "sum-over-states", "metric")
REFINE_MODES = ("auto", "coarsen", "midpoint", "none")
SYSTEM_KINDS = ("builtin-harmonic", "builtin-quartic-coupled")
ANALYSES = ("theorem", "correlation")
ENSEMBLES = ("torus", "shell")

DEFAULT_SAMPLES = 512
DEFAULT_SEQUENCE = [0.2, 0.1, 0.05]
DEFAULT_TIMES = {"start": 0.0, "stop": 50.0, "count": 101}
HERMITIAN_ATOL = 1e-12

# ``None`` disables an optional check.
DEFAULT_TOLERANCES = {
    "phase": {"phase_error": None, "cyclic_reduction": 1e-6, "route_agreement": 1e-7},
    "tensor": {"metric_routes": 1e-7, "force_force": 1e-8},
    "correlation": {"form_agreement": 1e-10},
    "theorem": {"residual": 1e-8, "quadrature_ratio": 1.0},
    "susceptibility": {"residual": 1e-8},
    "classical": {"theorem_sigma": 3.0, "drift": 1e-6, "decay_ratio_max": None, "decay_ratio_min": None},
}

_COMMON = ("task", "seed", "level", "family", "tolerances", "output")
TASK_KEYS = {
    "phase": _COMMON + ("path", "phase"),
    "tensor": _COMMON + ("points",),
    "correlation": _COMMON + ("points", "R0", "times"),
    "theorem": _COMMON + ("points", "R0", "s_sequence", "quadrature"),
    "susceptibility": _COMMON + ("points", "R0", "z_sequence"),
    "classical": ("task", "seed", "classical", "tolerances", "output"),
}
_ALL_TOP = sorted({k for keys in TASK_KEYS.values() for k in keys})

FAMILY_KEYS = {
    "builtin-spin": ("kind", "hbar", "dim", "param_dim", "spin"),
    "builtin-avoided-crossing": ("kind", "hbar", "dim", "param_dim", "delta"),
    "matrix-polynomial": ("kind", "hbar", "dim", "param_dim", "terms"),
    "seeded-random-polynomial": ("kind", "hbar", "dim", "param_dim", "seed", "degree"),
}
PATH_KEYS = {
    "line": ("kind", "samples", "start", "end"),
    "latitude-circle": ("kind", "samples", "theta", "radius", "phi0"),
    "meridian-arc": ("kind", "samples", "theta0", "theta1", "phi", "radius"),
    "ellipse": ("kind", "samples", "center", "u", "v"),
    "points": ("kind", "points", "closed"),
}
SYSTEM_KEYS = {
    "builtin-harmonic": ("kind", "omega", "mass", "hbar"),
    "builtin-quartic-coupled": ("kind", "beta", "mass", "hbar"),
}
CLASSICAL_KEYS = {
    "theorem": ("system", "R", "analysis", "ensemble", "energy", "actions", "count", "s_sequence",
                "lam_c", "t_max", "record_dt", "dt"),
    "correlation": ("system", "R", "analysis", "energy", "count", "sigma", "times", "dt"),
}


class _Errors(list):
    def add(self, path: str, reason: str) -> None:
        self.append((path, reason))


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _check_keys(block: dict, allowed, path: str, errs: _Errors, context: str, universe=()) -> None:
    for key in block:
        if key in allowed:
            continue
        if key in universe:
            errs.add(_join(path, key), f"not used by {context}")
            continue
        hint = difflib.get_close_matches(str(key), list(allowed), n=1, cutoff=0.6)
        reason = "unknown key"
        if hint:
            reason += f"; did you mean {hint[0]!r}?"
        errs.add(_join(path, key), reason)


# -------------------------------------------------------------- value checks

def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _number(block: dict, key: str, path: str, errs: _Errors, default=None, required=False,
            positive=False, nonneg=False, nullable=False):
    p = _join(path, key)
    if key not in block or (block[key] is None and not nullable):
        if required:
            errs.add(p, "required")
        return default
    v = block[key]
    if v is None:
        return None
    if not _is_number(v):
        errs.add(p, f"expected a finite number, got {v!r}")
        return default
    if positive and v <= 0:
        errs.add(p, f"must be positive, got {v!r}")
    if nonneg and v < 0:
        errs.add(p, f"must be non-negative, got {v!r}")
    return float(v)


def _integer(block: dict, key: str, path: str, errs: _Errors, default=None, required=False, minimum=None):
    p = _join(path, key)
    if key not in block:
        if required:
            errs.add(p, "required")
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, int):
        errs.add(p, f"expected an integer, got {v!r}")
        return default
    if minimum is not None and v < minimum:
        errs.add(p, f"must be >= {minimum}, got {v}")
    return int(v)


def _choice(block: dict, key: str, options, path: str, errs: _Errors, default=None, required=False):
    p = _join(path, key)
    if key not in block:
        if required:
            errs.add(p, f"required; one of {list(options)}")
        return default
    v = block[key]
    if v not in options:
        hint = difflib.get_close_matches(str(v), list(options), n=1, cutoff=0.6)
        reason = f"expected one of {list(options)}, got {v!r}"
        if hint:
            reason += f"; did you mean {hint[0]!r}?"
        errs.add(p, reason)
        return default
    return v


def _vector(value, path: str, errs: _Errors, length: int | None = None, other: str | None = None):
    if not isinstance(value, list) or not value or not all(_is_number(x) for x in value):
        errs.add(path, "expected a non-empty list of finite numbers")
        return None
    if length is not None and len(value) != length:
        errs.add(path, f"has {len(value)} coordinates but {other} is {length}")
    return [float(x) for x in value]


def _sequence(block: dict, key: str, path: str, errs: _Errors, default):
    p = _join(path, key)
    if key not in block:
        return list(default)
    v = _vector(block[key], p, errs)
    if v is None:
        return list(default)
    if any(x <= 0 for x in v):
        errs.add(p, "values must be positive")
    if len(set(v)) != len(v):
        errs.add(p, "values must be distinct")
    return v


def _times(block: dict, key: str, path: str, errs: _Errors, default: dict):
    p = _join(path, key)
    if key not in block:
        return dict(default)
    v = block[key]
    if isinstance(v, list):
        out = _vector(v, p, errs)
        return dict(default) if out is None else out
    if not isinstance(v, dict):
        errs.add(p, "expected a list of times or an object with start, stop and count")
        return dict(default)
    _check_keys(v, ("start", "stop", "count"), p, errs, "a time grid")
    start = _number(v, "start", p, errs, default["start"])
    stop = _number(v, "stop", p, errs, default["stop"])
    count = _integer(v, "count", p, errs, default["count"], minimum=1)
    if start is not None and stop is not None and stop < start:
        errs.add(_join(p, "stop"), "must not be smaller than start")
    return {"start": start, "stop": stop, "count": count}


def time_grid(spec) -> np.ndarray:
    """Expand a resolved ``times`` entry into an array."""
    if isinstance(spec, dict):
        return np.linspace(spec["start"], spec["stop"], spec["count"])
    return np.asarray(spec, dtype=float)


# --------------------------------------------------------------------- blocks

def _complex_matrix(value, dim, path: str, errs: _Errors):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        errs.add(path, "expected a nested array of [re, im] pairs")
        return None
    if arr.shape != (dim, dim, 2):
        errs.add(path, f"expected shape ({dim}, {dim}, 2) of [re, im] pairs, got {arr.shape}")
        return None
    if not np.all(np.isfinite(arr)):
        errs.add(path, "entries must be finite")
        return None
    M = arr[..., 0] + 1j * arr[..., 1]
    defect = float(np.max(np.abs(M - M.conj().T)))
    if defect > HERMITIAN_ATOL * max(1.0, float(np.max(np.abs(M)))):
        errs.add(path, f"matrix is not Hermitian (defect {defect:.3e})")
    return arr.tolist()


def _family(block, errs: _Errors) -> dict | None:
    path = "family"
    if not isinstance(block, dict):
        errs.add(path, "expected an object")
        return None
    kind = _choice(block, "kind", FAMILY_KINDS, path, errs, required=True)
    if kind is None:
        return None
    _check_keys(block, FAMILY_KEYS[kind], path, errs, f"family kind {kind!r}",
                universe={k for keys in FAMILY_KEYS.values() for k in keys})
    out = {"kind": kind, "hbar": _number(block, "hbar", path, errs, 1.0, positive=True)}
    if kind == "builtin-spin":
        spin = _number(block, "spin", path, errs, 0.5, positive=True)
        if spin is not None and abs(2 * spin - round(2 * spin)) > 1e-12:
            errs.add(_join(path, "spin"), f"must be a positive half-integer, got {spin}")
            spin = 0.5
        out["spin"] = spin
        fixed = {"dim": int(round(2 * spin)) + 1, "param_dim": 3}
    elif kind == "builtin-avoided-crossing":
        out["delta"] = _number(block, "delta", path, errs, 0.1)
        fixed = {"dim": 2, "param_dim": 2}
    else:
        fixed = None
    if fixed is not None:
        for key, val in fixed.items():
            got = _integer(block, key, path, errs, val)
            if got != val:
                errs.add(_join(path, key), f"{kind} has {key} {val}, got {got}")
        out.update(fixed)
        return out
    dim = _integer(block, "dim", path, errs, required=True, minimum=1)
    pdim = _integer(block, "param_dim", path, errs, required=True, minimum=1)
    out.update(dim=dim, param_dim=pdim)
    if kind == "seeded-random-polynomial":
        out["seed"] = _integer(block, "seed", path, errs, 0, minimum=0)
        out["degree"] = _integer(block, "degree", path, errs, 2, minimum=0)
        return out
    terms = block.get("terms")
    if not isinstance(terms, list) or not terms:
        errs.add(_join(path, "terms"), "required; a non-empty list of {powers, matrix} objects")
        return out
    resolved = []
    for k, term in enumerate(terms):
        tp = _join(_join(path, "terms"), k)
        if not isinstance(term, dict):
            errs.add(tp, "expected an object with powers and matrix")
            continue
        _check_keys(term, ("powers", "matrix"), tp, errs, "a polynomial term")
        powers = term.get("powers")
        if (not isinstance(powers, list) or any(isinstance(x, bool) or not isinstance(x, int) or x < 0
                                                for x in powers)):
            errs.add(_join(tp, "powers"), "expected a list of non-negative integers")
            powers = None
        elif pdim is not None and len(powers) != pdim:
            errs.add(_join(tp, "powers"), f"has {len(powers)} entries but family.param_dim is {pdim}")
        matrix = None
        if "matrix" not in term:
            errs.add(_join(tp, "matrix"), "required")
        elif dim is not None:
            matrix = _complex_matrix(term["matrix"], dim, _join(tp, "matrix"), errs)
        resolved.append({"powers": powers, "matrix": matrix})
    out["terms"] = resolved
    return out


def _path(block, pdim, errs: _Errors) -> dict | None:
    path = "path"
    if not isinstance(block, dict):
        errs.add(path, "required; an object describing the parameter path")
        return None
    kind = _choice(block, "kind", PATH_KINDS, path, errs, required=True)
    if kind is None:
        return None
    _check_keys(block, PATH_KEYS[kind], path, errs, f"path kind {kind!r}",
                universe={k for keys in PATH_KEYS.values() for k in keys})
    out = {"kind": kind}
    if kind != "points":
        out["samples"] = _integer(block, "samples", path, errs, DEFAULT_SAMPLES, minimum=2)
    fam = "family.param_dim"
    if kind == "line":
        for key in ("start", "end"):
            if key not in block:
                errs.add(_join(path, key), "required")
            else:
                out[key] = _vector(block[key], _join(path, key), errs, pdim, fam)
    elif kind in ("latitude-circle", "meridian-arc"):
        if pdim is not None and pdim != 3:
            errs.add(_join(path, "kind"), f"{kind} lives in 3 parameters but {fam} is {pdim}")
        if kind == "latitude-circle":
            out["theta"] = _number(block, "theta", path, errs, required=True)
            out["radius"] = _number(block, "radius", path, errs, 1.0, positive=True)
            out["phi0"] = _number(block, "phi0", path, errs, 0.0)
        else:
            out["theta0"] = _number(block, "theta0", path, errs, required=True)
            out["theta1"] = _number(block, "theta1", path, errs, required=True)
            out["phi"] = _number(block, "phi", path, errs, 0.0)
            out["radius"] = _number(block, "radius", path, errs, 1.0, positive=True)
    elif kind == "ellipse":
        for key in ("center", "u", "v"):
            if key not in block:
                errs.add(_join(path, key), "required")
            else:
                out[key] = _vector(block[key], _join(path, key), errs, pdim, fam)
    else:
        pts = block.get("points")
        if not isinstance(pts, list) or len(pts) < 2:
            errs.add(_join(path, "points"), "required; at least two parameter points")
        else:
            out["points"] = [_vector(x, _join(_join(path, "points"), k), errs, pdim, fam)
                             for k, x in enumerate(pts)]
        closed = block.get("closed", False)
        if not isinstance(closed, bool):
            errs.add(_join(path, "closed"), "expected true or false")
            closed = False
        out["closed"] = closed
    return out


def path_is_closed(path: dict) -> bool:
    return path["kind"] in ("latitude-circle", "ellipse") or (path["kind"] == "points" and path["closed"])


def _phase_options(block, closed: bool, errs: _Errors) -> dict:
    path = "phase"
    block = {} if block is None else block
    if not isinstance(block, dict):
        errs.add(path, "expected an object")
        block = {}
    _check_keys(block, ("routes", "refine", "cyclic"), path, errs, "phase options")
    routes = block.get("routes", ["AP"])
    if not isinstance(routes, list) or not routes:
        errs.add(_join(path, "routes"), f"expected a non-empty list drawn from {list(PHASE_ROUTES)}")
        routes = ["AP"]
    for k, r in enumerate(routes):
        if r not in PHASE_ROUTES:
            errs.add(_join(_join(path, "routes"), k), f"expected one of {list(PHASE_ROUTES)}, got {r!r}")
    if len(set(map(str, routes))) != len(routes):
        errs.add(_join(path, "routes"), "routes must be distinct")
    cyclic = block.get("cyclic", closed)
    if not isinstance(cyclic, bool):
        errs.add(_join(path, "cyclic"), "expected true or false")
        cyclic = closed
    elif cyclic and not closed:
        errs.add(_join(path, "cyclic"), "the cyclic phase needs a closed path")
    return {"routes": list(routes), "refine": _choice(block, "refine", REFINE_MODES, path, errs, "auto"),
            "cyclic": cyclic}


def _points(doc: dict, pdim, errs: _Errors):
    pts = doc.get("points")
    if not isinstance(pts, list) or not pts:
        errs.add("points", "required; a non-empty list of parameter points")
        return None
    return [_vector(x, _join("points", k), errs, pdim, "family.param_dim") for k, x in enumerate(pts)]


def _tolerances(block, task: str, errs: _Errors) -> dict:
    defaults = DEFAULT_TOLERANCES[task]
    out = dict(defaults)
    if block is None:
        return out
    if not isinstance(block, dict):
        errs.add("tolerances", "expected an object")
        return out
    _check_keys(block, tuple(defaults), "tolerances", errs, f"task {task!r}",
                universe={k for d in DEFAULT_TOLERANCES.values() for k in d})
    for key in defaults:
        if key in block:
            out[key] = _number(block, key, "tolerances", errs, defaults[key], positive=True, nullable=True)
    return out


def _output(block, errs: _Errors) -> dict:
    if block is None:
        return {"dir": None}
    if not isinstance(block, dict):
        errs.add("output", "expected an object")
        return {"dir": None}
    _check_keys(block, ("dir",), "output", errs, "output options")
    d = block.get("dir")
    if d is not None and not isinstance(d, str):
        errs.add("output.dir", "expected a string")
        d = None
    return {"dir": d}


def _system(block, errs: _Errors) -> dict | None:
    path = "classical.system"
    if not isinstance(block, dict):
        errs.add(path, "required; an object describing the classical system")
        return None
    kind = _choice(block, "kind", SYSTEM_KINDS, path, errs, required=True)
    if kind is None:
        return None
    _check_keys(block, SYSTEM_KEYS[kind], path, errs, f"system kind {kind!r}",
                universe={k for keys in SYSTEM_KEYS.values() for k in keys})
    out = {"kind": kind, "hbar": _number(block, "hbar", path, errs, 1.0, positive=True)}
    if kind == "builtin-harmonic":
        omega = _vector(block.get("omega", [1.0]), _join(path, "omega"), errs)
        if omega is not None and any(w <= 0 for w in omega):
            errs.add(_join(path, "omega"), "frequencies must be positive")
        out["omega"] = omega
        dof = len(omega) if omega else None
    else:
        out["beta"] = _number(block, "beta", path, errs, 0.05, positive=True)
        dof = 2
    mass = block.get("mass", 1.0)
    if _is_number(mass):
        if mass <= 0:
            errs.add(_join(path, "mass"), "must be positive")
        out["mass"] = float(mass)
    else:
        m = _vector(mass, _join(path, "mass"), errs, dof, "the number of degrees of freedom")
        if m is not None and any(x <= 0 for x in m):
            errs.add(_join(path, "mass"), "must be positive")
        out["mass"] = m
    out["_dof"] = dof
    return out


def _classical(block, errs: _Errors) -> dict | None:
    path = "classical"
    if not isinstance(block, dict):
        errs.add(path, "required; an object describing the classical run")
        return None
    analysis = _choice(block, "analysis", ANALYSES, path, errs, "theorem")
    _check_keys(block, CLASSICAL_KEYS[analysis], path, errs, f"classical analysis {analysis!r}",
                universe={k for keys in CLASSICAL_KEYS.values() for k in keys})
    system = _system(block.get("system"), errs)
    dof = system.pop("_dof") if system else None
    out = {"analysis": analysis, "system": system}
    if "R" in block:
        out["R"] = _vector(block["R"], _join(path, "R"), errs, dof, "the system parameter dimension")
    else:
        out["R"] = None if dof is None else [0.0] * dof
    out["dt"] = _number(block, "dt", path, errs, None, positive=True, nullable=True)
    energy = _number(block, "energy", path, errs, 1.0, positive=True)
    if analysis == "theorem":
        default_kind = "torus" if system and system["kind"] == "builtin-harmonic" else "shell"
        ens = _choice(block, "ensemble", ENSEMBLES, path, errs, default_kind)
        out["ensemble"] = ens
        if ens == "torus" and system and system["kind"] != "builtin-harmonic":
            errs.add(_join(path, "ensemble"), f"torus ensembles need an integrable system, got {system['kind']!r}")
        if ens == "torus":
            if "energy" in block:
                errs.add(_join(path, "energy"), "only used by the shell ensemble")
            if "actions" in block:
                out["actions"] = _vector(block["actions"], _join(path, "actions"), errs, dof,
                                         "the number of degrees of freedom")
            else:
                out["actions"] = None if dof is None else [1.0] * dof
        else:
            if "actions" in block:
                errs.add(_join(path, "actions"), "only used by the torus ensemble")
            out["energy"] = energy
        out["count"] = _integer(block, "count", path, errs, 4096, minimum=100)
        out["s_sequence"] = _sequence(block, "s_sequence", path, errs, DEFAULT_SEQUENCE)
        if len(out["s_sequence"]) < 2:
            errs.add(_join(path, "s_sequence"), "needs at least two values")
        out["lam_c"] = _number(block, "lam_c", path, errs, 1.0)
        out["t_max"] = _number(block, "t_max", path, errs, 200.0, positive=True)
        out["record_dt"] = _number(block, "record_dt", path, errs, 0.1, positive=True)
    else:
        out["energy"] = energy
        out["count"] = _integer(block, "count", path, errs, 4000, minimum=100)
        out["sigma"] = _number(block, "sigma", path, errs, 0.5, positive=True)
        out["times"] = _times(block, "times", path, errs, {"start": 0.0, "stop": 200.0, "count": 801})
    return out


# ------------------------------------------------------------------ RunConfig

@dataclass(frozen=True)
class RunConfig:
    """A fully resolved run configuration.

    Only the fields used by ``task`` are set; the rest stay ``None``.
    :meth:`to_document` gives back a document that re-validates to an equal
    value.
    """

    task: str
    seed: int = 0
    level: int | None = None
    family: dict | None = None
    path: dict | None = None
    phase: dict | None = None
    points: list | None = None
    R0: list | None = None
    times: Any = None
    s_sequence: list | None = None
    z_sequence: list | None = None
    quadrature: bool | None = None
    classical: dict | None = None
    tolerances: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: {"dir": None})

    def to_document(self) -> dict:
        doc = {"task": self.task, "seed": self.seed}
        for key in TASK_KEYS[self.task]:
            if key in doc:
                continue
            value = getattr(self, key)
            if value is not None:
                doc[key] = copy.deepcopy(value)
        return doc

    def to_json(self) -> str:
        return canonical_json(self.to_document())

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def with_seed(self, seed: int) -> "RunConfig":
        return validate_config({**self.to_document(), "seed": int(seed)})


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def validate_config(text) -> RunConfig:
    """Parse and validate a configuration document.

    Parameters
    ----------
    text : str, bytes or dict
        JSON text or an already-parsed document.

    Returns
    -------
    RunConfig
        With every default filled in.

    Raises
    ------
    SchemaError
        Listing every problem found, each as ``(path, reason)``.
    """
    if isinstance(text, (str, bytes, bytearray)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError([("", f"not valid JSON: {exc}")]) from None
    else:
        doc = copy.deepcopy(text)
    if not isinstance(doc, dict):
        raise SchemaError([("", "the configuration must be a JSON object")])
    errs = _Errors()
    task = _choice(doc, "task", TASKS, "", errs, required=True)
    if task is None:
        _check_keys(doc, _ALL_TOP, "", errs, "any task")
        raise SchemaError(errs)
    _check_keys(doc, TASK_KEYS[task], "", errs, f"task {task!r}", universe=_ALL_TOP)
    kw = {"task": task, "seed": _integer(doc, "seed", "", errs, 0, minimum=0),
          "tolerances": _tolerances(doc.get("tolerances"), task, errs),
          "output": _output(doc.get("output"), errs)}
    if task == "classical":
        kw["classical"] = _classical(doc.get("classical"), errs)
    else:
        fam = _family(doc["family"], errs) if "family" in doc else None
        if "family" not in doc:
            errs.add("family", "required")
        kw["family"] = fam
        pdim = fam.get("param_dim") if fam else None
        dim = fam.get("dim") if fam else None
        level = _integer(doc, "level", "", errs, 0, minimum=0)
        if dim is not None and level is not None and level >= dim:
            errs.add("level", f"level {level} out of range for family.dim {dim}")
        kw["level"] = level
        if task == "phase":
            path = _path(doc.get("path"), pdim, errs)
            kw["path"] = path
            kw["phase"] = _phase_options(doc.get("phase"), bool(path) and path_is_closed(path), errs)
        else:
            kw["points"] = _points(doc, pdim, errs)
        if task in ("correlation", "theorem", "susceptibility"):
            if "R0" not in doc:
                errs.add("R0", "required")
            else:
                kw["R0"] = _vector(doc["R0"], "R0", errs, pdim, "family.param_dim")
        if task == "correlation":
            kw["times"] = _times(doc, "times", "", errs, DEFAULT_TIMES)
        if task == "theorem":
            kw["s_sequence"] = _sequence(doc, "s_sequence", "", errs, DEFAULT_SEQUENCE)
            q = doc.get("quadrature", True)
            if not isinstance(q, bool):
                errs.add("quadrature", "expected true or false")
                q = True
            kw["quadrature"] = q
        if task == "susceptibility":
            kw["z_sequence"] = _sequence(doc, "z_sequence", "", errs, DEFAULT_SEQUENCE)
    if errs:
        raise SchemaError(errs)
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return validate_config(fh.read())
