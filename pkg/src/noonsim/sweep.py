"""Parameter x time fidelity sweeps, figure presets and result serialisation."""

from __future__ import annotations

import copy
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .dynamics import IntegrationError, TimeGrid, master_solve, pure_density, propagate_nojump
from .fidelity import NoonError, NoonTarget, build_noon_state, fidelity_series
from .model import ConfigError, build_operators, config_from_dict, sweepable, with_params
from .trajectories import TrajectoryConfig, run_trajectories

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1
METHODS = ("nojump", "master", "trajectories")
DEFAULT_INTEGRATOR = {"nojump": "expm", "master": "dop853", "trajectories": "expm"}


class SpecError(ConfigError):
    """Invalid sweep configuration; ``errors`` holds ``(path, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


@dataclass(frozen=True)
class Axis:
    name: str
    start: float
    stop: float
    points: int

    @property
    def values(self) -> np.ndarray:
        if self.points == 1:
            return np.array([float(self.start)])
        return np.linspace(self.start, self.stop, self.points)

    def to_dict(self) -> dict:
        return {"name": self.name, "start": self.start, "stop": self.stop, "points": self.points}


@dataclass(frozen=True)
class SweepSpec:
    """Everything needed to reproduce one fidelity map.

    ``system`` is a scheme config dictionary (see ``config_from_dict``); the
    swept parameter overrides its value row by row. Times are in the units
    fixed by ``system`` (1/g for ``g = 1``, 1/kappa for ``kappa = 1``).
    """

    system: dict
    parameter: Axis
    time: Axis
    initial: NoonTarget
    target: NoonTarget
    method: str = "nojump"
    integrator: str | None = None
    seed: int = 0
    n_traj: int = 1000
    traj_dt: float = 0.01
    name: str = "custom"
    notes: str = ""

    @property
    def excitations(self) -> int:
        return self.initial.photon_number

    @property
    def scheme_config(self):
        return config_from_dict(self.system)

    def resolved_integrator(self) -> str:
        return self.integrator or DEFAULT_INTEGRATOR[self.method]

    def to_dict(self) -> dict:
        out = {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "method": self.method,
            "seed": self.seed,
            "system": copy.deepcopy(self.system),
            "sweep": {k: v for k, v in self.parameter.to_dict().items()
                      if k != "name"} | {"parameter": self.parameter.name},
            "time": {k: v for k, v in self.time.to_dict().items() if k != "name"},
            "initial": self.initial.to_dict(),
            "target": self.target.to_dict(),
        }
        if self.integrator is not None:
            out["integrator"] = self.integrator
        if self.method == "trajectories":
            out["trajectories"] = {"n_traj": self.n_traj, "dt": self.traj_dt}
        if self.notes:
            out["notes"] = self.notes
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        return parse_spec(d)

    @classmethod
    def from_file(cls, path) -> "SweepSpec":
        """Load a TOML config, or JSON when the file name ends in ``.json``."""
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise SpecError([(str(path), f"cannot read config: {exc.strerror}")]) from exc
        try:
            if str(path).endswith(".json"):
                data = json.loads(raw)
            else:
                data = tomllib.loads(raw.decode("utf-8"))
        except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise SpecError([(str(path), f"cannot parse config: {exc}")]) from exc
        return parse_spec(data)

    def with_updates(self, **changes) -> "SweepSpec":
        d = self.to_dict()
        for key, val in changes.items():
            d[key] = val
        return parse_spec(d)

    def scaled(self, s: float) -> "SweepSpec":
        """Every rate and frequency times ``s``, every time divided by ``s``."""
        sys_d = self.scheme_config.scaled(s).to_dict()
        par = Axis(self.parameter.name, s * self.parameter.start, s * self.parameter.stop,
                   self.parameter.points)
        tim = Axis("t", self.time.start / s, self.time.stop / s, self.time.points)
        return SweepSpec(sys_d, par, tim, self.initial, self.target, self.method, self.integrator,
                         self.seed, self.n_traj, self.traj_dt / s, self.name, self.notes)


def _num(errors, path, value, kind=float, positive=False, minimum=None):
    try:
        if isinstance(value, bool):
            raise TypeError
        out = kind(value)
        if kind is float and not math.isfinite(out):
            raise ValueError
        if kind is int and out != value:
            raise ValueError
    except (TypeError, ValueError):
        errors.append((path, f"expected a finite {kind.__name__}, got {value!r}"))
        return None
    if positive and not out > 0:
        errors.append((path, "must be positive"))
    if minimum is not None and out < minimum:
        errors.append((path, f"must be >= {minimum}"))
    return out


def _axis(errors, section, d, name, min_points):
    if not isinstance(d, dict):
        errors.append((section, "missing table"))
        return None
    start = _num(errors, f"{section}.start", d.get("start"))
    stop = _num(errors, f"{section}.stop", d.get("stop"))
    points = _num(errors, f"{section}.points", d.get("points"), int, minimum=min_points)
    extra = set(d) - {"start", "stop", "points", "parameter"}
    for k in sorted(extra):
        errors.append((f"{section}.{k}", "unknown key"))
    if None in (start, stop, points):
        return None
    if points > 1 and not stop > start:
        errors.append((f"{section}.stop", "must exceed start"))
    return Axis(name, start, stop, points)


def _noon(errors, section, d):
    if not isinstance(d, dict):
        errors.append((section, "missing table"))
        return None
    try:
        return NoonTarget.from_dict(d)
    except KeyError as exc:
        errors.append((f"{section}.{exc.args[0]}", "missing key"))
    except (NoonError, TypeError, ValueError) as exc:
        errors.append((section, str(exc)))
    return None


def parse_spec(d: dict) -> SweepSpec:
    """Validate a raw (TOML/JSON) sweep dictionary, collecting every error."""
    errors: list[tuple[str, str]] = []
    if not isinstance(d, dict):
        raise SpecError([("<root>", "expected a table")])
    known = {"schema", "name", "method", "integrator", "seed", "system", "sweep", "time",
             "initial", "target", "trajectories", "notes"}
    for k in sorted(set(d) - known):
        errors.append((k, "unknown key"))
    if d.get("schema") != SCHEMA_VERSION:
        errors.append(("schema", f"expected {SCHEMA_VERSION}, got {d.get('schema')!r}"))
    method = d.get("method", "nojump")
    if method not in METHODS:
        errors.append(("method", f"expected one of {METHODS}, got {method!r}"))
    integrator = d.get("integrator")
    if integrator is not None and integrator not in ("rk45", "dop853", "rk4", "expm"):
        errors.append(("integrator", f"unknown integrator {integrator!r}"))
    seed = _num(errors, "seed", d.get("seed", 0), int, minimum=0)

    system = d.get("system")
    cfg = None
    if not isinstance(system, dict):
        errors.append(("system", "missing table"))
    else:
        try:
            cfg = config_from_dict(system)
        except (ConfigError, KeyError, TypeError, ValueError) as exc:
            msg = f"missing key {exc.args[0]!r}" if isinstance(exc, KeyError) else str(exc)
            errors.append(("system", msg))

    sweep_d = d.get("sweep")
    pname = sweep_d.get("parameter") if isinstance(sweep_d, dict) else None
    if pname is None:
        errors.append(("sweep.parameter", "missing key"))
    elif cfg is not None and pname not in sweepable(cfg):
        errors.append(("sweep.parameter", f"{pname!r} is not sweepable; choose from "
                                          f"{list(sweepable(cfg))}"))
    par = _axis(errors, "sweep", sweep_d, pname or "?", 1)
    tim = _axis(errors, "time", d.get("time"), "t", 2)
    if tim is not None and tim.start < 0:
        errors.append(("time.start", "must be >= 0"))
    if par is not None and pname in ("kappa", "gamma") and min(par.start, par.stop) < 0:
        errors.append(("sweep.start", f"{pname} must be non-negative"))

    initial = _noon(errors, "initial", d.get("initial"))
    target = _noon(errors, "target", d.get("target"))
    if cfg is not None:
        slots = set(cfg.layout().slots)
        for sec, t in (("initial", initial), ("target", target)):
            if t is None:
                continue
            bad = [s for s in t.left + t.right if s not in slots]
            if bad:
                errors.append((sec, f"unknown slots {bad}"))
    if initial is not None and target is not None and initial.photon_number != target.photon_number:
        errors.append(("target.photon_number", "must equal initial.photon_number"))

    n_traj, traj_dt = 1000, 0.01
    tr = d.get("trajectories")
    if tr is not None:
        if not isinstance(tr, dict):
            errors.append(("trajectories", "expected a table"))
        else:
            n_traj = _num(errors, "trajectories.n_traj", tr.get("n_traj", n_traj), int, minimum=1)
            traj_dt = _num(errors, "trajectories.dt", tr.get("dt", traj_dt), positive=True)
            for k in sorted(set(tr) - {"n_traj", "dt"}):
                errors.append((f"trajectories.{k}", "unknown key"))

    name = d.get("name", "custom")
    notes = d.get("notes", "")
    if not isinstance(name, str):
        errors.append(("name", "expected a string"))
    if errors:
        raise SpecError(errors)
    return SweepSpec(copy.deepcopy(system), par, tim, initial, target, method, integrator,
                     seed, n_traj, traj_dt, name, notes)


@dataclass
class ResultGrid:
    """Fidelity map ``fidelity[i, k]`` at parameter ``param_values[i]`` and time ``times[k]``."""

    param_name: str
    param_values: np.ndarray
    times: np.ndarray
    fidelity: np.ndarray
    cell_meta: list[dict]
    manifest: dict = field(default_factory=dict)
    stderr: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "manifest": self.manifest,
            "param_name": self.param_name,
            "param_values": [float(v) for v in self.param_values],
            "times": [float(v) for v in self.times],
            "fidelity": [[_json_float(v) for v in row] for row in self.fidelity],
            "cell_meta": self.cell_meta,
        }
        if self.stderr is not None:
            out["stderr"] = [[_json_float(v) for v in row] for row in self.stderr]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ResultGrid":
        fid = np.array([[np.nan if v is None else v for v in row] for row in d["fidelity"]],
                       dtype=float).reshape(len(d["param_values"]), len(d["times"]))
        err = d.get("stderr")
        if err is not None:
            err = np.array([[np.nan if v is None else v for v in row] for row in err], dtype=float)
        return cls(d["param_name"], np.array(d["param_values"], dtype=float),
                   np.array(d["times"], dtype=float), fid, d["cell_meta"], d["manifest"], err)

    @property
    def failed_rows(self) -> list[int]:
        return [i for i, m in enumerate(self.cell_meta) if "error" in m]


def _json_float(v):
    v = float(v)
    return None if math.isnan(v) else v


def _row_seed(seed: int, row: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(row,)).generate_state(1, np.uint64)[0])


def compute_row(spec: SweepSpec, row: int) -> tuple[np.ndarray, np.ndarray | None, dict]:
    """Fidelity curve for one parameter value. Returns ``(F, stderr, meta)``."""
    value = float(spec.parameter.values[row])
    cfg = with_params(spec.scheme_config, **{spec.parameter.name: value})
    m = spec.excitations
    ops = build_operators(cfg, m)
    psi0 = build_noon_state(spec.initial, ops.space.sector(m))
    target = build_noon_state(spec.target, ops.space)
    grid = TimeGrid(spec.time.start, spec.time.stop, spec.time.points,
                    method=spec.resolved_integrator())
    meta: dict = {"param_value": value}
    err = None
    if spec.method == "nojump":
        evo = propagate_nojump(ops, psi0, grid)
        f = fidelity_series(evo, target)[:, 1]
        meta["final_norm_sq"] = float(evo.norms_sq[-1])
    elif spec.method == "master":
        evo = master_solve(ops, pure_density(ops, psi0), grid)
        f = fidelity_series(evo, target)[:, 1]
        meta.update(evo.diagnostics)
    else:
        tcfg = TrajectoryConfig(spec.n_traj, spec.traj_dt, _row_seed(spec.seed, row))
        res = run_trajectories(ops, psi0, grid, tcfg, {"F": target}, populations=False)
        f, err = res.mean["F"], res.stderr["F"]
        meta["n_jumps"] = len(res.events)
        meta["dt"] = res.dt
    return np.clip(f, 0.0, 1.0), err, meta


def _safe_row(spec, row):
    try:
        return compute_row(spec, row)
    except (IntegrationError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        nan = np.full(spec.time.points, np.nan)
        value = float(spec.parameter.values[row])
        return nan, (nan if spec.method == "trajectories" else None), {
            "param_value": value, "error": f"{type(exc).__name__}: {exc}"}


def manifest(spec: SweepSpec) -> dict:
    return {"spec": spec.to_dict(), "version": __version__, "seed": spec.seed,
            "integrator": spec.resolved_integrator()}


def run_sweep(spec: SweepSpec, threads: int = 1, rows=None) -> ResultGrid:
    """Compute every row (one parameter value, all times) independently.

    A failing row is filled with NaN and its error is stored in ``cell_meta``;
    the rest of the grid is unaffected. ``rows`` restricts the computation to a
    subset of parameter indices.
    """
    idx = list(range(spec.parameter.points)) if rows is None else [int(r) for r in rows]
    if threads > 1 and len(idx) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _safe_row(spec, r), idx))
    else:
        results = [_safe_row(spec, r) for r in idx]
    fid = np.array([r[0] for r in results]).reshape(len(idx), spec.time.points)
    err = None
    if spec.method == "trajectories":
        err = np.array([r[1] for r in results]).reshape(fid.shape)
    return ResultGrid(spec.parameter.name, spec.parameter.values[idx], spec.time.values, fid,
                      [r[2] for r in results], manifest(spec), err)


def find_max(grid: ResultGrid):
    """Global maximum ignoring NaN; ties go to the lowest (row, col).

    Returns ``(F_max, (row, col))``, or ``(nan, None)`` when no cell is finite.
    """
    f = np.asarray(grid.fidelity, dtype=float)
    if f.size == 0 or np.all(np.isnan(f)):
        return float("nan"), None
    flat = int(np.nanargmax(f))
    row, col = np.unravel_index(flat, f.shape)
    return float(f[row, col]), (int(row), int(col))


def _fmt(v) -> str:
    return repr(float(v))


def to_csv(grid: ResultGrid) -> str:
    buf = io.StringIO()
    header = json.dumps(grid.manifest, sort_keys=True, indent=1).splitlines()
    for line in header:
        buf.write(f"# {line}\n")
    cols = ["param_value", "t", "fidelity"] + (["stderr"] if grid.stderr is not None else [])
    buf.write(",".join(cols) + "\n")
    for i, p in enumerate(grid.param_values):
        for k, t in enumerate(grid.times):
            fields = [_fmt(p), _fmt(t), _fmt(grid.fidelity[i, k])]
            if grid.stderr is not None:
                fields.append(_fmt(grid.stderr[i, k]))
            buf.write(",".join(fields) + "\n")
    return buf.getvalue()


def to_json(grid: ResultGrid) -> str:
    return json.dumps(grid.to_dict(), sort_keys=True, indent=1) + "\n"


def read_csv(text: str) -> tuple[dict, np.ndarray]:
    """Parse :func:`to_csv` output into ``(manifest, rows)``."""
    lines = text.splitlines()
    head = [ln[2:] for ln in lines if ln.startswith("# ")]
    body = [ln for ln in lines if not ln.startswith("#")]
    data = np.array([[float(x) for x in ln.split(",")] for ln in body[1:]], dtype=float)
    return json.loads("\n".join(head)), data


def emit(grid: ResultGrid, path, fmt: str = "csv") -> None:
    """Write ``grid`` as CSV (``param_value,t,fidelity``) or JSON."""
    if fmt == "csv":
        text = to_csv(grid)
    elif fmt == "json":
        text = to_json(grid)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write results: {exc.strerror}", str(path)) from exc


# presets ----------------------------------------------------------------

_KAPPA_AXIS = {"parameter": "kappa", "start": 0.0, "stop": 1.5, "points": 151}
_G_AXIS = {"parameter": "g", "start": 0.0, "stop": 10.0, "points": 151}
_TIME = {"start": 0.0, "stop": 6.0, "points": 301}

_S1_BELL = {"photon_number": 1, "left": ["s1"], "right": ["s2"]}
_S1_MODES = {"photon_number": 1, "left": ["a1", "a2"], "right": ["a3", "a4"]}
_S1_HYBRID = {"photon_number": 1, "left": ["s1", "a1", "a2"], "right": ["s2", "a3", "a4"]}
_S1_TWO = {"photon_number": 2, "left": ["s1", "s2"], "right": ["s3", "s4"]}
_S1_TWO_MODES = {"photon_number": 2, "left": ["a1", "a2", "a3", "a4"],
                 "right": ["a5", "a6", "a7", "a8"]}
_S2_TWO = {"photon_number": 2, "left": ["s1", "s2"], "right": ["s3", "s4"]}
_S2_TWO_MODES = {"photon_number": 2, "left": ["a1", "a2"], "right": ["a3", "a4"]}


def _preset(name, system, sweep, initial, target, notes):
    return {"schema": SCHEMA_VERSION, "name": name, "method": "nojump", "seed": 0,
            "system": system, "sweep": sweep, "time": _TIME, "initial": initial,
            "target": target, "notes": notes}


_PRESET_DATA = {
    "fig3a": _preset("fig3a", {"scheme": "I", "n": 2, "g": 1.0, "detuning": 0.5}, _KAPPA_AXIS,
                     _S1_BELL, _S1_BELL, "emitter Bell-state fidelity; units of g"),
    "fig3b": _preset("fig3b", {"scheme": "I", "n": 2, "g": 1.0, "detuning": 0.5}, _KAPPA_AXIS,
                     _S1_BELL, _S1_MODES, "cavity N00N fidelity; units of g"),
    "fig3c": _preset("fig3c", {"scheme": "I", "n": 2, "g": 1.0, "detuning": 0.5}, _KAPPA_AXIS,
                     _S1_BELL, _S1_HYBRID, "hybrid emitter-cavity fidelity; units of g"),
    "fig4a": _preset("fig4a", {"scheme": "I", "n": 2, "kappa": 1.0, "detuning": 0.5}, _G_AXIS,
                     _S1_BELL, _S1_MODES,
                     "assumed: kappa = 1 fixed, g swept in [0, 10], time in 1/kappa, "
                     "detuning 0.5 kappa"),
    "fig4b": _preset("fig4b", {"scheme": "I", "n": 2, "g": 1.0, "detuning": 5.0}, _KAPPA_AXIS,
                     _S1_BELL, _S1_MODES, "far detuned, detuning 5g"),
    "fig4c": _preset("fig4c", {"scheme": "I", "n": 2, "g": 1.0, "detuning": 0.5, "eta": 1.5},
                     _KAPPA_AXIS, _S1_BELL, _S1_MODES, "backscattering eta = 1.5g"),
    "fig5a": _preset("fig5a", {"scheme": "I", "n": 4, "g": 1.0, "detuning": 5.0}, _KAPPA_AXIS,
                     _S1_TWO, _S1_TWO_MODES, "two photons, far detuned"),
    "fig5b": _preset("fig5b", {"scheme": "I", "n": 4, "g": 1.0, "detuning": 0.5, "eta": 1.5},
                     _KAPPA_AXIS, _S1_TWO, _S1_TWO_MODES, "two photons, backscattering"),
    "fig5c": _preset("fig5c", {"scheme": "I", "n": 4, "kappa": 1.0, "detuning": 0.5}, _G_AXIS,
                     _S1_TWO, _S1_TWO_MODES,
                     "assumed: kappa = 1 fixed, g swept in [0, 10], time in 1/kappa, "
                     "detuning 0.5 kappa"),
    "fig6a": _preset("fig6a", {"scheme": "II", "n": 2, "g": 1.0, "detuning": 5.0, "xi": 0.5},
                     _KAPPA_AXIS, _S2_TWO, _S2_TWO_MODES, "two rings, far detuned, xi = 0.5g"),
    "fig6b": _preset("fig6b", {"scheme": "II", "n": 2, "g": 1.0, "detuning": 0.5, "eta": 1.5,
                               "xi": 0.5},
                     _KAPPA_AXIS, _S2_TWO, _S2_TWO_MODES, "two rings, backscattering, xi = 0.5g"),
    "fig6c": _preset("fig6c", {"scheme": "II", "n": 2, "kappa": 1.0, "detuning": 0.5,
                               "xi": 0.5},
                     _G_AXIS, _S2_TWO, _S2_TWO_MODES,
                     "assumed: kappa = 1 fixed, g swept in [0, 10], xi = 0.5 kappa, "
                     "time in 1/kappa"),
}

PRESETS = tuple(_PRESET_DATA)


def preset(name: str) -> SweepSpec:
    try:
        data = _PRESET_DATA[name]
    except KeyError:
        raise SpecError([("preset", f"unknown preset {name!r}; choose from {list(PRESETS)}")])
    return parse_spec(copy.deepcopy(data))


def preset_dict(name: str) -> dict:
    return copy.deepcopy(_PRESET_DATA[name])


__all__ = [
    "Axis", "METHODS", "PRESETS", "ResultGrid", "SCHEMA_VERSION", "SpecError", "SweepSpec",
    "compute_row", "emit", "find_max", "manifest", "parse_spec", "preset", "preset_dict",
    "read_csv", "run_sweep", "to_csv", "to_json",
]
