"""Command-line driver: ``noonsim run|preset|dump-ops|traj``."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .dynamics import IntegrationError, TimeGrid, propagate_nojump
from .fidelity import build_noon_state
from .model import ConfigError, build_operators, dump_dense, with_params
from .sweep import PRESETS, SpecError, SweepSpec, emit, find_max, preset, run_sweep, to_csv, to_json
from .trajectories import TrajectoryConfig, run_trajectories

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
THREADS_ENV = "NOONSIM_THREADS"


def _threads(arg) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(THREADS_ENV)
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise SpecError([(THREADS_ENV, f"expected an integer, got {env!r}")])
    if n < 1:
        raise SpecError([(THREADS_ENV, "must be >= 1")])
    return n


def _load(args) -> SweepSpec:
    spec = preset(args.name) if args.command == "preset" or getattr(args, "preset", False) \
        else SweepSpec.from_file(args.config)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "method", None) is not None:
        updates["method"] = args.method
    if getattr(args, "integrator", None) is not None:
        updates["integrator"] = args.integrator
    return spec.with_updates(**updates) if updates else spec


def _write(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _cmd_sweep(args) -> int:
    spec = _load(args)
    if getattr(args, "show_config", False):
        _write(json.dumps(spec.to_dict(), indent=1, sort_keys=True) + "\n", args.out)
        return EXIT_OK
    grid = run_sweep(spec, threads=_threads(args.threads))
    if args.out in (None, "-"):
        sys.stdout.write(to_csv(grid) if args.format == "csv" else to_json(grid))
    else:
        emit(grid, args.out, args.format)
    fmax, cell = find_max(grid)
    if cell is not None:
        i, k = cell
        print(f"max fidelity {fmax:.6f} at {grid.param_name}={grid.param_values[i]:.6g}, "
              f"t={grid.times[k]:.6g}", file=sys.stderr)
    for i in grid.failed_rows:
        print(f"row {i} failed: {grid.cell_meta[i]['error']}", file=sys.stderr)
    return EXIT_NUMERIC if grid.failed_rows else EXIT_OK


def _row_setup(spec: SweepSpec, value):
    v = spec.parameter.values[0] if value is None else value
    cfg = with_params(spec.scheme_config, **{spec.parameter.name: float(v)})
    m = spec.excitations
    ops = build_operators(cfg, m)
    return float(v), cfg, ops, build_noon_state(spec.initial, ops.space.sector(m))


def _cmd_dump_ops(args) -> int:
    spec = _load(args)
    value, cfg, ops, psi0 = _row_setup(spec, args.value)
    if args.dump_basis:
        _write(ops.space.sector(spec.excitations).to_jsonl(), args.dump_basis)
    if args.dump_amplitudes:
        grid = TimeGrid(spec.time.start, spec.time.stop, spec.time.points,
                        method=spec.integrator or "rk45")
        evo = propagate_nojump(ops, psi0, grid)
        evo.to_csv(args.dump_amplitudes, evo.basis.labels())
    payload = {
        "config": cfg.to_dict(),
        spec.parameter.name: value,
        "labels": [s.label(ops.space.layout) for s in ops.space.states()],
        "h_nh": dump_dense(ops.h_nh),
        "jumps": {k: dump_dense(v) for k, v in ops.jumps.items()},
    }
    _write(json.dumps(payload) + "\n", args.out)
    return EXIT_OK


def _cmd_traj(args) -> int:
    spec = _load(args)
    value, cfg, ops, psi0 = _row_setup(spec, args.value)
    target = build_noon_state(spec.target, ops.space)
    grid = TimeGrid(spec.time.start, spec.time.stop, spec.time.points)
    tcfg = TrajectoryConfig(args.n_traj if args.n_traj is not None else spec.n_traj,
                            args.dt if args.dt is not None else spec.traj_dt, spec.seed)
    res = run_trajectories(ops, psi0, grid, tcfg, {"fidelity": target})
    lines = ["t,fidelity,stderr"]
    lines += [f"{t!r},{f!r},{e!r}" for t, f, e in
              zip(map(float, res.times), map(float, res.mean["fidelity"]),
                  map(float, res.stderr["fidelity"]))]
    _write("\n".join(lines) + "\n", args.out)
    if args.events:
        res.write_events(args.events)
    print(f"{len(res.events)} jumps over {res.n_traj} trajectories "
          f"({spec.parameter.name}={value:.6g}, dt={res.dt:.3g})", file=sys.stderr)
    return EXIT_OK


def _common(p, sweep=True):
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--seed", type=int)
    p.add_argument("--integrator", choices=("rk45", "dop853", "rk4", "expm"))
    if sweep:
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--threads", type=int, help=f"worker threads (env {THREADS_ENV})")
        p.add_argument("--method", choices=("nojump", "master", "trajectories"))


def _source(p):
    p.add_argument("config", help="config path, or a preset name with --preset")
    p.add_argument("--preset", action="store_true", help="treat the argument as a preset name")
    p.add_argument("--value", type=float, help="swept-parameter value (default: first)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noonsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a sweep from a TOML/JSON config")
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("preset", help="run a built-in figure preset")
    p.add_argument("name", choices=PRESETS)
    p.add_argument("--show-config", action="store_true", help="print the preset config and exit")
    _common(p)

    p = sub.add_parser("dump-ops", help="write H_nh and jump operators as JSON")
    _source(p)
    _common(p, sweep=False)
    p.add_argument("--dump-basis", metavar="PATH",
                   help="also write the initial-state sector basis as JSONL")
    p.add_argument("--dump-amplitudes", metavar="PATH",
                   help="also write no-jump amplitudes as CSV")

    p = sub.add_parser("traj", help="quantum-jump ensemble for one parameter value")
    _source(p)
    _common(p, sweep=False)
    p.add_argument("--n-traj", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--events", metavar="PATH", help="write jump events as JSONL")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("dump-ops", "traj") and args.preset:
        args.name = args.config
    handler = {"run": _cmd_sweep, "preset": _cmd_sweep, "dump-ops": _cmd_dump_ops,
               "traj": _cmd_traj}[args.command]
    try:
        return handler(args)
    except SpecError as exc:
        for path, msg in exc.errors:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
