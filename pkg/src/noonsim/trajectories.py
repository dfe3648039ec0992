"""Quantum-jump (Monte Carlo wave function) unravelling of the cascaded dynamics.

Each trajectory carries an unnormalised no-jump state between detector
clicks. Over a step ``dt`` channel ``j`` fires with probability
``dt <J_j^+ J_j> / <psi|psi>``; a click replaces the state by the normalised
``J_j psi``, otherwise the state is propagated with ``exp(-i H_nh dt)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from .dynamics import IntegrationError, StateVector, TimeGrid, _initial_sector_state
from .model import OperatorSet

RATE_WARNING = 0.05
MAX_STEP_PROBABILITY = 0.1


class TrajectoryError(IntegrationError):
    pass


@dataclass(frozen=True)
class TrajectoryConfig:
    """Ensemble size, jump-decision step and seed.

    ``channels`` restricts which jump operators may fire (``None`` means all).
    Disabled channels still drain the no-jump norm, so the ensemble is then
    conditioned on seeing no clicks in them.
    """

    n_traj: int
    dt: float
    seed: int = 0
    channels: tuple[str, ...] | None = None
    record_states: bool = False

    def __post_init__(self):
        if int(self.n_traj) != self.n_traj or self.n_traj < 1:
            raise ValueError("n_traj must be a positive integer")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive and finite")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.channels is not None:
            object.__setattr__(self, "channels", tuple(self.channels))

    def validate(self, ops: OperatorSet) -> float:
        """Check channels against ``ops`` and warn when ``dt`` is coarse.

        Returns the largest total jump rate (top eigenvalue of sum J^+J).
        """
        if self.channels is not None:
            missing = [c for c in self.channels if c not in ops.jumps]
            if missing:
                raise ValueError(f"unknown jump channels {missing}; have {sorted(ops.jumps)}")
        rate = max_jump_rate(ops)
        if self.dt * rate > RATE_WARNING:
            warnings.warn(f"dt*max_rate = {self.dt * rate:.3g} exceeds {RATE_WARNING}; "
                          "first-order jump sampling will be biased", RuntimeWarning,
                          stacklevel=2)
        return rate


class JumpEvent(NamedTuple):
    traj: int
    t: float
    channel: str


@dataclass
class TrajectoryRecord:
    stream_id: int
    events: list[JumpEvent]
    states: np.ndarray | None = None  # (n_times, dim), unnormalised between jumps


@dataclass
class TrajectoryResult:
    times: np.ndarray
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    events: list[JumpEvent]
    n_traj: int
    dt: float
    seed: int
    states: np.ndarray | None = None  # (n_traj, n_times, dim) when recorded
    extra: dict = field(default_factory=dict)

    def jump_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_traj, dtype=int)
        for ev in self.events:
            counts[ev.traj] += 1
        return counts

    def records(self) -> list[TrajectoryRecord]:
        per = [[] for _ in range(self.n_traj)]
        for ev in self.events:
            per[ev.traj].append(ev)
        return [TrajectoryRecord(i, per[i], None if self.states is None else self.states[i])
                for i in range(self.n_traj)]

    def events_jsonl(self) -> str:
        return "".join(json.dumps({"traj": e.traj, "t": e.t, "channel": e.channel}) + "\n"
                       for e in self.events)

    def write_events(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.events_jsonl())


def max_jump_rate(ops: OperatorSet) -> float:
    rate_op = ops.jump_rate_operator()
    if rate_op.nnz == 0:
        return 0.0
    return float(np.linalg.eigvalsh(rate_op.toarray())[-1])


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for trajectory ``index``; independent of scheduling."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def sample_jump(psi, jumps: dict, dt: float, rng: np.random.Generator):
    """One first-order jump decision.

    Returns ``None`` for no click, otherwise ``(channel, reset_state)`` with the
    reset state normalised.
    """
    vec = np.asarray(psi.amplitudes if isinstance(psi, StateVector) else psi, dtype=complex)
    norm_sq = float(np.vdot(vec, vec).real)
    if norm_sq <= 0:
        raise ValueError("cannot sample a jump from a zero state")
    names = list(jumps)
    applied = [jumps[c] @ vec for c in names]
    probs = np.array([dt * float(np.vdot(a, a).real) / norm_sq for a in applied])
    total = probs.sum()
    if total > MAX_STEP_PROBABILITY:
        raise TrajectoryError(f"total jump probability {total:.3g} per step exceeds "
                              f"{MAX_STEP_PROBABILITY}; reduce dt")
    u = rng.random()
    if u >= total:
        return None
    k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    k = min(k, len(names) - 1)
    out = applied[k]
    return names[k], out / np.linalg.norm(out)


def _targets_full(targets, space):
    out = {}
    for name, tgt in (targets or {}).items():
        vec = np.asarray(tgt.amplitudes if isinstance(tgt, StateVector) else tgt, dtype=complex)
        if isinstance(tgt, StateVector):
            vec = space.embed(vec, tgt.basis.excitation_number)
        if vec.shape != (space.dim,):
            raise ValueError(f"target {name!r} does not match the state space")
        out[name] = vec
    return out


def run_trajectories(ops: OperatorSet, psi0, grid: TimeGrid, tcfg: TrajectoryConfig,
                     targets: dict | None = None, populations: bool = True) -> TrajectoryResult:
    """Ensemble-average fidelities (one per named target) and slot populations.

    Trajectories advance together as columns of one array, but each draws one
    uniform per step from its own stream, so results do not depend on batching.
    The jump step is shrunk so that it divides the output spacing exactly.
    """
    rate = tcfg.validate(ops)
    space = ops.space
    m, vec = _initial_sector_state(ops, psi0)
    y0 = space.embed(vec, m)
    n_sub = max(1, math.ceil(grid.step / tcfg.dt - 1e-9))
    dt = grid.step / n_sub

    times = grid.times
    n_times, n_traj, d = len(times), tcfg.n_traj, space.dim
    step = expm(-1j * ops.h_nh.toarray() * dt)
    names = list(ops.jumps) if tcfg.channels is None else list(tcfg.channels)
    jumps = [ops.jumps[c].tocsr() for c in names]
    tvecs = _targets_full(targets, space)
    occ = None
    if populations:
        occ = np.array([list(s.emitter_bits) + list(s.mode_occupations) for s in space.states()],
                       dtype=float)
        slots = space.layout.emitter_slots + space.layout.mode_slots

    rngs = [stream(tcfg.seed, i) for i in range(n_traj)]
    block = 256
    uniforms = np.empty((0, n_traj))
    cursor = 0

    psi = np.repeat(y0[:, None], n_traj, axis=1)
    means = {k: np.zeros(n_times) for k in tvecs}
    errs = {k: np.zeros(n_times) for k in tvecs}
    pop_mean = np.zeros((n_times, occ.shape[1])) if populations else None
    pop_err = np.zeros_like(pop_mean) if populations else None
    snaps = np.empty((n_traj, n_times, d), dtype=complex) if tcfg.record_states else None
    events: list[JumpEvent] = []

    def record(i):
        norms = np.sum(np.abs(psi) ** 2, axis=0)
        for k, tv in tvecs.items():
            f = np.abs(tv.conj() @ psi) ** 2 / norms
            means[k][i], errs[k][i] = _mean_stderr(f)
        if populations:
            p = (occ.T @ np.abs(psi) ** 2) / norms
            pop_mean[i], pop_err[i] = _mean_stderr(p)
        if snaps is not None:
            snaps[:, i, :] = psi.T

    record(0)
    for i in range(1, n_times):
        t0 = times[i - 1]
        for s in range(n_sub):
            if cursor == uniforms.shape[0]:
                uniforms = np.column_stack([r.random(block) for r in rngs])
                cursor = 0
            u = uniforms[cursor]
            cursor += 1
            norms = np.sum(np.abs(psi) ** 2, axis=0)
            applied = [j @ psi for j in jumps]
            if applied:
                probs = np.array([dt * np.sum(np.abs(a) ** 2, axis=0) for a in applied]) / norms
                cum = np.cumsum(probs, axis=0)
                total = cum[-1]
                if total.max() > MAX_STEP_PROBABILITY:
                    raise TrajectoryError(f"total jump probability {total.max():.3g} per step "
                                          f"exceeds {MAX_STEP_PROBABILITY}; reduce dt")
                fired = np.nonzero(u < total)[0]
            else:
                fired = np.empty(0, dtype=int)
            new = step @ psi
            t_click = t0 + (s + 1) * dt
            for q in fired:
                c = int(np.searchsorted(cum[:, q], u[q], side="right"))
                c = min(c, len(names) - 1)
                out = applied[c][:, q]
                new[:, q] = out / np.linalg.norm(out)
                events.append(JumpEvent(int(q), float(t_click), names[c]))
            psi = new
        record(i)

    events.sort(key=lambda e: (e.traj, e.t))
    mean, err = dict(means), dict(errs)
    if populations:
        for c, slot in enumerate(slots):
            mean[f"pop_{slot}"] = pop_mean[:, c]
            err[f"pop_{slot}"] = pop_err[:, c]
    return TrajectoryResult(times, mean, err, events, n_traj, dt, int(tcfg.seed), snaps,
                            {"max_rate": rate, "substeps": n_sub})


def _mean_stderr(samples):
    # reduce over the last axis (trajectory index) in a fixed order
    n = samples.shape[-1]
    mean = samples.mean(axis=-1)
    if n < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, np.sqrt(samples.var(axis=-1, ddof=1) / n)
