"""N00N target states and pure-target fidelities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import BasisError, ExcitationBasis, TruncatedSpace
from .dynamics import DensityMatrix, MasterEvolution, NoJumpEvolution, StateVector


class NoonError(ValueError):
    pass


@dataclass(frozen=True)
class NoonTarget:
    """(|N_L, 0_R> + e^{i phase} |0_L, N_R>) / sqrt(2) over two slot groups.

    ``|N_X>`` is the normalised state (sum of the group's creation operators)^N
    applied to the vacuum; a one-slot group gives the plain Fock/excited state.
    """

    photon_number: int
    left: tuple[str, ...]
    right: tuple[str, ...]
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "left", tuple(self.left))
        object.__setattr__(self, "right", tuple(self.right))
        if self.photon_number < 1:
            raise NoonError("photon number must be >= 1")
        if not self.left or not self.right:
            raise NoonError("both groups must be nonempty")
        if set(self.left) & set(self.right):
            raise NoonError("groups must be disjoint")

    def grouping_mode(self, layout) -> str:
        slots = set(self.left) | set(self.right)
        has_e = bool(slots & set(layout.emitter_slots))
        has_m = bool(slots & set(layout.mode_slots))
        return "hybrid" if has_e and has_m else ("emitters_only" if has_e else "modes_only")

    @classmethod
    def from_dict(cls, d: dict) -> "NoonTarget":
        return cls(int(d["photon_number"]), tuple(d["left"]), tuple(d["right"]),
                   float(d.get("phase", 0.0)))

    def to_dict(self) -> dict:
        return {"photon_number": self.photon_number, "left": list(self.left),
                "right": list(self.right), "phase": self.phase}


def _group_state(space: TruncatedSpace, group, n: int) -> np.ndarray:
    op = sum(space.creator(s) for s in group)
    vec = np.zeros(space.dim, dtype=complex)
    vec[space.vacuum_index] = 1.0
    for _ in range(n):
        vec = op @ vec
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise NoonError(f"group {list(group)} cannot hold {n} excitations")
    return vec / norm


def build_noon_state(target: NoonTarget, basis) -> StateVector | np.ndarray:
    """Target vector on an :class:`ExcitationBasis` (returns a StateVector) or a
    :class:`TruncatedSpace` (returns a full-space amplitude array)."""
    n = target.photon_number
    if isinstance(basis, ExcitationBasis):
        if basis.excitation_number != n:
            raise NoonError(f"basis has M={basis.excitation_number}, target needs {n}")
        space = TruncatedSpace(basis.layout, n)
    elif isinstance(basis, TruncatedSpace):
        if basis.max_excitation < n:
            raise NoonError(f"space truncated at M={basis.max_excitation} < {n}")
        space = basis
    else:
        raise TypeError("basis must be an ExcitationBasis or TruncatedSpace")
    for s in target.left + target.right:
        space.layout.slot_position(s)
    vec = (_group_state(space, target.left, n)
           + np.exp(1j * target.phase) * _group_state(space, target.right, n)) / math.sqrt(2)
    if isinstance(basis, ExcitationBasis):
        return StateVector(vec[space.sector_slice(n)], basis)
    return vec


def _as_full(vec, space: TruncatedSpace | None):
    if isinstance(vec, StateVector):
        if space is None:
            return vec.amplitudes, vec.basis
        m = vec.basis.excitation_number
        if vec.basis.layout != space.layout:
            raise BasisError("state and target live on different layouts")
        return space.embed(vec.amplitudes, m), space
    return np.asarray(vec, dtype=complex), space


def fidelity_pure(state, target) -> float:
    """<Psi|rho|Psi> for a pure target, or |<Psi|psi>|^2 for an amplitude vector.

    Amplitude vectors are used as given (no renormalisation), so an
    unnormalised no-jump state yields the fidelity of the ensemble state.
    """
    if isinstance(state, DensityMatrix):
        psi, _ = _as_full(target, state.space)
        if psi.shape[0] != state.space.dim:
            raise BasisError("target and density matrix dimensions differ")
        val = np.vdot(psi, state.matrix @ psi).real
    elif isinstance(state, StateVector):
        if isinstance(target, StateVector):
            if target.basis.layout != state.basis.layout:
                raise BasisError("state and target live on different layouts")
            if target.basis.excitation_number != state.basis.excitation_number:
                return 0.0
            psi = target.amplitudes
        else:
            psi = np.asarray(target, dtype=complex)
        if psi.shape != state.amplitudes.shape:
            raise BasisError("target and state dimensions differ")
        val = abs(np.vdot(psi, state.amplitudes)) ** 2
    else:
        arr = np.asarray(state, dtype=complex)
        psi, _ = _as_full(target, None)
        if arr.ndim == 2:
            if arr.shape != (psi.shape[0], psi.shape[0]):
                raise BasisError("target and density matrix dimensions differ")
            val = np.vdot(psi, arr @ psi).real
        else:
            if arr.shape != psi.shape:
                raise BasisError("target and state dimensions differ")
            val = abs(np.vdot(psi, arr)) ** 2
    return float(np.clip(val, 0.0, 1.0))


def fidelity_series(evolution, target) -> np.ndarray:
    """``(n_times, 2)`` array of ``(t, F)`` for a propagation result."""
    if isinstance(evolution, NoJumpEvolution):
        psi = target.amplitudes if isinstance(target, StateVector) else np.asarray(target)
        if psi.shape[0] == evolution.space.dim:
            psi = psi[evolution.space.sector_slice(evolution.basis.excitation_number)]
        f = np.abs(evolution.amplitudes @ psi.conj()) ** 2
    elif isinstance(evolution, MasterEvolution):
        psi, _ = _as_full(target, evolution.space)
        f = np.einsum("i,kij,j->k", psi.conj(), evolution.rhos, psi).real
    else:
        times = [s.t for s in evolution]
        f = [fidelity_pure(s, target) for s in evolution]
        return np.column_stack([times, f])
    return np.column_stack([evolution.times, np.clip(f, 0.0, 1.0)])


def standard_targets(layout, photon_number: int, phase: float = 0.0) -> dict[str, NoonTarget]:
    """Emitter, cavity-mode and hybrid N00N targets splitting the network in half.

    Scheme I: the first half of the subsystems against the second half.
    Scheme II: the left ring (and its emitters) against the right ring.
    """
    ne, nm = layout.n_emitters, layout.n_modes
    if ne % 2 or nm % 2:
        raise NoonError("standard targets need an even split of emitters and modes")
    el, er = layout.emitter_slots[: ne // 2], layout.emitter_slots[ne // 2:]
    ml, mr = layout.mode_slots[: nm // 2], layout.mode_slots[nm // 2:]
    out = {
        "modes": NoonTarget(photon_number, ml, mr, phase),
        "hybrid": NoonTarget(photon_number, el + ml, er + mr, phase),
    }
    if photon_number <= len(el):
        out["emitters"] = NoonTarget(photon_number, el, er, phase)
    return out
