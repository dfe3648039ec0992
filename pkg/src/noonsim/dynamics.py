"""No-jump propagation, cascaded master-equation integration and reduced states."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .basis import BasisError, ExcitationBasis, SlotLayout, TruncatedSpace
from .model import OperatorSet

INTEGRATORS = ("rk45", "dop853", "rk4", "expm")
_SCIPY_METHODS = {"rk45": "RK45", "dop853": "DOP853"}


class IntegrationError(RuntimeError):
    pass


class PositivityError(IntegrationError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Uniform output sampling plus integrator settings."""

    t_start: float
    t_end: float
    n_points: int
    rtol: float = 1e-10
    atol: float = 1e-12
    method: str = "rk45"
    rk4_substeps: int = 50

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("a time grid needs at least two points")
        if not self.t_end > self.t_start:
            raise ValueError("time grid must be strictly increasing")
        if self.method not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.method!r}; choose from {INTEGRATORS}")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_points)

    @property
    def step(self) -> float:
        return (self.t_end - self.t_start) / (self.n_points - 1)


@dataclass
class StateVector:
    amplitudes: np.ndarray
    basis: ExcitationBasis
    t: float = 0.0

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


@dataclass
class DensityMatrix:
    matrix: np.ndarray
    space: TruncatedSpace
    t: float = 0.0

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def purity(self) -> float:
        return float(np.einsum("ij,ji->", self.matrix, self.matrix).real)

    def hermiticity_error(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])


@dataclass
class NoJumpEvolution:
    """Unnormalised conditional amplitudes on one excitation sector."""

    times: np.ndarray
    amplitudes: np.ndarray  # (n_times, sector_dim)
    basis: ExcitationBasis
    space: TruncatedSpace

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> StateVector:
        return StateVector(self.amplitudes[i], self.basis, float(self.times[i]))

    def states(self) -> list[StateVector]:
        return [self.state(i) for i in range(len(self.times))]

    @property
    def norms_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1)

    def to_csv(self, path, labels=None) -> None:
        """Write ``t, re_c1, im_c1, ...`` columns."""
        d = self.amplitudes.shape[1]
        names = labels or [f"c{k + 1}" for k in range(d)]
        header = ["t"] + [f"{p}_{n}" for n in names for p in ("re", "im")]
        cols = [self.times]
        for k in range(d):
            cols += [self.amplitudes[:, k].real, self.amplitudes[:, k].imag]
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header),
                   comments="", fmt="%.17g")


@dataclass
class MasterEvolution:
    times: np.ndarray
    rhos: np.ndarray  # (n_times, dim, dim)
    space: TruncatedSpace
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> DensityMatrix:
        return DensityMatrix(self.rhos[i], self.space, float(self.times[i]))

    def states(self) -> list[DensityMatrix]:
        return [self.state(i) for i in range(len(self.times))]


def _sector_of(space: TruncatedSpace, vec: np.ndarray) -> int:
    support = [m for m in range(space.max_excitation + 1)
               if np.any(vec[space.sector_slice(m)] != 0)]
    if len(support) != 1:
        raise BasisError(f"initial state must live in one excitation sector, found {support}")
    return support[0]


def _initial_sector_state(ops: OperatorSet, psi0) -> tuple[int, np.ndarray]:
    space = ops.space
    if isinstance(psi0, StateVector):
        m = psi0.basis.excitation_number
        if psi0.basis.layout != space.layout or m > space.max_excitation:
            raise BasisError("initial state basis does not match the operator space")
        vec = np.asarray(psi0.amplitudes, dtype=complex)
    else:
        vec = np.asarray(psi0, dtype=complex)
        if vec.shape == (space.dim,):
            m = _sector_of(space, vec)
            vec = vec[space.sector_slice(m)]
        else:
            raise BasisError("pass a StateVector or a full-space amplitude vector")
    if abs(np.vdot(vec, vec).real - 1.0) > 1e-10:
        raise ValueError("initial state must have unit norm")
    return m, vec


def _integrate_linear(h: np.ndarray, y0: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Solve dy/dt = -i h y on the grid; returns (n_times, dim)."""
    times = grid.times
    if not np.any(h):
        return np.tile(y0, (len(times), 1))
    if grid.method == "expm":
        step = expm(-1j * h * grid.step)
        out = np.empty((len(times), len(y0)), dtype=complex)
        out[0] = y0
        for k in range(1, len(times)):
            out[k] = step @ out[k - 1]
        return out
    if grid.method == "rk4":
        return _rk4(lambda y: -1j * (h @ y), y0, times, grid.rk4_substeps)
    mat = -1j * h
    sol = solve_ivp(lambda t, y: mat @ y, (times[0], times[-1]), y0,
                    method=_SCIPY_METHODS[grid.method], t_eval=times,
                    rtol=grid.rtol, atol=grid.atol)
    if not sol.success:
        raise IntegrationError(f"tolerance not met: {sol.message}")
    return sol.y.T


def _rk4(f, y0, times, substeps):
    out = np.empty((len(times), len(y0)), dtype=complex)
    out[0] = y = y0
    for k in range(1, len(times)):
        h = (times[k] - times[k - 1]) / substeps
        for _ in range(substeps):
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k] = y
    return out


def propagate_nojump(ops: OperatorSet, psi0, grid: TimeGrid) -> NoJumpEvolution:
    """Integrate i d|psi>/dt = H_nh |psi> from a unit-norm single-sector state."""
    m, vec = _initial_sector_state(ops, psi0)
    h = ops.sector_h_nh(m)
    amps = _integrate_linear(h, vec, grid)
    return NoJumpEvolution(grid.times, amps, ops.space.sector(m), ops.space)


def ground_population(state: StateVector) -> float:
    """Probability that the excitation has left through a detector: 1 - ||psi||^2."""
    return float(min(1.0, max(0.0, 1.0 - state.norm_sq)))


def assemble_density(state: StateVector, space: TruncatedSpace) -> DensityMatrix:
    """|psi><psi| + (1 - ||psi||^2) |vac><vac|.

    Exact for one excitation (every jump lands in the dark vacuum). For more
    excitations this two-branch form drops the partially jumped branches, which
    are orthogonal to any target carrying the full excitation number.
    """
    m = state.basis.excitation_number
    full = space.embed(state.amplitudes, m)
    rho = np.outer(full, full.conj())
    rho[space.vacuum_index, space.vacuum_index] += 1.0 - state.norm_sq
    return DensityMatrix(rho, space, state.t)


def assemble_density_single_excitation(state: StateVector, space: TruncatedSpace) -> DensityMatrix:
    if state.basis.excitation_number != 1:
        raise ValueError("expected a single-excitation no-jump state")
    return assemble_density(state, space)


def pure_density(ops: OperatorSet, psi0) -> DensityMatrix:
    m, vec = _initial_sector_state(ops, psi0)
    full = ops.space.embed(vec, m)
    return DensityMatrix(np.outer(full, full.conj()), ops.space)


def master_solve(ops: OperatorSet, rho0: DensityMatrix, grid: TimeGrid, eps_pos: float = 1e-8,
                 check_positivity: bool = True) -> MasterEvolution:
    """Integrate d rho/dt = -i(H_nh rho - rho H_nh^+) + sum_j J_j rho J_j^+.

    The right-hand side uses sparse products and only forms ``H_nh rho`` once,
    relying on rho staying Hermitian. The ``expm`` method instead
    exponentiates the dense Liouvillian. Trace, Hermiticity and the smallest
    eigenvalue are monitored at every output time; a negative eigenvalue below
    ``-eps_pos`` raises :class:`PositivityError`.
    """
    d = ops.space.dim
    r0 = np.asarray(rho0.matrix if isinstance(rho0, DensityMatrix) else rho0, dtype=complex)
    if r0.shape != (d, d):
        raise BasisError(f"density matrix must be {d}x{d}")
    if np.abs(r0 - r0.conj().T).max() > 1e-12:
        raise ValueError("initial density matrix must be Hermitian")
    times = grid.times

    if grid.method == "expm":
        h, js = ops.dense()
        step = expm(_liouvillian(h, js) * grid.step)
        ys = np.empty((len(times), d * d), dtype=complex)
        ys[0] = r0.reshape(-1)
        for k in range(1, len(times)):
            ys[k] = step @ ys[k - 1]
        rhos = ys.reshape(len(times), d, d)
    else:
        h = ops.h_nh.tocsr()
        js = [j.tocsr() for j in ops.jumps.values()]

        def rhs(y):
            # valid for Hermitian rho: H rho - rho H^+ = X - X^+ with X = H rho
            rho = y.reshape(d, d)
            x = h @ rho
            out = -1j * x
            out += 1j * x.conj().T
            for j in js:
                out += j @ (j @ rho).conj().T
            return out.reshape(-1)

        if grid.method == "rk4":
            ys = _rk4(rhs, r0.reshape(-1), times, grid.rk4_substeps)
        else:
            sol = solve_ivp(lambda t, y: rhs(y), (times[0], times[-1]), r0.reshape(-1),
                            method=_SCIPY_METHODS[grid.method], t_eval=times, rtol=grid.rtol,
                            atol=grid.atol)
            if not sol.success:
                raise IntegrationError(f"tolerance not met: {sol.message}")
            ys = sol.y.T
        rhos = ys.reshape(len(times), d, d)

    traces = np.einsum("kii->k", rhos)
    herm = np.abs(rhos - np.conj(np.transpose(rhos, (0, 2, 1)))).max(axis=(1, 2))
    min_eigs = np.array([np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0] for r in rhos])
    diag = {
        "max_trace_drift": float(np.abs(traces - traces[0]).max()),
        "max_trace_error": float(np.abs(traces - 1.0).max()),
        "max_hermiticity_error": float(herm.max()),
        "min_eigenvalue": float(min_eigs.min()),
    }
    if check_positivity and diag["min_eigenvalue"] < -eps_pos:
        k = int(np.argmin(min_eigs))
        raise PositivityError(
            f"density matrix lost positivity at t={times[k]:.6g}: "
            f"min eigenvalue {min_eigs[k]:.3e} < -{eps_pos:g}"
        )
    return MasterEvolution(times, rhos, ops.space, diag)


def _liouvillian(h, js):
    # row-major vectorisation: vec(A rho B) = (A kron B^T) vec(rho)
    d = h.shape[0]
    eye = np.eye(d)
    gen = -1j * (np.kron(h, eye) - np.kron(eye, h.conj()))
    for j in js:
        gen += np.kron(j, j.conj())
    return gen


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Trace out every slot not listed in ``keep``.

    The result lives on a :class:`TruncatedSpace` over the kept slots with the
    same excitation cut-off.
    """
    space = rho.space
    layout = space.layout
    keep = list(keep)
    unknown = [s for s in keep if s not in layout.slots]
    if unknown or len(set(keep)) != len(keep):
        raise BasisError(f"invalid slot set {keep}")
    keep_e = [i for i, s in enumerate(layout.emitter_slots) if s in keep]
    keep_m = [i for i, s in enumerate(layout.mode_slots) if s in keep]
    reduced_layout = SlotLayout(
        tuple(layout.emitter_slots[i] for i in keep_e),
        tuple(layout.mode_slots[i] for i in keep_m),
        layout.scheme_tag,
    )
    reduced = TruncatedSpace(reduced_layout, space.max_excitation)
    groups: dict[tuple, list[tuple[int, int]]] = {}
    for i, st in enumerate(space.states()):
        kept = (tuple(st.emitter_bits[k] for k in keep_e),
                tuple(st.mode_occupations[k] for k in keep_m))
        rest = (tuple(b for k, b in enumerate(st.emitter_bits) if k not in keep_e),
                tuple(n for k, n in enumerate(st.mode_occupations) if k not in keep_m))
        groups.setdefault(rest, []).append((i, reduced.global_index(kept)))
    out = np.zeros((reduced.dim, reduced.dim), dtype=complex)
    for members in groups.values():
        full_idx = np.array([a for a, _ in members])
        red_idx = np.array([b for _, b in members])
        out[np.ix_(red_idx, red_idx)] += rho.matrix[np.ix_(full_idx, full_idx)]
    return DensityMatrix(out, reduced, rho.t)


def partial_trace_modes(rho: DensityMatrix, keep=None) -> DensityMatrix:
    """Reduced emitter state: trace out all cavity modes (and unlisted emitters)."""
    emitters = rho.space.layout.emitter_slots
    keep = emitters if keep is None else tuple(keep)
    if any(s not in emitters for s in keep):
        raise BasisError(f"{keep} is not a set of emitter slots")
    return partial_trace(rho, keep)


def partial_trace_emitters(rho: DensityMatrix) -> DensityMatrix:
    return partial_trace(rho, rho.space.layout.mode_slots)
