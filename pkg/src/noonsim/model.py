"""Hamiltonians and jump operators for the two ring-resonator architectures.

Units: hbar = 1. Frequencies are absolute in the config; the Hamiltonian is
written in a frame rotating at ``frame`` (default: the first cavity frequency),
so only frequency differences enter the dynamics.

Both architectures share one dissipative structure: every fiber direction is a
*chain* of cavity modes listed from upstream to downstream. A chain with modes
``(b_1, k_1), (b_2, k_2), ...`` contributes the collective jump operator
``J = sum_k sqrt(k_k) b_k`` and, in the no-jump Hamiltonian, the local decay
``-i/2 k_k b_k^+ b_k`` plus the one-way feed ``-i sqrt(k_u k_d) b_d^+ b_u`` for
every upstream/downstream pair ``u < d``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .basis import SCHEME_I, SCHEME_II, SlotLayout, TruncatedSpace, scheme1_layout, scheme2_layout

CAVITY_MINUS_EMITTER = "cavity_minus_emitter"
EMITTER_MINUS_CAVITY = "emitter_minus_cavity"


class ConfigError(ValueError):
    pass


class ModelError(ValueError):
    pass


def _to_complex(x) -> complex:
    if isinstance(x, str):
        return complex(x.replace(" ", ""))
    return complex(x)


def _complex_out(z: complex):
    z = complex(z)
    return z.real if z.imag == 0 else repr(z).strip("()")


def _per_site(value, n: int, name: str, cast=float) -> tuple:
    if isinstance(value, (list, tuple)):
        if len(value) != n:
            raise ConfigError(f"{name}: expected {n} entries, got {len(value)}")
        return tuple(cast(v) for v in value)
    return tuple(cast(value) for _ in range(n))


def _check_rates(**rates):
    for name, vals in rates.items():
        for v in np.atleast_1d(vals):
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and non-negative, got {v}")


def detuned_frequencies(detuning: float,
                        convention: str = CAVITY_MINUS_EMITTER) -> tuple[float, float]:
    """Return ``(omega_eg, omega_c)`` with the cavity at zero for a given detuning."""
    if convention == CAVITY_MINUS_EMITTER:
        return -detuning, 0.0
    if convention == EMITTER_MINUS_CAVITY:
        return detuning, 0.0
    raise ConfigError(f"unknown detuning convention {convention!r}")


@dataclass(frozen=True)
class SchemeIConfig:
    """Bidirectionally cascaded array of ``n`` emitter-ring subsystems."""

    n: int
    omega_eg: tuple[float, ...]
    omega_c: tuple[float, ...]
    g: tuple[complex, ...]
    kappa_odd: tuple[float, ...]
    kappa_even: tuple[float, ...]
    eta: tuple[float, ...]
    gamma: tuple[float, ...]
    frame: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        for name in ("omega_eg", "omega_c", "g", "kappa_odd", "kappa_even", "eta", "gamma"):
            if len(getattr(self, name)) != self.n:
                raise ConfigError(f"{name}: expected {self.n} entries")
        _check_rates(kappa_odd=self.kappa_odd, kappa_even=self.kappa_even, gamma=self.gamma)

    scheme = SCHEME_I

    @classmethod
    def uniform(cls, n: int, g=1.0, kappa: float = 0.0, detuning: float = 0.0, eta: float = 0.0,
                gamma: float = 0.0, convention: str = CAVITY_MINUS_EMITTER) -> "SchemeIConfig":
        w_eg, w_c = detuned_frequencies(detuning, convention)
        return cls(n, (w_eg,) * n, (w_c,) * n, (_to_complex(g),) * n, (float(kappa),) * n,
                   (float(kappa),) * n, (float(eta),) * n, (float(gamma),) * n)

    @classmethod
    def from_dict(cls, d: dict) -> "SchemeIConfig":
        d = dict(d)
        n = int(d.pop("n"))
        conv = d.pop("detuning_convention", CAVITY_MINUS_EMITTER)
        if "detuning" in d:
            w_eg, w_c = detuned_frequencies(float(d.pop("detuning")), conv)
            d.setdefault("omega_eg", w_eg)
            d.setdefault("omega_c", w_c)
        kappa = d.pop("kappa", 0.0)
        kw = dict(
            omega_eg=_per_site(d.pop("omega_eg", 0.0), n, "omega_eg"),
            omega_c=_per_site(d.pop("omega_c", 0.0), n, "omega_c"),
            g=_per_site(d.pop("g", 1.0), n, "g", _to_complex),
            kappa_odd=_per_site(d.pop("kappa_odd", kappa), n, "kappa_odd"),
            kappa_even=_per_site(d.pop("kappa_even", kappa), n, "kappa_even"),
            eta=_per_site(d.pop("eta", 0.0), n, "eta"),
            gamma=_per_site(d.pop("gamma", 0.0), n, "gamma"),
            frame=d.pop("frame", None),
        )
        if d:
            raise ConfigError(f"unknown scheme I keys: {sorted(d)}")
        return cls(n, **kw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["scheme"] = "I"
        out["g"] = [_complex_out(z) for z in self.g]
        for k in ("omega_eg", "omega_c", "kappa_odd", "kappa_even", "eta", "gamma"):
            out[k] = list(out[k])
        if self.frame is None:
            del out["frame"]
        return out

    @property
    def time_reversal_symmetric(self) -> bool:
        """All mode decay rates identical, as time-reversal symmetry requires."""
        rates = set(self.kappa_odd) | set(self.kappa_even)
        ok = len(rates) <= 1
        if not ok:
            warnings.warn("decay rates differ between modes; time-reversal symmetry is broken",
                          stacklevel=2)
        return ok

    def layout(self) -> SlotLayout:
        return scheme1_layout(self.n)

    def reference_frequency(self) -> float:
        return self.omega_c[0] if self.frame is None else float(self.frame)

    def scaled(self, s: float) -> "SchemeIConfig":
        """Multiply every frequency and rate by ``s`` (time then scales by 1/s)."""
        return SchemeIConfig(
            self.n,
            tuple(s * w for w in self.omega_eg),
            tuple(s * w for w in self.omega_c),
            tuple(s * z for z in self.g),
            tuple(s * k for k in self.kappa_odd),
            tuple(s * k for k in self.kappa_even),
            tuple(s * e for e in self.eta),
            tuple(s * y for y in self.gamma),
            None if self.frame is None else s * self.frame,
        )

    def chains(self) -> dict[str, list[tuple[str, float]]]:
        odd = [(f"a{2 * i + 1}", self.kappa_odd[i]) for i in range(self.n)]
        # the even direction runs from the last ring back to the first
        even = [(f"a{2 * i + 2}", self.kappa_even[i]) for i in reversed(range(self.n))]
        return {"J_o": odd, "J_e": even}

    def max_rate(self) -> float:
        return max(self.kappa_odd + self.kappa_even + self.gamma)


@dataclass(frozen=True)
class SchemeIIConfig:
    """Two fiber-coupled rings, each with ``n`` dipole-coupled emitters."""

    n: int
    omega_eg: float = 0.0
    omega_c1: float = 0.0
    omega_c2: float = 0.0
    g_L: complex = 1.0
    g_R: complex = 1.0
    eta_L: float = 0.0
    eta_R: float = 0.0
    xi_L: tuple[float, ...] = ()
    xi_R: tuple[float, ...] = ()
    kappa: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    gamma: float = 0.0
    frame: float | None = None

    scheme = SCHEME_II

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if len(self.xi_L) != self.n - 1 or len(self.xi_R) != self.n - 1:
            raise ConfigError(f"DDI lists need n-1 = {self.n - 1} entries per cavity")
        if len(self.kappa) != 4:
            raise ConfigError("kappa needs four entries (a1..a4)")
        _check_rates(kappa=self.kappa, gamma=self.gamma)

    @classmethod
    def uniform(cls, n: int, g=1.0, kappa: float = 0.0, detuning: float = 0.0, eta: float = 0.0,
                xi: float = 0.0, gamma: float = 0.0,
                convention: str = CAVITY_MINUS_EMITTER) -> "SchemeIIConfig":
        w_eg, w_c = detuned_frequencies(detuning, convention)
        g = _to_complex(g)
        return cls(n, w_eg, w_c, w_c, g, g, float(eta), float(eta), (float(xi),) * (n - 1),
                   (float(xi),) * (n - 1), (float(kappa),) * 4, float(gamma))

    @classmethod
    def from_dict(cls, d: dict) -> "SchemeIIConfig":
        d = dict(d)
        n = int(d.pop("n"))
        conv = d.pop("detuning_convention", CAVITY_MINUS_EMITTER)
        if "detuning" in d:
            w_eg, w_c = detuned_frequencies(float(d.pop("detuning")), conv)
            d.setdefault("omega_eg", w_eg)
            d.setdefault("omega_c1", w_c)
            d.setdefault("omega_c2", w_c)
        g = d.pop("g", None)
        eta = d.pop("eta", None)
        xi = d.pop("xi", None)
        kappa = d.pop("kappa", 0.0)
        kw = dict(
            omega_eg=float(d.pop("omega_eg", 0.0)),
            omega_c1=float(d.pop("omega_c1", 0.0)),
            omega_c2=float(d.pop("omega_c2", 0.0)),
            g_L=_to_complex(d.pop("g_L", 1.0 if g is None else g)),
            g_R=_to_complex(d.pop("g_R", 1.0 if g is None else g)),
            eta_L=float(d.pop("eta_L", 0.0 if eta is None else eta)),
            eta_R=float(d.pop("eta_R", 0.0 if eta is None else eta)),
            xi_L=_per_site(d.pop("xi_L", 0.0 if xi is None else xi), n - 1, "xi_L"),
            xi_R=_per_site(d.pop("xi_R", 0.0 if xi is None else xi), n - 1, "xi_R"),
            kappa=_per_site(kappa, 4, "kappa"),
            gamma=float(d.pop("gamma", 0.0)),
            frame=d.pop("frame", None),
        )
        if d:
            raise ConfigError(f"unknown scheme II keys: {sorted(d)}")
        return cls(n, **kw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["scheme"] = "II"
        out["g_L"] = _complex_out(self.g_L)
        out["g_R"] = _complex_out(self.g_R)
        for k in ("xi_L", "xi_R", "kappa"):
            out[k] = list(out[k])
        if self.frame is None:
            del out["frame"]
        return out

    @property
    def time_reversal_symmetric(self) -> bool:
        ok = len(set(self.kappa)) <= 1
        if not ok:
            warnings.warn("decay rates differ between modes; time-reversal symmetry is broken",
                          stacklevel=2)
        return ok

    def layout(self) -> SlotLayout:
        return scheme2_layout(self.n)

    def reference_frequency(self) -> float:
        return self.omega_c1 if self.frame is None else float(self.frame)

    def scaled(self, s: float) -> "SchemeIIConfig":
        return SchemeIIConfig(
            self.n, s * self.omega_eg, s * self.omega_c1, s * self.omega_c2, s * self.g_L,
            s * self.g_R, s * self.eta_L, s * self.eta_R, tuple(s * x for x in self.xi_L),
            tuple(s * x for x in self.xi_R), tuple(s * k for k in self.kappa), s * self.gamma,
            None if self.frame is None else s * self.frame,
        )

    def chains(self) -> dict[str, list[tuple[str, float]]]:
        k1, k2, k3, k4 = self.kappa
        return {"J_o": [("a1", k1), ("a3", k3)], "J_e": [("a4", k4), ("a2", k2)]}

    def max_rate(self) -> float:
        return max(tuple(self.kappa) + (self.gamma,))

    @property
    def gamma_per_emitter(self) -> tuple[float, ...]:
        return (self.gamma,) * (2 * self.n)


def config_from_dict(d: dict):
    d = dict(d)
    scheme = str(d.pop("scheme", "I"))
    if scheme in ("I", "1", SCHEME_I):
        return SchemeIConfig.from_dict(d)
    if scheme in ("II", "2", SCHEME_II):
        return SchemeIIConfig.from_dict(d)
    raise ConfigError(f"unknown scheme {scheme!r}")


@dataclass
class OperatorSet:
    """Assembled operators on a :class:`TruncatedSpace` (sparse CSR, complex)."""

    space: TruncatedSpace
    h_sys: sparse.csr_matrix
    h_cascade: sparse.csr_matrix
    h_nh: sparse.csr_matrix
    jumps: dict[str, sparse.csr_matrix] = field(default_factory=dict)

    def sector_h_nh(self, m: int) -> np.ndarray:
        sl = self.space.sector_slice(m)
        return self.h_nh[sl, sl].toarray()

    def dense(self):
        """``(h_nh, [J...])`` as dense arrays on the whole space."""
        return self.h_nh.toarray(), [j.toarray() for j in self.jumps.values()]

    def jump_rate_operator(self) -> sparse.csr_matrix:
        """sum_j J_j^+ J_j."""
        out = sparse.csr_matrix((self.space.dim, self.space.dim), dtype=complex)
        for j in self.jumps.values():
            out = out + (j.conj().T @ j)
        return out.tocsr()


def _check_layout(cfg, space: TruncatedSpace):
    if space.layout != cfg.layout():
        raise ModelError(f"space layout {space.layout} does not match config "
                         f"({cfg.scheme}, n={cfg.n})")


def _zero(space):
    return sparse.csr_matrix((space.dim, space.dim), dtype=complex)


def _num(space, slot):
    return space.creator(slot) @ space.annihilator(slot)


def build_h_sys_scheme1(cfg: SchemeIConfig, space: TruncatedSpace) -> sparse.csr_matrix:
    _check_layout(cfg, space)
    ref = cfg.reference_frequency()
    h = _zero(space)
    for i in range(cfg.n):
        s = f"s{i + 1}"
        ao, ae = f"a{2 * i + 1}", f"a{2 * i + 2}"
        sig, sig_d = space.annihilator(s), space.creator(s)
        g = cfg.g[i]
        h = h + (cfg.omega_eg[i] - ref) * (sig_d @ sig)
        h = h + (cfg.omega_c[i] - ref) * (_num(space, ao) + _num(space, ae))
        # annihilators act first: the top sector has no room above it
        h = h + g * (space.creator(ao) @ sig) + np.conj(g) * (sig_d @ space.annihilator(ao))
        h = h + np.conj(g) * (space.creator(ae) @ sig) + g * (sig_d @ space.annihilator(ae))
        h = h + cfg.eta[i] * (space.creator(ao) @ space.annihilator(ae)
                              + space.creator(ae) @ space.annihilator(ao))
    return h.tocsr()


def build_h_sys_scheme2(cfg: SchemeIIConfig, space: TruncatedSpace) -> sparse.csr_matrix:
    _check_layout(cfg, space)
    ref = cfg.reference_frequency()
    h = _zero(space)
    h = h + (cfg.omega_c1 - ref) * (_num(space, "a1") + _num(space, "a2"))
    h = h + (cfg.omega_c2 - ref) * (_num(space, "a3") + _num(space, "a4"))
    cavities = [("L", cfg.g_L, cfg.eta_L, cfg.xi_L, "a1", "a2", 0),
                ("R", cfg.g_R, cfg.eta_R, cfg.xi_R, "a3", "a4", cfg.n)]
    cr, an = space.creator, space.annihilator
    for _, g, eta, xi, ao, ae, offset in cavities:
        slots = [f"s{offset + k + 1}" for k in range(cfg.n)]
        for s in slots:
            sig, sig_d = space.annihilator(s), space.creator(s)
            h = h + (cfg.omega_eg - ref) * (sig_d @ sig)
            h = h + g * (sig_d @ space.annihilator(ao)) + np.conj(g) * (space.creator(ao) @ sig)
            h = h + np.conj(g) * (sig_d @ space.annihilator(ae)) + g * (space.creator(ae) @ sig)
        for k, x in enumerate(xi):
            a, b = slots[k], slots[k + 1]
            h = h + x * (cr(a) @ an(b) + cr(b) @ an(a))
        h = h + eta * (cr(ao) @ an(ae) + cr(ae) @ an(ao))
    return h.tocsr()


def _emitter_gammas(cfg) -> list[tuple[str, float]]:
    gammas = cfg.gamma if isinstance(cfg, SchemeIConfig) else cfg.gamma_per_emitter
    return [(s, y) for s, y in zip(cfg.layout().emitter_slots, gammas)]


def build_jumps(cfg, space: TruncatedSpace) -> dict[str, sparse.csr_matrix]:
    """Collective fiber jumps ``J_o``, ``J_e`` and ``J_gamma_<slot>`` for gamma > 0."""
    _check_layout(cfg, space)
    jumps = {}
    for name, chain in cfg.chains().items():
        j = _zero(space)
        for slot, k in chain:
            j = j + math.sqrt(k) * space.annihilator(slot)
        jumps[name] = j.tocsr()
    for slot, y in _emitter_gammas(cfg):
        if y > 0:
            jumps[f"J_gamma_{slot}"] = (math.sqrt(y) * space.annihilator(slot)).tocsr()
    return jumps


build_jumps_scheme1 = build_jumps
build_jumps_scheme2 = build_jumps


def build_h_cascade(cfg, space: TruncatedSpace) -> sparse.csr_matrix:
    """Hermitian one-way coupling (i/2) sum_{u<d} sqrt(k_u k_d) (b_u^+ b_d - b_d^+ b_u)."""
    h = _zero(space)
    for chain in cfg.chains().values():
        for u in range(len(chain)):
            for d in range(u + 1, len(chain)):
                (su, ku), (sd, kd) = chain[u], chain[d]
                c = math.sqrt(ku * kd)
                h = h + 0.5j * c * (space.creator(su) @ space.annihilator(sd)
                                    - space.creator(sd) @ space.annihilator(su))
    return h.tocsr()


def build_h_nh(cfg, space: TruncatedSpace, h_sys=None) -> sparse.csr_matrix:
    """No-jump Hamiltonian: local decay plus strictly one-way feeds along each chain."""
    if h_sys is None:
        h_sys = build_h_sys(cfg, space)
    h = h_sys.copy().astype(complex)
    for chain in cfg.chains().values():
        for slot, k in chain:
            h = h - 0.5j * k * _num(space, slot)
        for u in range(len(chain)):
            for d in range(u + 1, len(chain)):
                (su, ku), (sd, kd) = chain[u], chain[d]
                h = h - 1j * math.sqrt(ku * kd) * (space.creator(sd) @ space.annihilator(su))
    for slot, y in _emitter_gammas(cfg):
        if y > 0:
            h = h - 0.5j * y * _num(space, slot)
    return h.tocsr()


def build_h_sys(cfg, space):
    if isinstance(cfg, SchemeIConfig):
        return build_h_sys_scheme1(cfg, space)
    if isinstance(cfg, SchemeIIConfig):
        return build_h_sys_scheme2(cfg, space)
    raise ModelError(f"unsupported config type {type(cfg).__name__}")


def build_operators(cfg, max_excitation: int) -> OperatorSet:
    space = TruncatedSpace(cfg.layout(), max_excitation)
    h_sys = build_h_sys(cfg, space)
    return OperatorSet(
        space=space,
        h_sys=h_sys,
        h_cascade=build_h_cascade(cfg, space),
        h_nh=build_h_nh(cfg, space, h_sys),
        jumps=build_jumps(cfg, space),
    )


def master_rhs(ops: OperatorSet, rho: np.ndarray) -> np.ndarray:
    """-i (H_nh rho - rho H_nh^+) + sum_j J_j rho J_j^+ (dense)."""
    h = ops.h_nh.toarray()
    out = -1j * (h @ rho - rho @ h.conj().T)
    for j in ops.jumps.values():
        jd = j.toarray()
        out += jd @ rho @ jd.conj().T
    return out


def cascaded_master_rhs(cfg, space: TruncatedSpace, rho: np.ndarray) -> np.ndarray:
    """Master-equation generator written term by term in cascaded form.

    -i[H_sys, rho] + sum_k k_k D[b_k] rho + sum_gamma D[sigma] rho
    + sum_{u<d} sqrt(k_u k_d) ([b_u rho, b_d^+] + [b_d, rho b_u^+]).

    Built without collective jump operators; used to cross-check
    :func:`master_rhs`.
    """
    h = build_h_sys(cfg, space).toarray()
    out = -1j * (h @ rho - rho @ h)

    def dissipator(op, rate):
        od = op.conj().T
        return rate * (op @ rho @ od - 0.5 * (od @ op @ rho + rho @ od @ op))

    for chain in cfg.chains().values():
        for slot, k in chain:
            out += dissipator(space.annihilator(slot).toarray(), k)
        for u in range(len(chain)):
            for d in range(u + 1, len(chain)):
                (su, ku), (sd, kd) = chain[u], chain[d]
                bu, bd = space.annihilator(su).toarray(), space.annihilator(sd).toarray()
                c = math.sqrt(ku * kd)
                bu_r = bu @ rho
                r_bud = rho @ bu.conj().T
                out += c * ((bu_r @ bd.conj().T - bd.conj().T @ bu_r) + (bd @ r_bud - r_bud @ bd))
    for slot, y in _emitter_gammas(cfg):
        if y > 0:
            out += dissipator(space.annihilator(slot).toarray(), y)
    return out


def amplitude_generator(ops: OperatorSet, m: int) -> np.ndarray:
    """Matrix ``A`` of the amplitude equations dc/dt = A c in sector ``m``."""
    return -1j * ops.sector_h_nh(m)


def dump_dense(matrix) -> list[list[list[float]]]:
    """Row-major ``[[re, im], ...]`` nesting for JSON export."""
    arr = matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix)
    return [[[float(z.real), float(z.imag)] for z in row] for row in arr]


def with_params(cfg, **updates):
    """Rebuild a config with selected scalar parameters replaced.

    Accepts the sweepable names ``g``, ``kappa``, ``detuning``, ``eta``, ``xi``,
    ``gamma`` (applied uniformly) plus any raw field name.
    """
    d = cfg.to_dict()
    d.pop("scheme")
    conv = updates.pop("detuning_convention", CAVITY_MINUS_EMITTER)
    if isinstance(cfg, SchemeIConfig):
        n = cfg.n
        for key, val in updates.items():
            if key == "kappa":
                d["kappa_odd"] = d["kappa_even"] = [float(val)] * n
            elif key == "detuning":
                w_eg, w_c = detuned_frequencies(float(val), conv)
                d["omega_eg"], d["omega_c"] = [w_eg] * n, [w_c] * n
            elif key in ("g", "eta", "gamma", "omega_eg", "omega_c"):
                d[key] = val if isinstance(val, (list, tuple)) else [val] * n
            elif key in d:
                d[key] = val
            else:
                raise ConfigError(f"scheme I has no parameter {key!r}")
        return SchemeIConfig.from_dict({"n": n, **{k: v for k, v in d.items() if k != "n"}})
    n = cfg.n
    for key, val in updates.items():
        if key == "kappa":
            d["kappa"] = [float(val)] * 4
        elif key == "detuning":
            w_eg, w_c = detuned_frequencies(float(val), conv)
            d["omega_eg"], d["omega_c1"], d["omega_c2"] = w_eg, w_c, w_c
        elif key == "g":
            d["g_L"] = d["g_R"] = val
        elif key == "eta":
            d["eta_L"] = d["eta_R"] = float(val)
        elif key == "xi":
            d["xi_L"] = d["xi_R"] = [float(val)] * (n - 1)
        elif key in d:
            d[key] = val
        else:
            raise ConfigError(f"scheme II has no parameter {key!r}")
    return SchemeIIConfig.from_dict({"n": n, **{k: v for k, v in d.items() if k != "n"}})


def sweepable(scheme_cfg) -> Sequence[str]:
    common = ["g", "kappa", "detuning", "eta", "gamma"]
    return common + (["xi"] if isinstance(scheme_cfg, SchemeIIConfig) else [])
