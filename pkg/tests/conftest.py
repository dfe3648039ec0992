import numpy as np
import pytest

from noonsim.basis import state_from_slots
from noonsim.fidelity import build_noon_state, standard_targets
from noonsim.model import SchemeIConfig, build_operators

_VERDICTS: dict[str, list[tuple[bool, str]]] = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    _VERDICTS.setdefault(criterion, []).append((bool(passed), detail))


@pytest.fixture
def verdict():
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")

    def key(c):
        return int(c) if c.isdigit() else 99

    for crit in sorted(_VERDICTS, key=key):
        parts = _VERDICTS[crit]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {crit}: {detail}")


@pytest.fixture
def bell_setup():
    """Scheme I, two subsystems, emitter Bell state and cavity target."""

    def make(kappa=0.3, detuning=0.5, eta=0.0, gamma=0.0, g=1.0):
        cfg = SchemeIConfig.uniform(2, g=g, kappa=kappa, detuning=detuning, eta=eta, gamma=gamma)
        ops = build_operators(cfg, 1)
        targets = standard_targets(cfg.layout(), 1)
        psi0 = build_noon_state(targets["emitters"], ops.space.sector(1))
        return cfg, ops, psi0, targets

    return make


@pytest.fixture
def basis_vector():
    """Full-space unit vector with the listed slots singly occupied."""

    def make(space, slots):
        v = np.zeros(space.dim, dtype=complex)
        v[space.global_index(state_from_slots(space.layout, slots))] = 1.0
        return v

    return make
