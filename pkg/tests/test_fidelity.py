import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noonsim.basis import TruncatedSpace, enumerate_basis, scheme1_layout, scheme2_layout
from noonsim.dynamics import DensityMatrix, TimeGrid, master_solve, propagate_nojump, pure_density
from noonsim.fidelity import (
    NoonError,
    NoonTarget,
    build_noon_state,
    fidelity_pure,
    fidelity_series,
    standard_targets,
)
from noonsim.model import SchemeIConfig, SchemeIIConfig, build_operators


def test_single_photon_emitter_bell_state():
    basis = enumerate_basis(scheme1_layout(2), 1)
    psi = build_noon_state(NoonTarget(1, ("s1",), ("s2",)), basis)
    labels = basis.labels()
    expected = np.zeros(6)
    expected[labels.index("|s1>")] = expected[labels.index("|s2>")] = 1 / np.sqrt(2)
    np.testing.assert_allclose(psi.amplitudes, expected)


def test_cavity_fidelity_is_quarter_of_mode_sum():
    basis = enumerate_basis(scheme1_layout(2), 1)
    target = build_noon_state(NoonTarget(1, ("a1", "a2"), ("a3", "a4")), basis)
    rng = np.random.default_rng(11)
    c = rng.normal(size=6) + 1j * rng.normal(size=6)
    c /= np.linalg.norm(c)
    labels = basis.labels()
    modes = sum(c[labels.index(f"|a{k}>")] for k in range(1, 5))
    assert fidelity_pure(c, target.amplitudes) == pytest.approx(abs(modes) ** 2 / 4)


def test_hybrid_fidelity_of_emitter_bell_is_one_third():
    basis = enumerate_basis(scheme1_layout(2), 1)
    targets = standard_targets(basis.layout, 1)
    bell = build_noon_state(targets["emitters"], basis)
    hybrid = build_noon_state(targets["hybrid"], basis)
    assert fidelity_pure(bell, hybrid) == pytest.approx(1 / 3)


def test_opposite_phase_is_orthogonal():
    basis = enumerate_basis(scheme1_layout(2), 1)
    plus = build_noon_state(NoonTarget(1, ("s1",), ("s2",)), basis)
    minus = build_noon_state(NoonTarget(1, ("s1",), ("s2",), np.pi), basis)
    assert fidelity_pure(plus, minus) == pytest.approx(0.0, abs=1e-15)


def test_two_photon_two_mode_group_amplitudes():
    layout = scheme2_layout(1)
    basis = enumerate_basis(layout, 2)
    psi = build_noon_state(NoonTarget(2, ("a1", "a2"), ("a3", "a4")), basis).amplitudes
    lab = basis.labels()
    arm = np.array([psi[lab.index(k)] for k in ("|a1^2>", "|a1,a2>", "|a2^2>")])
    # each arm carries weight 1/sqrt(2) in the N00N superposition
    expected = np.array([np.sqrt(2), 2, np.sqrt(2)]) / (2 * np.sqrt(2))
    np.testing.assert_allclose(arm * np.sqrt(2), expected)


def test_target_validation():
    with pytest.raises(NoonError):
        NoonTarget(0, ("s1",), ("s2",))
    with pytest.raises(NoonError):
        NoonTarget(1, ("s1",), ("s1", "a1"))
    with pytest.raises(NoonError):
        NoonTarget(1, (), ("s1",))
    basis = enumerate_basis(scheme1_layout(2), 2)
    with pytest.raises(NoonError):
        build_noon_state(NoonTarget(2, ("s1",), ("s2",)), basis)
    with pytest.raises(NoonError):
        build_noon_state(NoonTarget(1, ("s1",), ("s2",)), basis)


def test_grouping_modes_and_round_trip():
    layout = scheme1_layout(2)
    t = standard_targets(layout, 1)
    assert t["emitters"].grouping_mode(layout) == "emitters_only"
    assert t["modes"].grouping_mode(layout) == "modes_only"
    assert t["hybrid"].grouping_mode(layout) == "hybrid"
    assert NoonTarget.from_dict(t["hybrid"].to_dict()) == t["hybrid"]
    assert "emitters" not in standard_targets(layout, 2)


slot_groups = st.permutations(["s1", "s2", "s3", "s4", "a1", "a2", "a3", "a4"]).flatmap(
    lambda p: st.tuples(st.integers(1, 4), st.integers(1, 4)).map(
        lambda k: (tuple(p[: k[0]]), tuple(p[k[0]: k[0] + k[1]]))))


@settings(max_examples=40, deadline=None)
@given(slot_groups, st.integers(1, 2), st.floats(-7, 7))
def test_targets_have_unit_norm(groups, n, phase):
    left, right = groups
    space = TruncatedSpace(scheme2_layout(2), 2)
    try:
        vec = build_noon_state(NoonTarget(n, left, right, phase), space)
    except NoonError:
        assert n == 2 and (len(left) == 1 and left[0][0] == "s" or
                           len(right) == 1 and right[0][0] == "s")
        return
    assert np.linalg.norm(vec) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_global_phase_and_two_pi_invariance(theta, phi):
    basis = enumerate_basis(scheme1_layout(2), 1)
    rng = np.random.default_rng(5)
    c = rng.normal(size=6) + 1j * rng.normal(size=6)
    c /= np.linalg.norm(c)
    t1 = build_noon_state(NoonTarget(1, ("a1", "a2"), ("a3", "a4"), phi), basis)
    t2 = build_noon_state(NoonTarget(1, ("a1", "a2"), ("a3", "a4"), phi + 2 * np.pi), basis)
    f = fidelity_pure(c, t1.amplitudes)
    assert fidelity_pure(np.exp(1j * theta) * c, t1.amplitudes) == pytest.approx(f, abs=1e-14)
    assert fidelity_pure(c, t2.amplitudes) == pytest.approx(f, abs=1e-14)
    assert 0.0 <= f <= 1.0


def test_density_matrix_limits():
    space = TruncatedSpace(scheme1_layout(2), 1)
    psi = build_noon_state(NoonTarget(1, ("s1",), ("s2",)), space)
    assert fidelity_pure(DensityMatrix(np.outer(psi, psi.conj()), space), psi) == pytest.approx(1)
    vac = np.zeros((space.dim, space.dim), dtype=complex)
    vac[0, 0] = 1
    assert fidelity_pure(DensityMatrix(vac, space), psi) == 0.0
    with pytest.raises(ValueError):
        fidelity_pure(np.eye(3), psi)


def test_nojump_and_master_fidelity_agree_for_two_photons():
    cfg = SchemeIIConfig.uniform(2, kappa=0.5, detuning=0.5, eta=0.4, xi=0.5)
    ops = build_operators(cfg, 2)
    targets = standard_targets(cfg.layout(), 2)
    psi0 = build_noon_state(targets["emitters"], ops.space.sector(2))
    target = build_noon_state(targets["modes"], ops.space)
    grid = TimeGrid(0.0, 4.0, 41)
    a = fidelity_series(propagate_nojump(ops, psi0, grid), target)
    b = fidelity_series(master_solve(ops, pure_density(ops, psi0), grid), target)
    np.testing.assert_allclose(a[:, 0], grid.times)
    np.testing.assert_allclose(a[:, 1], b[:, 1], atol=1e-8)


def test_series_over_state_list(bell_setup):
    _, ops, psi0, targets = bell_setup()
    evo = propagate_nojump(ops, psi0, TimeGrid(0.0, 2.0, 5))
    target = build_noon_state(targets["modes"], ops.space.sector(1))
    fast = fidelity_series(evo, target)
    slow = fidelity_series(evo.states(), target)
    np.testing.assert_allclose(fast, slow, atol=1e-15)
    assert np.all(np.diff(fast[:, 0]) > 0)


def test_mirror_symmetry_of_uniform_array(basis_vector):
    # reversing the array maps s1 <-> s2, a1 <-> a4, a2 <-> a3
    cfg = SchemeIConfig.uniform(2, kappa=0.6, detuning=0.5, eta=0.3)
    ops = build_operators(cfg, 1)
    target = build_noon_state(NoonTarget(1, ("a1", "a2"), ("a3", "a4")), ops.space)
    mirrored = build_noon_state(NoonTarget(1, ("a4", "a3"), ("a2", "a1")), ops.space)
    grid = TimeGrid(0.0, 6.0, 61)
    f1 = fidelity_series(propagate_nojump(ops, basis_vector(ops.space, ["s1"]), grid), target)
    f2 = fidelity_series(propagate_nojump(ops, basis_vector(ops.space, ["s2"]), grid), mirrored)
    np.testing.assert_allclose(f1, f2, atol=1e-10)
