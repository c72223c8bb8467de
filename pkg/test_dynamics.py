"""
Tests de la propagation: impulsions, évolution libre, trains et champ résolu
"""

import math

import numpy as np
import pytest

from dynamics import (DensityEnsemble, KickEvent, apply_kick, check_convergence, ensemble_populations,
                      evolve_free, initial_ensemble, kick_unitary, mirror_ensemble_check, propagate_field,
                      propagate_train, top_shell_population)
from errors import ConfigurationError, InvalidSpecError, UnsupportedOperationError
from pulse_forge import (PulseTrainDescriptor, TimeGrid, VectorField, chiral_train, double_kick_train,
                         gaussian_spectrum, to_temporal)
from rotor_core import PolarizationState, RotorSpec, WavePacket, build_basis, cos2_matrix

Z_AXIS = PolarizationState.along_axis()


@pytest.fixture(scope="module")
def spec():
    return RotorSpec()


@pytest.fixture(scope="module")
def basis(spec):
    return build_basis(spec)


def _single_kick(strength, pol=Z_AXIS, time=0.0):
    return PulseTrainDescriptor((KickEvent(time, strength, pol),), tau=0.0)


def _shell_population(ens, basis, j):
    populations = ensemble_populations(ens)
    return float(np.sum(populations[basis.shell_indices(j)]))


def test_initial_ensemble_single_level(spec, basis):
    ens = initial_ensemble(spec, basis)
    assert len(ens.members) == 3
    assert ens.weights == pytest.approx((1 / 3, 1 / 3, 1 / 3))
    assert ens.expectation(cos2_matrix(basis, Z_AXIS)) == pytest.approx(1 / 3, abs=1e-12)


def test_initial_ensemble_vibrational_mixture():
    spec = RotorSpec(b_rot={0: 0.227, 1: 0.22}, vib_weights={0: 0.8, 1: 0.2})
    ens = initial_ensemble(spec, build_basis(spec))
    assert len(ens.members) == 6
    assert sorted(ens.weights) == pytest.approx([0.2 / 3] * 3 + [0.8 / 3] * 3)
    assert {psi.vib_label for _, psi in ens.members} == {0, 1}


def test_initial_ensemble_requires_j1(spec):
    basis = build_basis(RotorSpec(j_max=4, j_parity="even"))
    with pytest.raises(InvalidSpecError):
        initial_ensemble(RotorSpec(j_max=4, j_parity="even"), basis)


def test_ensemble_weights_must_sum_to_one(basis):
    psi = WavePacket.eigenstate(basis, 1, 0)
    with pytest.raises(ConfigurationError):
        DensityEnsemble(((0.5, psi), (0.4, psi)))


def test_zero_kick_is_identity(basis):
    psi = WavePacket.eigenstate(basis, 1, 0)
    out = apply_kick(psi, KickEvent(0.0, 0.0, Z_AXIS), basis)
    assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-15)


def test_weak_kick_matches_first_order(basis):
    strength = 0.01
    psi = WavePacket.eigenstate(basis, 1, 0)
    out = apply_kick(psi, KickEvent(0.0, strength, Z_AXIS), basis)
    coupling = cos2_matrix(basis, Z_AXIS)[basis.index(3, 0), basis.index(1, 0)]
    expected = strength ** 2 * abs(coupling) ** 2
    assert abs(out.amplitudes[basis.index(3, 0)]) ** 2 == pytest.approx(expected, rel=1e-3)


def test_strong_kick_stays_unitary(basis):
    u = kick_unitary(basis, PolarizationState.linear_in_plane(0.4), 10.0)
    assert np.max(np.abs(u @ u.conj().T - np.eye(basis.dim))) < 1e-10


def test_kick_time_reversal(basis):
    pol = PolarizationState.linear_in_plane(1.0)
    psi = WavePacket.eigenstate(basis, 1, 1)
    forward = kick_unitary(basis, pol, 2.5) @ psi.amplitudes
    back = kick_unitary(basis, pol, -2.5) @ forward
    assert np.max(np.abs(back - psi.amplitudes)) < 1e-10


def test_kick_event_validation():
    with pytest.raises(ConfigurationError):
        KickEvent(0.0, -1.0, Z_AXIS)
    with pytest.raises(UnsupportedOperationError):
        KickEvent(0.0, 1.0, PolarizationState.circular_plus())


def test_evolve_free(spec, basis):
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index(1, 0)] = amps[basis.index(3, 0)] = 1 / math.sqrt(2)
    psi = WavePacket(amps)
    assert evolve_free(psi, 0.0, spec, basis) is psi

    twice = evolve_free(evolve_free(psi, 150.0, spec, basis), 150.0, spec, basis)
    once = evolve_free(psi, 300.0, spec, basis)
    assert np.max(np.abs(twice.amplitudes - once.amplitudes)) < 1e-12
    assert once.time_stamp == 300.0

    dt = 100.0
    out = evolve_free(psi, dt, spec, basis)
    coherence = out.amplitudes[basis.index(1, 0)] * np.conj(out.amplitudes[basis.index(3, 0)])
    expected = (2 * math.pi * 2.27e-3 * dt + math.pi) % (2 * math.pi) - math.pi
    assert np.angle(coherence) == pytest.approx(expected, abs=1e-10)
    assert out.norm() == pytest.approx(1.0, abs=1e-14)


def test_empty_train_leaves_ensemble_unchanged(spec, basis):
    ens = initial_ensemble(spec, basis)
    assert propagate_train(ens, PulseTrainDescriptor((), tau=0.0), spec, basis) is ens


def test_train_times_must_increase(spec, basis):
    ens = initial_ensemble(spec, basis)
    kicks = (KickEvent(10.0, 0.1, Z_AXIS), KickEvent(10.0, 0.1, Z_AXIS))
    with pytest.raises(ConfigurationError):
        propagate_train(ens, PulseTrainDescriptor(kicks, tau=0.0), spec, basis)


def test_train_ends_at_last_kick(spec, basis):
    ens = propagate_train(initial_ensemble(spec, basis), double_kick_train(440.0, 0.4), spec, basis)
    assert ens.time_stamp == pytest.approx(220.0)
    assert ens.total_norm() == pytest.approx(1.0, abs=1e-9)


def test_double_kick_quarter_period_cancels_excitation(spec, basis):
    single = propagate_train(initial_ensemble(spec, basis), _single_kick(0.01), spec, basis)
    double = propagate_train(initial_ensemble(spec, basis), double_kick_train(220.0, 0.02), spec, basis)
    assert _shell_population(double, basis, 3) < 0.01 * _shell_population(single, basis, 3)


def test_double_kick_half_period_quadruples_excitation(spec, basis):
    single = propagate_train(initial_ensemble(spec, basis), _single_kick(0.01), spec, basis)
    double = propagate_train(initial_ensemble(spec, basis), double_kick_train(440.0, 0.02), spec, basis)
    ratio = _shell_population(double, basis, 3) / _shell_population(single, basis, 3)
    assert ratio == pytest.approx(4.0, rel=0.01)


def test_axis_and_right_angle_kicks_keep_m_symmetry(spec, basis):
    kicks = (KickEvent(-300.0, 0.8, Z_AXIS),
             KickEvent(0.0, 0.7, PolarizationState.linear_in_plane(0.0)),
             KickEvent(250.0, 0.9, PolarizationState.linear_in_plane(math.pi / 2)))
    ens = propagate_train(initial_ensemble(spec, basis), PulseTrainDescriptor(kicks, tau=0.0), spec, basis)
    populations = ensemble_populations(ens)
    assert mirror_ensemble_check(populations, populations, basis) < 1e-10


def test_handedness_mirror_flips_m(spec, basis):
    train = chiral_train(330.0, math.radians(45.0), 2.6, 2.0)
    ens = propagate_train(initial_ensemble(spec, basis), train, spec, basis)
    mirrored = propagate_train(initial_ensemble(spec, basis), train.mirrored(), spec, basis)
    assert mirror_ensemble_check(ensemble_populations(ens), ensemble_populations(mirrored), basis) < 1e-10
    assert ens.total_norm() == pytest.approx(1.0, abs=1e-9)


def test_zero_field_matches_free_evolution(spec, basis):
    grid = TimeGrid(1024, 0.5)
    field = VectorField(grid, np.zeros((2, grid.points)))
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index(1, 0)] = amps[basis.index(3, 1)] = 1 / math.sqrt(2)
    ens = DensityEnsemble(((1.0, WavePacket(amps)),))
    out = propagate_field(ens, field, spec, basis)
    expected = evolve_free(ens.members[0][1], grid.times[-1], spec, basis)
    assert np.max(np.abs(out.members[0][1].amplitudes - expected.amplitudes)) < 1e-10


def test_short_pulse_matches_impulsive_kick(spec, basis):
    grid = TimeGrid(2048, 0.5)
    field = to_temporal(gaussian_spectrum(50.0, grid=grid)).scaled_to(1.0)
    geometry = (Z_AXIS, PolarizationState.linear_in_plane(0.0))
    resolved = propagate_field(initial_ensemble(spec, basis), field, spec, basis, geometry=geometry)
    impulsive = propagate_train(initial_ensemble(spec, basis), _single_kick(1.0), spec, basis)
    assert resolved.total_norm() == pytest.approx(1.0, abs=1e-9)
    diff = np.abs(ensemble_populations(resolved) - ensemble_populations(impulsive))
    assert np.max(diff) < 0.02


def test_field_step_must_resolve_sampling(spec, basis):
    grid = TimeGrid(1024, 1.0)
    field = to_temporal(gaussian_spectrum(50.0, grid=grid)).scaled_to(0.5)
    with pytest.raises(ConfigurationError):
        propagate_field(initial_ensemble(spec, basis), field, spec, basis, step=0.5)


def test_convergence_check(spec):
    small = build_basis(RotorSpec(j_max=3))
    weak = propagate_train(initial_ensemble(spec, small), _single_kick(0.001), spec, small)
    assert check_convergence(weak, small)
    strong = propagate_train(initial_ensemble(spec, small), _single_kick(5.0), spec, small)
    assert top_shell_population(strong, small) > 1e-6
    assert not check_convergence(strong, small)
