"""
Tests de la détection: opérateurs de sonde, dichroïsmes, extraction d'amplitude
"""

import math

import numpy as np
import pytest

from dynamics import initial_ensemble, propagate_train
from errors import ConfigurationError, ResolutionError, UnsupportedOperationError
from probelab import (AlignmentProxy, DichroismTrace, TwoPhoton, cd_pair, detection_operator, dichroism,
                      extract_coherence_amplitude, fourier_spectrum, ld_pair, lif_signal, make_model, population_map,
                      shell_populations, two_photon_amplitude, vibrational_amplitudes,
                      with_amplitude)
from pulse_forge import chiral_train, double_kick_train
from rotor_core import PolarizationState, RotorSpec, basis_for_shells, build_basis

NU_13 = 2.27
NU_35 = 18 * 0.227
DT_GRID = np.arange(11000.0, 17000.0 + 1e-9, 10.0)


@pytest.fixture(scope="module")
def spec():
    return RotorSpec(j_max=9)


@pytest.fixture(scope="module")
def basis(spec):
    return build_basis(spec)


@pytest.fixture(scope="module")
def kicked(spec, basis):
    return propagate_train(initial_ensemble(spec, basis), double_kick_train(440.0, 0.4), spec, basis)


@pytest.fixture(scope="module")
def chiral(spec, basis):
    train = chiral_train(330.0, math.radians(45.0), 2.6, 2.0)
    return propagate_train(initial_ensemble(spec, basis), train, spec, basis)


def _synthetic(values):
    ones = np.ones_like(values)
    return DichroismTrace("LD", DT_GRID, ones, ones, values)


@pytest.mark.parametrize("probe, allowed", [
    (PolarizationState.circular_plus(), {2}),
    (PolarizationState.circular_minus(), {-2}),
    (PolarizationState.along_axis(), {0}),
    (PolarizationState.linear_in_plane(0.3), {-2, 0, 2}),
])
def test_two_photon_amplitude_selection_rules(probe, allowed):
    basis = build_basis(RotorSpec(j_max=5))
    final = basis_for_shells([1, 3, 5, 7])
    amplitude = two_photon_amplitude(basis, probe)
    assert amplitude.shape == (final.dim, basis.dim)
    dm = final.m_array[:, None] - basis.m_array[None, :]
    forbidden = ~np.isin(dm, list(allowed))
    assert np.all(amplitude[forbidden] == 0)
    assert np.any(amplitude[~forbidden] != 0)


@pytest.mark.parametrize("probe", [
    PolarizationState.circular_plus(),
    PolarizationState.along_axis(),
    PolarizationState.linear_in_plane(1.2),
])
@pytest.mark.parametrize("weighting", ["dipole", "uniform"])
def test_detection_operator_is_hermitian_and_positive(basis, probe, weighting):
    op = detection_operator(basis, probe, TwoPhoton(weighting))
    assert np.array_equal(op, op.conj().T)
    assert not op.flags.writeable
    if weighting == "dipole":
        assert np.linalg.eigvalsh(op).min() > -1e-12


def test_make_model():
    assert make_model("two-photon") == TwoPhoton("dipole")
    assert make_model("two-photon", "uniform") == TwoPhoton("uniform")
    assert make_model("alignment") == AlignmentProxy()
    with pytest.raises(ConfigurationError):
        make_model("lock-in")
    with pytest.raises(ConfigurationError):
        TwoPhoton("flat")
    assert make_model("two-photon", branches=["S", "O"]).branches == ("O", "S")
    assert TwoPhoton().branches == ("Q", "S")
    for branches in (["P"], [], "QS", None):
        with pytest.raises(ConfigurationError):
            TwoPhoton(branches=branches)


def test_branch_mask_keeps_only_selected_shell_changes():
    basis = build_basis(RotorSpec(j_max=5))
    final = basis_for_shells([1, 3, 5, 7])
    probe = PolarizationState.circular_plus()
    full = two_photon_amplitude(basis, probe)
    masked = two_photon_amplitude(basis, probe, (0, 2))
    dj = final.j_array[:, None] - basis.j_array[None, :]
    kept = np.isin(dj, (0, 2))
    assert np.all(masked[~kept] == 0)
    assert np.array_equal(masked[kept], full[kept])
    assert np.any(full[dj == -2] != 0)


def test_unexcited_ensemble_gives_flat_signal_and_no_dichroism(spec, basis):
    ens = initial_ensemble(spec, basis)
    signal = lif_signal(ens, PolarizationState.along_axis(), TwoPhoton(), DT_GRID, spec, basis)
    assert np.all(signal > 0)
    assert np.ptp(signal) < 1e-12 * signal.max()
    trace = dichroism(ens, ld_pair(), TwoPhoton(), DT_GRID, spec, basis)
    assert np.max(np.abs(trace.values)) < 1e-12


def test_probe_before_train_end_is_rejected(spec, basis, kicked):
    with pytest.raises(ConfigurationError):
        lif_signal(kicked, PolarizationState.along_axis(), TwoPhoton(), np.array([0.0, 10.0]), spec, basis)


def test_ld_oscillates_at_coherence_frequency(spec, basis, kicked):
    trace = dichroism(kicked, ld_pair(), TwoPhoton(), DT_GRID, spec, basis)
    assert trace.kind == "LD"
    freqs, spectrum = fourier_spectrum(trace)
    peak = freqs[1 + np.argmax(spectrum[1:])]
    assert abs(peak - NU_13) <= freqs[1]
    assert np.all(np.abs(trace.values) <= 2)


def test_circular_probes_agree_on_m_symmetric_ensemble(spec, basis, kicked):
    plus = lif_signal(kicked, PolarizationState.circular_plus(), TwoPhoton(), DT_GRID, spec, basis)
    minus = lif_signal(kicked, PolarizationState.circular_minus(), TwoPhoton(), DT_GRID, spec, basis)
    assert np.max(np.abs(plus - minus)) < 1e-12 * plus.max()


def test_alignment_proxy_is_handedness_blind(spec, basis, chiral):
    with pytest.raises(UnsupportedOperationError):
        lif_signal(chiral, PolarizationState.circular_plus(), AlignmentProxy(), DT_GRID, spec, basis)
    trace = dichroism(chiral, cd_pair(), AlignmentProxy(strict=False), DT_GRID, spec, basis)
    assert np.max(np.abs(trace.values)) < 1e-12


def test_circular_operators_differ_with_default_branches(basis):
    plus = detection_operator(basis, PolarizationState.circular_plus(), TwoPhoton())
    minus = detection_operator(basis, PolarizationState.circular_minus(), TwoPhoton())
    assert np.max(np.abs(plus - minus)) > 1e-2 * np.max(np.abs(plus))


@pytest.mark.parametrize("model", [TwoPhoton(branches=("O", "Q", "S")), TwoPhoton("uniform")])
def test_closed_or_m_averaged_models_are_handedness_blind(spec, basis, chiral, model):
    trace = dichroism(chiral, cd_pair(), model, DT_GRID, spec, basis)
    assert np.max(np.abs(trace.values)) < 1e-12


def test_two_photon_cd_is_a_sizeable_fraction_of_ld(spec, basis, kicked, chiral):
    cd = with_amplitude(dichroism(chiral, cd_pair(), TwoPhoton(), DT_GRID, spec, basis), NU_13)
    ld = with_amplitude(dichroism(kicked, ld_pair(), TwoPhoton(), DT_GRID, spec, basis), NU_13)
    assert cd.kind == "CD"
    assert cd.magnitude > 1e-3 * ld.magnitude


def test_swapping_probe_handedness_negates_cd(spec, basis, chiral):
    plus = with_amplitude(dichroism(chiral, cd_pair(1), TwoPhoton(), DT_GRID, spec, basis), NU_13)
    minus = with_amplitude(dichroism(chiral, cd_pair(-1), TwoPhoton(), DT_GRID, spec, basis), NU_13)
    assert np.array_equal(plus.values, -minus.values)
    assert minus.z == pytest.approx(-plus.z, abs=1e-15)
    shift = (np.angle(plus.z) - np.angle(minus.z)) % (2 * math.pi)
    assert shift == pytest.approx(math.pi, abs=1e-6)


def test_handedness_flip_of_train_negates_cd(spec, basis):
    train = chiral_train(330.0, math.radians(45.0), 2.6, 2.0)
    ens = propagate_train(initial_ensemble(spec, basis), train, spec, basis)
    flipped = propagate_train(initial_ensemble(spec, basis), train.mirrored(), spec, basis)
    a = dichroism(ens, cd_pair(), TwoPhoton(), DT_GRID, spec, basis)
    b = dichroism(flipped, cd_pair(), TwoPhoton(), DT_GRID, spec, basis)
    assert np.max(np.abs(a.values + b.values)) < 1e-10


def test_mixed_or_identical_pairs_are_rejected(spec, basis, kicked):
    with pytest.raises(ConfigurationError):
        dichroism(kicked, (PolarizationState.along_axis(), PolarizationState.circular_plus()), TwoPhoton(),
                  DT_GRID, spec, basis)
    with pytest.raises(ConfigurationError):
        dichroism(kicked, (PolarizationState.along_axis(), PolarizationState.along_axis()), TwoPhoton(),
                  DT_GRID, spec, basis)


def test_parallel_and_perpendicular_signals_in_antiphase(spec, basis, kicked):
    model = AlignmentProxy()
    parallel, perpendicular = ld_pair("parallel")
    i_par = lif_signal(kicked, parallel, model, DT_GRID, spec, basis)
    i_perp = lif_signal(kicked, perpendicular, model, DT_GRID, spec, basis)
    # cos²θx + cos²θy + cos²θz = 1 et symétrie en M: I⊥ = (1 - I∥)/2
    assert np.max(np.abs(i_perp - (1 - i_par) / 2)) < 1e-12
    assert np.corrcoef(i_par, i_perp)[0, 1] < -0.999


def test_extract_unit_cosine():
    phase = 0.7
    values = np.cos(2 * math.pi * NU_13 * 1e-3 * DT_GRID - phase)
    z, signed = extract_coherence_amplitude(_synthetic(values), NU_13, phi_ref=phase)
    assert abs(z) == pytest.approx(1.0, rel=0.02)
    assert np.angle(z) == pytest.approx(phase, abs=0.02)
    assert signed == pytest.approx(1.0, rel=0.02)


def test_extract_constant_is_zero():
    z, signed = extract_coherence_amplitude(_synthetic(np.full(DT_GRID.size, 0.3)), NU_13)
    assert abs(z) < 1e-12
    assert abs(signed) < 1e-12


def test_extract_needs_enough_periods():
    grid = np.arange(11000.0, 11500.0, 10.0)
    ones = np.ones_like(grid)
    with pytest.raises(ResolutionError):
        extract_coherence_amplitude(DichroismTrace("LD", grid, ones, ones, ones), NU_13)


def test_extract_needs_uniform_grid():
    grid = DT_GRID.copy()
    grid[10] += 3.0
    ones = np.ones_like(grid)
    with pytest.raises(ConfigurationError):
        extract_coherence_amplitude(DichroismTrace("LD", grid, ones, ones, ones), NU_13)


def test_summary_fields():
    values = np.cos(2 * math.pi * NU_13 * 1e-3 * DT_GRID)
    summary = with_amplitude(_synthetic(values), NU_13).summary()
    assert set(summary) == {"kind", "nu_thz", "re_z", "im_z", "magnitude", "signed_value", "phi_ref"}
    assert summary["magnitude"] == pytest.approx(1.0, rel=0.02)


def test_weak_kick_spectrum_has_only_the_13_line():
    spec = RotorSpec(j_max=3)
    basis = build_basis(spec)
    ens = propagate_train(initial_ensemble(spec, basis), double_kick_train(440.0, 0.02), spec, basis)
    trace = dichroism(ens, ld_pair(), TwoPhoton(), DT_GRID, spec, basis)
    z13, _ = extract_coherence_amplitude(trace, NU_13)
    z35, _ = extract_coherence_amplitude(trace, NU_35)
    assert abs(z35) < 1e-3 * abs(z13)


def test_strong_kick_spectrum_shows_the_35_line():
    spec = RotorSpec(j_max=11)
    basis = build_basis(spec)
    ens = propagate_train(initial_ensemble(spec, basis), double_kick_train(440.0, 3.0), spec, basis)
    trace = dichroism(ens, ld_pair(), TwoPhoton(), DT_GRID, spec, basis)
    z13, _ = extract_coherence_amplitude(trace, NU_13)
    z35, _ = extract_coherence_amplitude(trace, NU_35)
    assert abs(z35) > 0.05 * abs(z13)


def test_vibrational_amplitudes_add_up_to_the_total():
    spec = RotorSpec(j_max=7, b_rot={0: 0.227, 1: 0.227}, vib_weights={0: 0.7, 1: 0.3})
    basis = build_basis(spec)
    ens = propagate_train(initial_ensemble(spec, basis), double_kick_train(440.0, 0.3), spec, basis)
    levels = vibrational_amplitudes(ens, ld_pair(), TwoPhoton(), DT_GRID, spec, basis)
    assert list(levels) == [0, 1]
    trace = dichroism(ens, ld_pair(), TwoPhoton(), DT_GRID, spec, basis)
    total, _ = extract_coherence_amplitude(trace, spec.nu_13(0))
    assert abs(levels[0] + levels[1] - total) < 1e-12 * abs(total)
    assert levels[1] / levels[0] == pytest.approx(0.3 / 0.7, rel=1e-9)


def test_vibrational_amplitudes_use_each_level_frequency():
    spec = RotorSpec(j_max=7, b_rot={0: 0.227, 1: 0.95 * 0.227}, vib_weights={0: 0.5, 1: 0.5})
    basis = build_basis(spec)
    ens = propagate_train(initial_ensemble(spec, basis), double_kick_train(440.0, 0.3), spec, basis)
    levels = vibrational_amplitudes(ens, ld_pair(), TwoPhoton(), DT_GRID, spec, basis)
    # à τ = 440 fs les deux niveaux sont proches du maximum de cohérence
    assert abs(levels[1]) == pytest.approx(abs(levels[0]), rel=0.1)


def test_population_map(spec, basis, kicked):
    initial = population_map(initial_ensemble(spec, basis), basis)
    assert len(initial) == basis.dim
    for j, m, p in initial:
        assert p == pytest.approx(1 / 3 if j == 1 else 0.0, abs=1e-15)
    table = population_map(kicked, basis)
    assert sum(p for _, _, p in table) == pytest.approx(1.0, abs=1e-9)
    shells = shell_populations(kicked, basis)
    assert set(shells) == set(basis.j_values)
    assert shells[3] > 0
