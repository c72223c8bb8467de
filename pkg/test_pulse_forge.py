"""
Tests du façonneur: spectre gaussien, masques, réduction en impulsions
"""

import math

import numpy as np
import pytest
from scipy.signal import find_peaks
from scipy.special import jv

from errors import ConfigurationError, ReductionUnavailableError, UnsupportedOperationError
from pulse_forge import (PulseTrainDescriptor, SpectralField, TimeGrid, apply_chiral_mask, apply_double_kick_mask,
                         chiral_train, cross_correlation, double_kick_train, gaussian_spectrum, polarization_trace,
                         synthesize_field, to_descriptor, to_spectral, to_temporal)
from rotor_core import PolarizationKind

GRID = TimeGrid(8192, 0.5)
ALPHA = math.radians(45.0)


def _fwhm(x, y):
    """Largeur à mi-hauteur par interpolation linéaire des deux flancs"""
    half = y.max() / 2
    above = np.flatnonzero(y >= half)
    lo, hi = above[0], above[-1]
    left = np.interp(half, [y[lo - 1], y[lo]], [x[lo - 1], x[lo]])
    right = np.interp(half, [y[hi + 1], y[hi]], [x[hi + 1], x[hi]])
    return right - left


@pytest.fixture(scope="module")
def spectrum():
    return gaussian_spectrum(50.0, grid=GRID)


@pytest.fixture(scope="module")
def chiral_field():
    return synthesize_field("chiral", 330.0, 1.0, ALPHA, 2.6, grid=GRID)


def test_transform_limited_pulse(spectrum):
    field = to_temporal(spectrum)
    assert field.energy() == pytest.approx(1.0, abs=1e-12)
    duration = _fwhm(field.times, field.intensity())
    assert duration == pytest.approx(50.0, rel=0.01)
    bandwidth = _fwhm(spectrum.omega, np.abs(spectrum.components[0]) ** 2) / (2 * math.pi)
    assert bandwidth * duration == pytest.approx(2 * math.log(2) / math.pi, rel=0.01)
    assert field.times[np.argmax(field.intensity())] == 0.0


def test_round_trip(spectrum):
    back = to_spectral(to_temporal(spectrum))
    assert np.max(np.abs(back.components - spectrum.components)) < 1e-10


@pytest.mark.parametrize("kwargs", [
    {"duration_fl": 0.0},
    {"duration_fl": 1.0},
    {"duration_fl": 600.0},
])
def test_gaussian_spectrum_rejects_bad_grids(kwargs):
    with pytest.raises(ConfigurationError):
        gaussian_spectrum(grid=GRID, **kwargs)


def test_time_grid_validation():
    with pytest.raises(ConfigurationError):
        TimeGrid(1001, 0.5)
    with pytest.raises(ConfigurationError):
        TimeGrid(1024, 0.0)
    assert TimeGrid(16, 1.0).times[0] == -8.0


def test_double_kick_mask_at_zero_delay(spectrum):
    masked = apply_double_kick_mask(spectrum, 0.0)
    assert np.array_equal(masked.components, spectrum.components)


def test_double_kick_mask_makes_two_equal_replicas(spectrum):
    field = to_temporal(apply_double_kick_mask(spectrum, 400.0))
    assert field.energy() == pytest.approx(0.5, abs=1e-9)
    train = to_descriptor(field)
    assert len(train.kicks) == 2
    first, second = train.kicks
    assert first.time == pytest.approx(-200.0, abs=0.01)
    assert second.time == pytest.approx(200.0, abs=0.01)
    assert first.strength == pytest.approx(second.strength, rel=1e-6)
    assert first.strength + second.strength == pytest.approx(0.5, rel=1e-6)
    assert train.tau == pytest.approx(400.0, abs=0.02)


def test_double_kick_mask_rejects_negative_delay(spectrum):
    with pytest.raises(ConfigurationError):
        apply_double_kick_mask(spectrum, -1.0)


def test_chiral_mask_without_modulation_is_identity(spectrum):
    out = apply_chiral_mask(spectrum, 330.0, ALPHA, 0.0)
    assert np.max(np.abs(out.components - spectrum.components)) < 1e-15


def test_chiral_mask_conserves_energy(spectrum):
    out = apply_chiral_mask(spectrum, 330.0, ALPHA, 2.6)
    assert out.energy() == pytest.approx(spectrum.energy(), rel=1e-12)


def test_chiral_mask_requires_x_polarised_input(spectrum):
    comps = np.array(spectrum.components)
    comps[1] = comps[0]
    with pytest.raises(ConfigurationError):
        apply_chiral_mask(SpectralField(GRID, comps), 330.0, ALPHA, 2.6)


def test_chiral_field_reduces_to_bessel_train(chiral_field):
    train = to_descriptor(chiral_field, threshold=0.02, alpha=ALPHA, mod_amp=2.6, tau=330.0)
    orders = [round(k.time / 330.0) for k in train.kicks]
    assert orders == list(range(-4, 5))
    for n, kick in zip(orders, train.kicks):
        assert kick.time == pytest.approx(n * 330.0, abs=0.05)
        assert kick.pol.kind is PolarizationKind.LINEAR_IN_PLANE
        expected = (n * ALPHA) % math.pi
        delta = (kick.pol.angle - expected + math.pi / 2) % math.pi - math.pi / 2
        assert abs(delta) < math.radians(1.0)
    strengths = {n: k.strength for n, k in zip(orders, train.kicks)}
    assert strengths[1] / strengths[2] == pytest.approx((jv(1, 2.6) / jv(2, 2.6)) ** 2, rel=0.02)
    for n in orders:
        assert math.sqrt(strengths[n]) == pytest.approx(abs(jv(n, 2.6)), rel=0.02)
    assert {round(t / 330.0) for t, _ in train.discarded} == {-5, 5}


def test_chiral_field_estimates_alpha(chiral_field):
    train = to_descriptor(chiral_field)
    assert train.alpha == pytest.approx(ALPHA, abs=math.radians(1.0))
    assert train.tau == pytest.approx(330.0, abs=0.1)


def test_opposite_handedness_flips_angles():
    plus = to_descriptor(synthesize_field("chiral", 330.0, 1.0, ALPHA, 2.6, grid=GRID))
    minus = to_descriptor(synthesize_field("chiral", 330.0, 1.0, -ALPHA, 2.6, grid=GRID))
    for a, b in zip(plus.kicks, minus.kicks):
        assert a.time == pytest.approx(b.time, abs=1e-6)
        assert a.strength == pytest.approx(b.strength, rel=1e-9)
        delta = (a.pol.angle + b.pol.angle + math.pi / 2) % math.pi - math.pi / 2
        assert abs(delta) < math.radians(1.0)


def test_overlapping_pulses_cannot_be_reduced(spectrum):
    field = to_temporal(apply_double_kick_mask(spectrum, 90.0))
    with pytest.raises(ReductionUnavailableError):
        to_descriptor(field)


def test_probe_axis_geometry(spectrum):
    field = to_temporal(apply_double_kick_mask(spectrum, 400.0))
    train = to_descriptor(field, geometry="probe-axis")
    assert all(k.pol.kind is PolarizationKind.LINEAR_ALONG_AXIS for k in train.kicks)
    with pytest.raises(UnsupportedOperationError):
        to_descriptor(synthesize_field("chiral", 330.0, 1.0, ALPHA, 2.6, grid=GRID), geometry="probe-axis")


def test_cross_correlation_width_and_positions(spectrum):
    field = to_temporal(apply_double_kick_mask(spectrum, 400.0))
    trace = cross_correlation(field, 50.0)
    peaks, _ = find_peaks(trace, height=0.5 * trace.max())
    assert field.times[peaks] == pytest.approx([-200.0, 200.0], abs=0.5)
    single = cross_correlation(to_temporal(spectrum), 50.0)
    assert _fwhm(field.times, single) == pytest.approx(math.sqrt(2) * 50.0, rel=0.01)


def test_polarization_trace_angles(chiral_field):
    times, intensity, angle = polarization_trace(chiral_field)
    for n in (-2, 1, 3):
        idx = int(np.argmin(np.abs(times - n * 330.0)))
        assert angle[idx] == pytest.approx((n * 45.0) % 180.0, abs=1.0)
    assert np.all((angle >= 0) & (angle < 180))
    assert intensity.sum() * chiral_field.dt == pytest.approx(1.0, rel=1e-9)


def test_double_kick_train():
    train = double_kick_train(440.0, 0.4)
    assert train.times == (-220.0, 220.0)
    assert [k.strength for k in train.kicks] == [0.2, 0.2]
    assert all(k.pol.kind is PolarizationKind.LINEAR_ALONG_AXIS for k in train.kicks)
    perpendicular = double_kick_train(440.0, 0.4, "perpendicular")
    assert perpendicular.kicks[0].pol.angle == 0.0
    with pytest.raises(ConfigurationError):
        double_kick_train(0.0, 0.4)


def test_chiral_train_analytic():
    train = chiral_train(330.0, ALPHA, 2.6, 2.0)
    assert len(train.kicks) == 9
    assert train.total_strength == pytest.approx(2.0)
    assert train.end_time == pytest.approx(4 * 330.0)
    weights = {round(k.time / 330.0): k.strength for k in train.kicks}
    assert weights[2] / weights[1] == pytest.approx((jv(2, 2.6) / jv(1, 2.6)) ** 2)
    assert weights[-3] == pytest.approx(weights[3])
    assert jv(2, 2.6) == pytest.approx(0.4590, abs=1e-4)


def test_chiral_train_mirror():
    train = chiral_train(330.0, ALPHA, 2.6, 2.0)
    mirrored = train.mirrored()
    assert mirrored.alpha == -ALPHA
    for a, b in zip(train.kicks, mirrored.kicks):
        delta = (a.pol.angle + b.pol.angle + math.pi / 2) % math.pi - math.pi / 2
        assert abs(delta) < 1e-12


def test_descriptor_serialisation():
    payload = chiral_train(330.0, ALPHA, 2.6, 2.0).to_dict()
    assert payload["tau_fs"] == 330.0
    assert payload["alpha_deg"] == pytest.approx(45.0)
    assert len(payload["kicks"]) == 9
    assert isinstance(PulseTrainDescriptor((), 0.0).to_dict()["kicks"], list)
