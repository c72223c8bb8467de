"""
Module pulse_forge: façonnage des trains d'impulsions

Chaîne de synthèse:
    spectre gaussien limité par transformée (50 fs, 793 nm)
    -> masque d'amplitude cos(Ωτ/2) (double impulsion)
       ou masques de phase φ1,2 = A sin(Ωτ ± α) sur les axes ±45° du SLM (train chiral)
    -> champ temporel vectoriel (deux composantes transverses x, y)
    -> réduction en descripteur d'impulsions impulsives (PulseTrainDescriptor)

Convention de Fourier: E(t) = Σ E(Ω) exp(-iΩt), Ω = ω - ω0. Les amplitudes
spectrales sont normalisées de sorte que Σ|E(Ω)|² = Σ|E(t)|² dt (énergie).
Un facteur exp(+iΩt0) décale donc l'impulsion en t = +t0.

Chaîne de Jones du train chiral (entrée polarisée selon x):
    projection sur u=(x+y)/√2 et w=(x-y)/√2, phases e^{iφ1}, e^{iφ2},
    lame quart d'onde: u -> (x - iy)/√2, w -> (x + iy)/√2.
La composante n du développement de Jacobi-Anger est alors polarisée
linéairement à l'angle n·α, au temps t = nτ, avec l'amplitude J_n(A).
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import fft as sfft
from scipy.signal import fftconvolve, find_peaks
from scipy.special import jv

from config import ShaperDefaults
from dynamics import KickEvent
from errors import ConfigurationError, ReductionUnavailableError, UnsupportedOperationError
from rotor_core import PolarizationState

# Configuration du logger
logger = logging.getLogger(__name__)

# Angle en dessous duquel une polarisation est considérée alignée sur un axe (rad)
AXIS_TOLERANCE_RAD = math.radians(1.0)


@dataclass(frozen=True)
class TimeGrid:
    """Grille temporelle centrée t_k = (k - N/2)·dt et sa grille conjuguée Ω"""

    points: int = ShaperDefaults.GRID_POINTS
    step: float = ShaperDefaults.GRID_STEP_FS

    def __post_init__(self):
        if self.points < 16 or self.points % 2:
            raise ConfigurationError(f"Nombre de points de grille invalide (pair, >= 16): {self.points}")
        if not (self.step > 0):
            raise ConfigurationError(f"Pas de grille invalide: {self.step}")

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.points) - self.points // 2) * self.step

    @property
    def omega(self) -> np.ndarray:
        return 2 * math.pi * (np.arange(self.points) - self.points // 2) / (self.points * self.step)

    @property
    def window(self) -> float:
        return self.points * self.step


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Champ spectral à deux composantes transverses sur la grille Ω = ω - ω0"""

    grid: TimeGrid
    components: np.ndarray
    center_nm: float = ShaperDefaults.CENTER_NM

    def __post_init__(self):
        comps = np.array(self.components, dtype=complex)
        if comps.shape != (2, self.grid.points):
            raise ConfigurationError(f"Composantes spectrales de forme {comps.shape}, attendu (2, {self.grid.points})")
        comps.flags.writeable = False
        object.__setattr__(self, "components", comps)

    @property
    def omega(self) -> np.ndarray:
        return self.grid.omega

    @property
    def center_omega(self) -> float:
        """ω0 en rad/fs"""
        return 2 * math.pi * 299.792458 / self.center_nm

    def energy(self) -> float:
        return float(np.sum(np.abs(self.components) ** 2))


@dataclass(frozen=True, eq=False)
class VectorField:
    """Enveloppe temporelle complexe à deux composantes (x, y) sur une grille uniforme"""

    grid: TimeGrid
    components: np.ndarray

    def __post_init__(self):
        comps = np.array(self.components, dtype=complex)
        if comps.shape != (2, self.grid.points):
            raise ConfigurationError(f"Composantes temporelles de forme {comps.shape}, attendu (2, {self.grid.points})")
        comps.flags.writeable = False
        object.__setattr__(self, "components", comps)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def dt(self) -> float:
        return self.grid.step

    def intensity(self) -> np.ndarray:
        return np.sum(np.abs(self.components) ** 2, axis=0)

    def energy(self) -> float:
        return float(np.sum(self.intensity()) * self.dt)

    def scaled_to(self, energy: float) -> "VectorField":
        """Champ renormalisé à l'énergie donnée (force d'impulsion totale)"""
        current = self.energy()
        if current <= 0:
            raise ConfigurationError("Impossible de renormaliser un champ nul")
        return VectorField(self.grid, self.components * math.sqrt(energy / current))


@dataclass(frozen=True)
class PulseTrainDescriptor:
    """
    Train d'impulsions impulsives

    Attributs:
        kicks: impulsions triées par temps croissant
        tau: période du train (fs)
        alpha: angle de rotation de la polarisation d'une impulsion à la suivante (rad)
        mod_amp: amplitude de modulation A des masques de phase (0 pour la double impulsion)
        discarded: impulsions écartées (temps en fs, intensité relative au maximum)
    """

    kicks: Tuple[KickEvent, ...]
    tau: float
    alpha: float = 0.0
    mod_amp: float = 0.0
    discarded: Tuple[Tuple[float, float], ...] = field(default=())

    @property
    def times(self) -> Tuple[float, ...]:
        return tuple(k.time for k in self.kicks)

    @property
    def total_strength(self) -> float:
        return sum(k.strength for k in self.kicks)

    @property
    def end_time(self) -> float:
        return self.kicks[-1].time if self.kicks else 0.0

    def mirrored(self) -> "PulseTrainDescriptor":
        """Train de chiralité opposée (α -> -α)"""
        kicks = tuple(KickEvent(k.time, k.strength, k.pol.mirrored()) for k in self.kicks)
        return replace(self, kicks=kicks, alpha=-self.alpha)

    def to_dict(self) -> Dict:
        return {
            "tau_fs": self.tau,
            "alpha_deg": math.degrees(self.alpha),
            "mod_amp": self.mod_amp,
            "total_strength": self.total_strength,
            "kicks": [k.to_dict() for k in self.kicks],
            "discarded": [{"time_fs": t, "relative_intensity": r} for t, r in self.discarded],
        }


# ---------------------------------------------------------------------------
# Spectre et transformées
# ---------------------------------------------------------------------------

def gaussian_spectrum(duration_fl: float = ShaperDefaults.PULSE_FWHM_FS,
                      center: float = ShaperDefaults.CENTER_NM,
                      grid: Optional[TimeGrid] = None) -> SpectralField:
    """
    Spectre gaussien limité par transformée, polarisé selon x

    L'intensité temporelle a une largeur à mi-hauteur duration_fl; l'amplitude
    spectrale vaut exp(-Ω²T²/(8 ln 2)). L'énergie est normalisée à 1.

    Args:
        duration_fl: Durée FWHM en intensité (fs)
        center: Longueur d'onde centrale (nm)
        grid: Grille temporelle (défaut: 16384 points, 0.5 fs)

    Returns:
        SpectralField

    Raises:
        ConfigurationError: durée non positive ou grille trop grossière/trop courte
    """
    grid = grid or TimeGrid()
    if not (duration_fl > 0):
        raise ConfigurationError(f"Durée d'impulsion invalide: {duration_fl}")
    if duration_fl < 4 * grid.step:
        raise ConfigurationError(f"Grille trop grossière ({grid.step:g} fs) pour une impulsion de {duration_fl:g} fs")
    if grid.window < 8 * duration_fl:
        raise ConfigurationError(f"Fenêtre temporelle trop courte ({grid.window:g} fs) pour {duration_fl:g} fs")

    amplitude = np.exp(-(grid.omega * duration_fl) ** 2 / (8 * math.log(2)))
    amplitude = amplitude / math.sqrt(np.sum(amplitude ** 2))
    comps = np.zeros((2, grid.points), dtype=complex)
    comps[0] = amplitude
    return SpectralField(grid, comps, center)


def to_temporal(spectrum: SpectralField) -> VectorField:
    """E(t) = Σ E(Ω) e^{-iΩt}, normalisé pour conserver l'énergie"""
    shifted = sfft.ifftshift(spectrum.components, axes=-1)
    temporal = sfft.fftshift(sfft.fft(shifted, axis=-1, norm="ortho"), axes=-1)
    return VectorField(spectrum.grid, temporal / math.sqrt(spectrum.grid.step))


def to_spectral(vfield: VectorField, center: float = ShaperDefaults.CENTER_NM) -> SpectralField:
    shifted = sfft.ifftshift(vfield.components * math.sqrt(vfield.dt), axes=-1)
    spectral = sfft.fftshift(sfft.ifft(shifted, axis=-1, norm="ortho"), axes=-1)
    return SpectralField(vfield.grid, spectral, center)


def apply_double_kick_mask(spectrum: SpectralField, tau: float) -> SpectralField:
    """Masque d'amplitude cos(Ωτ/2): deux répliques en ±τ/2"""
    if tau < 0:
        raise ConfigurationError(f"τ doit être >= 0 (reçu {tau})")
    mask = np.cos(spectrum.omega * tau / 2)
    return SpectralField(spectrum.grid, spectrum.components * mask, spectrum.center_nm)


def apply_chiral_mask(spectrum: SpectralField, tau: float, alpha: float, mod_amp: float) -> SpectralField:
    """
    Masques de phase φ1,2 = A sin(Ωτ ± α) sur les axes ±45° du SLM

    Args:
        spectrum: Spectre polarisé selon x
        tau: Période du train (fs)
        alpha: Rotation de polarisation d'une impulsion à la suivante (rad);
            son signe fixe la chiralité du train
        mod_amp: Amplitude de modulation A

    Returns:
        SpectralField à deux composantes, énergie conservée
    """
    if tau < 0:
        raise ConfigurationError(f"τ doit être >= 0 (reçu {tau})")
    x_in, y_in = spectrum.components
    if np.sum(np.abs(y_in) ** 2) > 1e-12 * max(np.sum(np.abs(x_in) ** 2), 1e-300):
        raise ConfigurationError("Le masque chiral attend un spectre polarisé linéairement selon x")

    omega = spectrum.omega
    phase_u = np.exp(1j * mod_amp * np.sin(omega * tau + alpha))
    phase_w = np.exp(1j * mod_amp * np.sin(omega * tau - alpha))
    # projection sur les axes du SLM puis lame quart d'onde
    u = phase_u * x_in / math.sqrt(2)
    w = phase_w * x_in / math.sqrt(2)
    out = np.vstack([(u + w) / math.sqrt(2), -1j * (u - w) / math.sqrt(2)])
    return SpectralField(spectrum.grid, out, spectrum.center_nm)


# ---------------------------------------------------------------------------
# Trains analytiques
# ---------------------------------------------------------------------------

def double_kick_train(tau: float, strength: float, orientation: str = "parallel") -> PulseTrainDescriptor:
    """
    Deux impulsions identiques en ±τ/2, chacune de force P_total/2

    orientation "parallel": impulsions selon l'axe de quantification (axe de la sonde);
    "perpendicular": impulsions selon x.
    """
    if not (tau > 0):
        raise ConfigurationError(f"τ doit être > 0 (reçu {tau})")
    if orientation == "parallel":
        pol = PolarizationState.along_axis()
    elif orientation == "perpendicular":
        pol = PolarizationState.linear_in_plane(0.0)
    else:
        raise ConfigurationError(f"Orientation inconnue: {orientation}")
    kicks = (KickEvent(-tau / 2, strength / 2, pol), KickEvent(tau / 2, strength / 2, pol))
    return PulseTrainDescriptor(kicks, tau)


def chiral_train(tau: float, alpha: float, mod_amp: float, strength: float,
                 threshold: float = ShaperDefaults.PULSE_THRESHOLD) -> PulseTrainDescriptor:
    """
    Train chiral analytique: impulsion n en nτ, angle nα, poids J_n(A)²

    Les impulsions de poids < threshold·max sont écartées; la force totale
    P_total est répartie sur les impulsions conservées.

    Args:
        tau: Période (fs)
        alpha: Angle de rotation (rad), signe = chiralité
        mod_amp: Amplitude de modulation A
        strength: Force totale P_total
        threshold: Seuil relatif en intensité

    Returns:
        PulseTrainDescriptor
    """
    if not (tau > 0):
        raise ConfigurationError(f"τ doit être > 0 (reçu {tau})")
    n_max = int(math.ceil(abs(mod_amp))) + 12
    orders = np.arange(-n_max, n_max + 1)
    weights = jv(orders, mod_amp) ** 2
    keep = weights >= threshold * weights.max()
    kept_total = float(np.sum(weights[keep]))

    kicks = []
    discarded = []
    for n, w, kept in zip(orders, weights, keep):
        if kept:
            kicks.append(KickEvent(float(n) * tau, strength * float(w) / kept_total,
                                   PolarizationState.linear_in_plane(float(n) * alpha)))
        elif w > 1e-6 * weights.max():
            discarded.append((float(n) * tau, float(w / weights.max())))
    if discarded:
        logger.debug(f"{len(discarded)} impulsions faibles écartées (seuil {threshold:g})")
    return PulseTrainDescriptor(tuple(kicks), tau, alpha, mod_amp, tuple(discarded))


def synthesize_field(mode: str, tau: float, strength: float,
                     alpha: float = math.radians(ShaperDefaults.ALPHA_DEG),
                     mod_amp: float = ShaperDefaults.MOD_AMP,
                     duration_fl: float = ShaperDefaults.PULSE_FWHM_FS,
                     center: float = ShaperDefaults.CENTER_NM,
                     grid: Optional[TimeGrid] = None) -> VectorField:
    """
    Champ temporel du façonneur, renormalisé à la force totale P_total

    Args:
        mode: "double-kick" ou "chiral"
        tau: Période (fs)
        strength: Force totale (∫|E|²dt)
        alpha: Angle du train chiral (rad)
        mod_amp: Amplitude A du train chiral
        duration_fl: Durée de l'impulsion d'entrée (fs)
        center: Longueur d'onde centrale (nm)
        grid: Grille temporelle

    Returns:
        VectorField
    """
    spectrum = gaussian_spectrum(duration_fl, center, grid)
    if mode == "double-kick":
        shaped = apply_double_kick_mask(spectrum, tau)
    elif mode == "chiral":
        shaped = apply_chiral_mask(spectrum, tau, alpha, mod_amp)
    else:
        raise ConfigurationError(f"Mode d'excitation inconnu: {mode}")
    return to_temporal(shaped).scaled_to(strength)


# ---------------------------------------------------------------------------
# Analyse du champ temporel
# ---------------------------------------------------------------------------

def _stokes_angle(ex: np.ndarray, ey: np.ndarray) -> float:
    s1 = float(np.sum(np.abs(ex) ** 2 - np.abs(ey) ** 2))
    s2 = float(np.sum(2 * np.real(ex * np.conj(ey))))
    return 0.5 * math.atan2(s2, s1)


def polarization_trace(vfield: VectorField) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Intensité et angle de polarisation (degrés, dans [0, 180)) échantillon par échantillon

    Returns:
        (t_fs, intensity, angle_deg)
    """
    ex, ey = vfield.components
    s1 = np.abs(ex) ** 2 - np.abs(ey) ** 2
    s2 = 2 * np.real(ex * np.conj(ey))
    angle = np.degrees(0.5 * np.arctan2(s2, s1)) % 180.0
    return vfield.times, vfield.intensity(), angle


def _kick_polarization(angle: float, geometry: str) -> PolarizationState:
    if geometry == "transverse":
        return PolarizationState.linear_in_plane(angle)
    # Géométrie "probe-axis": la composante x du champ est l'axe de quantification
    folded = angle % math.pi
    if min(folded, math.pi - folded) < AXIS_TOLERANCE_RAD:
        return PolarizationState.along_axis()
    if abs(folded - math.pi / 2) < AXIS_TOLERANCE_RAD:
        return PolarizationState.linear_in_plane(0.0)
    raise UnsupportedOperationError(f"Angle {math.degrees(angle):.3g}° incompatible avec la géométrie '{geometry}'")


def to_descriptor(vfield: VectorField, threshold: float = ShaperDefaults.PULSE_THRESHOLD,
                  geometry: str = "transverse", tau: Optional[float] = None,
                  alpha: Optional[float] = None, mod_amp: float = 0.0) -> PulseTrainDescriptor:
    """
    Réduit un champ d'impulsions isolées en impulsions impulsives

    Chaque pic d'intensité au-dessus de threshold·max devient un KickEvent:
    temps = barycentre de l'intensité, force = fluence intégrée entre les
    minima voisins, angle = angle de Stokes. Les pics plus faibles sont
    écartés et rapportés.

    Args:
        vfield: Champ temporel
        threshold: Seuil relatif en intensité
        geometry: "transverse" (x, y dans le plan) ou "probe-axis" (x le long de z)
        tau: Période connue; estimée à partir des temps sinon
        alpha: Angle connu; estimé à partir des angles sinon
        mod_amp: Amplitude de modulation, reportée telle quelle

    Returns:
        PulseTrainDescriptor

    Raises:
        ReductionUnavailableError: impulsions qui se recouvrent
    """
    intensity = vfield.intensity()
    peak = float(intensity.max())
    if peak <= 0:
        raise ReductionUnavailableError("Champ nul: aucune impulsion à réduire")
    candidates, _ = find_peaks(intensity, height=1e-2 * threshold * peak)
    if candidates.size == 0:
        candidates = np.array([int(np.argmax(intensity))])

    # Bornes d'intégration aux minima entre pics voisins
    bounds = [0]
    for left, right in zip(candidates[:-1], candidates[1:]):
        bounds.append(int(left + np.argmin(intensity[left:right + 1])))
    bounds.append(intensity.size - 1)

    strong = intensity[candidates] >= threshold * peak
    strong_positions = np.flatnonzero(strong)
    for a, b in zip(strong_positions[:-1], strong_positions[1:]):
        valley = float(intensity[candidates[a]:candidates[b] + 1].min())
        if valley >= threshold * peak:
            raise ReductionUnavailableError(
                f"Impulsions qui se recouvrent autour de t={vfield.times[candidates[a]]:g} fs: "
                f"utiliser propagate_field")

    times = vfield.times
    dt = vfield.dt
    kicks: List[KickEvent] = []
    angles: List[float] = []
    discarded: List[Tuple[float, float]] = []
    ex, ey = vfield.components
    for i, idx in enumerate(candidates):
        lo, hi = bounds[i], bounds[i + 1] + 1
        segment = intensity[lo:hi]
        centroid = float(np.sum(times[lo:hi] * segment) / np.sum(segment))
        if not strong[i]:
            discarded.append((centroid, float(intensity[idx] / peak)))
            continue
        angle = _stokes_angle(ex[lo:hi], ey[lo:hi])
        angles.append(angle)
        kicks.append(KickEvent(centroid, float(np.sum(segment) * dt), _kick_polarization(angle, geometry)))

    if tau is None:
        tau = float(np.median(np.diff([k.time for k in kicks]))) if len(kicks) > 1 else 0.0
        if len(kicks) == 2:
            tau = kicks[1].time - kicks[0].time
    if alpha is None:
        steps = [(b - a + math.pi / 2) % math.pi - math.pi / 2 for a, b in zip(angles, angles[1:])]
        alpha = float(np.median(steps)) if steps else 0.0
    if discarded:
        logger.info(f"Réduction: {len(kicks)} impulsions conservées, {len(discarded)} écartées")
    return PulseTrainDescriptor(tuple(kicks), tau, alpha, mod_amp, tuple(discarded))


def cross_correlation(vfield: VectorField, gate_duration: float = ShaperDefaults.PULSE_FWHM_FS) -> np.ndarray:
    """
    Corrélation croisée en intensité avec une impulsion porte gaussienne

    Returns:
        Trace sur la grille temporelle du champ
    """
    if not (gate_duration > 0):
        raise ConfigurationError(f"Durée de porte invalide: {gate_duration}")
    half_width = int(math.ceil(4 * gate_duration / vfield.dt))
    lags = np.arange(-half_width, half_width + 1) * vfield.dt
    gate = np.exp(-4 * math.log(2) * (lags / gate_duration) ** 2)
    return fftconvolve(vfield.intensity(), gate[::-1], mode="same") * vfield.dt
