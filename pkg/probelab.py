"""
Module probelab: signaux de fluorescence induite par la sonde et dichroïsmes

Deux modèles de détection:
- AlignmentProxy: signal ∝ <cos²θ_sonde>, sondes linéaires uniquement
  (insensible à l'hélicité, donc inutilisable pour le dichroïsme circulaire)
- TwoPhoton: transition à deux photons a -> d à travers des états intermédiaires
  rotationnels, dénominateurs plats: A = D2·D1, signal = Σ_f |Σ A_{f,i} c_i|².
  Seules les branches ΔJ retenues (Q et S par défaut) alimentent la fluorescence
  détectée. Avec les trois branches O, Q, S, la somme sur les couches finales est
  complète et T = A†A se réduit à |ε·r̂|⁴: σ+ et σ- donnent alors le même
  signal.

Dichroïsme (moyenne (I+ + I-)/2 au dénominateur):
    LD = 2(I∥ - I⊥)/(I∥ + I⊥),  CD = 2(I↻ - I↺)/(I↻ + I↺)

L'amplitude de cohérence à ν1,3 est extraite par projection de Fourier
fenêtrée (Hann): Z = (2/Σw) Σ w_k (s_k - <s>) exp(+2iπν Δt_k).
"""

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sfft
from scipy.signal import windows

from config import ProbeDefaults
from dynamics import DensityEnsemble, ensemble_populations
from errors import (ConfigurationError, DegenerateSignalError, ResolutionError, UnsupportedOperationError)
from rotor_core import (THZ_FS, BasisIndex, PolarizationState, RotorSpec, basis_for_shells, cos2_matrix,
                        dipole_matrix, rotational_energies)

# Configuration du logger
logger = logging.getLogger(__name__)

BRANCH_SHIFTS = {"O": -2, "Q": 0, "S": 2}


@dataclass(frozen=True)
class AlignmentProxy:
    """Signal ∝ <cos²θ_sonde>; strict=False autorise (1 - cos²θ_z)/2 pour les sondes circulaires"""

    strict: bool = True


@dataclass(frozen=True)
class TwoPhoton:
    """
    Modèle à deux photons

    Attributs:
        m_weighting: "dipole" (défaut) ou "uniform" (moyenne sur M des blocs ΔM=0)
        branches: branches ΔJ détectées parmi "O" (-2), "Q" (0), "S" (+2)
    """

    m_weighting: str = ProbeDefaults.M_WEIGHTING
    branches: Tuple[str, ...] = ProbeDefaults.BRANCHES

    def __post_init__(self):
        if self.m_weighting not in ("dipole", "uniform"):
            raise ConfigurationError(f"Pondération en M inconnue: {self.m_weighting}")
        try:
            requested = set(self.branches) if not isinstance(self.branches, str) else None
        except TypeError:
            requested = None
        if not requested or not requested <= set(BRANCH_SHIFTS):
            raise ConfigurationError(f"Branches ΔJ invalides: {self.branches!r}")
        # ordre canonique O, Q, S
        object.__setattr__(self, "branches", tuple(b for b in BRANCH_SHIFTS if b in requested))

    @property
    def shifts(self) -> Tuple[int, ...]:
        return tuple(BRANCH_SHIFTS[b] for b in self.branches)


DetectionModel = Union[AlignmentProxy, TwoPhoton]


def make_model(name: str, m_weighting: str = ProbeDefaults.M_WEIGHTING,
               branches: Sequence[str] = ProbeDefaults.BRANCHES) -> DetectionModel:
    if name == "two-photon":
        return TwoPhoton(m_weighting, branches)
    if name == "alignment":
        return AlignmentProxy()
    raise ConfigurationError(f"Modèle de détection inconnu: {name}")


@dataclass(frozen=True, eq=False)
class DichroismTrace:
    """
    Trace de dichroïsme en fonction du délai sonde

    Attributs:
        kind: "LD" ou "CD"
        dt_grid: délais sonde (fs, origine au centre du train)
        i_plus, i_minus: signaux des deux sondes de la paire
        values: 2(I+ - I-)/(I+ + I-)
        nu: fréquence d'extraction (THz), si extraite
        z: amplitude complexe à nu
        signed_value: Re[Z e^{-iφref}]
        phi_ref: phase de référence (rad)
    """

    kind: str
    dt_grid: np.ndarray
    i_plus: np.ndarray
    i_minus: np.ndarray
    values: np.ndarray
    nu: Optional[float] = None
    z: Optional[complex] = None
    signed_value: Optional[float] = None
    phi_ref: float = 0.0

    @property
    def magnitude(self) -> Optional[float]:
        return None if self.z is None else abs(self.z)

    def summary(self) -> Dict:
        return {
            "kind": self.kind,
            "nu_thz": self.nu,
            "re_z": None if self.z is None else float(self.z.real),
            "im_z": None if self.z is None else float(self.z.imag),
            "magnitude": self.magnitude,
            "signed_value": self.signed_value,
            "phi_ref": self.phi_ref,
        }


# ---------------------------------------------------------------------------
# Opérateurs de détection
# ---------------------------------------------------------------------------

def _neighbour_shells(j_values: Sequence[int]) -> List[int]:
    return sorted({j + d for j in j_values for d in (-1, 1) if j + d >= 0})


def _uniform_m_average(operator: np.ndarray, basis: BasisIndex) -> np.ndarray:
    out = operator.copy()
    for j in basis.j_values:
        for jp in basis.j_values:
            pairs = [(basis.index(j, m), basis.index(jp, m)) for m in range(-min(j, jp), min(j, jp) + 1)]
            rows, cols = zip(*pairs)
            out[rows, cols] = np.mean(operator[rows, cols])
    return out


def two_photon_amplitude(basis: BasisIndex, probe: PolarizationState,
                         shifts: Sequence[int] = (-2, 0, 2)) -> np.ndarray:
    """
    Amplitudes a -> d à deux photons identiques, dénominateurs plats

    A = D2·D1 avec D1: base -> couches J±1, D2: couches intermédiaires -> couches J±1.
    ΔM = +2 (σ+), -2 (σ-), 0 (selon l'axe), {0, ±2} (linéaire dans le plan).

    Args:
        basis: Base rotationnelle de l'état a
        probe: Polarisation de la sonde
        shifts: valeurs de J_final - J_initial conservées, les autres amplitudes sont annulées

    Returns:
        Matrice (dim_final, dim_base)
    """
    intermediate = basis_for_shells(_neighbour_shells(basis.j_values))
    final = basis_for_shells(_neighbour_shells(intermediate.j_values))
    amplitude = dipole_matrix(final, intermediate, probe) @ dipole_matrix(intermediate, basis, probe)
    delta_j = final.j_array[:, None] - basis.j_array[None, :]
    return np.where(np.isin(delta_j, list(shifts)), amplitude, 0.0)


@lru_cache(maxsize=128)
def detection_operator(basis: BasisIndex, probe: PolarizationState, model: DetectionModel) -> np.ndarray:
    """
    Opérateur hermitien T tel que signal = <ψ|T|ψ>

    Args:
        basis: Base rotationnelle de l'état a
        probe: Polarisation de la sonde
        model: AlignmentProxy ou TwoPhoton

    Returns:
        Matrice (dim, dim) en lecture seule

    Raises:
        UnsupportedOperationError: AlignmentProxy strict avec une sonde circulaire
    """
    if isinstance(model, AlignmentProxy):
        if probe.is_linear:
            return cos2_matrix(basis, probe)
        if model.strict:
            raise UnsupportedOperationError("Le modèle d'alignement est insensible à l'hélicité de la sonde")
        op = 0.5 * (np.eye(basis.dim) - cos2_matrix(basis, PolarizationState.along_axis()))
    else:
        amplitude = two_photon_amplitude(basis, probe, model.shifts)
        op = amplitude.conj().T @ amplitude
        if model.m_weighting == "uniform":
            op = _uniform_m_average(op, basis)
    op = 0.5 * (op + op.conj().T)
    op.flags.writeable = False
    return op


def _time_evolved(amplitudes: np.ndarray, energies: np.ndarray, delays: np.ndarray) -> np.ndarray:
    return np.exp(-1j * np.outer(delays, energies)) * amplitudes[None, :]


def _partial_signal(ens: DensityEnsemble, probe: PolarizationState, model: DetectionModel,
                    dt_grid: np.ndarray, spec: RotorSpec, basis: BasisIndex,
                    level: Optional[int] = None) -> np.ndarray:
    # contribution pondérée des membres du niveau vibrationnel `level` (tous si None)
    operator = detection_operator(basis, probe, model)
    signal = np.zeros(dt_grid.size)
    for w, psi in ens.members:
        if level is not None and psi.vib_label != level:
            continue
        energies = rotational_energies(basis, spec, psi.vib_label)
        states = _time_evolved(psi.amplitudes, energies, dt_grid - psi.time_stamp)
        signal += w * np.einsum("ti,ti->t", states.conj(), states @ operator.T).real
    return signal


def lif_signal(ens: DensityEnsemble, probe: PolarizationState, model: DetectionModel,
               dt_grid: np.ndarray, spec: RotorSpec, basis: BasisIndex) -> np.ndarray:
    """
    Signal de fluorescence induite par la sonde aux délais dt_grid

    Args:
        ens: Ensemble propagé au-delà de la dernière impulsion
        probe: Polarisation de la sonde
        model: Modèle de détection
        dt_grid: Délais (fs), mesurés depuis le centre du train
        spec: Constantes du rotor
        basis: Base rotationnelle

    Returns:
        Tableau des intensités, strictement positives
    """
    dt_grid = np.asarray(dt_grid, dtype=float)
    if dt_grid.size and dt_grid.min() < ens.time_stamp - 1e-9:
        raise ConfigurationError(f"Délai sonde {dt_grid.min():g} fs antérieur à la fin du train "
                                 f"({ens.time_stamp:g} fs)")
    signal = _partial_signal(ens, probe, model, dt_grid, spec, basis)
    if signal.size and signal.min() <= 0:
        raise DegenerateSignalError(f"Signal de sonde non positif ({signal.min():.3e}) pour {probe.label()}")
    return signal


def ld_pair(orientation: str = "parallel") -> Tuple[PolarizationState, PolarizationState]:
    """Paire (sonde parallèle aux impulsions, sonde perpendiculaire)"""
    if orientation == "parallel":
        return PolarizationState.along_axis(), PolarizationState.linear_in_plane(0.0)
    if orientation == "perpendicular":
        return PolarizationState.linear_in_plane(0.0), PolarizationState.along_axis()
    raise ConfigurationError(f"Orientation inconnue: {orientation}")


def cd_pair(probe_handedness: int = 1) -> Tuple[PolarizationState, PolarizationState]:
    """Paire (sonde co-rotative, sonde contra-rotative) pour l'hélicité choisie"""
    if probe_handedness > 0:
        return PolarizationState.circular_plus(), PolarizationState.circular_minus()
    return PolarizationState.circular_minus(), PolarizationState.circular_plus()


def dichroism_from_signals(kind: str, dt_grid: np.ndarray, i_plus: np.ndarray,
                           i_minus: np.ndarray) -> DichroismTrace:
    total = i_plus + i_minus
    if np.any(total == 0):
        raise DegenerateSignalError("I+ + I- s'annule: dichroïsme indéfini")
    values = 2.0 * (i_plus - i_minus) / total
    return DichroismTrace(kind, np.asarray(dt_grid, dtype=float), i_plus, i_minus, values)


def dichroism(ens: DensityEnsemble, pair: Tuple[PolarizationState, PolarizationState], model: DetectionModel,
              dt_grid: np.ndarray, spec: RotorSpec, basis: BasisIndex) -> DichroismTrace:
    """
    Dichroïsme linéaire ou circulaire sur la grille de délais

    Args:
        ens: Ensemble propagé
        pair: (sonde +, sonde -), toutes deux linéaires (LD) ou circulaires (CD)
        model: Modèle de détection
        dt_grid: Délais sonde (fs)
        spec: Constantes du rotor
        basis: Base rotationnelle

    Returns:
        DichroismTrace (amplitude non extraite)
    """
    probe_plus, probe_minus = pair
    if probe_plus.is_linear and probe_minus.is_linear:
        kind = "LD"
    elif probe_plus.is_circular and probe_minus.is_circular:
        kind = "CD"
    else:
        raise ConfigurationError("La paire de sondes doit être entièrement linéaire ou entièrement circulaire")
    if probe_plus == probe_minus:
        raise ConfigurationError(f"Paire de sondes identiques: {probe_plus.label()}")
    i_plus = lif_signal(ens, probe_plus, model, dt_grid, spec, basis)
    i_minus = lif_signal(ens, probe_minus, model, dt_grid, spec, basis)
    return dichroism_from_signals(kind, dt_grid, i_plus, i_minus)


# ---------------------------------------------------------------------------
# Analyse spectrale
# ---------------------------------------------------------------------------

def _check_uniform(dt_grid: np.ndarray) -> float:
    if dt_grid.size < 2:
        raise ResolutionError("Au moins deux délais sont nécessaires")
    steps = np.diff(dt_grid)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-9) or steps[0] <= 0:
        raise ConfigurationError("La grille de délais doit être uniforme et croissante")
    return float(steps[0])


def extract_coherence_amplitude(trace: DichroismTrace, nu: float, phi_ref: float = 0.0) -> Tuple[complex, float]:
    """
    Amplitude complexe Z du dichroïsme à la fréquence nu et valeur signée

    Args:
        trace: Trace de dichroïsme
        nu: Fréquence (THz)
        phi_ref: Phase de référence (rad)

    Returns:
        (Z, Re[Z e^{-iφref}])

    Raises:
        ResolutionError: fenêtre de délais inférieure à 5 périodes
    """
    dt_grid = trace.dt_grid
    step = _check_uniform(dt_grid)
    periods = (dt_grid[-1] - dt_grid[0] + step) * nu * THZ_FS
    if periods < ProbeDefaults.MIN_PERIODS:
        raise ResolutionError(f"Fenêtre de {periods:.2f} périodes à {nu:g} THz (minimum {ProbeDefaults.MIN_PERIODS})")
    if periods < ProbeDefaults.RECOMMENDED_PERIODS:
        logger.warning(f"Fenêtre de {periods:.2f} périodes seulement: amplitude peu résolue")

    window = windows.hann(dt_grid.size, sym=False)
    centred = trace.values - np.mean(trace.values)
    z = complex(2.0 / np.sum(window) * np.sum(window * centred * np.exp(2j * math.pi * nu * THZ_FS * dt_grid)))
    signed = float((z * complex(math.cos(phi_ref), -math.sin(phi_ref))).real)
    return z, signed


def with_amplitude(trace: DichroismTrace, nu: float, phi_ref: float = 0.0) -> DichroismTrace:
    """Copie de la trace complétée par l'amplitude extraite"""
    z, signed = extract_coherence_amplitude(trace, nu, phi_ref)
    return replace(trace, nu=nu, z=z, signed_value=signed, phi_ref=phi_ref)


def vibrational_amplitudes(ens: DensityEnsemble, pair: Tuple[PolarizationState, PolarizationState],
                           model: DetectionModel, dt_grid: np.ndarray, spec: RotorSpec,
                           basis: BasisIndex) -> Dict[int, complex]:
    """
    Amplitude du dichroïsme portée par chaque niveau vibrationnel

    La trace totale est la somme des contributions 2(I+_v - I-_v)/(I+ + I-), le
    dénominateur restant le signal total de l'ensemble. Chaque contribution est
    extraite à sa propre fréquence ν1,3(v).

    Returns:
        {v: Z_v}, dans l'ordre des niveaux de spec
    """
    total = dichroism(ens, pair, model, dt_grid, spec, basis)
    denominator = total.i_plus + total.i_minus
    amplitudes = {}
    for v in spec.levels:
        i_plus = _partial_signal(ens, pair[0], model, total.dt_grid, spec, basis, v)
        i_minus = _partial_signal(ens, pair[1], model, total.dt_grid, spec, basis, v)
        part = DichroismTrace(total.kind, total.dt_grid, i_plus, i_minus, 2.0 * (i_plus - i_minus) / denominator)
        amplitudes[v], _ = extract_coherence_amplitude(part, spec.nu_13(v))
    return amplitudes


def fourier_spectrum(trace: DichroismTrace) -> Tuple[np.ndarray, np.ndarray]:
    """
    Spectre d'amplitude de la trace (moyenne retirée)

    Returns:
        (fréquences en THz, amplitudes)
    """
    step = _check_uniform(trace.dt_grid)
    centred = trace.values - np.mean(trace.values)
    spectrum = np.abs(sfft.rfft(centred)) * 2.0 / centred.size
    freqs = sfft.rfftfreq(centred.size, d=step) / THZ_FS
    return freqs, spectrum


def population_map(ens: DensityEnsemble, basis: BasisIndex) -> List[Tuple[int, int, float]]:
    """Table (J, M, population) pondérée sur l'ensemble"""
    populations = ensemble_populations(ens)
    return [(j, m, float(p)) for (j, m), p in zip(basis.states, populations)]


def shell_populations(ens: DensityEnsemble, basis: BasisIndex) -> Dict[int, float]:
    populations = ensemble_populations(ens)
    return {j: float(np.sum(populations[basis.shell_indices(j)])) for j in basis.j_values}
