"""
Module dynamics: propagation des paquets d'ondes rotationnels

Trois briques:
- impulsion brève (kick): U = exp(+iP·cos²θ_ε), calculée par diagonalisation
  exacte de la matrice hermitienne cos²θ (unitaire pour tout P)
- évolution libre entre impulsions: phases exactes exp(-iE_J dt)
- champ résolu en temps: schéma split-step
  exp(-iH0 h/2)·exp(+i h W(t))·exp(-iH0 h/2), avec W = p1 C(e1) + p2 C(e2) + 2Re(E1E2*) X12

Le potentiel V(t) = -¼Δα cos²θ ℰ²(t) est attractif pour Δα > 0, d'où le signe
+ dans l'exposant. L'origine des temps est le centre du train d'impulsions.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import eigh

from config import DynamicsDefaults, RotorDefaults
from errors import ConfigurationError, InvalidSpecError, NumericalFailureError, UnsupportedOperationError
from rotor_core import (BasisIndex, PolarizationState, RotorSpec, WavePacket, cos2_matrix, cross_operator,
                        free_phases, rotational_energies)

if TYPE_CHECKING:
    from pulse_forge import PulseTrainDescriptor, VectorField

# Configuration du logger
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KickEvent:
    """Impulsion impulsive: instant (fs), force P sans dimension, polarisation linéaire"""

    time: float
    strength: float
    pol: PolarizationState

    def __post_init__(self):
        if not (math.isfinite(self.time) and math.isfinite(self.strength)):
            raise ConfigurationError(f"Impulsion non finie: t={self.time}, P={self.strength}")
        if self.strength < 0:
            raise ConfigurationError(f"La force d'impulsion doit être >= 0 (reçu {self.strength})")
        if not self.pol.is_linear:
            raise UnsupportedOperationError(f"Impulsion à polarisation non linéaire: {self.pol.label()}")

    def to_dict(self) -> Dict:
        return {
            "time_fs": self.time,
            "strength": self.strength,
            "polarization": self.pol.kind.value,
            "angle_deg": math.degrees(self.pol.angle),
        }


@dataclass(frozen=True, eq=False)
class DensityEnsemble:
    """Mélange incohérent de paquets d'ondes pondérés"""

    members: Tuple[Tuple[float, WavePacket], ...]

    def __post_init__(self):
        members = tuple((float(w), psi) for w, psi in self.members)
        object.__setattr__(self, "members", members)
        if any(w < 0 for w, _ in members):
            raise ConfigurationError("Poids d'ensemble négatif")
        total = sum(w for w, _ in members)
        if abs(total - 1.0) > 1e-12:
            raise ConfigurationError(f"Les poids de l'ensemble doivent sommer à 1 (somme={total!r})")

    @property
    def weights(self) -> Tuple[float, ...]:
        return tuple(w for w, _ in self.members)

    @property
    def time_stamp(self) -> float:
        return max(psi.time_stamp for _, psi in self.members)

    def total_norm(self) -> float:
        return sum(w * psi.norm() for w, psi in self.members)

    def expectation(self, operator: np.ndarray) -> float:
        """Moyenne d'ensemble de <ψ|O|ψ> (O hermitien)"""
        value = 0.0
        for w, psi in self.members:
            value += w * float(np.vdot(psi.amplitudes, operator @ psi.amplitudes).real)
        return value


def initial_ensemble(spec: RotorSpec, basis: BasisIndex) -> DensityEnsemble:
    """
    Ensemble initial isotrope: J=1, M ∈ {-1, 0, 1} pour chaque niveau vibrationnel

    Args:
        spec: Constantes du rotor (poids vibrationnels)
        basis: Base rotationnelle, doit contenir J=1

    Returns:
        DensityEnsemble de 3 membres par niveau, poids w_v/3
    """
    if 1 not in basis.j_values:
        raise InvalidSpecError("La base doit contenir la couche J=1")
    members = []
    for v, w in spec.vib_weights:
        for m in (-1, 0, 1):
            members.append((w / 3.0, WavePacket.eigenstate(basis, 1, m, vib_label=v)))
    return DensityEnsemble(tuple(members))


@lru_cache(maxsize=256)
def _cos2_eigensystem(basis: BasisIndex, pol: PolarizationState) -> Tuple[np.ndarray, np.ndarray]:
    values, vectors = eigh(cos2_matrix(basis, pol))
    values.flags.writeable = False
    vectors.flags.writeable = False
    return values, vectors


def kick_unitary(basis: BasisIndex, pol: PolarizationState, strength: float) -> np.ndarray:
    """Matrice exp(+iP·cos²θ); P peut être négatif (inversion temporelle)"""
    values, vectors = _cos2_eigensystem(basis, pol)
    return (vectors * np.exp(1j * strength * values)) @ vectors.conj().T


def _apply_kick_amplitudes(amps: np.ndarray, basis: BasisIndex, pol: PolarizationState, strength: float) -> np.ndarray:
    values, vectors = _cos2_eigensystem(basis, pol)
    return vectors @ (np.exp(1j * strength * values)[:, None] * (vectors.conj().T @ amps.reshape(basis.dim, -1)))


def apply_kick(psi: WavePacket, kick: KickEvent, basis: BasisIndex) -> WavePacket:
    """
    Applique exp(+iP·cos²θ_ε) au paquet d'ondes

    Raises:
        UnsupportedOperationError: polarisation circulaire
        NumericalFailureError: dérive de norme > 1e-8
    """
    if not kick.pol.is_linear:
        raise UnsupportedOperationError(f"Impulsion à polarisation non linéaire: {kick.pol.label()}")
    new = _apply_kick_amplitudes(psi.amplitudes, basis, kick.pol, kick.strength)[:, 0]
    drift = abs(np.vdot(new, new).real - psi.norm())
    if drift > DynamicsDefaults.KICK_NORM_TOLERANCE:
        raise NumericalFailureError(f"Dérive de norme {drift:.3e} après l'impulsion à t={kick.time:g} fs")
    return WavePacket(new, psi.vib_label, psi.time_stamp)


def evolve_free(psi: WavePacket, dt: float, spec: RotorSpec, basis: BasisIndex) -> WavePacket:
    if dt == 0:
        return psi
    amps = psi.amplitudes * free_phases(basis, spec, psi.vib_label, dt)
    return WavePacket(amps, psi.vib_label, psi.time_stamp + dt)


def propagate_train(ens: DensityEnsemble, train: "PulseTrainDescriptor", spec: RotorSpec,
                    basis: BasisIndex) -> DensityEnsemble:
    """
    Propage l'ensemble à travers une suite d'impulsions impulsives

    Chaque membre est propagé indépendamment avec la constante B de son niveau
    vibrationnel. Le temps final est celui de la dernière impulsion.

    Args:
        ens: Ensemble de départ
        train: Descripteur du train (impulsions à instants strictement croissants)
        spec: Constantes du rotor
        basis: Base rotationnelle

    Returns:
        Nouvel ensemble
    """
    kicks = tuple(train.kicks)
    if not kicks:
        return ens
    times = [k.time for k in kicks]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigurationError(f"Instants d'impulsion non strictement croissants: {times}")

    members = []
    for w, psi in ens.members:
        for kick in kicks:
            psi = evolve_free(psi, kick.time - psi.time_stamp, spec, basis)
            psi = apply_kick(psi, kick, basis)
        members.append((w, psi))
    logger.debug(f"Train de {len(kicks)} impulsions propagé sur {len(members)} membres")
    return DensityEnsemble(tuple(members))


def _field_operators(basis: BasisIndex, geometry: Tuple[PolarizationState, PolarizationState]):
    pol_a, pol_b = geometry
    return cos2_matrix(basis, pol_a), cos2_matrix(basis, pol_b), cross_operator(basis, pol_a, pol_b)


def propagate_field(ens: DensityEnsemble, field: "VectorField", spec: RotorSpec, basis: BasisIndex,
                    step: float = DynamicsDefaults.FIELD_STEP_FS,
                    geometry: Optional[Tuple[PolarizationState, PolarizationState]] = None) -> DensityEnsemble:
    """
    Intègre i dc/dt = [H0 + V(t)] c sur le support du champ

    Le champ est exprimé en unités de taux d'impulsion: ∫(|E1|² + |E2|²) dt = P total.
    Les membres d'un même niveau vibrationnel sont propagés ensemble (colonnes
    d'une matrice). L'ensemble retourné est daté de la fin du support du champ;
    pour un champ nul, de la fin de la fenêtre temporelle.

    Args:
        ens: Ensemble de départ (daté avant le début du champ)
        field: Champ vectoriel (deux composantes transverses)
        spec: Constantes du rotor
        basis: Base rotationnelle
        step: Pas d'intégration en fs
        geometry: Polarisations portées par les deux composantes du champ
            (défaut: x puis y dans le plan)

    Returns:
        Nouvel ensemble

    Raises:
        ConfigurationError: pas invalide ou champ échantillonné plus grossièrement que le pas
        NumericalFailureError: dérive de norme > 1e-6
    """
    if geometry is None:
        geometry = (PolarizationState.linear_in_plane(0.0), PolarizationState.linear_in_plane(math.pi / 2))
    if not (step > 0):
        raise ConfigurationError(f"Pas d'intégration invalide: {step}")
    if field.dt > step * (1 + 1e-12):
        raise ConfigurationError(f"Champ échantillonné à {field.dt:g} fs, plus grossier que le pas {step:g} fs")

    times = field.times
    p_a = np.abs(field.components[0]) ** 2
    p_b = np.abs(field.components[1]) ** 2
    q_ab = np.real(field.components[0] * np.conj(field.components[1]))
    total = p_a + p_b
    peak = float(total.max()) if total.size else 0.0

    if peak <= 0.0:
        t_end = float(times[-1])
        members = [(w, evolve_free(psi, t_end - psi.time_stamp, spec, basis)) for w, psi in ens.members]
        return DensityEnsemble(tuple(members))

    support = np.flatnonzero(total > DynamicsDefaults.FIELD_SUPPORT_FRACTION * peak)
    t_a, t_b = float(times[support[0]]), float(times[support[-1]])
    n_steps = max(1, int(math.ceil((t_b - t_a) / step - 1e-9)))
    h = (t_b - t_a) / n_steps
    mids = t_a + (np.arange(n_steps) + 0.5) * h
    rate_a = np.interp(mids, times, p_a)
    rate_b = np.interp(mids, times, p_b)
    rate_ab = np.interp(mids, times, q_ab)
    single_component = not np.any(p_b > 0.0)

    c_a, c_b, x_ab = _field_operators(basis, geometry)
    if single_component:
        values_a, vectors_a = _cos2_eigensystem(basis, geometry[0])

    # Membres regroupés par niveau vibrationnel, ordre d'origine conservé
    groups: Dict[int, List[int]] = {}
    for idx, (_, psi) in enumerate(ens.members):
        groups.setdefault(psi.vib_label, []).append(idx)

    results: List[Optional[WavePacket]] = [None] * len(ens.members)
    for v, indices in groups.items():
        start = np.column_stack([
            ens.members[i][1].amplitudes * free_phases(basis, spec, v, t_a - ens.members[i][1].time_stamp)
            for i in indices
        ])
        norms_before = np.sum(np.abs(start) ** 2, axis=0)
        half = np.exp(-0.5j * rotational_energies(basis, spec, v) * h)[:, None]
        block = start
        for k in range(n_steps):
            block = half * block
            if single_component:
                block = vectors_a @ (np.exp(1j * h * rate_a[k] * values_a)[:, None] * (vectors_a.conj().T @ block))
            else:
                w_op = rate_a[k] * c_a + rate_b[k] * c_b + 2.0 * rate_ab[k] * x_ab
                values, vectors = eigh(w_op)
                block = vectors @ (np.exp(1j * h * values)[:, None] * (vectors.conj().T @ block))
            block = half * block

        drift = float(np.max(np.abs(np.sum(np.abs(block) ** 2, axis=0) - norms_before)))
        if drift > DynamicsDefaults.FIELD_NORM_TOLERANCE:
            raise NumericalFailureError(f"Dérive de norme {drift:.3e} pendant l'intégration du champ (v={v})",
                                        step_hint=step / 2)
        for col, i in enumerate(indices):
            results[i] = WavePacket(block[:, col], v, t_b)

    logger.debug(f"Champ intégré de {t_a:g} à {t_b:g} fs en {n_steps} pas de {h:g} fs")
    return DensityEnsemble(tuple((w, psi) for (w, _), psi in zip(ens.members, results)))


def top_shell_population(ens: DensityEnsemble, basis: BasisIndex) -> float:
    """Population pondérée de la couche J la plus haute de la base"""
    idx = basis.shell_indices(basis.j_values[-1])
    return float(sum(w * np.sum(np.abs(psi.amplitudes[idx]) ** 2) for w, psi in ens.members))


def check_convergence(ens: DensityEnsemble, basis: BasisIndex,
                      tolerance: float = RotorDefaults.TOP_SHELL_TOLERANCE) -> bool:
    """
    Vérifie la marge de troncature de la base

    Returns:
        True si la couche J max reste sous le seuil, sinon False (avertissement loggé)
    """
    population = top_shell_population(ens, basis)
    if population > tolerance:
        logger.warning(f"Couche J={basis.j_values[-1]} peuplée à {population:.3e} (> {tolerance:g}): "
                       f"augmenter j_max")
        return False
    return True


def ensemble_populations(ens: DensityEnsemble) -> np.ndarray:
    """Populations |c_{J,M}|² pondérées, sommées sur les membres"""
    total = None
    for w, psi in ens.members:
        contribution = w * psi.populations()
        total = contribution if total is None else total + contribution
    return total


def mirror_ensemble_check(populations_a: np.ndarray, populations_b: np.ndarray, basis: BasisIndex) -> float:
    """Écart maximal entre P_a(J,M) et P_b(J,-M)"""
    return float(np.max(np.abs(populations_a - populations_b[basis.mirror_permutation()])))
