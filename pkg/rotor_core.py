"""
Module rotor_core: base rotationnelle et opérateurs angulaires du rotor rigide

Ce module définit:
- RotorSpec: constantes moléculaires (B par niveau vibrationnel, Δα, parité de J)
- BasisIndex: base |J,M> tronquée, filtrée en parité, ordonnée (J croissant puis M)
- WavePacket: amplitudes complexes c_{J,M} sur une base
- PolarizationState: polarisation linéaire (dans le plan ou selon l'axe) ou circulaire
- les éléments de matrice cos²θ (impulsions) et cosinus directeurs (sonde)

Conventions:
- Harmoniques sphériques de Condon-Shortley. Les éléments sont obtenus par
  l'algèbre des moments angulaires:
      <J',M'|C^k_q|J,M> = (-1)^M' sqrt((2J'+1)(2J+1)) (J' k J; 0 0 0)(J' k J; -M' q M)
- cos²θ_ε = 1/3 + 2/3 Σ_q C^2_q(ε)* C^2_q(r)
- L'axe de quantification est z. LinearInPlane(α) = cos α x + sin α y,
  CircularPlus/CircularMinus correspondent aux vecteurs sphériques e_{+1}/e_{-1}
  (opérateurs C^1_{+1} et C^1_{-1}).
- Énergies en pulsations: E_J = 2π·1e-3·(B·J(J+1) - D·J²(J+1)²) rad/fs pour B, D en THz.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache
from typing import Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np
from scipy import constants
from sympy.physics.wigner import wigner_3j

from config import RotorDefaults
from errors import InvalidSpecError, UnsupportedOperationError

# Configuration du logger
logger = logging.getLogger(__name__)

# THz · fs -> cycles
THZ_FS = 1e-3

_PARITIES = ("odd", "even", "all")


def _as_pairs(values: Union[Mapping[int, float], Iterable[Tuple[int, float]], None]) -> Tuple[Tuple[int, float], ...]:
    if values is None:
        return ()
    if isinstance(values, Mapping):
        items = values.items()
    else:
        items = values
    return tuple(sorted((int(v), float(x)) for v, x in items))


def _parity_ok(j: int, parity: str) -> bool:
    if parity == "odd":
        return j % 2 == 1
    if parity == "even":
        return j % 2 == 0
    return True


@dataclass(frozen=True)
class RotorSpec:
    """
    Constantes moléculaires du rotor

    Attributs:
        b_rot: (v, B_v) constante rotationnelle par niveau vibrationnel, en THz
        delta_alpha: anisotropie de polarisabilité Δα en Å³
        j_parity: parité autorisée de J ("odd" pour He2* a-state, "even", "all")
        j_max: troncature de la base
        vib_weights: (v, fraction) populations vibrationnelles, somme = 1
        centrifugal_d: (v, D_v) distorsion centrifuge en THz (0 par défaut)
    """

    b_rot: Tuple[Tuple[int, float], ...] = ((0, RotorDefaults.B0_THZ),)
    delta_alpha: float = RotorDefaults.DELTA_ALPHA_A3
    j_parity: str = RotorDefaults.J_PARITY
    j_max: int = RotorDefaults.J_MAX
    vib_weights: Tuple[Tuple[int, float], ...] = ((0, 1.0),)
    centrifugal_d: Tuple[Tuple[int, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "b_rot", _as_pairs(self.b_rot))
        object.__setattr__(self, "vib_weights", _as_pairs(self.vib_weights))
        object.__setattr__(self, "centrifugal_d", _as_pairs(self.centrifugal_d))
        object.__setattr__(self, "j_max", int(self.j_max))

        b_map = dict(self.b_rot)
        if not b_map:
            raise InvalidSpecError("Aucune constante rotationnelle fournie")
        for v, b in self.b_rot:
            if not (b > 0 and math.isfinite(b)):
                raise InvalidSpecError(f"Constante rotationnelle invalide pour v={v}: {b}")
        if not (self.delta_alpha > 0):
            raise InvalidSpecError(f"Δα doit être positif (reçu {self.delta_alpha})")
        if self.j_parity not in _PARITIES:
            raise InvalidSpecError(f"Parité de J inconnue: {self.j_parity}")
        _check_j_max(self.j_max, self.j_parity)

        if not self.vib_weights:
            raise InvalidSpecError("Aucun poids vibrationnel fourni")
        total = 0.0
        for v, w in self.vib_weights:
            if v not in b_map:
                raise InvalidSpecError(f"Niveau vibrationnel v={v} sans constante rotationnelle")
            if not (0.0 <= w <= 1.0):
                raise InvalidSpecError(f"Fraction vibrationnelle hors de [0,1] pour v={v}: {w}")
            total += w
        if abs(total - 1.0) > 1e-12:
            raise InvalidSpecError(f"Les fractions vibrationnelles doivent sommer à 1 (somme={total!r})")

    def b_of(self, v: int) -> float:
        """Constante rotationnelle du niveau v (THz)"""
        for level, b in self.b_rot:
            if level == v:
                return b
        raise InvalidSpecError(f"Niveau vibrationnel inconnu: v={v}")

    def d_of(self, v: int) -> float:
        for level, d in self.centrifugal_d:
            if level == v:
                return d
        return RotorDefaults.CENTRIFUGAL_D_THZ

    @property
    def levels(self) -> Tuple[int, ...]:
        return tuple(v for v, _ in self.vib_weights)

    def dominant_level(self) -> int:
        """Niveau vibrationnel le plus peuplé (le plus bas en cas d'égalité)"""
        return max(self.vib_weights, key=lambda item: (item[1], -item[0]))[0]

    def nu_13(self, v: Optional[int] = None) -> float:
        """Fréquence de la cohérence J=1 <-> J=3 en THz"""
        if v is None:
            v = self.dominant_level()
        b, d = self.b_of(v), self.d_of(v)
        return b * 10.0 - d * (144.0 - 4.0)

    def to_dict(self) -> Dict:
        return {
            "b_rot_thz": {str(v): b for v, b in self.b_rot},
            "delta_alpha_a3": self.delta_alpha,
            "j_parity": self.j_parity,
            "j_max": self.j_max,
            "vib_weights": {str(v): w for v, w in self.vib_weights},
            "centrifugal_d_thz": {str(v): d for v, d in self.centrifugal_d},
        }


def _check_j_max(j_max: int, parity: str) -> None:
    if j_max < 1:
        raise InvalidSpecError(f"j_max doit être >= 1 (reçu {j_max})")
    if not _parity_ok(j_max, parity):
        raise InvalidSpecError(f"j_max={j_max} incompatible avec la parité '{parity}'")


@dataclass(frozen=True)
class BasisIndex:
    """Base ordonnée de paires (J, M) avec correspondance (J,M) <-> indice plat"""

    states: Tuple[Tuple[int, int], ...]
    _lookup: Dict[Tuple[int, int], int] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        states = tuple((int(j), int(m)) for j, m in self.states)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "_lookup", {state: i for i, state in enumerate(states)})

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, j: int, m: int) -> int:
        try:
            return self._lookup[(j, m)]
        except KeyError:
            raise KeyError(f"Etat |{j},{m}> absent de la base") from None

    def lookup(self, i: int) -> Tuple[int, int]:
        return self.states[i]

    def contains(self, j: int, m: int) -> bool:
        return (j, m) in self._lookup

    @cached_property
    def j_values(self) -> Tuple[int, ...]:
        return tuple(sorted({j for j, _ in self.states}))

    @cached_property
    def j_array(self) -> np.ndarray:
        arr = np.array([j for j, _ in self.states], dtype=int)
        arr.flags.writeable = False
        return arr

    @cached_property
    def m_array(self) -> np.ndarray:
        arr = np.array([m for _, m in self.states], dtype=int)
        arr.flags.writeable = False
        return arr

    def shell_indices(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.j_array == j)

    def mirror_permutation(self) -> np.ndarray:
        """Indices de |J,-M> pour chaque |J,M> de la base"""
        return np.array([self.index(j, -m) for j, m in self.states], dtype=int)


def basis_for_shells(j_values: Iterable[int]) -> BasisIndex:
    """Base complète en M pour une liste explicite de couches J"""
    states = []
    for j in sorted(set(int(j) for j in j_values)):
        if j < 0:
            continue
        states.extend((j, m) for m in range(-j, j + 1))
    return BasisIndex(tuple(states))


def build_basis(spec: RotorSpec) -> BasisIndex:
    """
    Construit la base |J,M> filtrée en parité

    Args:
        spec: Constantes du rotor (j_max, j_parity)

    Returns:
        BasisIndex ordonnée par J croissant puis M croissant
    """
    _check_j_max(spec.j_max, spec.j_parity)
    start = 1 if spec.j_parity == "odd" else 0
    shells = [j for j in range(start, spec.j_max + 1) if _parity_ok(j, spec.j_parity)]
    basis = basis_for_shells(shells)
    logger.debug(f"Base construite: J={shells}, dimension {basis.dim}")
    return basis


@dataclass(frozen=True, eq=False)
class WavePacket:
    """Paquet d'ondes rotationnel Σ c_{J,M}|J,M> pour un niveau vibrationnel"""

    amplitudes: np.ndarray
    vib_label: int = 0
    time_stamp: float = 0.0

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @classmethod
    def eigenstate(cls, basis: BasisIndex, j: int, m: int, vib_label: int = 0, time_stamp: float = 0.0) -> "WavePacket":
        amps = np.zeros(basis.dim, dtype=complex)
        amps[basis.index(j, m)] = 1.0
        return cls(amps, vib_label, time_stamp)


class PolarizationKind(str, Enum):
    LINEAR_IN_PLANE = "linear-in-plane"
    LINEAR_ALONG_AXIS = "linear-along-axis"
    CIRCULAR_PLUS = "circular-plus"
    CIRCULAR_MINUS = "circular-minus"


@dataclass(frozen=True)
class PolarizationState:
    """
    Polarisation d'une impulsion

    L'angle n'a de sens que pour LINEAR_IN_PLANE; il est ramené dans [0, π).
    """

    kind: PolarizationKind
    angle: float = 0.0

    def __post_init__(self):
        kind = PolarizationKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is PolarizationKind.LINEAR_IN_PLANE:
            angle = float(self.angle) % math.pi
            if angle >= math.pi:
                angle = 0.0
            object.__setattr__(self, "angle", angle)
        else:
            object.__setattr__(self, "angle", 0.0)

    @classmethod
    def linear_in_plane(cls, angle: float) -> "PolarizationState":
        return cls(PolarizationKind.LINEAR_IN_PLANE, angle)

    @classmethod
    def along_axis(cls) -> "PolarizationState":
        return cls(PolarizationKind.LINEAR_ALONG_AXIS)

    @classmethod
    def circular_plus(cls) -> "PolarizationState":
        return cls(PolarizationKind.CIRCULAR_PLUS)

    @classmethod
    def circular_minus(cls) -> "PolarizationState":
        return cls(PolarizationKind.CIRCULAR_MINUS)

    @property
    def is_linear(self) -> bool:
        return self.kind in (PolarizationKind.LINEAR_IN_PLANE, PolarizationKind.LINEAR_ALONG_AXIS)

    @property
    def is_circular(self) -> bool:
        return not self.is_linear

    def mirrored(self) -> "PolarizationState":
        """Image par la réflexion y -> -y (α -> -α, hélicité inversée)"""
        if self.kind is PolarizationKind.LINEAR_IN_PLANE:
            return PolarizationState.linear_in_plane(-self.angle)
        if self.kind is PolarizationKind.CIRCULAR_PLUS:
            return PolarizationState.circular_minus()
        if self.kind is PolarizationKind.CIRCULAR_MINUS:
            return PolarizationState.circular_plus()
        return self

    def unit_vector(self) -> np.ndarray:
        """Vecteur cartésien réel d'une polarisation linéaire"""
        if self.kind is PolarizationKind.LINEAR_ALONG_AXIS:
            return np.array([0.0, 0.0, 1.0])
        if self.kind is PolarizationKind.LINEAR_IN_PLANE:
            return np.array([math.cos(self.angle), math.sin(self.angle), 0.0])
        raise UnsupportedOperationError(f"Pas de vecteur réel pour une polarisation {self.kind.value}")

    def label(self) -> str:
        if self.kind is PolarizationKind.LINEAR_IN_PLANE:
            return f"{self.kind.value}({math.degrees(self.angle):.6g}deg)"
        return self.kind.value


# ---------------------------------------------------------------------------
# Algèbre angulaire
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def wigner3j(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    """Symbole 3-j en flottant (valeur exacte sympy mise en cache)"""
    return float(wigner_3j(j1, j2, j3, m1, m2, m3))


def tensor_element(jp: int, mp: int, k: int, q: int, j: int, m: int) -> float:
    """Élément <J',M'|C^k_q|J,M> (Condon-Shortley)"""
    if mp != m + q or abs(jp - j) > k or jp + j < k:
        return 0.0
    w0 = wigner3j(jp, k, j, 0, 0, 0)
    if w0 == 0.0:
        return 0.0
    sign = 1 - 2 * (mp % 2)
    return sign * math.sqrt((2 * jp + 1) * (2 * j + 1)) * w0 * wigner3j(jp, k, j, -mp, q, m)


@lru_cache(maxsize=256)
def tensor_matrix(basis_a: BasisIndex, basis_b: BasisIndex, k: int, q: int) -> np.ndarray:
    """Matrice <a|C^k_q|b> de forme (dim_a, dim_b), structurellement creuse"""
    out = np.zeros((basis_a.dim, basis_b.dim))
    for col, (j, m) in enumerate(basis_b.states):
        mp = m + q
        for jp in range(abs(j - k), j + k + 1):
            if not basis_a.contains(jp, mp):
                continue
            out[basis_a.index(jp, mp), col] = tensor_element(jp, mp, k, q, j, m)
    out.flags.writeable = False
    return out


def _rank2_coefficients(pol: PolarizationState) -> Dict[int, complex]:
    # C^2_q(ε) pour les directions des impulsions; les coefficients nuls sont omis
    if pol.kind is PolarizationKind.LINEAR_ALONG_AXIS:
        return {0: 1.0}
    if pol.kind is PolarizationKind.LINEAR_IN_PLANE:
        amp = math.sqrt(3.0 / 8.0)
        phase = complex(math.cos(2 * pol.angle), math.sin(2 * pol.angle))
        return {0: -0.5, 2: amp * phase, -2: amp * phase.conjugate()}
    raise UnsupportedOperationError(
        f"cos²θ n'est défini que pour une polarisation linéaire (reçu {pol.kind.value})")


def _rank2_coefficients_vector(vec: np.ndarray) -> Dict[int, complex]:
    x, y, z = (float(c) for c in vec / np.linalg.norm(vec))
    cos_b = z
    sin_b = math.hypot(x, y)
    e_ig = complex(x, y) / sin_b if sin_b > 0 else 1.0
    coeffs = {
        0: 0.5 * (3 * cos_b ** 2 - 1),
        1: -math.sqrt(1.5) * sin_b * cos_b * e_ig,
        -1: math.sqrt(1.5) * sin_b * cos_b * np.conj(e_ig),
        2: math.sqrt(3.0 / 8.0) * sin_b ** 2 * e_ig ** 2,
        -2: math.sqrt(3.0 / 8.0) * sin_b ** 2 * np.conj(e_ig) ** 2,
    }
    return {q: c for q, c in coeffs.items() if abs(c) > 1e-15}


def _cos2_from_coefficients(basis: BasisIndex, coeffs: Dict[int, complex]) -> np.ndarray:
    op = np.eye(basis.dim, dtype=complex) / 3.0
    for q, c in sorted(coeffs.items()):
        op = op + (2.0 / 3.0) * np.conj(c) * tensor_matrix(basis, basis, 2, q)
    # Hermitien au bit près
    op = 0.5 * (op + op.conj().T)
    op.flags.writeable = False
    return op


@lru_cache(maxsize=256)
def cos2_matrix(basis: BasisIndex, pol: PolarizationState) -> np.ndarray:
    """
    Matrice de (ε·r)² = cos²θ entre les états de la base

    Args:
        basis: Base rotationnelle
        pol: Polarisation linéaire de l'impulsion

    Returns:
        Matrice hermitienne (dim, dim); ΔJ ∈ {0, ±2}, ΔM ∈ {0, ±2}

    Raises:
        UnsupportedOperationError: polarisation circulaire
    """
    return _cos2_from_coefficients(basis, _rank2_coefficients(pol))


def cos2_matrix_for_direction(basis: BasisIndex, vec: np.ndarray) -> np.ndarray:
    """cos²θ pour une direction réelle quelconque (vecteur cartésien)"""
    return _cos2_from_coefficients(basis, _rank2_coefficients_vector(np.asarray(vec, dtype=float)))


def cross_operator(basis: BasisIndex, pol_a: PolarizationState, pol_b: PolarizationState) -> np.ndarray:
    """Opérateur (e_a·r)(e_b·r) pour deux directions orthogonales"""
    e_a, e_b = pol_a.unit_vector(), pol_b.unit_vector()
    diagonal = cos2_matrix_for_direction(basis, (e_a + e_b) / math.sqrt(2.0))
    return diagonal - 0.5 * (cos2_matrix(basis, pol_a) + cos2_matrix(basis, pol_b))


def dipole_matrix(basis_a: BasisIndex, basis_b: BasisIndex, pol: PolarizationState) -> np.ndarray:
    """
    Cosinus directeurs <J',M'|ε·r|J,M> entre deux bases (ΔJ = ±1)

    LINEAR_ALONG_AXIS -> C^1_0 (ΔM = 0), CIRCULAR_PLUS -> C^1_{+1} (ΔM = +1),
    CIRCULAR_MINUS -> C^1_{-1} (ΔM = -1),
    LINEAR_IN_PLANE(α) -> (e^{iα} C^1_{-1} - e^{-iα} C^1_{+1}) / √2.
    """
    if pol.kind is PolarizationKind.LINEAR_ALONG_AXIS:
        return tensor_matrix(basis_a, basis_b, 1, 0).astype(complex)
    if pol.kind is PolarizationKind.CIRCULAR_PLUS:
        return tensor_matrix(basis_a, basis_b, 1, 1).astype(complex)
    if pol.kind is PolarizationKind.CIRCULAR_MINUS:
        return tensor_matrix(basis_a, basis_b, 1, -1).astype(complex)
    phase = complex(math.cos(pol.angle), math.sin(pol.angle))
    return (phase * tensor_matrix(basis_a, basis_b, 1, -1)
            - phase.conjugate() * tensor_matrix(basis_a, basis_b, 1, 1)) / math.sqrt(2.0)


def rotational_energies(basis: BasisIndex, spec: RotorSpec, v: int) -> np.ndarray:
    """Diagonale de H0 en rad/fs"""
    b, d = spec.b_of(v), spec.d_of(v)
    jj = basis.j_array * (basis.j_array + 1)
    return 2 * math.pi * THZ_FS * (b * jj - d * jj.astype(float) ** 2)


def free_phases(basis: BasisIndex, spec: RotorSpec, v: int, dt: float) -> np.ndarray:
    """
    Phases libres exp(-i E_J dt), indépendantes de M

    Raises:
        InvalidSpecError: niveau vibrationnel inconnu
    """
    if not math.isfinite(dt):
        raise InvalidSpecError(f"Durée d'évolution non finie: {dt}")
    return np.exp(-1j * rotational_energies(basis, spec, v) * dt)


def kick_strength_from_intensity(peak_w_cm2: float, fwhm_fs: float,
                                 delta_alpha: float = RotorDefaults.DELTA_ALPHA_A3) -> float:
    """
    Force d'impulsion P = (Δα/4ħ)∫ℰ²dt pour une impulsion gaussienne

    Avec ℰ² = 2I/(cε0) et Δα(SI) = 4πε0·Δα(Å³)·1e-30, on obtient
    P = 2π·Δα(Å³)·1e-30·∫I dt / (ħc), avec ∫I dt = I0·FWHM·sqrt(π/(4 ln 2)).

    Args:
        peak_w_cm2: Intensité crête en W/cm²
        fwhm_fs: Durée FWHM en intensité (fs)
        delta_alpha: Anisotropie de polarisabilité (Å³)

    Returns:
        Force d'impulsion sans dimension
    """
    fluence = peak_w_cm2 * 1e4 * fwhm_fs * 1e-15 * math.sqrt(math.pi / (4 * math.log(2)))
    return 2 * math.pi * delta_alpha * 1e-30 * fluence / (constants.hbar * constants.c)
