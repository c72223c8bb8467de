"""
Configuration du simulateur de contrôle rotationnel de He2*

Les valeurs par défaut sont regroupées en classes de constantes. Les variables
d'environnement (fichier .env pris en charge) permettent de surcharger le niveau
de log, le répertoire de sortie et le nombre de workers.

Unités: temps en fs, fréquences en THz, énergies exprimées en pulsations
(2π·THz), ħ = 1. La constante rotationnelle B0 n'est pas donnée directement:
elle est déduite de la fréquence de cohérence ν1,3 = 2.27 THz via
E3 - E1 = B·(12 - 2) = 10·B, soit B0 = ν1,3 / 10 = 0.227 THz.
"""

import logging
import os

from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

TOOL_VERSION = "0.3.0"
SCHEMA_VERSION = 1


class RotorDefaults:
    """Constantes moléculaires de He2* (état a)"""

    NU_13_THZ = 2.27
    B0_THZ = NU_13_THZ / 10.0
    DELTA_ALPHA_A3 = 35.1
    J_PARITY = "odd"
    J_MAX = 11
    CENTRIFUGAL_D_THZ = 0.0
    # Seuil de population de la couche J la plus haute
    TOP_SHELL_TOLERANCE = 1e-6


class ShaperDefaults:
    """Façonneur d'impulsions 4f et grille spectrale"""

    PULSE_FWHM_FS = 50.0
    CENTER_NM = 793.0
    GRID_POINTS = 16384
    GRID_STEP_FS = 0.5
    PULSE_THRESHOLD = 0.02
    MOD_AMP = 2.6
    ALPHA_DEG = 45.0


class DynamicsDefaults:
    """Intégration du champ complet"""

    FIELD_STEP_FS = 0.5
    KICK_NORM_TOLERANCE = 1e-8
    FIELD_NORM_TOLERANCE = 1e-6
    # Intensité relative en dessous de laquelle le champ est considéré nul
    FIELD_SUPPORT_FRACTION = 1e-10


class ProbeDefaults:
    """Détection: délais sonde et modèle de fluorescence"""

    DT_START_FS = 11000.0
    DT_STOP_FS = 17000.0
    DT_STEP_FS = 10.0
    MODEL = "two-photon"
    M_WEIGHTING = "dipole"
    # Branches ΔJ = J_final - J_initial retenues: O (-2), Q (0), S (+2)
    BRANCHES = ("Q", "S")
    MIN_PERIODS = 5
    RECOMMENDED_PERIODS = 10


class ScanDefaults:
    """Grilles de balayage en τ et intensités des trains"""

    TAU_START_FS = 150.0
    TAU_STOP_FS = 715.0
    TAU_STEP_FS = 5.0
    # Paramètres d'ajustement, pas des valeurs mesurées
    DOUBLE_KICK_STRENGTH = 0.4
    CHIRAL_KICK_STRENGTH = 2.0
    JOBS = int(os.environ.get("ROTOR_JOBS", "1"))
    POPULATION_TAUS_DOUBLE_KICK = (440.0, 220.0)
    POPULATION_TAUS_CHIRAL = (330.0, 550.0, 440.0)
    JUMP_FACTOR = 3.0


class OutputConfig:
    """Sorties CSV/JSON"""

    OUTPUT_DIR = os.environ.get("ROTOR_OUTPUT_DIR", "results")
    FORMAT = "csv"
    DETERMINISTIC = True
    FLOAT_FORMAT = "%.12g"


def setup_logging(level=None):
    """
    Configure le logging global du simulateur

    Args:
        level: Niveau de log (str ou int). Par défaut ROTOR_LOG_LEVEL ou INFO.
    """
    if level is None:
        level = os.environ.get("ROTOR_LOG_LEVEL", "INFO")
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)
