"""
Exceptions du simulateur de contrôle rotationnel

Chaque exception porte le code de sortie que la CLI renvoie:
- 2: erreur de configuration (spécification invalide, opération non supportée)
- 3: échec numérique (dérive de norme, résolution insuffisante, signal dégénéré)
"""

from typing import Optional


class RotorControlError(Exception):
    """Erreur de base du simulateur"""

    exit_code = 1


class ConfigurationError(RotorControlError):
    """Configuration de run ou de grille invalide"""

    exit_code = 2


class InvalidSpecError(ConfigurationError):
    """RotorSpec incohérent (B ≤ 0, parité, poids vibrationnels...)"""


class UnsupportedOperationError(RotorControlError):
    """Opération non définie pour cette polarisation ou ce modèle de détection"""

    exit_code = 2


class NumericalFailureError(RotorControlError):
    """La propagation n'a pas conservé la norme"""

    exit_code = 3

    def __init__(self, message: str, step_hint: Optional[float] = None):
        if step_hint is not None:
            message = f"{message} (essayer un pas <= {step_hint:g} fs)"
        super().__init__(message)
        self.step_hint = step_hint


class ReductionUnavailableError(RotorControlError):
    """Impulsions qui se recouvrent: utiliser propagate_field"""

    exit_code = 3


class ResolutionError(RotorControlError):
    """Fenêtre de délais trop courte pour extraire l'amplitude"""

    exit_code = 3


class DegenerateSignalError(RotorControlError):
    """I+ + I- s'annule, le dichroïsme n'est pas défini"""

    exit_code = 3
