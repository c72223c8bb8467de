"""
Module de persistance des résultats (CSV / JSON)

Écriture mono-thread, formats déterministes: les flottants sont écrits avec
un nombre fixe de chiffres significatifs, les clés JSON sont triées.
"""

import csv
import json
import logging
import math
import os
from typing import Any, Dict, Iterable, List, Sequence

from config import OutputConfig
from errors import ConfigurationError

# Configuration du logger
logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    """Représentation CSV stable d'une cellule"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return OutputConfig.FLOAT_FORMAT % value
    if isinstance(value, int):
        return str(value)
    try:
        return OutputConfig.FLOAT_FORMAT % float(value)
    except (TypeError, ValueError):
        return str(value)


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, bool) or value is None or isinstance(value, (str, int)):
        return value
    try:
        number = float(value)
    except (TypeError, ValueError):
        return str(value)
    return None if math.isnan(number) or math.isinf(number) else number


def save_json(path: str, payload: Dict) -> str:
    """
    Sauvegarde un document JSON (clés triées, indentation 2)

    Args:
        path: Chemin du fichier
        payload: Document à écrire

    Returns:
        str: Chemin écrit

    Raises:
        ConfigurationError: répertoire de sortie impossible à créer ou fichier non inscriptible
    """
    try:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(_json_safe(payload), f, indent=2, sort_keys=True)
            f.write("\n")
        logger.info(f"Résultats sauvegardés dans {path}")
        return path
    except OSError as e:
        logger.error(f"Erreur lors de la sauvegarde de {path}: {e}")
        raise ConfigurationError(f"Écriture impossible: {path} ({e.strerror or e})") from e


def load_json(path: str) -> Dict:
    """
    Charge un document JSON

    Raises:
        ConfigurationError: fichier absent, illisible ou JSON invalide
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigurationError(f"Fichier introuvable: {path}") from e
    except OSError as e:
        raise ConfigurationError(f"Lecture impossible: {path} ({e.strerror or e})") from e
    except json.JSONDecodeError as e:
        logger.error(f"Erreur lors du chargement de {path}: {e}")
        raise ConfigurationError(f"JSON invalide dans {path}: {e}") from e


def save_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Sauvegarde une table CSV avec en-tête"""
    try:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
        logger.info(f"Table sauvegardée dans {path}")
        return path
    except OSError as e:
        logger.error(f"Erreur lors de la sauvegarde de {path}: {e}")
        raise ConfigurationError(f"Écriture impossible: {path} ({e.strerror or e})") from e


def save_table(out_dir: str, stem: str, columns: Sequence[str], rows: List[Sequence[Any]],
               fmt: str = OutputConfig.FORMAT) -> str:
    """
    Sauvegarde une table au format demandé

    Args:
        out_dir: Répertoire de sortie
        stem: Nom de fichier sans extension
        columns: Noms de colonnes
        rows: Lignes (séquences alignées sur columns)
        fmt: "csv" ou "json" (liste d'objets)

    Returns:
        str: Chemin écrit
    """
    if fmt == "csv":
        return save_csv(os.path.join(out_dir, f"{stem}.csv"), columns, rows)
    if fmt == "json":
        records = [dict(zip(columns, row)) for row in rows]
        return save_json(os.path.join(out_dir, f"{stem}.json"), {"columns": list(columns), "rows": records})
    raise ConfigurationError(f"Format de sortie inconnu: {fmt}")
