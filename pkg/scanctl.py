"""
Module scanctl: orchestration des balayages

- RunConfig: document JSON versionné (blocs rotor, excitation, probe, output)
- balayages LD(τ) (double impulsion), CD(τ) (train chiral), trace en délai sonde
- rapport de populations, aperçu du train façonné
- échec doux par point: une erreur de propagation est consignée dans la ligne,
  le balayage continue
"""

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import (SCHEMA_VERSION, TOOL_VERSION, DynamicsDefaults, OutputConfig, ProbeDefaults, RotorDefaults,
                    ScanDefaults, ShaperDefaults)
from dynamics import DensityEnsemble, check_convergence, initial_ensemble, propagate_field, propagate_train, \
    top_shell_population
from errors import ConfigurationError, NumericalFailureError, RotorControlError
from probelab import (DichroismTrace, DetectionModel, TwoPhoton, cd_pair, dichroism, dichroism_from_signals,
                      extract_coherence_amplitude, ld_pair, lif_signal, make_model, population_map,
                      vibrational_amplitudes, with_amplitude)
from pulse_forge import (PulseTrainDescriptor, TimeGrid, chiral_train, double_kick_train, polarization_trace,
                         synthesize_field, to_descriptor)
from result_store import save_json, save_table
from rotor_core import BasisIndex, PolarizationState, RotorSpec, build_basis

# Configuration du logger
logger = logging.getLogger(__name__)

MODES = ("double-kick", "chiral")
PROPAGATIONS = ("impulsive", "field")
ORIENTATIONS = ("parallel", "perpendicular")

SCAN_COLUMNS = ("tau_fs", "magnitude", "resolved_magnitude", "signed_value", "phase", "re_z", "im_z", "top_shell",
                "converged", "jump", "error")
TRACE_COLUMNS = ("dt_fs", "i_plus", "i_minus", "dichroism")
POPULATION_COLUMNS = ("J", "M", "population")
PREVIEW_COLUMNS = ("t_fs", "intensity", "angle_deg")


# ---------------------------------------------------------------------------
# Configuration de run
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExcitationConfig:
    mode: str = "double-kick"
    tau_fs: Optional[float] = None
    tau_range_fs: Tuple[float, float] = (ScanDefaults.TAU_START_FS, ScanDefaults.TAU_STOP_FS)
    tau_step_fs: float = ScanDefaults.TAU_STEP_FS
    alpha_deg: float = ShaperDefaults.ALPHA_DEG
    mod_amp: float = ShaperDefaults.MOD_AMP
    kick_strength: Optional[float] = None
    propagation: str = "impulsive"
    orientation: str = "parallel"
    handedness: int = 1
    pulse_fwhm_fs: float = ShaperDefaults.PULSE_FWHM_FS
    center_nm: float = ShaperDefaults.CENTER_NM
    threshold: float = ShaperDefaults.PULSE_THRESHOLD
    field_step_fs: float = DynamicsDefaults.FIELD_STEP_FS
    grid_points: int = ShaperDefaults.GRID_POINTS
    grid_step_fs: float = ShaperDefaults.GRID_STEP_FS

    @property
    def alpha(self) -> float:
        return math.radians(self.alpha_deg)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.grid_points, self.grid_step_fs)


@dataclass(frozen=True)
class ProbeConfig:
    pair: Optional[str] = None
    model: str = ProbeDefaults.MODEL
    m_weighting: str = ProbeDefaults.M_WEIGHTING
    branches: Tuple[str, ...] = ProbeDefaults.BRANCHES
    dt_start_fs: float = ProbeDefaults.DT_START_FS
    dt_stop_fs: float = ProbeDefaults.DT_STOP_FS
    dt_step_fs: float = ProbeDefaults.DT_STEP_FS

    def dt_grid(self) -> np.ndarray:
        return _grid(self.dt_start_fs, self.dt_stop_fs, self.dt_step_fs)

    def detection_model(self) -> DetectionModel:
        return make_model(self.model, self.m_weighting, self.branches)


@dataclass(frozen=True)
class OutputSettings:
    dir: str = OutputConfig.OUTPUT_DIR
    format: str = OutputConfig.FORMAT
    deterministic: bool = OutputConfig.DETERMINISTIC


@dataclass(frozen=True)
class RunConfig:
    """Configuration complète d'un run (valeurs par défaut résolues)"""

    rotor: RotorSpec = field(default_factory=RotorSpec)
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    output: OutputSettings = field(default_factory=OutputSettings)
    schema_version: int = SCHEMA_VERSION


def _grid(start: float, stop: float, step: float) -> np.ndarray:
    count = int(math.floor((stop - start) / step + 1e-9))
    return np.round(start + step * np.arange(count + 1), 9)


def _take(block: Dict, allowed: Sequence[str], name: str) -> Dict:
    if not isinstance(block, dict):
        raise ConfigurationError(f"Le bloc '{name}' doit être un objet JSON")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigurationError(f"Clés inconnues dans le bloc '{name}': {unknown}")
    return dict(block)


def _int_keyed(mapping: Any, name: str) -> Dict[int, float]:
    if not isinstance(mapping, dict):
        raise ConfigurationError(f"'{name}' doit être un objet {{niveau: valeur}}")
    try:
        return {int(k): float(v) for k, v in mapping.items()}
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"'{name}' invalide: {e}") from e


def _parse_rotor(block: Dict) -> RotorSpec:
    block = _take(block, ("b_rot_thz", "delta_alpha_a3", "j_parity", "j_max", "vib_weights",
                          "centrifugal_d_thz"), "rotor")
    b_rot = _int_keyed(block.get("b_rot_thz", {"0": RotorDefaults.B0_THZ}), "b_rot_thz")
    weights = _int_keyed(block.get("vib_weights", {"0": 1.0}), "vib_weights")
    centrifugal = _int_keyed(block.get("centrifugal_d_thz", {}), "centrifugal_d_thz")
    return RotorSpec(b_rot=b_rot,
                     delta_alpha=float(block.get("delta_alpha_a3", RotorDefaults.DELTA_ALPHA_A3)),
                     j_parity=str(block.get("j_parity", RotorDefaults.J_PARITY)),
                     j_max=int(block.get("j_max", RotorDefaults.J_MAX)),
                     vib_weights=weights,
                     centrifugal_d=centrifugal)


def _parse_excitation(block: Dict) -> ExcitationConfig:
    names = [f.name for f in ExcitationConfig.__dataclass_fields__.values()]
    block = _take(block, names, "excitation")
    mode = block.get("mode", "double-kick")
    if mode not in MODES:
        raise ConfigurationError(f"Mode d'excitation inconnu: {mode} (attendu {MODES})")
    if block.get("kick_strength") is None:
        block["kick_strength"] = (ScanDefaults.DOUBLE_KICK_STRENGTH if mode == "double-kick"
                                  else ScanDefaults.CHIRAL_KICK_STRENGTH)
    if "tau_range_fs" in block:
        block["tau_range_fs"] = tuple(float(x) for x in block["tau_range_fs"])
    try:
        exc = ExcitationConfig(**block)
    except TypeError as e:
        raise ConfigurationError(f"Bloc 'excitation' invalide: {e}") from e

    if exc.tau_fs is not None and not (exc.tau_fs > 0):
        raise ConfigurationError(f"τ doit être > 0 (reçu {exc.tau_fs})")
    if len(exc.tau_range_fs) != 2:
        raise ConfigurationError("tau_range_fs doit contenir [début, fin]")
    start, stop = exc.tau_range_fs
    if not (0 < start <= stop) or not (exc.tau_step_fs > 0):
        raise ConfigurationError(f"Plage de τ invalide: {exc.tau_range_fs} pas {exc.tau_step_fs}")
    if exc.propagation not in PROPAGATIONS:
        raise ConfigurationError(f"Mode de propagation inconnu: {exc.propagation}")
    if exc.orientation not in ORIENTATIONS:
        raise ConfigurationError(f"Orientation inconnue: {exc.orientation}")
    if exc.handedness not in (1, -1):
        raise ConfigurationError(f"La chiralité doit valoir +1 ou -1 (reçu {exc.handedness})")
    if not (exc.kick_strength >= 0):
        raise ConfigurationError(f"Force d'impulsion invalide: {exc.kick_strength}")
    if not (0 < exc.threshold < 1):
        raise ConfigurationError(f"Seuil de détection d'impulsion invalide: {exc.threshold}")
    TimeGrid(exc.grid_points, exc.grid_step_fs)
    return exc


def _parse_probe(block: Dict, mode: str) -> ProbeConfig:
    names = [f.name for f in ProbeConfig.__dataclass_fields__.values()]
    block = _take(block, names, "probe")
    if block.get("pair") is None:
        block["pair"] = "linear" if mode == "double-kick" else "circular"
    if isinstance(block.get("branches"), list):
        block["branches"] = tuple(block["branches"])
    probe = ProbeConfig(**block)
    if probe.pair not in ("linear", "circular"):
        raise ConfigurationError(f"Paire de sondes inconnue: {probe.pair}")
    model = probe.detection_model()
    if isinstance(model, TwoPhoton):
        probe = replace(probe, branches=model.branches)
    if not (probe.dt_step_fs > 0 and probe.dt_stop_fs > probe.dt_start_fs):
        raise ConfigurationError(f"Plage de délais invalide: {probe.dt_start_fs}-{probe.dt_stop_fs} "
                                 f"pas {probe.dt_step_fs}")
    return probe


def _parse_output(block: Dict) -> OutputSettings:
    block = _take(block, ("dir", "format", "deterministic"), "output")
    out = OutputSettings(**block)
    if out.format not in ("csv", "json"):
        raise ConfigurationError(f"Format de sortie inconnu: {out.format}")
    return out


def train_end(exc: ExcitationConfig, tau: float) -> float:
    """Instant après lequel le champ du train est négligeable (fs)"""
    if exc.propagation == "field":
        return exc.grid.window / 2
    if exc.mode == "double-kick":
        return tau / 2 + 2 * exc.pulse_fwhm_fs
    train = chiral_train(tau, exc.alpha, exc.mod_amp, exc.kick_strength, exc.threshold)
    return train.end_time + 2 * exc.pulse_fwhm_fs


def parse_config(doc: Dict) -> RunConfig:
    """
    Construit et valide une RunConfig à partir d'un document JSON

    Args:
        doc: Document {schema_version, rotor, excitation, probe, output}

    Returns:
        RunConfig

    Raises:
        ConfigurationError: clé inconnue, valeur invalide, fenêtre sonde avant la fin du train
    """
    doc = _take(doc, ("schema_version", "rotor", "excitation", "probe", "output"), "racine")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"Version de schéma non supportée: {version} (attendu {SCHEMA_VERSION})")

    rotor = _parse_rotor(doc.get("rotor", {}))
    excitation = _parse_excitation(doc.get("excitation", {}))
    probe = _parse_probe(doc.get("probe", {}), excitation.mode)
    output = _parse_output(doc.get("output", {}))
    cfg = RunConfig(rotor, excitation, probe, output, version)

    latest = max(train_end(excitation, tau) for tau in tau_values(cfg))
    if probe.dt_start_fs < latest:
        raise ConfigurationError(f"Les délais sonde ({probe.dt_start_fs:g} fs) commencent avant la fin du train "
                                 f"({latest:g} fs)")
    if excitation.propagation == "field" and excitation.mode == "chiral":
        longest = max(tau_values(cfg))
        span = chiral_train(longest, excitation.alpha, excitation.mod_amp, 1.0, excitation.threshold).end_time
        if 2 * span + longest >= excitation.grid.window:
            raise ConfigurationError(f"Fenêtre temporelle ({excitation.grid.window:g} fs) plus courte que le train")
    return cfg


def load_config(path: str) -> RunConfig:
    from result_store import load_json

    logger.info(f"Chargement de la configuration {path}")
    return parse_config(load_json(path))


def default_config(mode: str = "double-kick") -> RunConfig:
    return parse_config({"excitation": {"mode": mode}})


def serialize_config(cfg: RunConfig) -> Dict:
    exc = cfg.excitation
    excitation = {name: getattr(exc, name) for name in ExcitationConfig.__dataclass_fields__}
    excitation["tau_range_fs"] = list(exc.tau_range_fs)
    return {
        "schema_version": cfg.schema_version,
        "rotor": cfg.rotor.to_dict(),
        "excitation": excitation,
        "probe": {name: getattr(cfg.probe, name) for name in ProbeConfig.__dataclass_fields__},
        "output": {name: getattr(cfg.output, name) for name in OutputSettings.__dataclass_fields__},
    }


def canonicalize(cfg: RunConfig) -> str:
    """Forme canonique JSON (clés triées, sans espaces)"""
    return json.dumps(serialize_config(cfg), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonicalize(cfg).encode("utf-8")).hexdigest()


def apply_overrides(cfg: RunConfig, tau: Optional[float] = None, alpha_deg: Optional[float] = None,
                    mod_amp: Optional[float] = None, kick_strength: Optional[float] = None) -> RunConfig:
    """Surcharges de la ligne de commande, revalidées"""
    doc = serialize_config(cfg)
    overrides = {"tau_fs": tau, "alpha_deg": alpha_deg, "mod_amp": mod_amp, "kick_strength": kick_strength}
    for key, value in overrides.items():
        if value is not None:
            doc["excitation"][key] = value
    return parse_config(doc)


def tau_values(cfg: RunConfig) -> List[float]:
    exc = cfg.excitation
    if exc.tau_fs is not None:
        return [float(exc.tau_fs)]
    start, stop = exc.tau_range_fs
    return [float(t) for t in _grid(start, stop, exc.tau_step_fs)]


# ---------------------------------------------------------------------------
# Excitation et mesure
# ---------------------------------------------------------------------------

def build_train(cfg: RunConfig, tau: float, alpha: Optional[float] = None,
                handedness: Optional[int] = None, orientation: Optional[str] = None) -> PulseTrainDescriptor:
    """Train impulsionnel analytique pour le mode de la configuration"""
    exc = cfg.excitation
    if exc.mode == "double-kick":
        return double_kick_train(tau, exc.kick_strength, orientation or exc.orientation)
    alpha = exc.alpha if alpha is None else alpha
    handedness = exc.handedness if handedness is None else handedness
    return chiral_train(tau, handedness * alpha, exc.mod_amp, exc.kick_strength, exc.threshold)


def _field_geometry(mode: str, orientation: str) -> Tuple[PolarizationState, PolarizationState]:
    if mode == "double-kick" and orientation == "parallel":
        return PolarizationState.along_axis(), PolarizationState.linear_in_plane(0.0)
    if mode == "double-kick":
        return PolarizationState.linear_in_plane(0.0), PolarizationState.along_axis()
    return PolarizationState.linear_in_plane(0.0), PolarizationState.linear_in_plane(math.pi / 2)


def excite(cfg: RunConfig, tau: float, basis: BasisIndex, alpha: Optional[float] = None,
           handedness: Optional[int] = None, orientation: Optional[str] = None) -> DensityEnsemble:
    """
    Ensemble initial propagé à travers le train de la configuration

    Args:
        cfg: Configuration du run
        tau: Période du train (fs)
        basis: Base rotationnelle
        alpha, handedness, orientation: surcharges ponctuelles de l'excitation

    Returns:
        DensityEnsemble après le train
    """
    exc = cfg.excitation
    ensemble = initial_ensemble(cfg.rotor, basis)
    if exc.propagation == "impulsive":
        train = build_train(cfg, tau, alpha, handedness, orientation)
        return propagate_train(ensemble, train, cfg.rotor, basis)

    orientation = orientation or exc.orientation
    alpha = exc.alpha if alpha is None else alpha
    handedness = exc.handedness if handedness is None else handedness
    vfield = synthesize_field(exc.mode, tau, exc.kick_strength, handedness * alpha, exc.mod_amp,
                              exc.pulse_fwhm_fs, exc.center_nm, exc.grid)
    return propagate_field(ensemble, vfield, cfg.rotor, basis, exc.field_step_fs,
                           _field_geometry(exc.mode, orientation))


def probe_pair(cfg: RunConfig, probe_handedness: int = 1,
               orientation: Optional[str] = None) -> Tuple[PolarizationState, PolarizationState]:
    if cfg.probe.pair == "linear":
        return ld_pair(orientation or cfg.excitation.orientation)
    return cd_pair(probe_handedness)


def measure(cfg: RunConfig, ens: DensityEnsemble, basis: BasisIndex,
            pair: Optional[Tuple[PolarizationState, PolarizationState]] = None) -> DichroismTrace:
    pair = pair or probe_pair(cfg)
    return dichroism(ens, pair, cfg.probe.detection_model(), cfg.probe.dt_grid(), cfg.rotor, basis)


def reference_phase(cfg: RunConfig, basis: BasisIndex) -> float:
    """
    Phase de référence φref de la famille de runs

    LD: phase de Z à τ = 1/ν1,3 (double impulsion).
    CD: phase de Z pour α = 45°, τ = 0.75/ν1,3, chiralité +1, sonde σ+.
    """
    nu = cfg.rotor.nu_13()
    try:
        if cfg.excitation.mode == "double-kick":
            ens = excite(cfg, 1e3 / nu, basis)
            trace = measure(cfg, ens, basis)
        else:
            ens = excite(cfg, 0.75e3 / nu, basis, alpha=math.radians(ShaperDefaults.ALPHA_DEG), handedness=1)
            trace = measure(cfg, ens, basis, cd_pair(1))
        z, _ = extract_coherence_amplitude(trace, nu)
    except RotorControlError as e:
        logger.error(f"Phase de référence indisponible ({e}), φref = 0")
        return 0.0
    return float(np.angle(z))


# ---------------------------------------------------------------------------
# Balayages
# ---------------------------------------------------------------------------

@dataclass
class ScanResult:
    """
    Résultat d'un balayage en τ

    series: nom de série -> lignes (dict sur SCAN_COLUMNS) triées par τ
    metadata: hash de configuration, versions, ν, φref
    """

    kind: str
    series: Dict[str, List[Dict[str, Any]]]
    metadata: Dict[str, Any]

    def column(self, series: str, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.series[series]], dtype=float)

    @property
    def taus(self) -> np.ndarray:
        first = next(iter(self.series))
        return self.column(first, "tau_fs")


def _failed_row(tau: float, error: Exception) -> Dict[str, Any]:
    return {"tau_fs": tau, "magnitude": math.nan, "resolved_magnitude": math.nan, "signed_value": math.nan,
            "phase": math.nan, "re_z": math.nan, "im_z": math.nan, "top_shell": math.nan, "converged": False,
            "jump": False, "error": str(error)}


def _row(tau: float, z: complex, phi_ref: float, top_shell: float, converged: bool,
         resolved: Optional[float] = None) -> Dict[str, Any]:
    signed = float((z * complex(math.cos(phi_ref), -math.sin(phi_ref))).real)
    phase = float(np.angle(z * complex(math.cos(phi_ref), -math.sin(phi_ref))))
    resolved = abs(z) if resolved is None else resolved
    return {"tau_fs": tau, "magnitude": abs(z), "resolved_magnitude": resolved, "signed_value": signed,
            "phase": phase,
            "re_z": float(z.real), "im_z": float(z.imag), "top_shell": top_shell, "converged": converged,
            "jump": False, "error": ""}


def _map_points(func: Callable[[float], Any], taus: Sequence[float], jobs: int) -> List[Any]:
    def guarded(tau: float):
        try:
            return func(tau)
        except RotorControlError as e:
            logger.error(f"Échec du point τ={tau:g} fs: {e}")
            return e
        except (np.linalg.LinAlgError, ArithmeticError) as e:
            logger.error(f"Échec numérique du point τ={tau:g} fs: {e}")
            return NumericalFailureError(f"{type(e).__name__}: {e}")

    if jobs > 1 and len(taus) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(guarded, taus))
    return [guarded(tau) for tau in taus]


def flag_discontinuities(values: Sequence[float], factor: float = ScanDefaults.JUMP_FACTOR) -> List[bool]:
    """
    Repère les sauts isolés d'une courbe échantillonnée régulièrement

    Un point est signalé quand sa plus grande différence avec un voisin dépasse
    factor × la médiane des différences voisines (jusqu'à cinq) et 1e-3 du maximum.
    """
    values = np.asarray(values, dtype=float)
    flags = [False] * values.size
    if values.size < 4:
        return flags
    diffs = np.abs(np.diff(values))
    floor = 1e-3 * np.nanmax(np.abs(values))
    for i in range(values.size):
        around = [diffs[k] for k in (i - 1, i) if 0 <= k < diffs.size]
        local = diffs[max(0, i - 3):min(diffs.size, i + 3)]
        local = local[np.isfinite(local)]
        if not around or local.size == 0:
            continue
        jump = max(around)
        if np.isfinite(jump) and jump > factor * np.median(local) and jump > floor:
            flags[i] = True
    return flags


def _finalize_series(rows: List[Dict[str, Any]], label: str) -> List[Dict[str, Any]]:
    rows = sorted(rows, key=lambda r: r["tau_fs"])
    flags = flag_discontinuities([r["magnitude"] for r in rows])
    for row, flag in zip(rows, flags):
        row["jump"] = bool(flag)
        if flag:
            logger.warning(f"Saut suspect dans la série {label} à τ={row['tau_fs']:g} fs")
    return rows


def _metadata(cfg: RunConfig, kind: str, nu: float, phi_ref: float) -> Dict[str, Any]:
    meta = {"kind": kind, "config_hash": config_hash(cfg), "schema_version": cfg.schema_version,
            "tool_version": TOOL_VERSION, "nu_thz": nu, "phi_ref": phi_ref}
    stamp = datetime.now(timezone.utc).isoformat()
    logger.info(f"Balayage {kind} terminé à {stamp}")
    if not cfg.output.deterministic:
        meta["created_at"] = stamp
    return meta


def run_ld_scan(cfg: RunConfig, jobs: int = 1) -> ScanResult:
    """
    Amplitude LD1,3 en fonction de la période τ de la double impulsion

    Args:
        cfg: Configuration (mode double-kick, paire linéaire)
        jobs: Nombre de points évalués en parallèle

    Returns:
        ScanResult avec la série "linear"
    """
    if cfg.excitation.mode != "double-kick" or cfg.probe.pair != "linear":
        raise ConfigurationError("Le balayage LD exige le mode double-kick et une paire de sondes linéaires")
    basis = build_basis(cfg.rotor)
    nu = cfg.rotor.nu_13()
    phi_ref = reference_phase(cfg, basis)
    taus = tau_values(cfg)
    logger.info(f"Balayage LD sur {len(taus)} valeurs de τ (ν1,3 = {nu:g} THz)")

    def point(tau: float) -> Dict[str, Any]:
        ens = excite(cfg, tau, basis)
        converged = check_convergence(ens, basis)
        z, _ = extract_coherence_amplitude(measure(cfg, ens, basis), nu)
        resolved = None
        if len(cfg.rotor.levels) > 1:
            levels = vibrational_amplitudes(ens, probe_pair(cfg), cfg.probe.detection_model(), cfg.probe.dt_grid(),
                                            cfg.rotor, basis)
            resolved = float(sum(abs(zv) for zv in levels.values()))
        return _row(tau, z, phi_ref, top_shell_population(ens, basis), converged, resolved)

    rows = [r if isinstance(r, dict) else _failed_row(tau, r)
            for tau, r in zip(taus, _map_points(point, taus, jobs))]
    return ScanResult("LD", {"linear": _finalize_series(rows, "linear")}, _metadata(cfg, "LD", nu, phi_ref))


def run_cd_scan(cfg: RunConfig, jobs: int = 1) -> ScanResult:
    """
    Amplitude signée CD1,3 en fonction de la période τ du train chiral

    Les deux séries (sonde σ+ et σ-) sont calculées sur le même ensemble.

    Returns:
        ScanResult avec les séries "sigma_plus" et "sigma_minus"
    """
    if cfg.excitation.mode != "chiral" or cfg.probe.pair != "circular":
        raise ConfigurationError("Le balayage CD exige le mode chiral et une paire de sondes circulaires")
    model = cfg.probe.detection_model()
    if not isinstance(model, TwoPhoton):
        raise ConfigurationError("Le balayage CD exige le modèle de détection à deux photons")
    basis = build_basis(cfg.rotor)
    nu = cfg.rotor.nu_13()
    phi_ref = reference_phase(cfg, basis)
    taus = tau_values(cfg)
    dt_grid = cfg.probe.dt_grid()
    plus, minus = cd_pair(1)
    logger.info(f"Balayage CD sur {len(taus)} valeurs de τ (α = {cfg.excitation.alpha_deg:g}°)")

    def point(tau: float) -> Tuple[Dict[str, Any], Dict[str, Any]]:
        ens = excite(cfg, tau, basis)
        converged = check_convergence(ens, basis)
        top = top_shell_population(ens, basis)
        i_plus = lif_signal(ens, plus, model, dt_grid, cfg.rotor, basis)
        i_minus = lif_signal(ens, minus, model, dt_grid, cfg.rotor, basis)
        z_plus, _ = extract_coherence_amplitude(dichroism_from_signals("CD", dt_grid, i_plus, i_minus), nu)
        z_minus, _ = extract_coherence_amplitude(dichroism_from_signals("CD", dt_grid, i_minus, i_plus), nu)
        return _row(tau, z_plus, phi_ref, top, converged), _row(tau, z_minus, phi_ref, top, converged)

    rows_plus, rows_minus = [], []
    for tau, result in zip(taus, _map_points(point, taus, jobs)):
        if isinstance(result, tuple):
            rows_plus.append(result[0])
            rows_minus.append(result[1])
        else:
            rows_plus.append(_failed_row(tau, result))
            rows_minus.append(_failed_row(tau, result))
    series = {"sigma_plus": _finalize_series(rows_plus, "sigma_plus"),
              "sigma_minus": _finalize_series(rows_minus, "sigma_minus")}
    return ScanResult("CD", series, _metadata(cfg, "CD", nu, phi_ref))


def save_scan(result: ScanResult, out_dir: str, fmt: str = OutputConfig.FORMAT) -> List[str]:
    """Écrit une table par série et un résumé JSON"""
    stem = f"{result.kind.lower()}_scan"
    paths = []
    for name, rows in result.series.items():
        table = [[row[c] for c in SCAN_COLUMNS] for row in rows]
        suffix = "" if len(result.series) == 1 else f"_{name}"
        paths.append(save_table(out_dir, f"{stem}{suffix}", SCAN_COLUMNS, table, fmt))
    paths.append(save_json(os.path.join(out_dir, f"{stem}_summary.json"),
                           {"metadata": result.metadata, "series": sorted(result.series)}))
    return paths


def run_delay_scan(cfg: RunConfig, out_dir: Optional[str] = None, fmt: Optional[str] = None) -> DichroismTrace:
    """
    Trace LD(Δt) ou CD(Δt) pour une seule période τ

    Args:
        cfg: Configuration avec tau_fs fixé
        out_dir: Répertoire de sortie (rien n'est écrit si None)
        fmt: Format de la trace ("csv" ou "json")

    Returns:
        DichroismTrace avec amplitude extraite
    """
    if cfg.excitation.tau_fs is None:
        raise ConfigurationError("Le balayage en délai exige une valeur unique de τ (tau_fs ou --tau)")
    tau = float(cfg.excitation.tau_fs)
    basis = build_basis(cfg.rotor)
    nu = cfg.rotor.nu_13()
    phi_ref = reference_phase(cfg, basis)
    ens = excite(cfg, tau, basis)
    converged = check_convergence(ens, basis)
    trace = with_amplitude(measure(cfg, ens, basis), nu, phi_ref)
    logger.info(f"Trace {trace.kind} à τ={tau:g} fs: |Z|={trace.magnitude:.4g}, valeur signée={trace.signed_value:.4g}")

    if out_dir is not None:
        stem = f"delay_scan_{trace.kind.lower()}_tau{tau:g}"
        rows = [list(r) for r in zip(trace.dt_grid, trace.i_plus, trace.i_minus, trace.values)]
        save_table(out_dir, stem, TRACE_COLUMNS, rows, fmt or cfg.output.format)
        summary = trace.summary()
        summary.update({"tau_fs": tau, "converged": converged, "config_hash": config_hash(cfg),
                        "schema_version": cfg.schema_version, "tool_version": TOOL_VERSION})
        save_json(os.path.join(out_dir, f"{stem}_summary.json"), summary)
    return trace


def population_scenarios(cfg: RunConfig, taus: Optional[Sequence[float]] = None) -> List[Tuple[str, float, Dict]]:
    """Scénarios (nom, τ, surcharges) du rapport de populations"""
    scenarios = []
    if cfg.excitation.mode == "double-kick":
        taus = taus or ScanDefaults.POPULATION_TAUS_DOUBLE_KICK
        for tau in taus:
            for orientation in ORIENTATIONS:
                scenarios.append((f"tau{tau:g}_{orientation}", float(tau), {"orientation": orientation}))
    else:
        taus = taus or ScanDefaults.POPULATION_TAUS_CHIRAL
        for tau in taus:
            for handedness, label in ((1, "plus"), (-1, "minus")):
                scenarios.append((f"tau{tau:g}_handedness_{label}", float(tau), {"handedness": handedness}))
    return scenarios


def emit_population_report(cfg: RunConfig, taus: Optional[Sequence[float]] = None,
                           out_dir: Optional[str] = None, fmt: Optional[str] = None
                           ) -> Dict[str, List[Tuple[int, int, float]]]:
    """
    Tables de populations (J, M, P) par scénario (τ, polarisation)

    Returns:
        Dictionnaire nom de scénario -> table
    """
    basis = build_basis(cfg.rotor)
    report = {}
    for name, tau, overrides in population_scenarios(cfg, taus):
        try:
            ens = excite(cfg, tau, basis, **overrides)
        except RotorControlError as e:
            logger.error(f"Scénario {name} en échec: {e}")
            continue
        check_convergence(ens, basis)
        table = population_map(ens, basis)
        total = sum(p for _, _, p in table)
        if abs(total - 1.0) > 1e-9:
            logger.warning(f"Populations du scénario {name} sommant à {total:.12f}")
        report[name] = table
        if out_dir is not None:
            save_table(out_dir, f"populations_{cfg.excitation.mode}_{name}", POPULATION_COLUMNS,
                       [list(r) for r in table], fmt or cfg.output.format)
    return report


def train_preview(cfg: RunConfig, out_dir: Optional[str] = None, fmt: Optional[str] = None
                  ) -> Tuple[List[List[float]], PulseTrainDescriptor]:
    """
    Champ façonné pour la première période τ: trace (t, intensité, angle) et descripteur

    Returns:
        (lignes de la trace, descripteur)
    """
    exc = cfg.excitation
    tau = tau_values(cfg)[0]
    alpha = exc.handedness * exc.alpha
    vfield = synthesize_field(exc.mode, tau, exc.kick_strength, alpha, exc.mod_amp,
                              exc.pulse_fwhm_fs, exc.center_nm, exc.grid)
    geometry = "probe-axis" if exc.mode == "double-kick" and exc.orientation == "parallel" else "transverse"
    descriptor = to_descriptor(vfield, exc.threshold, geometry=geometry, tau=tau,
                               alpha=alpha if exc.mode == "chiral" else 0.0,
                               mod_amp=exc.mod_amp if exc.mode == "chiral" else 0.0)
    times, intensity, angle = polarization_trace(vfield)
    rows = [[float(t), float(i), float(a)] for t, i, a in zip(times, intensity, angle)]
    if out_dir is not None:
        save_table(out_dir, "train_preview", PREVIEW_COLUMNS, rows, fmt or cfg.output.format)
        payload = descriptor.to_dict()
        payload.update({"mode": exc.mode, "config_hash": config_hash(cfg), "schema_version": cfg.schema_version})
        save_json(os.path.join(out_dir, "train_descriptor.json"), payload)
    return rows, descriptor
