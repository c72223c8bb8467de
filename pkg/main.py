"""
Point d'entrée en ligne de commande du simulateur

Exemples:
    python main.py ld-scan --config run_config.example.json --out results --jobs 4
    python main.py cd-scan --tau 330 --format json
    python main.py delay-scan --config run.json --tau 440
    python main.py populations --config run.json
    python main.py train preview --config run.json --tau 330

Codes de sortie: 0 succès, 2 erreur de configuration, 3 échec numérique.
"""

import argparse
import logging
import sys
from typing import List, Optional

from config import OutputConfig, ScanDefaults, setup_logging
from errors import RotorControlError
from scanctl import (RunConfig, apply_overrides, default_config, emit_population_report, load_config,
                     run_cd_scan, run_delay_scan, run_ld_scan, save_scan, train_preview)

logger = logging.getLogger(__name__)

DEFAULT_MODES = {"ld-scan": "double-kick", "cd-scan": "chiral"}


def _common_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="Configuration de run (JSON, schema_version 1)")
    parent.add_argument("--out", help=f"Répertoire de sortie (défaut: bloc output ou {OutputConfig.OUTPUT_DIR})")
    parent.add_argument("--format", choices=("csv", "json"), help="Format des tables")
    parent.add_argument("--jobs", type=int, default=ScanDefaults.JOBS, help="Points de balayage en parallèle")
    parent.add_argument("--tau", type=float, help="Période unique du train (fs)")
    parent.add_argument("--alpha-deg", type=float, help="Angle de rotation du train chiral (degrés)")
    parent.add_argument("--mod-amp", type=float, help="Amplitude de modulation A")
    parent.add_argument("--kick-strength", type=float, help="Force d'impulsion totale P")
    parent.add_argument("--log-level", help="Niveau de log (défaut: ROTOR_LOG_LEVEL ou INFO)")
    return parent


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(description="Contrôle de la rotation de He2* par trains d'impulsions")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("ld-scan", parents=[common], help="LD1,3 en fonction de τ (double impulsion)")
    commands.add_parser("cd-scan", parents=[common], help="CD1,3 en fonction de τ (train chiral)")
    commands.add_parser("delay-scan", parents=[common], help="Trace LD(Δt) ou CD(Δt) pour un τ")
    populations = commands.add_parser("populations", parents=[common], help="Tables de populations (J, M)")
    populations.add_argument("--taus", type=float, nargs="+", help="Périodes des scénarios (fs)")
    train = commands.add_parser("train", help="Outils sur le train façonné")
    train_commands = train.add_subparsers(dest="train_command", required=True)
    train_commands.add_parser("preview", parents=[common], help="Intensité et polarisation du train façonné")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Charge la configuration puis applique les surcharges de la ligne de commande"""
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = default_config(DEFAULT_MODES.get(args.command, "double-kick"))
    return apply_overrides(cfg, tau=args.tau, alpha_deg=args.alpha_deg, mod_amp=args.mod_amp,
                           kick_strength=args.kick_strength)


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    out_dir = args.out or cfg.output.dir
    fmt = args.format or cfg.output.format

    if args.command == "ld-scan":
        save_scan(run_ld_scan(cfg, jobs=args.jobs), out_dir, fmt)
    elif args.command == "cd-scan":
        save_scan(run_cd_scan(cfg, jobs=args.jobs), out_dir, fmt)
    elif args.command == "delay-scan":
        run_delay_scan(cfg, out_dir, fmt)
    elif args.command == "populations":
        emit_population_report(cfg, args.taus, out_dir, fmt)
    elif args.command == "train":
        train_preview(cfg, out_dir, fmt)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return run(args)
    except RotorControlError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
