"""
`simulate` and `featurize` commands.
"""

import argparse
import logging

from ..config import AppConfig
from ..exceptions import ConfigError, SimulationError
from ..schemas.ecm import FleetConfig
from ..services.fleet_service import FleetService
from ..utils.json_utils import load_model_document
from ..utils.presets import fleet_from_preset
from .common import add_settings_option, jobs_of, load_settings

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    sim = subparsers.add_parser("simulate", help="Simulate a synthetic fleet to a cycle CSV")
    source = sim.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="Fleet configuration JSON")
    source.add_argument("--preset", help="Fleet preset from config/fleets.yaml")
    sim.add_argument("--cells", type=int, default=None, help="Override the number of cells")
    sim.add_argument("--cycles", type=int, default=None, help="Override cycles per cell")
    sim.add_argument("--seed", type=int, default=None, help="Override the fleet seed")
    sim.add_argument("--out", required=True, help="Output cycle CSV")
    sim.add_argument("--jobs", type=int, default=None, help="Worker processes")
    sim.set_defaults(func=run_simulate)

    feat = subparsers.add_parser("featurize", help="Extract QdLinear features from a cycle CSV")
    feat.add_argument("--in", dest="input", required=True, help="Cycle CSV")
    feat.add_argument("--out", required=True, help="Output feature CSV")
    add_settings_option(feat)
    feat.add_argument("--v-lower", type=float, default=None, help="Grid lower voltage")
    feat.add_argument("--v-upper", type=float, default=None, help="Grid upper voltage")
    feat.add_argument("--points", type=int, default=None, help="Grid length T'")
    feat.add_argument(
        "--observed-fraction", type=float, default=1.0, help="Keep only this prefix fraction"
    )
    feat.add_argument("--c-nom", type=float, default=None, help="Nominal capacity (Ah)")
    feat.add_argument("--physics", default=None, help="Physics sidecar JSON")
    feat.set_defaults(func=run_featurize)


def run_simulate(args: argparse.Namespace, app: AppConfig) -> int:
    for flag, value in (("--cells", args.cells), ("--cycles", args.cycles)):
        if value is not None and value < 1:
            raise SimulationError(f"{flag} must be at least 1, got {value}")
    if args.config:
        fleet = load_model_document(args.config, FleetConfig)
        overrides = {
            k: v
            for k, v in {"n_cells": args.cells, "n_cycles": args.cycles, "seed": args.seed}.items()
            if v is not None
        }
        if overrides:
            fleet = FleetConfig.model_validate({**fleet.model_dump(), **overrides})
    else:
        fleet = fleet_from_preset(
            args.preset,
            n_cells=4 if args.cells is None else args.cells,
            n_cycles=100 if args.cycles is None else args.cycles,
            seed=0 if args.seed is None else args.seed,
        )
    service = FleetService(jobs=jobs_of(args, app), progress=app.show_progress)
    path = service.simulate_to_files(fleet, args.out)
    print(f"Wrote {path}")
    return 0


def run_featurize(args: argparse.Namespace, app: AppConfig) -> int:
    settings = load_settings(args.config, app)
    update = {
        k: v
        for k, v in {"v_lower": args.v_lower, "v_upper": args.v_upper, "n_points": args.points}.items()
        if v is not None
    }
    grid = type(settings.grid).model_validate({**settings.grid.model_dump(), **update})
    if not 0.0 < args.observed_fraction <= 1.0:
        raise ConfigError(f"--observed-fraction must lie in (0, 1], got {args.observed_fraction}")
    service = FleetService(progress=app.show_progress)
    dataset = service.featurize_file(
        args.input,
        args.out,
        grid,
        observed_fraction=args.observed_fraction,
        c_nom=args.c_nom,
        physics_path=args.physics,
    )
    print(f"Wrote {len(dataset)} features to {args.out}")
    return 0
