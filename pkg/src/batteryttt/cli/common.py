"""
Shared option handling for CLI commands.
"""

import argparse
from dataclasses import dataclass
from typing import Optional

from ..config import AppConfig
from ..schemas.features import VoltageGrid
from ..schemas.model import ModelConfig
from ..schemas.training import LossConfig, OptimConfig, TtaConfig
from ..utils.config_loader import (
    get_grid_config,
    get_loss_config,
    get_model_config,
    get_optim_config,
    get_tta_config,
    reload_config,
)


@dataclass
class Settings:
    """Stage defaults from the YAML config, after command-line overrides."""

    grid: VoltageGrid
    model: ModelConfig
    loss: LossConfig
    optim: OptimConfig
    tta: TtaConfig


def add_settings_option(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        default=None,
        help="YAML settings file (default: $BATTERYTTT_CONFIG or config/config.yaml)",
    )


def load_settings(config_path: Optional[str], app: AppConfig) -> Settings:
    """Load the YAML settings named on the command line or by the environment."""
    reload_config(config_path or app.config_path)
    return Settings(
        grid=get_grid_config(),
        model=get_model_config(),
        loss=get_loss_config(),
        optim=get_optim_config(),
        tta=get_tta_config(),
    )


def jobs_of(args: argparse.Namespace, app: AppConfig) -> int:
    return args.jobs if getattr(args, "jobs", None) else app.jobs
