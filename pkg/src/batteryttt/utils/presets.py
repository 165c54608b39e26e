"""
Fleet preset resolution.

Presets live in config/fleets.yaml, one entry per cell chemistry/format:
- ``cell``      -> EcmParams
- ``protocol``  -> ChargeProtocol
- ``schedule``  -> DegradationSchedule
- ``param_jitter`` -> per-cell relative spread
"""

from pathlib import Path
from typing import Any

import yaml

from ..exceptions import ConfigError
from ..schemas.ecm import FleetConfig
from ..schemas.features import VoltageGrid
from .json_utils import parse_with_pydantic

DEFAULT_PRESETS_PATH = "config/fleets.yaml"


def _presets_file(config_path: str | Path) -> Path:
    config_file = Path(config_path)
    # Fall back to the project root when run from elsewhere
    if not config_file.exists():
        project_root = Path(__file__).parent.parent.parent.parent
        config_file = project_root / "config" / "fleets.yaml"
    if not config_file.exists():
        raise ConfigError(
            f"Fleet presets not found: tried {config_path} and {config_file}",
            {"cwd": str(Path.cwd())},
        )
    return config_file


def list_presets(config_path: str | Path = DEFAULT_PRESETS_PATH) -> dict[str, dict[str, Any]]:
    """
    All presets keyed by name.

    Returns:
        Dict mapping preset name -> raw preset mapping
    """
    with open(_presets_file(config_path), "r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def fleet_from_preset(
    name: str,
    n_cells: int = 4,
    n_cycles: int = 100,
    seed: int = 0,
    config_path: str | Path = DEFAULT_PRESETS_PATH,
    **overrides: Any,
) -> FleetConfig:
    """
    Resolve a named preset into a FleetConfig.

    Args:
        name: Preset name (calce, sanyo, kokam, panasonic, gotion)
        n_cells: Cells in the fleet
        n_cycles: Cycles per cell
        seed: Fleet RNG seed
        config_path: Path to fleets.yaml
        **overrides: Extra top-level FleetConfig fields

    Raises:
        ConfigError: Unknown preset or invalid preset contents
    """
    presets = list_presets(config_path)
    if name not in presets:
        raise ConfigError(f"Unknown fleet preset '{name}'", {"available": sorted(presets)})
    preset = presets[name]
    document = {
        "name": name,
        "cell_prefix": name,
        "n_cells": n_cells,
        "n_cycles": n_cycles,
        "seed": seed,
        "base_params": preset["cell"],
        "protocol": preset["protocol"],
        "schedule": preset.get("schedule", {}),
        "param_jitter": preset.get("param_jitter", {}),
        **overrides,
    }
    return parse_with_pydantic(document, FleetConfig, source=f"preset '{name}'")


def grid_for_fleet(fleet: FleetConfig, n_points: int = 128) -> VoltageGrid:
    """Voltage grid spanning the fleet's recording window."""
    return VoltageGrid(
        v_lower=fleet.protocol.v_lower, v_upper=fleet.protocol.v_upper, n_points=n_points
    )
