"""
Configuration loader for centralized settings management.

Loads configuration from config/config.yaml (or the file named by
BATTERYTTT_CONFIG) and provides typed access to the defaults of every
pipeline stage.
"""

import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from ..exceptions import ConfigError
from ..schemas.features import VoltageGrid
from ..schemas.model import ModelConfig
from ..schemas.training import LossConfig, OptimConfig, TtaConfig
from .json_utils import parse_with_pydantic

CONFIG_ENV_VAR = "BATTERYTTT_CONFIG"


class Config:
    """Configuration container with dot-path access."""

    def __init__(self, config_dict: Dict[str, Any], source: str = "<memory>"):
        self._config = config_dict or {}
        self.source = source

    def get(self, key_path: str, default: Any = None) -> Any:
        """
        Get config value using dot notation.

        Example:
            config.get("optim.tta.steps")  # Returns 10
        """
        value: Any = self._config
        for key in key_path.split("."):
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default
        return value

    def section(self, key_path: str) -> Dict[str, Any]:
        """A mapping at ``key_path`` ({} when absent)."""
        value = self.get(key_path, {})
        if not isinstance(value, dict):
            raise ConfigError(f"config key '{key_path}' is not a mapping", {"source": self.source})
        return value

    def __getitem__(self, key: str) -> Any:
        return self._config[key]

    def __contains__(self, key: str) -> bool:
        return key in self._config

    @property
    def raw(self) -> Dict[str, Any]:
        return self._config


# Global config instance
_config: Optional[Config] = None


def _default_config_path() -> Path:
    env_path = os.getenv(CONFIG_ENV_VAR)
    if env_path:
        return Path(env_path)
    project_root = Path(__file__).parent.parent.parent.parent
    return project_root / "config" / "config.yaml"


def load_config(config_path: Optional[str | Path] = None) -> Config:
    """
    Load configuration from a YAML file.

    Args:
        config_path: Path to config file. Defaults to $BATTERYTTT_CONFIG, then
            config/config.yaml

    Returns:
        Config instance

    Raises:
        ConfigError: If the file is missing or is not valid YAML
    """
    global _config

    path = Path(config_path) if config_path is not None else _default_config_path()
    if not path.exists():
        raise ConfigError(
            f"Config file not found: {path}", {"cwd": str(Path.cwd())}
        )
    try:
        with open(path, "r", encoding="utf-8") as f:
            config_dict = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in {path}: {e}") from e

    _config = Config(config_dict, source=str(path))
    return _config


def get_config() -> Config:
    """
    Get the global config instance, loading it on first call.
    """
    global _config
    if _config is None:
        _config = load_config()
    return _config


def reload_config(config_path: Optional[str | Path] = None) -> Config:
    """
    Force reload configuration from file.

    Args:
        config_path: Path to config file
    """
    global _config
    _config = None
    return load_config(config_path)


# Typed accessors for stage defaults

def get_grid_config() -> VoltageGrid:
    config = get_config()
    return parse_with_pydantic(config.section("grid"), VoltageGrid, source=config.source)


def get_model_config() -> ModelConfig:
    config = get_config()
    return parse_with_pydantic(config.section("model"), ModelConfig, source=config.source)


def get_loss_config() -> LossConfig:
    config = get_config()
    return parse_with_pydantic(config.section("loss"), LossConfig, source=config.source)


def get_optim_config() -> OptimConfig:
    """
    Flatten the ``optim.pretrain`` / ``optim.probe`` / ``optim.tta`` sections
    into one OptimConfig.
    """
    config = get_config()
    pretrain = config.section("optim.pretrain")
    tta = config.section("optim.tta")
    fields: Dict[str, Any] = {
        "pretrain_lr": pretrain.get("lr"),
        "betas": pretrain.get("betas"),
        "eps": pretrain.get("eps"),
        "weight_decay": pretrain.get("weight_decay"),
        "batch_size": pretrain.get("batch_size"),
        "max_epochs": pretrain.get("max_epochs"),
        "plateau_tol": pretrain.get("plateau_tol"),
        "plateau_window": pretrain.get("plateau_window"),
        "pretrain_mask_ratio": pretrain.get("mask_ratio"),
        "min_observed_fraction": pretrain.get("min_observed_fraction"),
        "ridge": config.get("optim.probe.ridge"),
        "tta_lr": tta.get("lr"),
        "momentum": tta.get("momentum"),
        "tta_steps": tta.get("steps"),
        "seed": config.get("optim.seed"),
    }
    fields = {k: v for k, v in fields.items() if v is not None}
    return parse_with_pydantic(fields, OptimConfig, source=config.source)


def get_tta_config() -> TtaConfig:
    config = get_config()
    return parse_with_pydantic(config.section("tta"), TtaConfig, source=config.source)


def is_logging_enabled() -> bool:
    """Check if the CSV run log is enabled."""
    return bool(get_config().get("logging.enabled", True))


def get_log_path() -> Path:
    """Get full path to the run-log CSV."""
    log_dir = get_config().get("logging.output_dir", "logs")
    log_file = get_config().get("logging.output_file", "runs.csv")
    return Path(log_dir) / log_file
