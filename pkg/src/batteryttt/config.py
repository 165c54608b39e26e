"""
Runtime settings taken from the environment.

Pipeline defaults (grid, model, loss, optimizers) live in config/config.yaml;
this module only covers process-level knobs.
"""

import os
from pathlib import Path
from typing import Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

# Load environment variables
load_dotenv()

LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class AppConfig(BaseModel):
    """Process configuration."""

    log_level: LogLevel = Field(default="INFO", description="Logging level (BATTERYTTT_LOG)")
    config_path: Optional[Path] = Field(
        default=None, description="YAML config override (BATTERYTTT_CONFIG)"
    )
    jobs: int = Field(default=1, ge=1, description="Default worker processes (BATTERYTTT_JOBS)")
    output_dir: Path = Field(
        default=Path("output"), description="Default output directory (BATTERYTTT_OUTPUT_DIR)"
    )
    run_log: bool = Field(default=True, description="Append runs to the CSV log (BATTERYTTT_RUN_LOG)")

    @property
    def show_progress(self) -> bool:
        """Progress bars only at INFO verbosity or below."""
        return self.log_level in ("DEBUG", "INFO")


def load_app_config() -> AppConfig:
    """
    Load configuration from environment variables.

    Returns:
        AppConfig instance
    """
    config_path = os.getenv("BATTERYTTT_CONFIG")
    return AppConfig(
        log_level=os.getenv("BATTERYTTT_LOG", "INFO").upper(),  # type: ignore[arg-type]
        config_path=Path(config_path) if config_path else None,
        jobs=int(os.getenv("BATTERYTTT_JOBS", "1")),
        output_dir=Path(os.getenv("BATTERYTTT_OUTPUT_DIR", "output")),
        run_log=os.getenv("BATTERYTTT_RUN_LOG", "true").lower() == "true",
    )
