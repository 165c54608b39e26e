"""
Experiment configuration for the ablation harness.
"""

from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, model_validator

from .ecm import FleetConfig
from .features import VoltageGrid
from .model import ModelConfig
from .training import LossConfig, OptimConfig, TtaConfig


class AblationRow(BaseModel):
    """One row of the ablation table."""

    label: str
    tta: TtaConfig
    model: dict[str, Any] = Field(
        default_factory=dict,
        description="ModelConfig overrides; rows with overrides get their own pretrained model",
    )


def default_rows() -> list[AblationRow]:
    return [
        AblationRow(label="BatteryTTT", tta=TtaConfig(mode="tta_full", ssl="pg_ssl")),
        AblationRow(label="w/o PG-SSL", tta=TtaConfig(mode="tta_full", ssl="recon_only")),
        AblationRow(
            label="w/o Masked TTA",
            tta=TtaConfig(mode="tta_full", ssl="pg_ssl", mask_ratio=0.0),
        ),
        AblationRow(label="w/o TTA", tta=TtaConfig(mode="none")),
        AblationRow(label="PPA", tta=TtaConfig(mode="tta_ppa", ssl="pg_ssl")),
        AblationRow(label="PPA w/o PG-SSL", tta=TtaConfig(mode="tta_ppa", ssl="recon_only")),
        AblationRow(
            label="w/o Reprogramming",
            tta=TtaConfig(mode="tta_full", ssl="pg_ssl"),
            model={"reprogramming": False},
        ),
    ]


class ExperimentConfig(BaseModel):
    """Source fleet, shifted target fleet and the adaptation matrix."""

    source: FleetConfig
    target: FleetConfig
    grid: VoltageGrid
    target_grid: VoltageGrid
    model: ModelConfig = Field(default_factory=ModelConfig)
    optim: OptimConfig = Field(default_factory=OptimConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    rows: list[AblationRow] = Field(default_factory=default_rows)
    reference_row: str = Field(
        default="w/o TTA", description="Row the seed-win counts are taken against"
    )
    mask_sweep: list[float] = Field(default_factory=lambda: [0.5, 0.6, 0.7, 0.8, 0.9])
    lambda_sweep: list[float] = Field(default_factory=list)
    seeds: list[int] = Field(min_length=1, default_factory=lambda: [0, 1, 2, 3, 4])
    target_observed_fraction: float = Field(default=0.6, gt=0.0, le=1.0)
    source_stride: int = Field(default=1, ge=1, description="Keep every k-th source cycle")
    target_stride: int = Field(default=1, ge=1, description="Keep every k-th target cycle")
    output_dir: Path = Field(default=Path("output/ablation"))

    @model_validator(mode="after")
    def _check_shift(self):
        src = self.source.model_dump(exclude={"name", "cell_prefix", "seed"})
        tgt = self.target.model_dump(exclude={"name", "cell_prefix", "seed"})
        if src == tgt:
            raise ValueError("target fleet must differ from the source fleet")
        for row in self.rows:
            if self.model_for(row).t_full != self.model.t_full:
                raise ValueError(f"row '{row.label}' may not change t_full")
        labels = [row.label for row in self.rows]
        if labels and self.reference_row not in labels:
            raise ValueError(f"reference_row '{self.reference_row}' is not one of the rows {labels}")
        if self.grid.n_points != self.model.t_full or self.target_grid.n_points != self.model.t_full:
            raise ValueError("grid n_points must equal model.t_full")
        return self

    def model_for(self, row: AblationRow) -> ModelConfig:
        """The experiment model with the row's overrides applied."""
        if not row.model:
            return self.model
        return ModelConfig.model_validate({**self.model.model_dump(), **row.model})
