"""
Schemas for the loss, optimizers, test-time adaptation and reports.
"""

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .ecm import CurrentConvention

ResidualMode = Literal["paper_literal", "ocv_corrected"]


class LossConfig(BaseModel):
    """Physics-guided self-supervised loss settings."""

    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(default=0.1, ge=0.0, alias="lambda", description="Residual weight")
    residual_mode: ResidualMode = Field(default="ocv_corrected")
    residual_region: Literal["full", "overlap"] = Field(
        default="full", description="Grid points the ODE residual is evaluated on"
    )
    convention: CurrentConvention = Field(default=CurrentConvention.CHARGE_POSITIVE)


class OptimConfig(BaseModel):
    """Pretraining (AdamW) and test-time (SGD momentum) optimizer settings."""

    pretrain_lr: float = Field(default=1e-3, gt=0)
    betas: tuple[float, float] = Field(default=(0.9, 0.999))
    eps: float = Field(default=1e-8, gt=0)
    weight_decay: float = Field(default=1e-2, ge=0)
    batch_size: int = Field(default=32, ge=1)
    max_epochs: int = Field(default=500, ge=1)
    plateau_tol: float = Field(default=1e-4, ge=0)
    plateau_window: int = Field(default=10, ge=1)
    pretrain_mask_ratio: float = Field(default=0.3, ge=0.0, lt=1.0)
    min_observed_fraction: float = Field(
        default=0.5, gt=0.0, le=1.0, description="Lower bound of the pretraining tail cut"
    )
    ridge: float = Field(default=1e-6, ge=0, description="Linear-probe ridge penalty")
    tta_lr: float = Field(default=1e-2, gt=0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    tta_steps: int = Field(default=10, ge=1)
    seed: int = Field(default=0)

    @model_validator(mode="after")
    def _check_betas(self):
        if not all(0.0 <= b < 1.0 for b in self.betas):
            raise ValueError("betas must lie in [0, 1)")
        return self


class TtaConfig(BaseModel):
    """Test-time adaptation settings."""

    mode: Literal["none", "tta_full", "tta_ppa"] = Field(default="tta_full")
    ssl: Literal["recon_only", "pg_ssl"] = Field(default="pg_ssl")
    mask_ratio: float = Field(default=0.8, ge=0.0, le=0.95)
    reset_policy: Literal["episodic", "online"] = Field(default="episodic")
    residual_mode: Optional[Literal["paper_literal", "ocv_corrected"]] = Field(
        default=None, description="Overrides LossConfig.residual_mode when set"
    )


class SampleRecord(BaseModel):
    """Outcome of one stream sample."""

    cell_id: str
    cycle: int
    predicted_soh: float
    true_soh: Optional[float] = None
    ssl_losses: list[float] = Field(default_factory=list)
    wall_ms: float = 0.0


class AdaptationReport(BaseModel):
    """Per-sample predictions plus aggregate metrics of one adaptation run."""

    config: dict = Field(default_factory=dict, description="Echo of the run settings")
    samples: list[SampleRecord] = Field(default_factory=list)
    mae: Optional[float] = None
    rmse: Optional[float] = None
    trainable_params: int = 0
    total_ms: float = 0.0

    @property
    def mean_ms(self) -> float:
        return self.total_ms / len(self.samples) if self.samples else 0.0
