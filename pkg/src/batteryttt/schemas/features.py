"""
Schemas for QdLinear features, labels, masks and on-disk datasets.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .ecm import CurrentConvention, DegradationSchedule, EcmParams

_MONOTONE_RTOL = 1e-9


class VoltageGrid(BaseModel):
    """Uniform voltage grid the charge curve is interpolated onto."""

    v_lower: float = Field(description="Lowest grid voltage (V)")
    v_upper: float = Field(description="Highest grid voltage (V)")
    n_points: int = Field(default=128, ge=8, description="Full curve length T'")

    @model_validator(mode="after")
    def _check_window(self):
        if self.v_lower >= self.v_upper:
            raise ValueError("v_lower must be below v_upper")
        return self

    def points(self) -> np.ndarray:
        return np.linspace(self.v_lower, self.v_upper, self.n_points)

    @property
    def spacing(self) -> float:
        return (self.v_upper - self.v_lower) / (self.n_points - 1)


@dataclass
class QdLinearFeature:
    """Capacity-vs-voltage curve on a fixed grid with an observed prefix."""

    values: np.ndarray
    obs_mask: np.ndarray
    current_a: float
    temp_c: float
    cell_id: str
    cycle: int
    c_nom: float = 1.0
    masked: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.obs_mask = np.asarray(self.obs_mask, dtype=bool)
        if self.masked is None:
            self.masked = np.zeros_like(self.obs_mask)
        if self.values.shape != self.obs_mask.shape or self.values.ndim != 1:
            raise ValueError("values and obs_mask must be 1-D arrays of equal length")
        n_obs = int(self.obs_mask.sum())
        if not self.obs_mask[:n_obs].all():
            raise ValueError("observed region must be a contiguous prefix")
        if np.any(self.masked & ~self.obs_mask):
            raise ValueError("only observed positions can be masked")
        observed = self.values[:n_obs]
        if n_obs > 1:
            # interpolation may round a node a few ulps above its successor
            slack = _MONOTONE_RTOL * max(1.0, float(np.max(np.abs(observed))))
            drops = np.flatnonzero(np.diff(observed) < -slack)
            if drops.size:
                k = int(drops[0])
                raise ValueError(
                    f"observed Qd must be non-decreasing, got {observed[k]} then "
                    f"{observed[k + 1]} at grid points {k}, {k + 1}"
                )
        if self.c_nom <= 0:
            raise ValueError("c_nom must be positive")

    @property
    def n_observed(self) -> int:
        """T: length of the observed prefix."""
        return int(self.obs_mask.sum())

    @property
    def t_full(self) -> int:
        return int(self.values.shape[0])

    @property
    def key(self) -> tuple[str, int]:
        return (self.cell_id, self.cycle)

    def with_mask(self, masked: np.ndarray) -> "QdLinearFeature":
        return replace(self, masked=np.asarray(masked, dtype=bool))


class SohLabel(BaseModel):
    """State of health: full capacity as a percentage of nominal capacity."""

    soh_pct: float = Field(gt=0, le=110, description="SOH in percent")
    c_full: float = Field(gt=0, description="Full capacity (Ah)")
    c_nom: float = Field(gt=0, description="Nominal capacity (Ah)")

    @model_validator(mode="after")
    def _check_consistency(self):
        expected = 100.0 * self.c_full / self.c_nom
        if not math.isclose(self.soh_pct, expected, rel_tol=1e-9, abs_tol=1e-9):
            raise ValueError(f"soh_pct {self.soh_pct} != 100*c_full/c_nom {expected}")
        return self

    @classmethod
    def from_capacities(cls, c_full: float, c_nom: float) -> "SohLabel":
        return cls(soh_pct=100.0 * c_full / c_nom, c_full=c_full, c_nom=c_nom)


class MaskSpec(BaseModel):
    """Random masking of observed positions."""

    ratio: float = Field(ge=0.0, lt=1.0, description="Fraction of observed points hidden")
    seed: int = Field(default=0, description="Mask RNG seed")


class PhysicsSidecar(BaseModel):
    """Cell physics accompanying a feature file.

    Stands in for the battery-management-system query of theta and OCV: the
    per-sample ECM coefficients are re-derived from these parameters.
    """

    cells: dict[str, EcmParams] = Field(description="Undegraded parameters per cell id")
    schedule: DegradationSchedule = Field(default_factory=DegradationSchedule)
    arrhenius_k: float = Field(default=0.0)
    convention: CurrentConvention = Field(default=CurrentConvention.CHARGE_POSITIVE)


@dataclass
class FeatureDataset:
    """Features with optional labels, grid and physics."""

    features: list[QdLinearFeature]
    grid: Optional[VoltageGrid] = None
    labels: dict[tuple[str, int], float] = field(default_factory=dict)
    physics: Optional[PhysicsSidecar] = None
    c_nom: float = 1.0

    def __len__(self) -> int:
        return len(self.features)

    def label_for(self, feature: QdLinearFeature) -> Optional[float]:
        return self.labels.get(feature.key)
