"""
Schemas for the equivalent-circuit simulator: cell parameters, protocols,
degradation schedules and fleet configuration.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class CurrentConvention(str, Enum):
    """Sign convention for cell current."""

    CHARGE_POSITIVE = "charge_positive"
    DISCHARGE_POSITIVE = "discharge_positive"

    @property
    def charge_sign(self) -> float:
        """+1 when a positive current charges the cell."""
        return 1.0 if self is CurrentConvention.CHARGE_POSITIVE else -1.0


JITTER_FIELDS = ("r_ohmic", "r_pol", "c_pol", "capacity_full")


class EcmParams(BaseModel):
    """1-RC Thevenin cell parameters."""

    model_config = ConfigDict(frozen=True)

    r_ohmic: float = Field(gt=0, description="Series ohmic resistance R (ohm)")
    r_pol: float = Field(gt=0, description="Polarization resistance R_p (ohm)")
    c_pol: float = Field(gt=0, description="Polarization capacitance C_p (F)")
    ocv_table: list[tuple[float, float]] = Field(
        min_length=2,
        description="(soc, voltage) breakpoints, strictly increasing in both",
    )
    capacity_nom: float = Field(gt=0, description="Nominal capacity C_nom (Ah)")
    capacity_full: float = Field(
        gt=0, description="Current full capacity C_full (Ah); defaults to C_nom"
    )

    @model_validator(mode="before")
    @classmethod
    def _default_full_capacity(cls, data):
        if isinstance(data, dict) and data.get("capacity_full") is None:
            data = {**data, "capacity_full": data.get("capacity_nom")}
        return data

    @field_validator("ocv_table")
    @classmethod
    def _check_ocv_table(cls, table: list[tuple[float, float]]):
        socs = [s for s, _ in table]
        volts = [v for _, v in table]
        if any(s < 0.0 or s > 1.0 for s in socs):
            raise ValueError("ocv_table soc values must lie in [0, 1]")
        if any(b <= a for a, b in zip(socs, socs[1:])):
            raise ValueError("ocv_table soc values must be strictly increasing")
        if any(b <= a for a, b in zip(volts, volts[1:])):
            raise ValueError("ocv_table voltages must be strictly increasing")
        return table

    @property
    def tau(self) -> float:
        """RC time constant R_p * C_p (s)."""
        return self.r_pol * self.c_pol


class EcmCoefficients(BaseModel):
    """Coefficients of the first-order terminal-voltage ODE."""

    theta1: float = Field(gt=0, description="(R + R_p) / (C_p R_p), V/(A s)")
    theta2: float = Field(gt=0, description="1 / (C_p R_p), 1/s")


@dataclass(frozen=True)
class CellState:
    """Dynamic cell state. Kept as a plain dataclass because it is rebuilt every step."""

    soc: float
    u_pol: float
    capacity_full: float

    def __post_init__(self):
        if self.capacity_full <= 0:
            raise ValueError("capacity_full must be positive")


class ChargeProtocol(BaseModel):
    """Constant-current or constant-current/constant-voltage charge protocol."""

    mode: Literal["CC", "CC-CV"] = Field(default="CC", description="Protocol kind")
    current_rate: float = Field(gt=0, description="Charge C-rate (1/h) on nominal capacity")
    v_upper: float = Field(description="Upper cut-off voltage (V)")
    v_lower: float = Field(description="Recording starts at this voltage (V)")
    cv_cutoff_current: float = Field(
        default=0.05, gt=0, description="CV termination current (A), CC-CV only"
    )
    dt: float = Field(default=10.0, gt=0, description="Sampling / integration step (s)")
    temperature: float = Field(default=25.0, description="Ambient temperature (degC)")
    max_steps: int = Field(
        default=200_000, ge=1, description="Step limit before the run is aborted"
    )

    @model_validator(mode="after")
    def _check_window(self):
        if self.v_lower >= self.v_upper:
            raise ValueError("v_lower must be below v_upper")
        return self


class DegradationSchedule(BaseModel):
    """Parametric per-cycle aging."""

    capacity_fade_per_cycle: float = Field(
        default=0.0, ge=0.0, lt=1.0, description="Relative capacity loss per cycle"
    )
    resistance_growth_per_cycle: float = Field(
        default=0.0, ge=0.0, description="Relative R and R_p growth per cycle"
    )
    noise_sigma: float = Field(
        default=0.0, ge=0.0, description="Gaussian voltage measurement noise (V)"
    )


class FleetConfig(BaseModel):
    """A synthetic fleet of cells cycled under one protocol."""

    name: str = Field(default="fleet", description="Fleet label used in logs")
    cell_prefix: str = Field(default="cell", description="Prefix of generated cell ids")
    n_cells: int = Field(ge=1, description="Number of cells")
    n_cycles: int = Field(ge=1, description="Cycles simulated per cell")
    base_params: EcmParams
    param_jitter: dict[str, float] = Field(
        default_factory=dict,
        description="Relative uniform spread per EcmParams field (cells 2..n)",
    )
    protocol: ChargeProtocol
    schedule: DegradationSchedule = Field(default_factory=DegradationSchedule)
    arrhenius_k: float = Field(
        default=0.0,
        description=(
            "Arrhenius constant k (K): resistances scale by exp(k (1/T - 1/T_ref)), "
            "so k > 0 makes colder cells more resistive"
        ),
    )
    seed: int = Field(default=0, description="Fleet RNG seed")

    @field_validator("param_jitter")
    @classmethod
    def _check_jitter(cls, jitter: dict[str, float]):
        for name, spread in jitter.items():
            if name not in JITTER_FIELDS:
                raise ValueError(f"cannot jitter '{name}'; allowed: {JITTER_FIELDS}")
            if not 0.0 <= spread <= 0.1:
                raise ValueError(f"jitter for '{name}' must lie in [0, 0.1]")
        return jitter

    def cell_id(self, index: int) -> str:
        """Identifier of the zero-based cell index."""
        return f"{self.cell_prefix}_{index + 1:03d}"


@dataclass
class CycleRecord:
    """One sampled charge cycle."""

    cell_id: str
    cycle: int
    t_s: np.ndarray
    voltage_v: np.ndarray
    current_a: np.ndarray
    temp_c: np.ndarray
    q_ah: np.ndarray
    soc: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self) -> int:
        return int(self.t_s.shape[0])

    @property
    def capacity_ah(self) -> float:
        """Reported cycle capacity: the final cumulative capacity."""
        return float(self.q_ah[-1]) if len(self) else 0.0
