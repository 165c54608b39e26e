"""
Pydantic schemas and value types for the BatteryTTT pipeline.
"""

from .common import ErrorResponse
from .ecm import (
    CellState,
    ChargeProtocol,
    CurrentConvention,
    CycleRecord,
    DegradationSchedule,
    EcmCoefficients,
    EcmParams,
    FleetConfig,
)
from .experiment import AblationRow, ExperimentConfig
from .features import (
    FeatureDataset,
    MaskSpec,
    PhysicsSidecar,
    QdLinearFeature,
    SohLabel,
    VoltageGrid,
)
from .model import ModelConfig
from .training import (
    AdaptationReport,
    LossConfig,
    OptimConfig,
    SampleRecord,
    TtaConfig,
)

__all__ = [
    "AblationRow",
    "AdaptationReport",
    "CellState",
    "ChargeProtocol",
    "CurrentConvention",
    "CycleRecord",
    "DegradationSchedule",
    "EcmCoefficients",
    "EcmParams",
    "ErrorResponse",
    "ExperimentConfig",
    "FeatureDataset",
    "FleetConfig",
    "LossConfig",
    "MaskSpec",
    "ModelConfig",
    "OptimConfig",
    "PhysicsSidecar",
    "QdLinearFeature",
    "SampleRecord",
    "SohLabel",
    "TtaConfig",
    "VoltageGrid",
]
