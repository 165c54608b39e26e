"""
Pipeline services: simulation, training, test-time adaptation, experiments
and reporting.
"""

from .adaptation_service import AdaptationSession, adapt_and_predict_stream, tta_adapt
from .experiment_service import ExperimentService
from .fleet_service import FleetService
from .report_service import ReportService
from .training_service import TrainingService

__all__ = [
    "AdaptationSession",
    "adapt_and_predict_stream",
    "tta_adapt",
    "ExperimentService",
    "FleetService",
    "ReportService",
    "TrainingService",
]
