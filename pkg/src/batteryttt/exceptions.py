"""
Exception hierarchy for the BatteryTTT pipeline.

Every error the library raises on purpose derives from BatteryTTTError so the
CLI can map it to an exit code and a structured error message.
"""

from typing import Any, Optional


class BatteryTTTError(Exception):
    """Base class for all pipeline errors."""

    def __init__(self, message: str, detail: Optional[dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.detail = detail or {}


class DomainError(BatteryTTTError):
    """A numeric argument lies outside the domain of the operation."""


class ConfigError(BatteryTTTError):
    """A configuration value or document is invalid."""


class SimulationError(BatteryTTTError):
    """The ECM simulator could not complete a charge protocol."""


class FeatureError(BatteryTTTError):
    """A cycle cannot be converted into a QdLinear feature."""


class ParseError(BatteryTTTError):
    """A data file is malformed.

    Attributes:
        path: File being parsed
        line: 1-based line number (header is line 1)
        column: Offending column name, if known
    """

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        column: Optional[str] = None,
    ):
        location = []
        if path:
            location.append(str(path))
        if line is not None:
            location.append(f"line {line}")
        if column:
            location.append(f"column '{column}'")
        full = f"{message} ({', '.join(location)})" if location else message
        super().__init__(full, {"path": path, "line": line, "column": column})
        self.path = path
        self.line = line
        self.column = column


class ContractError(BatteryTTTError):
    """An API precondition was violated by the caller."""


class TrainingDivergedError(BatteryTTTError):
    """Optimization produced a non-finite loss."""


class ProbeError(BatteryTTTError):
    """Linear probing cannot be solved for the given latents."""
