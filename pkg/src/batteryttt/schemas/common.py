"""
Common schemas used across commands.
"""

from typing import Optional

from pydantic import BaseModel, Field


class ErrorResponse(BaseModel):
    """Structured error printed on stderr when a command fails."""

    command: str = Field(description="Subcommand that failed")
    error: str = Field(description="Exception class name")
    message: str = Field(description="Human-readable error message")
    exit_code: int = Field(ge=1, le=2, description="1 for runtime failures, 2 for bad input")
    detail: Optional[dict] = Field(default=None, description="Location or context of the failure")
