"""
Command-line handlers, one module per command group.
"""

from . import adaptation, data, diagnostics, training

COMMAND_MODULES = (data, training, adaptation, diagnostics)

__all__ = ["COMMAND_MODULES"]
