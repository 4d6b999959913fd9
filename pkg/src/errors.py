"""
Error categories surfaced by the CLI
"""
from typing import Any, Dict, Optional


class HoneycombError(Exception):
    """Base error carrying a machine-readable category"""
    category = "INTERNAL"

    def __init__(self, message: str, detail: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.detail = detail or {}


class ConfigError(HoneycombError, ValueError):
    """Invalid input: config values, unsuitable weights, bad grids"""
    category = "CONFIG"


class NumericalError(HoneycombError, RuntimeError):
    """A computation failed or produced a result that broke a checked invariant"""
    category = "NUMERIC"


EXIT_CODES = {
    "CONFIG": 2,
    "NUMERIC": 3,
}


def categorize(error: Exception) -> str:
    """Map any exception onto a CLI error category."""
    from pydantic import ValidationError

    if isinstance(error, HoneycombError):
        return error.category
    if isinstance(error, ValidationError):
        return "CONFIG"
    return "INTERNAL"
