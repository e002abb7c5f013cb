# src/utils.py

"""
Centralized utility functions for Pledgepoint.
Contains common helpers used across multiple modules to avoid code duplication.
"""

import json
import math
from typing import Any, Iterable

from src.config import config

class Utils:
    """
    Static utility class containing helper functions.
    """

    @staticmethod
    def clamp0(value: float) -> float:
        """Clamp at zero: max(0, value)."""
        return value if value > 0.0 else 0.0

    @staticmethod
    def fsum(values: Iterable[float]) -> float:
        """Exact floating-point sum, independent of summation order."""
        return math.fsum(values)

    @staticmethod
    def format_amount(value: float, decimals: int = None) -> str:
        """
        Format currency or security counts for reports.

        Args:
            value (float): Amount to format
            decimals (int): Number of decimals, defaults to config.REPORT_DECIMALS

        Returns:
            str: Fixed-point representation ("inf"/"nan" kept readable)
        """
        if decimals is None:
            decimals = config.REPORT_DECIMALS
        if value is None:
            return ""
        if isinstance(value, bool):
            return "true" if value else "false"
        if not math.isfinite(value):
            return str(value)
        text = f"{value:.{decimals}f}"
        # Avoid "-0.000000" in golden files
        if text.startswith("-") and float(text) == 0.0:
            text = text[1:]
        return text

    @staticmethod
    def canonical_json(payload: Any) -> str:
        """Serialize with sorted keys and a trailing newline so reruns are byte-identical."""
        return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @staticmethod
    def snap_to_grid(value: float, step: float, upper: float) -> float:
        """
        Round a time up to the next grid point, never past the upper limit.

        Args:
            value (float): Time to snap
            step (float): Grid step (> 0)
            upper (float): Deadline

        Returns:
            float: Smallest grid point >= value, capped at upper
        """
        ticks = math.ceil(round(value / step, 9))
        snapped = round(ticks * step, 12)
        return min(snapped, upper)

    @staticmethod
    def is_multiple(value: float, step: float, tol: float = 1e-9) -> bool:
        """Check that value is an integer multiple of step."""
        ratio = value / step
        return abs(ratio - round(ratio)) <= tol * max(1.0, abs(ratio))
