# src/rbf.py

"""
Referral bonus functions (RBF) and their numerical admissibility check.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional

import numpy as np

from src.config import config
from src.exceptions import ValidationError


class RbfFamily(str, Enum):
    TANH = "tanh"
    LOGISTIC_SHIFTED = "logistic_shifted"
    ARCTAN_SCALED = "arctan_scaled"


def _unit_curve(family: RbfFamily, r: np.ndarray) -> np.ndarray:
    # Every curve is normalized to a supremum of 1
    if family is RbfFamily.TANH:
        return np.tanh(r)
    if family is RbfFamily.LOGISTIC_SHIFTED:
        return 2.0 * (1.0 / (1.0 + np.exp(-r)) - 0.5)
    if family is RbfFamily.ARCTAN_SCALED:
        return (2.0 / np.pi) * np.arctan(r)
    raise ValidationError(f"unknown RBF family {family!r}")


@dataclass(frozen=True)
class RbfSpec:
    """s(R) = cap * f(R / scale) with f one of the unit-capped families."""
    family: RbfFamily
    cap: float
    scale: float = 1.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", RbfFamily(self.family))
        except ValueError:
            raise ValidationError(f"unknown RBF family {self.family!r}") from None
        if not self.cap > 0:
            raise ValidationError(f"RBF cap must be > 0, got {self.cap}")
        if not self.scale > 0:
            raise ValidationError(f"RBF scale must be > 0, got {self.scale}")

    def to_dict(self) -> Dict:
        return {"family": self.family.value, "cap": self.cap, "scale": self.scale}


def rbf_values(spec: RbfSpec, R) -> np.ndarray:
    """Vectorized s(R); callers guarantee R >= 0."""
    values = spec.cap * _unit_curve(spec.family, np.asarray(R, dtype=float) / spec.scale)
    # The supremum is never attained, even where the curve saturates in floating point
    return np.minimum(values, np.nextafter(spec.cap, 0.0))


def rbf_eval(spec: RbfSpec, R: float) -> float:
    """
    Referral bonus for a referred mass R.

    Args:
        spec: RBF family, cap sigma and scale
        R: Referred contribution or security mass (>= 0)

    Returns:
        float: s(R), with s(0) = 0 and s(R) < cap
    """
    if R < 0:
        raise ValidationError(f"RBF argument must be >= 0, got {R}")
    return float(rbf_values(spec, R))


@dataclass
class RbfConditionReport:
    zero_at_origin: bool
    increasing: bool
    concave: bool
    bounded: bool
    tight_supremum: bool
    min_gradient: float
    max_second_difference: float
    max_value: float

    @property
    def passed(self) -> bool:
        return self.zero_at_origin and self.increasing and self.concave and self.bounded and self.tight_supremum

    def to_dict(self) -> Dict:
        return {
            "zero_at_origin": self.zero_at_origin,
            "increasing": self.increasing,
            "concave": self.concave,
            "bounded": self.bounded,
            "tight_supremum": self.tight_supremum,
            "min_gradient": self.min_gradient,
            "max_second_difference": self.max_second_difference,
            "max_value": self.max_value,
            "passed": self.passed,
        }


def rbf_check_conditions(spec: RbfSpec, grid_max: float, grid_step: float,
                         func: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> RbfConditionReport:
    """
    Grid check of the RBF conditions: s(0) = 0, strictly positive gradient (central
    differences, up to where the curve saturates in floating point), non-positive
    second difference, s(R) < cap on the grid, and a supremum equal to cap.

    Failures are reported, never raised. `func` replaces the family curve (test hook).
    """
    if not grid_step > 0:
        raise ValidationError(f"grid step must be > 0, got {grid_step}")
    tol = config.MONOTONE_TOLERANCE
    s = func if func is not None else (lambda r: rbf_values(spec, r))

    grid = np.arange(0.0, grid_max + grid_step / 2.0, grid_step)
    values = np.asarray(s(grid), dtype=float)

    if len(grid) >= 3:
        gradient = (values[2:] - values[:-2]) / (2.0 * grid_step)
        second = values[2:] - 2.0 * values[1:-1] + values[:-2]
        # Past saturation the floating-point curve is flat at the cap
        unsaturated = spec.cap - values[1:-1] > config.SATURATION_TOLERANCE * spec.cap
        min_gradient = float(gradient[unsaturated].min() if unsaturated.any() else gradient.min())
        max_second = float(second.max())
    else:
        min_gradient = float((values[-1] - values[0]) / grid_step) if len(grid) == 2 else 0.0
        max_second = 0.0

    far = np.array([1e4 * spec.scale])
    far_value = float(np.asarray(s(far), dtype=float)[0])

    return RbfConditionReport(
        zero_at_origin=abs(float(values[0])) <= tol,
        increasing=min_gradient > 0.0,
        concave=max_second <= tol,
        bounded=bool(np.all(values < spec.cap)),
        tight_supremum=far_value < spec.cap and spec.cap - far_value <= config.SUPREMUM_TOLERANCE * spec.cap,
        min_gradient=min_gradient,
        max_second_difference=max_second,
        max_value=float(values.max()),
    )
