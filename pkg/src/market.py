# src/market.py

"""
Prediction-market cost functions used by PPS and REPP-S.

Only the not-funded outcome carries securities; the funded-outcome count is
pinned at zero, which gives the one-dimensional potential C0.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.config import config
from src.exceptions import MarketDomainError, ValidationError


@dataclass(frozen=True)
class CostFunction:
    """
    Base cost-function contract: C0, its inverse and its derivative.
    Subclasses override cost/inverse/derivative; the rest is derived.
    """
    family: str
    liquidity: float

    def __post_init__(self):
        if not self.liquidity > 0:
            raise ValidationError(f"liquidity must be > 0, got {self.liquidity}")

    def cost(self, q: float) -> float:
        raise NotImplementedError

    def inverse(self, y: float) -> float:
        raise NotImplementedError

    def derivative(self, q: float) -> float:
        raise NotImplementedError

    def securities_for(self, q: float, x: float) -> float:
        """Securities r with C0(q + r) - C0(q) = x."""
        return self.inverse(x + self.cost(q)) - q

    def log_excess_per_unit(self, q: float) -> float:
        """log(1/C0'(q) - 1); -inf or nan when a unit of currency buys at most one security."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.log(1.0 / self.derivative(q) - 1.0))

    def to_dict(self) -> Dict:
        return {"family": self.family, "b": self.liquidity}


@dataclass(frozen=True)
class LMSR(CostFunction):
    """Logarithmic market scoring rule, C0(q) = b ln(1 + e^(q/b))."""
    family: str = "lmsr"
    liquidity: float = 1.0

    def cost(self, q: float) -> float:
        b = self.liquidity
        return float(b * np.logaddexp(0.0, q / b))

    def inverse(self, y: float) -> float:
        if not y > 0:
            raise MarketDomainError(f"LMSR C0 ranges over (0, inf); cannot invert {y}")
        b = self.liquidity
        # b ln(e^(y/b) - 1) rewritten to avoid overflow for large y/b
        return float(y + b * np.log(-np.expm1(-y / b)))

    def derivative(self, q: float) -> float:
        # logistic(q/b), evaluated in log space
        return float(np.exp(-np.logaddexp(0.0, -q / self.liquidity)))

    def log_excess_per_unit(self, q: float) -> float:
        # 1/C0'(q) - 1 = e^(-q/b)
        return -q / self.liquidity

    def securities_for(self, q: float, x: float) -> float:
        # e^(r/b) = 1 + expm1(x/b) / C0'(q), kept in log space so a small x survives a large q
        b = self.liquidity
        a = x / b
        z = a + np.log(-np.expm1(-a)) + np.logaddexp(0.0, -q / b)
        return float(b * np.logaddexp(0.0, z))


def make_cost_function(family: str, b: float) -> CostFunction:
    if family != "lmsr":
        raise ValidationError(f"unsupported cost function family {family!r}")
    return LMSR(liquidity=b)


@dataclass(frozen=True)
class MarketState:
    """Outstanding not-funded securities q^t."""
    outstanding: float = 0.0


def c0(cf: CostFunction, q: float) -> float:
    return cf.cost(q)


def c0_inverse(cf: CostFunction, y: float) -> float:
    """The unique q with C0(q) = y. May be negative; callers clamp."""
    return cf.inverse(y)


def c_two_outcome(cf: LMSR, q_not_funded: float, q_funded: float) -> float:
    """Two-outcome LMSR C(q0, q1) = b ln(e^(q0/b) + e^(q1/b)); C0 is the q1 = 0 slice."""
    b = cf.liquidity
    return float(b * np.logaddexp(q_not_funded / b, q_funded / b))


def price(cf: CostFunction, q: float) -> float:
    """Instantaneous price of a not-funded security, C0'(q)."""
    return cf.derivative(q)


def allot_securities(cf: CostFunction, state: MarketState, x: float) -> Tuple[float, MarketState]:
    """
    Securities bought by a contribution x at the current market state.

    Args:
        cf: Cost function
        state: Outstanding securities before the purchase
        x: Contribution (>= 0)

    Returns:
        Tuple[float, MarketState]: (r, state with q + r)
    """
    if x < 0:
        raise MarketDomainError("agents are not allowed to sell securities")
    if x == 0:
        return 0.0, state
    q = state.outstanding
    r = cf.securities_for(q, x)
    r = r if r > 0.0 else 0.0
    return r, MarketState(outstanding=q + r)


def marginal_securities_per_unit(cf: CostFunction, q: float) -> float:
    """dr/dx at q, i.e. 1 / C0'(q)."""
    return 1.0 / cf.derivative(q)


def check_eppS_liquidity(cf: CostFunction, q_max: float) -> bool:
    """True iff a unit of currency buys more than one security at q_max."""
    if q_max < 0:
        raise ValidationError(f"q_max must be >= 0, got {q_max}")
    excess = cf.log_excess_per_unit(q_max)
    return bool(np.isfinite(excess))


@dataclass
class CostFunctionReport:
    path_independent: bool
    differentiable: bool
    information_incorporation: bool
    no_arbitrage: bool
    bounded_loss: bool
    max_path_error: float
    max_derivative_error: float
    worst_case_loss: float

    @property
    def passed(self) -> bool:
        return (self.path_independent and self.differentiable and self.information_incorporation
                and self.no_arbitrage and self.bounded_loss)

    def to_dict(self) -> Dict:
        return {
            "path_independent": self.path_independent,
            "differentiable": self.differentiable,
            "information_incorporation": self.information_incorporation,
            "no_arbitrage": self.no_arbitrage,
            "bounded_loss": self.bounded_loss,
            "max_path_error": self.max_path_error,
            "max_derivative_error": self.max_derivative_error,
            "worst_case_loss": self.worst_case_loss,
            "passed": self.passed,
        }


def check_cost_function(cf: CostFunction, q_grid: Sequence[float], seed: Optional[int] = None,
                        splits: int = 4) -> CostFunctionReport:
    """
    Numerical check of the cost-function conditions that can be observed on a grid.

    Path independence compares random sequential splits against lump-sum allotments;
    differentiability compares central differences against the analytic derivative;
    information incorporation and no arbitrage look at the price curve; bounded loss
    checks that C0(q) - q stays below C0(0) as q grows.
    """
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    grid = np.asarray(sorted(q_grid), dtype=float)
    h = config.FINITE_DIFF_STEP

    path_errors = []
    for q in grid:
        start = MarketState(float(q))
        x = float(rng.uniform(0.01, 5.0) * cf.liquidity)
        lump, _ = allot_securities(cf, start, x)
        pieces = rng.dirichlet(np.ones(splits)) * x
        state, total = start, 0.0
        for piece in pieces:
            r, state = allot_securities(cf, state, float(piece))
            total += r
        path_errors.append(abs(total - lump))
    max_path_error = max(path_errors) if path_errors else 0.0

    derivative_errors = [
        abs((cf.cost(q + h) - cf.cost(q - h)) / (2 * h) - cf.derivative(q)) for q in grid
    ]
    max_derivative_error = max(derivative_errors) if derivative_errors else 0.0

    prices = np.array([cf.derivative(q) for q in grid])
    loss = np.array([cf.cost(q) - q for q in grid])
    worst_case_loss = float(loss.max()) if len(loss) else 0.0

    return CostFunctionReport(
        path_independent=max_path_error <= config.ROUNDTRIP_TOLERANCE,
        differentiable=max_derivative_error <= 1e-6,
        information_incorporation=bool(np.all(np.diff(prices) > 0)) if len(prices) > 1 else True,
        no_arbitrage=bool(np.all((prices > 0) & (prices < 1))),
        bounded_loss=bool(np.all(loss <= cf.cost(0.0) + config.ROUNDTRIP_TOLERANCE)),
        max_path_error=float(max_path_error),
        max_derivative_error=float(max_derivative_error),
        worst_case_loss=worst_case_loss,
    )
