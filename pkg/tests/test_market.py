# tests/test_market.py

import math
from dataclasses import dataclass

import numpy as np
import pytest

from src.exceptions import MarketDomainError, ValidationError
from src.market import (LMSR, CostFunction, MarketState, allot_securities, c0, c0_inverse, c_two_outcome,
                        check_cost_function, check_eppS_liquidity, make_cost_function, marginal_securities_per_unit,
                        price)


@dataclass(frozen=True)
class Linear(CostFunction):
    """One security per unit of currency: never more than one."""
    family: str = "linear"
    liquidity: float = 1.0

    def cost(self, q):
        return q

    def inverse(self, y):
        return y

    def derivative(self, q):
        return 1.0


def test_c0_values():
    assert c0(LMSR(), 0.0) == pytest.approx(math.log(2.0), abs=1e-12)
    assert c0(LMSR(liquidity=2.0), 0.0) == pytest.approx(1.386294361, abs=1e-9)


def test_c0_inverse_values():
    cf = LMSR()
    assert c0_inverse(cf, 4.0 + math.log(2.0)) == pytest.approx(4.683947171, abs=1e-9)
    # Negative results are allowed; callers clamp
    assert c0_inverse(cf, 0.1) == pytest.approx(-2.252168461, abs=1e-9)


@pytest.mark.parametrize("y", [0.0, -1.0])
def test_c0_inverse_outside_range(y):
    with pytest.raises(MarketDomainError):
        c0_inverse(LMSR(), y)


def test_c0_inverse_roundtrip_large_values():
    cf = LMSR(liquidity=0.5)
    for q in [-5.0, 0.0, 3.0, 50.0, 400.0]:
        assert c0_inverse(cf, c0(cf, q)) == pytest.approx(q, abs=1e-9)


def test_lump_allotment():
    r, state = allot_securities(LMSR(), MarketState(0.0), 1.0)
    assert r == pytest.approx(1.489880126, abs=1e-9)
    assert state.outstanding == pytest.approx(r)


def test_split_allotment_matches_lump():
    cf = LMSR()
    r1, state = allot_securities(cf, MarketState(0.0), 0.5)
    r2, state = allot_securities(cf, state, 0.5)
    assert r1 == pytest.approx(0.831796566, abs=1e-9)
    assert r2 == pytest.approx(0.658083560, abs=1e-9)
    assert r1 + r2 == pytest.approx(1.489880126, abs=1e-9)


def test_zero_contribution_buys_nothing():
    state = MarketState(1.5)
    r, after = allot_securities(LMSR(), state, 0.0)
    assert r == 0.0
    assert after == state


def test_tiny_contribution_at_a_deep_market_still_buys():
    cf = LMSR()
    for q, x in [(50.0, 1e-15), (1e4, 1e-13)]:
        assert cf.cost(q) + x == cf.cost(q)
        r, after = allot_securities(cf, MarketState(q), x)
        assert r > 0.0
        assert r == pytest.approx(x / price(cf, q), rel=1e-6)
        assert after.outstanding >= q


def test_increment_agrees_with_the_inverse_form():
    rng = np.random.default_rng(5)
    for _ in range(100):
        cf = LMSR(liquidity=float(rng.uniform(0.1, 5.0)))
        q, x = float(rng.uniform(-5.0, 20.0)), float(rng.uniform(0.01, 10.0))
        assert cf.securities_for(q, x) == pytest.approx(CostFunction.securities_for(cf, q, x), abs=1e-9)


def test_selling_is_rejected():
    with pytest.raises(MarketDomainError, match="not allowed to sell"):
        allot_securities(LMSR(), MarketState(0.0), -0.1)


def test_path_independence_random_triples():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        cf = LMSR(liquidity=float(rng.uniform(0.1, 5.0)))
        x = float(rng.uniform(0.01, 10.0))
        split = float(rng.uniform(0.0, 1.0)) * x
        lump, _ = allot_securities(cf, MarketState(0.0), x)
        first, state = allot_securities(cf, MarketState(0.0), split)
        second, _ = allot_securities(cf, state, x - split)
        assert abs(first + second - lump) <= 1e-9


def test_securities_exceed_contribution():
    cf = LMSR()
    state = MarketState(0.0)
    for _ in range(20):
        r, state = allot_securities(cf, state, 0.5)
        assert r > 0.5


def test_marginal_securities_per_unit():
    cf = LMSR()
    assert marginal_securities_per_unit(cf, 0.0) == pytest.approx(2.0)
    for q in np.linspace(0.0, 20.0, 41):
        assert marginal_securities_per_unit(cf, float(q)) > 1.0


def test_two_outcome_slice_and_price():
    cf = LMSR(liquidity=1.5)
    for q in [0.0, 1.0, 7.5]:
        assert c_two_outcome(cf, q, 0.0) == pytest.approx(c0(cf, q), abs=1e-12)
    assert price(cf, 0.0) == pytest.approx(0.5)
    prices = [price(cf, q) for q in np.linspace(-5.0, 5.0, 21)]
    assert all(0.0 < p < 1.0 for p in prices)
    assert all(b > a for a, b in zip(prices, prices[1:]))


def test_liquidity_check():
    assert check_eppS_liquidity(LMSR(), 5.483947171)
    assert not check_eppS_liquidity(Linear(), 1.0)
    with pytest.raises(ValidationError):
        check_eppS_liquidity(LMSR(), -1.0)


def test_check_cost_function_passes_for_lmsr():
    report = check_cost_function(LMSR(), np.linspace(0.0, 10.0, 51), seed=7)
    assert report.passed
    assert report.max_path_error <= 1e-9
    assert report.worst_case_loss == pytest.approx(math.log(2.0), abs=1e-12)
    assert report.to_dict()["passed"] is True


def test_check_cost_function_flags_linear_prices():
    report = check_cost_function(Linear(), np.linspace(0.0, 5.0, 11), seed=0)
    assert not report.information_incorporation
    assert not report.no_arbitrage
    assert not report.passed


def test_factory():
    assert make_cost_function("lmsr", 2.0) == LMSR(liquidity=2.0)
    with pytest.raises(ValidationError):
        make_cost_function("quadratic", 1.0)
    with pytest.raises(ValidationError):
        LMSR(liquidity=0.0)
