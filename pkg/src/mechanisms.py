# src/mechanisms.py

"""
Provision point mechanisms: PPB, PPR, PPS, REPP-R and REPP-S.

Utilities and settlement, equilibrium contribution caps and canonical
equilibrium profiles, social-desirability thresholds, sigma bounds and the
worst-case referral payouts.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, NamedTuple, Optional, Sequence, Tuple

from rich.console import Console

from src.config import config
from src.domain import (AgentProfile, ContributionEvent, ProjectSpec, ReferralForest, SocialNetwork,
                        build_referral_forest, diameter, event_order, net_value)
from src.exceptions import UnsupportedMechanismError, ValidationError
from src.market import LMSR, CostFunction, MarketState, allot_securities, check_eppS_liquidity, make_cost_function
from src.rbf import RbfSpec, rbf_eval
from src.utils import Utils

console = Console(stderr=True)

LN2 = math.log(2.0)


class MechanismKind(str, Enum):
    PPB = "PPB"
    PPR = "PPR"
    PPS = "PPS"
    REPP_R = "REPP_R"
    REPP_S = "REPP_S"

    @property
    def uses_budget(self) -> bool:
        return self in (MechanismKind.PPR, MechanismKind.REPP_R)

    @property
    def uses_market(self) -> bool:
        return self in (MechanismKind.PPS, MechanismKind.REPP_S)

    @property
    def uses_referrals(self) -> bool:
        return self in (MechanismKind.REPP_R, MechanismKind.REPP_S)

    @property
    def is_sequential(self) -> bool:
        return self.uses_market


@dataclass(frozen=True)
class MechanismSpec:
    """Mechanism kind with its project and, depending on the kind, budget B, cost function and RBF."""
    kind: MechanismKind
    project: ProjectSpec
    refund_budget: Optional[float] = None
    cost_function: Optional[CostFunction] = None
    rbf: Optional[RbfSpec] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", MechanismKind(self.kind))
        except ValueError:
            raise ValidationError(f"unknown mechanism kind {self.kind!r}") from None
        kind = self.kind
        if kind.uses_budget and not (self.refund_budget is not None and self.refund_budget > 0):
            raise ValidationError(f"{kind.value} needs a refund budget B > 0")
        if kind.uses_market and self.cost_function is None:
            raise ValidationError(f"{kind.value} needs a cost function")
        if kind.uses_referrals != (self.rbf is not None):
            raise ValidationError(f"an RBF is required for REPP mechanisms and only for them ({kind.value})")

    @property
    def h0(self) -> float:
        return self.project.provision_point

    @property
    def deadline(self) -> float:
        return self.project.deadline

    @property
    def sigma(self) -> float:
        return self.rbf.cap if self.rbf is not None else 0.0

    def with_sigma(self, sigma: float) -> "MechanismSpec":
        return dataclasses.replace(self, rbf=dataclasses.replace(self.rbf, cap=sigma))

    def to_dict(self) -> Dict:
        payload = {"kind": self.kind.value, "h0": self.h0, "T": self.deadline}
        if self.refund_budget is not None:
            payload["B"] = self.refund_budget
        if self.cost_function is not None:
            payload["market"] = self.cost_function.to_dict()
        if self.rbf is not None:
            payload["rbf"] = self.rbf.to_dict()
        return payload

    @classmethod
    def from_dict(cls, payload: Mapping) -> "MechanismSpec":
        market = payload.get("market")
        rbf = payload.get("rbf")
        return cls(
            kind=MechanismKind(payload["kind"]),
            project=ProjectSpec(float(payload["h0"]), float(payload["T"])),
            refund_budget=payload.get("B"),
            cost_function=make_cost_function(market.get("family", "lmsr"), float(market["b"])) if market else None,
            rbf=RbfSpec(rbf["family"], float(rbf["cap"]), float(rbf.get("scale", 1.0))) if rbf else None,
        )


# ---------------------------------------------------------------------------
# Collection ledger

@dataclass(frozen=True)
class LedgerEntry:
    agent: int
    time: float
    offered: float
    accepted: float
    securities: float
    h_before: float
    h_after: float
    q_before: float
    q_after: float


class CollectionLedger:
    """
    Sequential collection of contributions. The requester stops collecting once
    the provision point is reached; a contribution above the remaining amount is
    truncated and the excess is never collected.
    """

    def __init__(self, spec: MechanismSpec):
        self.spec = spec
        self.remaining = spec.h0
        self.market = MarketState(0.0)
        self.entries: List[LedgerEntry] = []

    @property
    def funded(self) -> bool:
        return self.remaining == 0.0

    @property
    def outstanding(self) -> float:
        return self.market.outstanding

    def accept(self, agent: int, time: float, amount: float) -> LedgerEntry:
        h_before, q_before = self.remaining, self.market.outstanding
        accepted = min(amount, self.remaining)
        self.remaining -= accepted
        if self.remaining <= config.FUNDING_TOLERANCE * max(1.0, self.spec.h0):
            self.remaining = 0.0
        securities = 0.0
        if self.spec.kind.uses_market:
            securities, self.market = allot_securities(self.spec.cost_function, self.market, accepted)
        entry = LedgerEntry(agent, time, amount, accepted, securities, h_before, self.remaining,
                            q_before, self.market.outstanding)
        self.entries.append(entry)
        return entry


def collect(spec: MechanismSpec, events: Sequence[ContributionEvent]) -> CollectionLedger:
    """Run the ledger over the events in canonical order (see event_order)."""
    ledger = CollectionLedger(spec)
    for event in sorted(events, key=event_order):
        if event.time < 0:
            raise ValidationError(f"agent {event.agent} acts at negative time {event.time}")
        if event.time > spec.deadline:
            raise ValidationError(f"agent {event.agent} contributes at {event.time}, after the deadline {spec.deadline}")
        ledger.accept(event.agent, event.time, event.amount)
    return ledger


# ---------------------------------------------------------------------------
# Settlement

@dataclass(frozen=True)
class AgentSettlement:
    agent: int
    offered: float
    contribution: float
    collected: float
    refunded: float
    refund_bonus: float
    referral_bonus: float
    securities_refund: float
    securities_referral: float
    utility: float


@dataclass(frozen=True)
class SettlementReport:
    funded: bool
    total_collected: float
    outstanding_securities: float
    agents: Tuple[AgentSettlement, ...] = field(default_factory=tuple)

    def agent(self, agent_id: int) -> AgentSettlement:
        for record in self.agents:
            if record.agent == agent_id:
                return record
        raise ValidationError(f"agent {agent_id} has no settlement record")

    def to_dict(self) -> Dict:
        return {
            "funded": self.funded,
            "total_collected": self.total_collected,
            "outstanding_securities": self.outstanding_securities,
            "agents": [dataclasses.asdict(r) for r in self.agents],
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "SettlementReport":
        return cls(
            funded=bool(payload["funded"]),
            total_collected=float(payload["total_collected"]),
            outstanding_securities=float(payload["outstanding_securities"]),
            agents=tuple(AgentSettlement(**record) for record in payload["agents"]),
        )


def _settle_agent(spec: MechanismSpec, ledger: CollectionLedger, forest: ReferralForest,
                  agent: int, funded: bool, theta: float, chi: float) -> AgentSettlement:
    entries = {e.agent: e for e in ledger.entries}
    entry = entries.get(agent)
    offered = entry.offered if entry else 0.0
    x = entry.accepted if entry else 0.0
    r = entry.securities if entry else 0.0

    if funded:
        return AgentSettlement(agent, offered, x, x, 0.0, 0.0, 0.0, r, 0.0, theta - x)

    kind = spec.kind
    refund_bonus = 0.0
    if kind.uses_budget:
        refund_bonus = x / chi * spec.refund_budget if chi > 0 else 0.0
    elif kind.uses_market:
        refund_bonus = r - x

    referral_bonus, securities_referral = 0.0, 0.0
    if kind.uses_referrals:
        children = [entries[c] for c in forest.children(agent) if c in entries]
        if kind is MechanismKind.REPP_R:
            referral_bonus = rbf_eval(spec.rbf, Utils.fsum(c.accepted for c in children))
        else:
            # Referral securities are credited at the deadline, one currency unit each
            securities_referral = rbf_eval(spec.rbf, Utils.fsum(c.securities for c in children))
            referral_bonus = securities_referral

    return AgentSettlement(agent, offered, x, 0.0, x, refund_bonus, referral_bonus, r,
                           securities_referral, refund_bonus + referral_bonus)


def utility(spec: MechanismSpec, events: Sequence[ContributionEvent], forest: ReferralForest,
            agent: int, funded: bool, theta: float = 0.0) -> float:
    """
    Utility of one agent in the funded or unfunded branch.

    Funded: theta - x for every mechanism. Unfunded: PPB 0; PPR (x/chi)B;
    PPS r - x; REPP-R adds s(sum of children's contributions); REPP-S adds
    s(sum of children's refund securities).
    """
    ledger = collect(spec, events)
    chi = Utils.fsum(e.accepted for e in ledger.entries)
    return _settle_agent(spec, ledger, forest, agent, funded, theta, chi).utility


def settle(spec: MechanismSpec, events: Sequence[ContributionEvent], forest: Optional[ReferralForest] = None,
           values: Optional[Mapping[int, float]] = None) -> SettlementReport:
    """
    Settle a run at the deadline.

    Args:
        spec: Mechanism
        events: Contribution events (sorted internally in canonical order)
        forest: Referral forest, built from the events when omitted
        values: Private values theta per agent (0 when missing)

    Returns:
        SettlementReport: funded flag and one record per acting agent
    """
    if forest is None:
        forest = build_referral_forest(events)
    values = values or {}
    ledger = collect(spec, events)
    funded = ledger.funded
    chi = Utils.fsum(e.accepted for e in ledger.entries)
    records = tuple(
        _settle_agent(spec, ledger, forest, e.agent, funded, float(values.get(e.agent, 0.0)), chi)
        for e in sorted(ledger.entries, key=lambda e: e.agent)
    )
    return SettlementReport(funded=funded, total_collected=chi,
                            outstanding_securities=ledger.outstanding, agents=records)


def sponsor_outlay(spec: MechanismSpec, report: SettlementReport) -> float:
    """What the sponsor pays on top of refunds: refund and referral bonuses (market loss for PPS)."""
    if report.funded:
        return 0.0
    return Utils.fsum(r.refund_bonus + r.referral_bonus for r in report.agents)


# ---------------------------------------------------------------------------
# Equilibrium caps and profiles

def equilibrium_cap(spec: MechanismSpec, theta: float, q_at_arrival: Optional[float] = None) -> float:
    """
    Largest equilibrium contribution of an agent with value theta.

    PPR: theta h0/(B+h0); REPP-R: max(0, (theta-sigma) h0/(B+h0));
    PPS: C0(theta+q) - C0(q); REPP-S: max(0, C0(theta-sigma+q) - C0(q)).
    PPB allows any contribution up to theta.
    """
    if theta < 0:
        raise ValidationError(f"theta must be >= 0, got {theta}")
    kind = spec.kind
    if not kind.uses_market and q_at_arrival is not None:
        if not config.QUIET:
            console.print(f"⚠️ [yellow]q_at_arrival is ignored for {kind.value}[/yellow]")
    q = q_at_arrival or 0.0

    if kind is MechanismKind.PPB:
        return theta
    if kind is MechanismKind.PPR:
        return theta * spec.h0 / (spec.refund_budget + spec.h0)
    if kind is MechanismKind.REPP_R:
        return Utils.clamp0((theta - spec.sigma) * spec.h0 / (spec.refund_budget + spec.h0))
    cf = spec.cost_function
    if kind is MechanismKind.PPS:
        return cf.cost(theta + q) - cf.cost(q)
    return Utils.clamp0(cf.cost(theta - spec.sigma + q) - cf.cost(q))


@dataclass(frozen=True)
class EquilibriumProfile:
    contributions: Mapping[int, float]
    times: Mapping[int, float]
    referrals: Mapping[int, FrozenSet[int]]

    @property
    def total(self) -> float:
        return Utils.fsum(self.contributions.values())

    def to_events(self) -> List[ContributionEvent]:
        return sorted(
            (ContributionEvent(agent=i, amount=x, time=self.times[i], referred=self.referrals.get(i, frozenset()))
             for i, x in self.contributions.items()),
            key=event_order,
        )

    def with_time(self, agent: int, time: float) -> "EquilibriumProfile":
        times = dict(self.times)
        times[agent] = time
        return dataclasses.replace(self, times=times)

    def to_dict(self) -> Dict:
        return {
            "contributions": {str(i): x for i, x in sorted(self.contributions.items())},
            "times": {str(i): t for i, t in sorted(self.times.items())},
            "referrals": {str(i): sorted(m) for i, m in sorted(self.referrals.items())},
        }


def total_securities_needed(spec: MechanismSpec) -> float:
    """C0^-1(h0 + C0(0)): securities outstanding once the provision point is reached."""
    cf = spec.cost_function
    return cf.inverse(spec.h0 + cf.cost(0.0))


def equilibrium_exists(spec: MechanismSpec, network: SocialNetwork) -> bool:
    """Existence condition of the equilibrium set for the mechanism on this agent set."""
    value = net_value(network.agents)
    kind = spec.kind
    if kind is MechanismKind.PPB:
        return value >= spec.h0
    if kind is MechanismKind.PPR:
        return 0 < spec.refund_budget <= value - spec.h0
    if kind.uses_referrals:
        # Equality at the bound counts as non-existence
        return spec.sigma < sigma_bound(spec, network)
    return value > total_securities_needed(spec) and check_eppS_liquidity(
        spec.cost_function, q_max_bound(spec, network.n, 1))


def equilibrium_profile(spec: MechanismSpec, network: SocialNetwork) -> Optional[EquilibriumProfile]:
    """
    Canonical equilibrium: proportional-to-cap shares for the simultaneous
    mechanisms, greedy caps in arrival order for the sequential ones. Agents
    contribute at arrival and, under REPP, refer all their neighbors.

    Returns None when the existence condition fails.
    """
    if not network.agents or not equilibrium_exists(spec, network):
        return None
    refer = spec.kind.uses_referrals
    times = {a.id: a.arrival for a in network.agents}
    referrals = {a.id: (frozenset(a.neighbors) if refer else frozenset()) for a in network.agents}

    if not spec.kind.is_sequential:
        caps = {a.id: equilibrium_cap(spec, a.theta) for a in network.agents}
        total_cap = Utils.fsum(caps.values())
        if total_cap < spec.h0:
            return None
        contributions = {i: cap * spec.h0 / total_cap for i, cap in caps.items()}
        return EquilibriumProfile(contributions, times, referrals)

    cf = spec.cost_function
    state, remaining = MarketState(0.0), spec.h0
    contributions: Dict[int, float] = {}
    for agent in sorted(network.agents, key=lambda a: (a.arrival, a.id)):
        cap = equilibrium_cap(spec, agent.theta, state.outstanding)
        x = min(cap, remaining)
        contributions[agent.id] = x
        _, state = allot_securities(cf, state, x)
        remaining -= x
    if remaining > config.FUNDING_TOLERANCE * max(1.0, spec.h0):
        return None
    return EquilibriumProfile(contributions, times, referrals)


# ---------------------------------------------------------------------------
# Desirability, bounds and key-result conditions

def socially_desirable(agents: Sequence[AgentProfile], tau: float) -> bool:
    """True iff the agents' net value strictly exceeds tau."""
    if tau < 0:
        raise ValidationError(f"tau must be >= 0, got {tau}")
    return net_value(agents) > tau


def desirability_threshold(spec: MechanismSpec, n: int, d: int, specialize: bool = True) -> Tuple[str, float]:
    """
    Agent-set label and threshold tau of social desirability.

    With specialize=True an LMSR market uses the closed form h0 + b ln 2
    instead of C0^-1(h0 + C0(0)).
    """
    if n < 1 or d < 0:
        raise ValidationError(f"need n >= 1 and d >= 0, got n={n}, d={d}")
    kind = spec.kind
    if kind is MechanismKind.PPB:
        raise UnsupportedMechanismError("no desirability threshold for PPB")
    if kind is MechanismKind.PPR:
        return "M∩N", spec.h0 + spec.refund_budget
    if kind is MechanismKind.REPP_R:
        return "N", spec.h0 + spec.refund_budget + n * d * spec.sigma
    base = _market_threshold(spec, specialize)
    if kind is MechanismKind.PPS:
        return "M∩N", base
    return "N", base + n * d * spec.sigma


def _market_threshold(spec: MechanismSpec, specialize: bool) -> float:
    cf = spec.cost_function
    if specialize and isinstance(cf, LMSR):
        return spec.h0 + cf.liquidity * LN2
    return total_securities_needed(spec)


def sigma_bound_value(spec: MechanismSpec, value: float, n: int, d: int) -> float:
    """Upper bound on sigma (exclusive); non-positive means no admissible sigma."""
    kind = spec.kind
    if not kind.uses_referrals:
        raise UnsupportedMechanismError(f"no sigma bound for {kind.value}")
    nd = n * max(d, 1)
    if kind is MechanismKind.REPP_R:
        return (value - spec.h0 - spec.refund_budget) / nd
    return (value - total_securities_needed(spec)) / nd


def sigma_bound(spec: MechanismSpec, network: SocialNetwork) -> float:
    """
    REPP-R: (theta_N - h0 - B)/(nd); REPP-S: (theta_N - C0^-1(h0 + C0(0)))/(nd).
    A single-agent network has d = 0 and is treated as d = 1.
    """
    return sigma_bound_value(spec, net_value(network.agents), network.n, diameter(network))


class WorstCase(NamedTuple):
    exact: float
    bound: float


WORST_CASES = ("chain_per_contributor", "single_hub")


def worst_case_bonus(spec: MechanismSpec, n: int, d: int, case: str) -> WorstCase:
    """
    Worst-case referral payout when the project ends unfunded.

    chain_per_contributor: each of the n contributors (delta = h0/n each) sits
    at the end of its own referral chain of length d. single_hub: one chain of
    length d carries all n contributions. REPP-R returns the referral bonus;
    REPP-S returns the total number of securities issued, refunds included.

    Returns:
        WorstCase: (exact payout, envelope)
    """
    kind = spec.kind
    if not kind.uses_referrals:
        raise UnsupportedMechanismError(f"no bonus bounds for {kind.value}")
    if case not in WORST_CASES:
        raise ValidationError(f"unknown worst case {case!r}, expected one of {WORST_CASES}")
    if n < 0 or d < 1:
        raise ValidationError(f"need n >= 0 and d >= 1, got n={n}, d={d}")
    if n == 0:
        return WorstCase(0.0, 0.0)

    sigma, delta = spec.sigma, spec.h0 / n
    if kind is MechanismKind.REPP_R:
        if case == "chain_per_contributor":
            return WorstCase(n * d * rbf_eval(spec.rbf, delta), n * d * sigma)
        return WorstCase(d * rbf_eval(spec.rbf, n * delta), d * sigma)

    cf = spec.cost_function
    pieces = []
    state = MarketState(0.0)
    for _ in range(n):
        r, state = allot_securities(cf, state, delta)
        pieces.append(r)
    refund_total = Utils.fsum(pieces)
    needed = total_securities_needed(spec)
    if case == "chain_per_contributor":
        exact = refund_total + d * Utils.fsum(rbf_eval(spec.rbf, r) for r in pieces)
        return WorstCase(exact, needed + n * d * sigma)
    exact = refund_total + d * rbf_eval(spec.rbf, refund_total)
    return WorstCase(exact, needed + d * sigma)


def q_max_bound(spec: MechanismSpec, n: int, d: int) -> float:
    """Most securities a run can issue: C0^-1(h0 + C0(0)), plus nd sigma under REPP-S."""
    if not spec.kind.uses_market:
        raise UnsupportedMechanismError(f"no security bound for {spec.kind.value}")
    return total_securities_needed(spec) + n * d * spec.sigma


def liquidity_bound_value(spec: MechanismSpec, value: float, n: int, d: int) -> float:
    """Largest admissible LMSR b (exclusive): (theta - h0 - nd sigma) / ln 2."""
    if not spec.kind.uses_market:
        raise UnsupportedMechanismError(f"no liquidity bound for {spec.kind.value}")
    return (value - spec.h0 - n * d * spec.sigma) / LN2


def liquidity_bound(spec: MechanismSpec, network: SocialNetwork, aware: Optional[Sequence[int]] = None) -> float:
    """Liquidity bound on the aware set (PPS) or on the whole network (REPP-S)."""
    if spec.kind is MechanismKind.PPS:
        members = network.agents if aware is None else [network.agent(i) for i in aware]
        return liquidity_bound_value(spec, net_value(members), network.n, 0)
    return liquidity_bound_value(spec, net_value(network.agents), network.n, diameter(network))


def key_result_condition_value(spec: MechanismSpec, value_aware: float, value_all: float, n: int, d: int,
                           specialize: bool = True) -> Tuple[str, bool]:
    """
    Key-result condition for one mechanism.

    PPR: B in (0, theta_MN - h0); REPP-R: B in (0, theta_N - h0 - nd sigma);
    LMSR markets: b in (0, liquidity bound); other markets: liquidity at q_max.
    """
    kind = spec.kind
    if kind is MechanismKind.PPB:
        raise UnsupportedMechanismError("no key-result condition for PPB")
    if kind is MechanismKind.PPR:
        upper = value_aware - spec.h0
        return f"B ∈ (0, {Utils.format_amount(upper)})", 0 < spec.refund_budget < upper
    if kind is MechanismKind.REPP_R:
        upper = value_all - spec.h0 - n * d * spec.sigma
        return f"B ∈ (0, {Utils.format_amount(upper)})", 0 < spec.refund_budget < upper
    cf = spec.cost_function
    if specialize and isinstance(cf, LMSR):
        value = value_aware if kind is MechanismKind.PPS else value_all
        reach = 0 if kind is MechanismKind.PPS else d
        upper = liquidity_bound_value(spec, value, n, reach)
        return f"b ∈ (0, {Utils.format_amount(upper)})", 0 < cf.liquidity < upper
    reach = 0 if kind is MechanismKind.PPS else d
    q_max = q_max_bound(spec, n, reach)
    return f"dr/dx > 1 at q_max={Utils.format_amount(q_max)}", check_eppS_liquidity(cf, q_max)


def key_result_condition(spec: MechanismSpec, network: SocialNetwork, aware: Optional[Sequence[int]] = None,
                     specialize: bool = True) -> Tuple[str, bool]:
    members = network.agents if aware is None else [network.agent(i) for i in aware]
    d = diameter(network) if spec.kind.uses_referrals else 0
    return key_result_condition_value(spec, net_value(members), net_value(network.agents), network.n, d, specialize)
