# src/oracle.py

"""
Brute-force verification of equilibrium claims on small discretized games.

Payoffs always come from mechanisms.settle / mechanisms.utility; the oracle
only searches.
"""

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console

from src.config import config
from src.domain import AgentProfile, ContributionEvent, SocialNetwork, build_referral_forest, event_order
from src.exceptions import OracleSizeError, UnsupportedMechanismError, ValidationError
from src.market import marginal_securities_per_unit
from src.mechanisms import (CollectionLedger, EquilibriumProfile, MechanismSpec, collect,
                            equilibrium_cap, q_max_bound, settle, utility)
from src.utils import Utils

console = Console(stderr=True)


@dataclass(frozen=True)
class GridGame:
    """
    Discretized game: contributions on a grid of step `contribution_step` over
    [0, h0], optional action times on `time_step` (sequential games), and the
    referral choice refer-all / refer-none under REPP mechanisms.
    """
    mechanism: MechanismSpec
    agents: Tuple[AgentProfile, ...]
    contribution_step: float
    time_step: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(sorted(self.agents, key=lambda a: a.id)))
        if not self.agents:
            raise ValidationError("a game needs at least one agent")
        if len(self.agents) > config.ORACLE_MAX_AGENTS:
            raise ValidationError(f"at most {config.ORACLE_MAX_AGENTS} agents, got {len(self.agents)}")
        if not self.contribution_step > 0 or not Utils.is_multiple(self.mechanism.h0, self.contribution_step):
            raise ValidationError(f"grid step {self.contribution_step} must divide h0 = {self.mechanism.h0}")
        if self.time_step is not None and not self.time_step > 0:
            raise ValidationError(f"time step must be > 0, got {self.time_step}")
        for agent in self.agents:
            if agent.arrival > self.mechanism.deadline:
                raise ValidationError(f"agent {agent.id} arrives after the deadline")

    @property
    def network(self) -> SocialNetwork:
        return SocialNetwork(self.agents)

    @property
    def values(self) -> Dict[int, float]:
        return {a.id: a.theta for a in self.agents}

    @property
    def grid(self) -> np.ndarray:
        steps = int(round(self.mechanism.h0 / self.contribution_step))
        return np.linspace(0.0, self.mechanism.h0, steps + 1)

    @property
    def referral_options(self) -> Tuple[bool, ...]:
        return (True, False) if self.mechanism.kind.uses_referrals else (False,)

    def time_options(self, agent: AgentProfile) -> List[float]:
        deadline = self.mechanism.deadline
        times = {agent.arrival, deadline}
        if self.time_step is not None:
            times.update(float(t) for t in np.arange(agent.arrival, deadline, self.time_step))
        return sorted(times)

    def profile_count(self) -> int:
        return (len(self.grid) * len(self.referral_options)) ** len(self.agents)


@dataclass(frozen=True)
class GridProfile:
    agents: Tuple[int, ...]
    contributions: Tuple[float, ...]
    refers: Tuple[bool, ...]
    utilities: Tuple[float, ...]
    funded: bool

    @property
    def total(self) -> float:
        return Utils.fsum(self.contributions)

    def to_dict(self) -> Dict:
        return {
            "agents": list(self.agents),
            "contributions": list(self.contributions),
            "refers": list(self.refers),
            "utilities": list(self.utilities),
            "funded": self.funded,
        }


@dataclass
class Verdict:
    holds: bool
    checked: int
    counterexample: Optional[Dict] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "holds": self.holds,
            "checked": self.checked,
            "counterexample": self.counterexample,
            "notes": list(self.notes),
        }


def _events_for(game: GridGame, contributions: Sequence[float], refers: Sequence[bool],
                times: Optional[Sequence[float]] = None) -> List[ContributionEvent]:
    events = []
    for k, agent in enumerate(game.agents):
        when = agent.arrival if times is None else times[k]
        referred = frozenset(agent.neighbors) if refers[k] else frozenset()
        events.append(ContributionEvent(agent.id, float(contributions[k]), when, referred))
    return events


def _guard(count: int) -> None:
    if getattr(config, 'VERBOSE_LOGGING', False):
        console.print(f"[dim]Oracle: {count:,} evaluations planned[/dim]")
    if count > config.ORACLE_MAX_PROFILES:
        raise OracleSizeError(count, config.ORACLE_MAX_PROFILES)


def find_psne(game: GridGame) -> List[GridProfile]:
    """
    All grid profiles where no agent has a unilateral deviation (contribution
    grid x referral choice) improving its utility by more than the tolerance.

    The utility of every profile is computed once into an array indexed by the
    agents' actions; an agent's best deviation is then a max along its axis.
    """
    spec = game.mechanism
    if spec.kind.is_sequential:
        raise UnsupportedMechanismError(f"find_psne needs a simultaneous mechanism, got {spec.kind.value}")
    count = game.profile_count()
    _guard(count)

    grid, options = game.grid, game.referral_options
    actions = [(x, refer) for x in grid for refer in options]
    n, size = len(game.agents), len(actions)
    values = game.values
    ids = [a.id for a in game.agents]

    payoff = np.empty((size,) * n + (n,))
    funded = np.empty((size,) * n, dtype=bool)
    for combo in itertools.product(range(size), repeat=n):
        contributions = [actions[c][0] for c in combo]
        refers = [actions[c][1] for c in combo]
        report = settle(spec, _events_for(game, contributions, refers), values=values)
        payoff[combo] = [report.agent(i).utility for i in ids]
        funded[combo] = report.funded

    stable = np.ones((size,) * n, dtype=bool)
    for k in range(n):
        best = payoff[..., k].max(axis=k, keepdims=True)
        stable &= payoff[..., k] >= best - config.UTILITY_TOLERANCE

    profiles = []
    for combo in zip(*np.nonzero(stable)):
        profiles.append(GridProfile(
            agents=tuple(ids),
            contributions=tuple(float(actions[c][0]) for c in combo),
            refers=tuple(bool(actions[c][1]) for c in combo),
            utilities=tuple(float(u) for u in payoff[combo]),
            funded=bool(funded[combo]),
        ))
    return profiles


def contains_profile(profiles: Sequence[GridProfile], profile: EquilibriumProfile) -> bool:
    """Whether an equilibrium profile appears (to 1e-9) among grid profiles."""
    for candidate in profiles:
        same = all(
            abs(x - profile.contributions[i]) <= 1e-9 and refer == bool(profile.referrals.get(i))
            for i, x, refer in zip(candidate.agents, candidate.contributions, candidate.refers)
        )
        if same:
            return True
    return False


def _describe(agent: int, amount: float, time: float, refer: bool) -> Dict:
    return {"agent": agent, "amount": amount, "time": time, "refer_all": refer}


def check_psne(game: GridGame, profile: EquilibriumProfile) -> Verdict:
    """Unilateral-deviation check of one profile of a simultaneous game."""
    spec = game.mechanism
    if spec.kind.is_sequential:
        raise UnsupportedMechanismError(f"check_psne needs a simultaneous mechanism, got {spec.kind.value}")
    _guard(len(game.agents) * len(game.grid) * len(game.referral_options))
    values = game.values
    base = [profile.contributions[a.id] for a in game.agents]
    refers = [bool(profile.referrals.get(a.id)) for a in game.agents]
    report = settle(spec, _events_for(game, base, refers), values=values)

    checked = 0
    for k, agent in enumerate(game.agents):
        current = report.agent(agent.id).utility
        for x in game.grid:
            for refer in game.referral_options:
                contributions, choice = list(base), list(refers)
                contributions[k], choice[k] = float(x), refer
                alt = settle(spec, _events_for(game, contributions, choice), values=values).agent(agent.id).utility
                checked += 1
                if alt - current > config.UTILITY_TOLERANCE:
                    return Verdict(False, checked, {
                        "agent": agent.id,
                        "history": {"remaining": spec.h0, "outstanding": 0.0},
                        "prescribed": _describe(agent.id, base[k], agent.arrival, refers[k]),
                        "deviation": _describe(agent.id, float(x), agent.arrival, refer),
                        "gain": alt - current,
                    })
    return Verdict(True, checked)


SGPE_HISTORIES = ("path", "all")
History = Tuple[float, float]


def _same_state(a: History, b: History) -> bool:
    return abs(a[0] - b[0]) <= 1e-9 and abs(a[1] - b[1]) <= 1e-9


def _complete_play(spec: MechanismSpec, values: Dict[int, float], base: Dict[int, ContributionEvent],
                   path: Dict[int, History], fixed: Dict[int, ContributionEvent],
                   respond: bool) -> List[ContributionEvent]:
    """
    Events of a play where `fixed` agents act as given and everyone else keeps
    the prescribed action. With `respond`, an agent whose history is off the
    equilibrium path plays min(cap(q), remaining) at its prescribed time instead.
    """
    pending = sorted((fixed.get(agent, event) for agent, event in base.items()), key=event_order)
    if not respond:
        return pending
    ledger = CollectionLedger(spec)
    events = []
    for event in pending:
        state = (ledger.remaining, ledger.outstanding)
        if event.agent not in fixed and not _same_state(state, path[event.agent]):
            amount = min(equilibrium_cap(spec, values[event.agent], ledger.outstanding), ledger.remaining)
            event = dataclasses.replace(event, amount=amount)
        ledger.accept(event.agent, event.time, event.amount)
        events.append(event)
    return events


def _reachable_histories(spec: MechanismSpec, game: GridGame,
                         predecessors: Sequence[ContributionEvent]) -> Dict[History, Dict[int, ContributionEvent]]:
    """Every (remaining, outstanding) state the predecessors' grid amounts lead to, with one play reaching it."""
    choices = [sorted(set(float(x) for x in game.grid) | {e.amount}) for e in predecessors]
    histories: Dict[History, Dict[int, ContributionEvent]] = {}
    for amounts in itertools.product(*choices):
        played = {e.agent: dataclasses.replace(e, amount=x) for e, x in zip(predecessors, amounts)}
        ledger = collect(spec, list(played.values()))
        histories.setdefault((round(ledger.remaining, 12), round(ledger.outstanding, 12)), played)
    return histories


def check_sgpe(game: GridGame, profile: EquilibriumProfile, histories: str = "path") -> Verdict:
    """
    Backward-induction check of a sequential profile.

    Agents are visited from the last mover back to the first. Histories are
    summarized by the remaining amount and the outstanding securities. With
    histories="path" each agent faces the history the profile produces before
    it and successors keep their prescribed amounts and times, truncated by the
    requester at the provision point. With histories="all" each agent faces
    every state its predecessors' grid amounts can reach; off the equilibrium
    path its prescribed action, and that of every successor, becomes
    min(cap(q), remaining) at the prescribed time.

    The prescribed action must be a grid best response over amount x time x
    referral choice. Ties in realized utility are broken by the unfunded-branch
    utility, since agents do not know whether the project will be funded.

    Returns:
        Verdict: holds, or the first counterexample found
    """
    spec = game.mechanism
    if not spec.kind.is_sequential:
        raise UnsupportedMechanismError(f"check_sgpe needs a sequential mechanism, got {spec.kind.value}")
    if histories not in SGPE_HISTORIES:
        raise ValidationError(f"histories must be one of {SGPE_HISTORIES}, got {histories!r}")
    respond = histories == "all"

    values = game.values
    tol = config.UTILITY_TOLERANCE
    base = {e.agent: e for e in profile.to_events()}
    path = {e.agent: (e.h_before, e.q_before) for e in collect(spec, list(base.values())).entries}
    order = sorted(base.values(), key=event_order)
    agents = {a.id: a for a in game.agents}

    plans = []
    for k, event in enumerate(order):
        if respond:
            reachable = _reachable_histories(spec, game, order[:k])
        else:
            reachable = {path[event.agent]: {e.agent: e for e in order[:k]}}
        plans.append((event, reachable))
    deviations = sum(
        len(reachable) * (len(game.grid) + 1) * len(game.time_options(agents[event.agent])) * len(game.referral_options)
        for event, reachable in plans
    )
    _guard(deviations)

    notes = ["histories summarized by (remaining h, outstanding q)"]
    if respond:
        notes.append("all grid histories; off-path agents play min(cap(q), remaining)")
    if getattr(config, 'VERBOSE_LOGGING', False):
        console.print(f"[dim]Oracle: {'; '.join(notes)}[/dim]")

    def evaluate(events: List[ContributionEvent], agent: int) -> Tuple[float, float]:
        forest = build_referral_forest(events)
        report = settle(spec, events, forest, values)
        contingency = utility(spec, events, forest, agent, funded=False, theta=values[agent])
        return report.agent(agent).utility, contingency

    checked = 0
    for event, reachable in reversed(plans):
        agent = agents[event.agent]
        amounts = sorted(set(float(x) for x in game.grid) | {event.amount})
        times = sorted(set(game.time_options(agent)) | {event.time})
        for state, played in reachable.items():
            on_path = _same_state(state, path[agent.id])
            prescribed = event
            if not on_path:
                cap = equilibrium_cap(spec, agent.theta, state[1])
                prescribed = dataclasses.replace(event, amount=min(cap, state[0]))
            current, current_unfunded = evaluate(
                _complete_play(spec, values, base, path, {**played, agent.id: prescribed}, respond), agent.id)
            for x in amounts:
                for when in times:
                    for refer in game.referral_options:
                        referred = frozenset(agent.neighbors) if refer else frozenset()
                        deviation = ContributionEvent(agent.id, x, when, referred)
                        alt, alt_unfunded = evaluate(
                            _complete_play(spec, values, base, path, {**played, agent.id: deviation}, respond),
                            agent.id)
                        checked += 1
                        gain = alt - current
                        if gain > tol or (abs(gain) <= tol and alt_unfunded - current_unfunded > tol):
                            return Verdict(False, checked, {
                                "agent": agent.id,
                                "history": {"remaining": state[0], "outstanding": state[1]},
                                "on_path": on_path,
                                "prescribed": _describe(agent.id, prescribed.amount, prescribed.time,
                                                        bool(prescribed.referred)),
                                "deviation": _describe(agent.id, x, when, refer),
                                "gain": gain,
                                "unfunded_gain": alt_unfunded - current_unfunded,
                            }, notes)
    return Verdict(True, checked, None, notes)

@dataclass(frozen=True)
class MonotonicityContext:
    """Others' contribution before the agent, and the contribution of one agent it refers."""
    others: float
    referred: float = 0.0


@dataclass
class MonotonicityReport:
    min_slope: float
    max_slope: float
    points: int
    incentivizing: bool
    marginal_at_q_max: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "min_slope": self.min_slope,
            "max_slope": self.max_slope,
            "points": self.points,
            "incentivizing": self.incentivizing,
            "marginal_at_q_max": self.marginal_at_q_max,
        }


def sample_contexts(spec: MechanismSpec, count: int, seed: int = 0) -> List[MonotonicityContext]:
    """Random unfunded states: others and referred mass each in [0.05 h0, 0.3 h0]."""
    rng = np.random.default_rng(seed)
    others = rng.uniform(0.05, 0.3, size=count) * spec.h0
    referred = rng.uniform(0.05, 0.3, size=count) * spec.h0
    if not spec.kind.uses_referrals:
        referred = np.zeros(count)
    return [MonotonicityContext(float(o), float(r)) for o, r in zip(others, referred)]


def check_monotonicity(spec: MechanismSpec, contexts: Sequence[MonotonicityContext],
                       grid: Optional[Sequence[float]] = None, n: int = 1, d: int = 1) -> MonotonicityReport:
    """
    Central-difference slope of the unfunded utility in the agent's own
    contribution, at every (context, grid point) that stays unfunded.

    The agent (id 2) contributes after an earlier contributor (id 1, amount
    `others`) and refers a later one (id 3, amount `referred`). Markets also
    report the securities per unit at q_max.
    """
    h = config.FINITE_DIFF_STEP
    if grid is None:
        grid = np.linspace(0.05, 0.3, 6) * spec.h0
    T = spec.deadline

    def unfunded(context: MonotonicityContext, x: float) -> float:
        events = [
            ContributionEvent(1, context.others, 0.0),
            ContributionEvent(2, x, T / 2, frozenset({3}) if context.referred > 0 else frozenset()),
            ContributionEvent(3, context.referred, T),
        ]
        return utility(spec, events, build_referral_forest(events), 2, funded=False)

    slopes = []
    for context in contexts:
        for x in grid:
            if x - h < 0 or context.others + context.referred + x + h >= spec.h0:
                continue
            slopes.append((unfunded(context, x + h) - unfunded(context, x - h)) / (2 * h))

    marginal = None
    if spec.kind.uses_market:
        marginal = marginal_securities_per_unit(spec.cost_function, q_max_bound(spec, n, d))
    min_slope = min(slopes) if slopes else 0.0
    return MonotonicityReport(
        min_slope=min_slope,
        max_slope=max(slopes) if slopes else 0.0,
        points=len(slopes),
        incentivizing=bool(slopes) and min_slope > 0,
        marginal_at_q_max=marginal,
    )
