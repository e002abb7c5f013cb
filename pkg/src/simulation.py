# src/simulation.py

"""
Sequential contribution engine.
Agents become aware through referrals, act once at their (discretized)
effective arrival and contribute according to a strategy label. Runs are
traced step by step and settled through the mechanisms module.
"""

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd
from joblib import Parallel, delayed
from rich.console import Console

from src.config import config
from src.domain import ContributionEvent, SocialNetwork, build_referral_forest, validate_events
from src.exceptions import AssumptionViolation, ValidationError
from src.mechanisms import (MechanismSpec, SettlementReport, equilibrium_cap, equilibrium_exists,
                            equilibrium_profile, settle, sponsor_outlay, CollectionLedger)
from src.utils import Utils

console = Console(stderr=True)


class StrategyLabel(str, Enum):
    EQUILIBRIUM = "equilibrium"
    FREE_RIDER = "free_rider"
    NO_REFERRAL_EQUILIBRIUM = "no_referral_equilibrium"
    DELAYED = "delayed"
    OVERCONTRIBUTOR = "overcontributor"
    CUSTOM = "custom"


@dataclass(frozen=True)
class AgentStrategy:
    """
    Per-agent strategy. For CUSTOM, amount replaces the equilibrium amount,
    delay postpones the action past the effective arrival and refer forces
    the referral choice.
    """
    label: StrategyLabel = StrategyLabel.EQUILIBRIUM
    amount: Optional[float] = None
    delay: float = 0.0
    refer: Optional[bool] = None

    def __post_init__(self):
        object.__setattr__(self, "label", StrategyLabel(self.label))
        if self.amount is not None and self.amount < 0:
            raise ValidationError("negative contributions (withdrawals) are not allowed")
        if self.delay < 0:
            raise ValidationError(f"delay must be >= 0, got {self.delay}")


@dataclass(frozen=True)
class RunConfig:
    mechanism: MechanismSpec
    network: SocialNetwork
    initial_aware: FrozenSet[int]
    strategy: StrategyLabel = StrategyLabel.EQUILIBRIUM
    overrides: Mapping[int, AgentStrategy] = field(default_factory=dict)
    seed: int = 0
    time_grid: float = 1.0
    name: str = "run"

    def __post_init__(self):
        object.__setattr__(self, "initial_aware", frozenset(self.initial_aware))
        object.__setattr__(self, "strategy", StrategyLabel(self.strategy))
        unknown = [i for i in self.initial_aware if i not in self.network]
        if unknown:
            raise ValidationError(f"initial aware agents not in the network: {sorted(unknown)}")
        unknown = [i for i in self.overrides if i not in self.network]
        if unknown:
            raise ValidationError(f"strategy overrides for unknown agents: {sorted(unknown)}")
        if not self.time_grid > 0:
            raise ValidationError(f"time grid must be > 0, got {self.time_grid}")

    def strategy_of(self, agent: int) -> AgentStrategy:
        return self.overrides.get(agent) or AgentStrategy(self.strategy)


@dataclass(frozen=True)
class TraceStep:
    agent: int
    time: float
    offered: float
    accepted: float
    securities: float
    referred: Tuple[int, ...]
    h_before: float
    h_after: float
    q_before: float
    q_after: float


@dataclass
class RunTrace:
    name: str
    replicate: int
    seed: int
    mechanism: MechanismSpec
    values: Dict[int, float]
    n_agents: int
    steps: List[TraceStep]
    awareness: Dict[int, float]
    report: SettlementReport
    equilibrium_exists: bool

    @property
    def events(self) -> List[ContributionEvent]:
        return [ContributionEvent(s.agent, s.offered, s.time, frozenset(s.referred), seq=k)
                for k, s in enumerate(self.steps)]

    @property
    def coverage(self) -> float:
        return len(self.awareness) / self.n_agents if self.n_agents else 0.0

    @property
    def sponsor_outlay(self) -> float:
        return sponsor_outlay(self.mechanism, self.report)

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "replicate": self.replicate,
            "seed": self.seed,
            "mechanism": self.mechanism.to_dict(),
            "values": [{"agent": i, "theta": v} for i, v in sorted(self.values.items())],
            "n_agents": self.n_agents,
            "steps": [
                {
                    "agent": s.agent, "time": s.time, "offered": s.offered, "accepted": s.accepted,
                    "securities": s.securities, "referred": list(s.referred),
                    "h_before": s.h_before, "h_after": s.h_after, "q_before": s.q_before, "q_after": s.q_after,
                }
                for s in self.steps
            ],
            "awareness": [{"agent": i, "time": t} for i, t in sorted(self.awareness.items())],
            "equilibrium_exists": self.equilibrium_exists,
            "settlement": self.report.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "RunTrace":
        return cls(
            name=payload["name"],
            replicate=int(payload["replicate"]),
            seed=int(payload["seed"]),
            mechanism=MechanismSpec.from_dict(payload["mechanism"]),
            values={int(v["agent"]): float(v["theta"]) for v in payload["values"]},
            n_agents=int(payload["n_agents"]),
            steps=[
                TraceStep(
                    agent=int(s["agent"]), time=float(s["time"]), offered=float(s["offered"]),
                    accepted=float(s["accepted"]), securities=float(s["securities"]),
                    referred=tuple(int(j) for j in s["referred"]),
                    h_before=float(s["h_before"]), h_after=float(s["h_after"]),
                    q_before=float(s["q_before"]), q_after=float(s["q_after"]),
                )
                for s in payload["steps"]
            ],
            awareness={int(a["agent"]): float(a["time"]) for a in payload["awareness"]},
            report=SettlementReport.from_dict(payload["settlement"]),
            equilibrium_exists=bool(payload["equilibrium_exists"]),
        )


def _refers(cfg: RunConfig, agent: int) -> bool:
    strategy = cfg.strategy_of(agent)
    if strategy.refer is not None:
        return strategy.refer
    if strategy.label is StrategyLabel.FREE_RIDER:
        return True
    if strategy.label is StrategyLabel.NO_REFERRAL_EQUILIBRIUM:
        return False
    return cfg.mechanism.kind.uses_referrals


def _action_time(cfg: RunConfig, agent: int, effective_arrival: float) -> float:
    deadline = cfg.mechanism.deadline
    strategy = cfg.strategy_of(agent)
    if strategy.label is StrategyLabel.DELAYED:
        return deadline
    return Utils.snap_to_grid(effective_arrival + strategy.delay, cfg.time_grid, deadline)


def _schedule(cfg: RunConfig) -> Tuple[List[Tuple[float, int, FrozenSet[int]]], Dict[int, float]]:
    """
    Awareness diffusion and action order. Amounts never influence who becomes
    aware, so the order can be fixed before any money moves.
    """
    network, deadline = cfg.network, cfg.mechanism.deadline
    awareness: Dict[int, float] = {}
    heap: List[Tuple[float, int]] = []
    for agent in sorted(cfg.initial_aware):
        awareness[agent] = 0.0
        arrival = network.agent(agent).arrival
        if arrival <= deadline:
            heapq.heappush(heap, (_action_time(cfg, agent, arrival), agent))

    schedule = []
    acted = set()
    while heap:
        time, agent = heapq.heappop(heap)
        if agent in acted:
            continue
        acted.add(agent)
        referred = frozenset(network.agent(agent).neighbors) if _refers(cfg, agent) else frozenset()
        schedule.append((time, agent, referred))
        for target in sorted(referred):
            if target in awareness:
                continue
            awareness[target] = time
            effective = max(network.agent(target).arrival, time)
            if effective <= deadline:
                heapq.heappush(heap, (_action_time(cfg, target, effective), target))
    return schedule, awareness


def run(cfg: RunConfig, replicate: int = 0) -> RunTrace:
    """
    Play one run: awareness spreads from the initial aware set, every aware
    agent acts once, the deadline closes the run and the events are settled.
    """
    spec, network = cfg.mechanism, cfg.network
    schedule, awareness = _schedule(cfg)
    acting = [agent for _, agent, _ in schedule]

    exists, profile = False, None
    if acting:
        subnetwork = network.subnetwork(acting)
        try:
            exists = equilibrium_exists(spec, subnetwork)
            if exists and not spec.kind.is_sequential:
                profile = equilibrium_profile(spec, subnetwork)
        except AssumptionViolation as e:
            if getattr(config, 'VERBOSE_LOGGING', False):
                console.print(f"⚠️ [yellow]{cfg.name}: {e}[/yellow]")

    ledger = CollectionLedger(spec)
    events, steps = [], []
    for time, agent, referred in schedule:
        theta = network.agent(agent).theta
        strategy = cfg.strategy_of(agent)
        if strategy.label is StrategyLabel.FREE_RIDER:
            amount = 0.0
        elif strategy.label is StrategyLabel.OVERCONTRIBUTOR:
            amount = theta
        elif strategy.amount is not None:
            amount = strategy.amount
        elif spec.kind.is_sequential:
            amount = equilibrium_cap(spec, theta, ledger.outstanding)
        elif profile is not None:
            amount = profile.contributions[agent]
        else:
            amount = equilibrium_cap(spec, theta)

        entry = ledger.accept(agent, time, amount)
        events.append(ContributionEvent(agent, amount, time, referred, seq=len(events)))
        steps.append(TraceStep(agent, time, amount, entry.accepted, entry.securities, tuple(sorted(referred)),
                               entry.h_before, entry.h_after, entry.q_before, entry.q_after))

    validate_events(events, network, spec.project)
    values = {a: network.agent(a).theta for a in acting}
    report = settle(spec, events, build_referral_forest(events), values)

    if getattr(config, 'VERBOSE_LOGGING', False):
        status = "✅ funded" if report.funded else "❌ unfunded"
        console.print(f"[dim]{cfg.name}#{replicate}: {status}, chi={Utils.format_amount(report.total_collected)}[/dim]")

    return RunTrace(
        name=cfg.name, replicate=replicate, seed=cfg.seed, mechanism=spec, values=values,
        n_agents=network.n, steps=steps, awareness=awareness, report=report, equilibrium_exists=exists,
    )


def replay(trace: Union[RunTrace, Mapping]) -> SettlementReport:
    """Re-settle the events stored in a trace."""
    if not isinstance(trace, RunTrace):
        trace = RunTrace.from_dict(trace)
    events = trace.events
    return settle(trace.mechanism, events, build_referral_forest(events), trace.values)


def run_all(configs: Sequence[RunConfig], replicates: int = 1, n_jobs: Optional[int] = None) -> List[List[RunTrace]]:
    """All replicates of all configs; results come back grouped by config index."""
    if replicates < 1:
        raise ValidationError(f"replicates must be >= 1, got {replicates}")
    jobs = config.SWEEP_N_JOBS if n_jobs is None else n_jobs
    flat = Parallel(n_jobs=jobs)(
        delayed(run)(cfg, rep) for cfg in configs for rep in range(replicates)
    )
    return [flat[i * replicates:(i + 1) * replicates] for i in range(len(configs))]


def summarize(grouped: Sequence[Sequence[RunTrace]]) -> pd.DataFrame:
    rows = []
    for index, traces in enumerate(grouped):
        first = traces[0]
        rows.append({
            "config": index,
            "name": first.name,
            "mechanism": first.mechanism.kind.value,
            "replicates": len(traces),
            "funded": all(t.report.funded for t in traces),
            "funding_rate": sum(t.report.funded for t in traces) / len(traces),
            "mean_chi": Utils.fsum(t.report.total_collected for t in traces) / len(traces),
            "mean_sponsor_outlay": Utils.fsum(t.sponsor_outlay for t in traces) / len(traces),
            "mean_awareness_coverage": Utils.fsum(t.coverage for t in traces) / len(traces),
            "equilibrium_exists": all(t.equilibrium_exists for t in traces),
        })
    return pd.DataFrame(rows, columns=[
        "config", "name", "mechanism", "replicates", "funded", "funding_rate", "mean_chi",
        "mean_sponsor_outlay", "mean_awareness_coverage", "equilibrium_exists",
    ])


def sweep(configs: Sequence[RunConfig], replicates: int = 1, n_jobs: Optional[int] = None) -> pd.DataFrame:
    """
    Summary table over configs: funding rate, mean chi, mean sponsor outlay and
    mean awareness coverage. Deterministic given the configs.
    """
    return summarize(run_all(configs, replicates, n_jobs))
