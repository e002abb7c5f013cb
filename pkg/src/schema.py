# src/schema.py

"""
Experiment file schema with Pydantic validation.

An experiment file is a JSON document with a version tag, named run blocks
(simulations), named game blocks (oracle checks), an output directory and
the reports to write. Unknown fields are rejected everywhere.
"""

import json
import re
from json.decoder import scanstring
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from src.config import config
from src.domain import AgentProfile, ProjectSpec, SocialNetwork, random_connected_network
from src.exceptions import ConfigError, CrowdfundingError
from src.market import make_cost_function
from src.mechanisms import EquilibriumProfile, MechanismKind, MechanismSpec, equilibrium_profile
from src.oracle import GridGame
from src.rbf import RbfFamily, RbfSpec
from src.simulation import AgentStrategy, RunConfig, StrategyLabel

REPORTS = Literal["summary", "traces", "bounds", "table1", "html"]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ============================================================================
# Building blocks
# ============================================================================

class AgentModel(StrictModel):
    id: int = Field(ge=1)
    theta: float = Field(ge=0)
    arrival: float = Field(default=0.0, ge=0)
    neighbors: List[int] = Field(default_factory=list)

    def to_profile(self) -> AgentProfile:
        return AgentProfile(self.id, self.theta, self.arrival, frozenset(self.neighbors))


class RandomNetworkModel(StrictModel):
    n: int = Field(ge=1)
    p: float = Field(default=0.1, ge=0, le=1)
    theta_low: float = Field(default=0.5, gt=0)
    theta_high: float = Field(default=3.0, gt=0)

    @model_validator(mode="after")
    def check_range(self):
        if self.theta_low > self.theta_high:
            raise ValueError("theta_low must not exceed theta_high")
        return self


class NetworkModel(StrictModel):
    """Either explicit agents (and optional edges) or a random connected network."""
    agents: Optional[List[AgentModel]] = None
    edges: Optional[List[Tuple[int, int]]] = None
    random: Optional[RandomNetworkModel] = None

    @model_validator(mode="after")
    def check_source(self):
        if (self.agents is None) == (self.random is None):
            raise ValueError("give exactly one of 'agents' or 'random'")
        if self.random is not None and self.edges is not None:
            raise ValueError("'edges' only applies to explicit agents")
        if self.agents is not None:
            try:
                self.to_network(config.DEFAULT_SEED, 1.0)
            except CrowdfundingError as e:
                raise ValueError(str(e)) from None
        return self

    def to_network(self, seed: int, deadline: float) -> SocialNetwork:
        if self.random is not None:
            r = self.random
            return random_connected_network(r.n, r.p, seed, (r.theta_low, r.theta_high), deadline)
        return SocialNetwork([a.to_profile() for a in self.agents], self.edges)


class RbfModel(StrictModel):
    family: RbfFamily = RbfFamily.TANH
    cap: float = Field(gt=0)
    scale: float = Field(default=1.0, gt=0)


class MarketModel(StrictModel):
    family: Literal["lmsr"] = "lmsr"
    b: float = Field(gt=0)


class MechanismModel(StrictModel):
    kind: MechanismKind
    h0: float = Field(gt=0)
    T: float = Field(gt=0)
    B: Optional[float] = None
    market: Optional[MarketModel] = None
    rbf: Optional[RbfModel] = None

    @model_validator(mode="after")
    def check_parts(self):
        try:
            self.to_spec()
        except CrowdfundingError as e:
            raise ValueError(str(e)) from None
        return self

    def to_spec(self) -> MechanismSpec:
        return MechanismSpec(
            kind=self.kind,
            project=ProjectSpec(self.h0, self.T),
            refund_budget=self.B,
            cost_function=make_cost_function(self.market.family, self.market.b) if self.market else None,
            rbf=RbfSpec(self.rbf.family, self.rbf.cap, self.rbf.scale) if self.rbf else None,
        )


class AgentStrategyModel(StrictModel):
    label: StrategyLabel = StrategyLabel.CUSTOM
    amount: Optional[float] = Field(default=None, ge=0)
    delay: float = Field(default=0.0, ge=0)
    refer: Optional[bool] = None

    def to_strategy(self) -> AgentStrategy:
        return AgentStrategy(self.label, self.amount, self.delay, self.refer)


# ============================================================================
# Blocks
# ============================================================================

class RunBlock(StrictModel):
    name: str = Field(min_length=1)
    mechanism: MechanismModel
    network: NetworkModel
    initial_aware: List[int] = Field(min_length=1)
    strategy: StrategyLabel = StrategyLabel.EQUILIBRIUM
    overrides: Dict[int, AgentStrategyModel] = Field(default_factory=dict)
    seed: Optional[int] = None
    time_grid: float = Field(default=config.DEFAULT_TIME_GRID, gt=0)
    replicates: int = Field(default=1, ge=1)

    def to_run_config(self, seed: Optional[int] = None) -> RunConfig:
        """
        Build the run configuration. The CLI seed wins over the block seed,
        which wins over config.DEFAULT_SEED.
        """
        if seed is None:
            seed = self.seed if self.seed is not None else config.DEFAULT_SEED
        spec = self.mechanism.to_spec()
        return RunConfig(
            mechanism=spec,
            network=self.network.to_network(seed, spec.deadline),
            initial_aware=frozenset(self.initial_aware),
            strategy=self.strategy,
            overrides={i: s.to_strategy() for i, s in self.overrides.items()},
            seed=seed,
            time_grid=self.time_grid,
            name=self.name,
        )


class GameBlock(StrictModel):
    """
    Oracle check. Without `profile` the canonical equilibrium is checked;
    `delays` moves agents' action times to test the contribute-at-arrival property;
    `histories` selects the subgame histories a sequential check visits.
    """
    name: str = Field(min_length=1)
    mechanism: MechanismModel
    agents: List[AgentModel] = Field(min_length=1)
    contribution_step: float = Field(gt=0)
    time_step: Optional[float] = Field(default=None, gt=0)
    profile: Optional[Dict[int, float]] = None
    delays: Dict[int, float] = Field(default_factory=dict)
    histories: Literal["path", "all"] = "path"

    def to_game(self) -> GridGame:
        return GridGame(self.mechanism.to_spec(), tuple(a.to_profile() for a in self.agents),
                        self.contribution_step, self.time_step)

    def to_profile(self, game: GridGame) -> Optional[EquilibriumProfile]:
        spec = game.mechanism
        if self.profile is None:
            prescribed = equilibrium_profile(spec, game.network)
        else:
            refer = spec.kind.uses_referrals
            prescribed = EquilibriumProfile(
                contributions={a.id: float(self.profile.get(a.id, 0.0)) for a in game.agents},
                times={a.id: a.arrival for a in game.agents},
                referrals={a.id: (frozenset(a.neighbors) if refer else frozenset()) for a in game.agents},
            )
        if prescribed is None:
            return None
        for agent, when in sorted(self.delays.items()):
            prescribed = prescribed.with_time(agent, when)
        return prescribed


class ExperimentModel(StrictModel):
    version: str
    runs: List[RunBlock] = Field(default_factory=list)
    games: List[GameBlock] = Field(default_factory=list)
    output_dir: Optional[str] = None
    reports: List[REPORTS] = Field(default_factory=lambda: ["summary", "traces"])

    @field_validator("version")
    @classmethod
    def check_version(cls, value: str) -> str:
        if value != config.EXPERIMENT_VERSION:
            raise ValueError(f"unsupported version {value!r}, expected {config.EXPERIMENT_VERSION!r}")
        return value

    @model_validator(mode="after")
    def check_names(self):
        names = [b.name for b in self.runs] + [b.name for b in self.games]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate block names: {duplicates}")
        return self


# ============================================================================
# Loading
# ============================================================================

_WHITESPACE = re.compile(r"[ \t\n\r]*")


def _skip(raw: str, pos: int) -> int:
    return _WHITESPACE.match(raw, pos).end()


def _step_into(raw: str, pos: int, step) -> Optional[Tuple[int, int]]:
    """
    Find one location step inside the JSON value starting at pos.

    Returns:
        (anchor, value) offsets: the member's key or the array item, and where its value starts
    """
    decoder = json.JSONDecoder()
    pos = _skip(raw, pos)
    if raw.startswith("{", pos):
        pos = _skip(raw, pos + 1)
        while raw.startswith('"', pos):
            key, end = scanstring(raw, pos + 1)
            value = _skip(raw, _skip(raw, end) + 1)
            if key == str(step):
                return pos, value
            _, pos = decoder.raw_decode(raw, value)
            pos = _skip(raw, pos)
            if raw.startswith(",", pos):
                pos = _skip(raw, pos + 1)
        return None
    if raw.startswith("[", pos) and isinstance(step, int):
        pos = _skip(raw, pos + 1)
        index = 0
        while pos < len(raw) and not raw.startswith("]", pos):
            if index == step:
                return pos, pos
            _, pos = decoder.raw_decode(raw, pos)
            pos = _skip(raw, pos)
            if raw.startswith(",", pos):
                pos = _skip(raw, pos + 1)
            index += 1
    return None


def _locate(raw: str, loc: Tuple) -> Optional[int]:
    """Line of the deepest member or item an error location reaches in the raw document."""
    anchor, pos = None, 0
    for step in loc:
        found = _step_into(raw, pos, step)
        if found is None:
            break
        anchor, pos = found
    return None if anchor is None else raw.count("\n", 0, anchor) + 1


def parse_experiment(raw: str) -> ExperimentModel:
    """
    Validate the text of an experiment file.

    Raises:
        ConfigError: invalid JSON or schema violation, with a line number when one can be located
    """
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno) from None
    try:
        return ExperimentModel.model_validate(payload)
    except PydanticValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(k) for k in first["loc"]) or "<root>"
        raise ConfigError(f"{where}: {first['msg']}", line=_locate(raw, first["loc"])) from None


def load_experiment(path: str) -> ExperimentModel:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    return parse_experiment(raw)
