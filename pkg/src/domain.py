# src/domain.py

"""
Core data model for Pledgepoint.
Agents, projects, the acquaintance network, contribution events and the
referral forest they induce.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from rich.console import Console

from src.config import config
from src.exceptions import AssumptionViolation, ValidationError
from src.utils import Utils

console = Console(stderr=True)


@dataclass(frozen=True)
class AgentProfile:
    """An agent: private value theta, arrival time and neighbor set."""
    id: int
    theta: float
    arrival: float = 0.0
    neighbors: FrozenSet[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "neighbors", frozenset(self.neighbors))
        if self.id == config.SPONSOR_ID:
            raise ValidationError(f"agent id {self.id} is reserved for the sponsor")
        if not self.theta >= 0:
            raise ValidationError(f"agent {self.id}: theta must be >= 0, got {self.theta}")
        if not self.arrival >= 0:
            raise ValidationError(f"agent {self.id}: arrival must be >= 0, got {self.arrival}")
        if self.id in self.neighbors:
            raise ValidationError(f"agent {self.id} lists itself as a neighbor")


@dataclass(frozen=True)
class ProjectSpec:
    """Provision point h0 and deadline T."""
    provision_point: float
    deadline: float

    def __post_init__(self):
        if not self.provision_point > 0:
            raise ValidationError(f"provision point must be > 0, got {self.provision_point}")
        if not self.deadline > 0:
            raise ValidationError(f"deadline must be > 0, got {self.deadline}")


@dataclass(frozen=True)
class ContributionEvent:
    """
    One agent action: contribution x_i at time t_i and the set M_i it refers.

    referral_time defaults to the contribution time (referrals are instantaneous).
    seq orders events that share a time; the engine sets it to its step index.
    """
    agent: int
    amount: float
    time: float
    referred: FrozenSet[int] = field(default_factory=frozenset)
    referral_time: Optional[float] = None
    seq: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "referred", frozenset(self.referred))
        if not self.amount >= 0:
            raise ValidationError(f"agent {self.agent}: contribution must be >= 0, got {self.amount}")
        if self.referral_time is not None and self.referral_time < self.time:
            raise ValidationError(f"agent {self.agent}: referral cannot precede its own action")

    @property
    def effective_referral_time(self) -> float:
        return self.time if self.referral_time is None else self.referral_time

    def to_dict(self) -> Dict:
        payload = {
            "agent": self.agent,
            "amount": self.amount,
            "time": self.time,
            "referred": sorted(self.referred),
        }
        if self.referral_time is not None:
            payload["referral_time"] = self.referral_time
        if self.seq is not None:
            payload["seq"] = self.seq
        return payload

    @classmethod
    def from_dict(cls, payload: Mapping) -> "ContributionEvent":
        return cls(
            agent=int(payload["agent"]),
            amount=float(payload["amount"]),
            time=float(payload["time"]),
            referred=frozenset(int(j) for j in payload.get("referred", [])),
            referral_time=payload.get("referral_time"),
            seq=None if payload.get("seq") is None else int(payload["seq"]),
        )


def event_order(event: ContributionEvent) -> Tuple[float, int, int]:
    """Canonical processing order: time, then sequence index, then agent id."""
    return (event.time, 0 if event.seq is None else event.seq, event.agent)


class SocialNetwork:
    """
    Undirected acquaintance graph over agents.
    Edges must agree with every agent's neighbor set.
    """

    def __init__(self, agents: Iterable[AgentProfile], edges: Optional[Iterable[Sequence[int]]] = None):
        self.agents: Tuple[AgentProfile, ...] = tuple(sorted(agents, key=lambda a: a.id))
        self._by_id: Dict[int, AgentProfile] = {}
        for agent in self.agents:
            if agent.id in self._by_id:
                raise ValidationError(f"duplicate agent id {agent.id}")
            self._by_id[agent.id] = agent

        self.graph = nx.Graph()
        self.graph.add_nodes_from(self._by_id)
        for agent in self.agents:
            for j in agent.neighbors:
                if j not in self._by_id:
                    raise ValidationError(f"agent {agent.id} has unknown neighbor {j}")
                if agent.id not in self._by_id[j].neighbors:
                    raise ValidationError(f"adjacency is not symmetric between {agent.id} and {j}")
                self.graph.add_edge(agent.id, j)

        if edges is not None:
            declared = set()
            for edge in edges:
                u, v = int(edge[0]), int(edge[1])
                if u == v:
                    raise ValidationError(f"self-edge on agent {u}")
                declared.add(frozenset((u, v)))
            derived = {frozenset(e) for e in self.graph.edges}
            if declared != derived:
                raise ValidationError("edge list disagrees with the agents' neighbor sets")

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def ids(self) -> List[int]:
        return [a.id for a in self.agents]

    def agent(self, agent_id: int) -> AgentProfile:
        try:
            return self._by_id[agent_id]
        except KeyError:
            raise ValidationError(f"unknown agent {agent_id}") from None

    def __contains__(self, agent_id: int) -> bool:
        return agent_id in self._by_id

    def values(self) -> Dict[int, float]:
        return {a.id: a.theta for a in self.agents}

    def positive_support(self) -> List[int]:
        return [a.id for a in self.agents if a.theta > 0]

    def is_support_connected(self) -> bool:
        support = self.positive_support()
        if len(support) <= 1:
            return True
        return nx.is_connected(self.graph.subgraph(support))

    def assert_connected(self) -> None:
        """Raise when the graph restricted to theta > 0 agents is not connected."""
        if not self.is_support_connected():
            raise AssumptionViolation("Assumption-3 violated: positive-value agents do not form a connected graph")

    def subnetwork(self, agent_ids: Iterable[int]) -> "SocialNetwork":
        """Induced subnetwork; neighbor sets are restricted to the kept agents."""
        keep = set(agent_ids)
        agents = [
            AgentProfile(a.id, a.theta, a.arrival, frozenset(a.neighbors & keep))
            for a in self.agents if a.id in keep
        ]
        return SocialNetwork(agents)

    def edge_list(self) -> List[List[int]]:
        return sorted(sorted(e) for e in self.graph.edges)

    def to_dict(self) -> Dict:
        return {
            "agents": [
                {"id": a.id, "theta": a.theta, "arrival": a.arrival, "neighbors": sorted(a.neighbors)}
                for a in self.agents
            ],
            "edges": self.edge_list(),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "SocialNetwork":
        agents = [
            AgentProfile(
                id=int(item["id"]),
                theta=float(item["theta"]),
                arrival=float(item.get("arrival", 0.0)),
                neighbors=frozenset(int(j) for j in item.get("neighbors", [])),
            )
            for item in payload.get("agents", [])
        ]
        return cls(agents, payload.get("edges"))


@dataclass(frozen=True)
class ReferralForest:
    """Sponsor-rooted referral forest: parent and referral time of every non-root node."""
    parent: Mapping[int, int]
    referral_time: Mapping[int, float]

    @property
    def root(self) -> int:
        return config.SPONSOR_ID

    @property
    def nodes(self) -> List[int]:
        return sorted(self.parent)

    def edges(self) -> List[Tuple[int, int]]:
        return sorted((p, c) for c, p in self.parent.items())

    def children(self, node: int) -> List[int]:
        return sorted(c for c, p in self.parent.items() if p == node)

    def depth(self, node: int) -> int:
        depth = 0
        while node != self.root:
            node = self.parent[node]
            depth += 1
        return depth

    def to_graph(self) -> nx.DiGraph:
        tree = nx.DiGraph()
        tree.add_node(self.root)
        tree.add_edges_from(self.edges())
        return tree


def build_referral_forest(events: Sequence[ContributionEvent]) -> ReferralForest:
    """
    Build the referral forest induced by the events.

    The earliest referral takes precedence; simultaneous referrals go to the
    referrer that comes first in the canonical order. A referral only counts for
    an agent that had not acted yet, i.e. the referral must precede the agent's
    own event in the canonical order, which keeps the result acyclic. Contributors without an effective
    referral hang from the sponsor.

    Args:
        events: Contribution events (any order, sorted internally)

    Returns:
        ReferralForest: parent and referral time per node
    """
    ordered = sorted(events, key=event_order)
    acted: Dict[int, ContributionEvent] = {}
    for event in ordered:
        if event.agent in acted:
            raise ValidationError(f"agent {event.agent} contributes more than once")
        if config.SPONSOR_ID in event.referred:
            raise ValidationError(f"agent {event.agent} refers the sponsor")
        if event.agent in event.referred:
            raise ValidationError(f"agent {event.agent} refers itself")
        acted[event.agent] = event

    best: Dict[int, Tuple[float, int, int]] = {}
    for event in ordered:
        key = (event.effective_referral_time,) + event_order(event)[1:]
        for target in event.referred:
            own = acted.get(target)
            if own is not None and not key < event_order(own):
                continue
            if target not in best or key < best[target]:
                best[target] = key

    parent: Dict[int, int] = {}
    referral_time: Dict[int, float] = {}
    for agent, event in acted.items():
        if agent not in best:
            parent[agent] = config.SPONSOR_ID
            referral_time[agent] = event.time
    for target, (when, _, referrer) in best.items():
        parent[target] = referrer
        referral_time[target] = when

    if getattr(config, 'VERBOSE_LOGGING', False):
        console.print(f"[dim]Referral forest: {len(parent)} nodes, {len(best)} referral links[/dim]")
    return ReferralForest(parent=dict(sorted(parent.items())), referral_time=dict(sorted(referral_time.items())))


def validate_events(events: Sequence[ContributionEvent], network: SocialNetwork, project: ProjectSpec) -> None:
    """Check events against the network and deadline: known agents, arrival, referred subset of neighbors."""
    for event in events:
        agent = network.agent(event.agent)
        if event.time < agent.arrival:
            raise ValidationError(f"agent {event.agent} acts at {event.time} before arriving at {agent.arrival}")
        if event.time > project.deadline:
            raise ValidationError(f"agent {event.agent} acts at {event.time} after the deadline {project.deadline}")
        extra = event.referred - agent.neighbors
        if extra:
            raise ValidationError(f"agent {event.agent} refers non-neighbors {sorted(extra)}")


def diameter(network: SocialNetwork) -> int:
    """
    Longest shortest path of the acquaintance graph, via all-pairs BFS.
    Computed on the component that holds the positive-value agents.
    """
    network.assert_connected()
    if network.n <= 1:
        return 0
    support = network.positive_support() or network.ids
    component = nx.node_connected_component(network.graph, support[0])
    lengths = dict(nx.all_pairs_shortest_path_length(network.graph.subgraph(component)))
    return max(max(row.values()) for row in lengths.values())


def net_value(agents: Iterable[AgentProfile]) -> float:
    """Net value of the project among the agents (sum of theta)."""
    return Utils.fsum(a.theta for a in agents)


def load_network(path: str) -> SocialNetwork:
    with open(path, "r", encoding="utf-8") as f:
        return SocialNetwork.from_dict(json.load(f))


def dump_network(network: SocialNetwork, path: str) -> str:
    with open(path, "w", encoding="utf-8") as f:
        f.write(Utils.canonical_json(network.to_dict()))
    return path


def random_connected_network(n: int, p: float = 0.1, seed: int = 0,
                             theta_range: Tuple[float, float] = (0.5, 3.0),
                             deadline: float = 10.0) -> SocialNetwork:
    """
    Random connected network: a random recursive tree plus G(n, p) extra edges.

    Args:
        n: Number of agents (ids 1..n)
        p: Probability of each extra edge
        seed: Seed for numpy and networkx
        theta_range: Uniform range of private values (lower bound > 0 keeps the support connected)
        deadline: Arrivals are drawn uniformly in [0, deadline]

    Returns:
        SocialNetwork: connected on its positive-value support
    """
    if n < 1:
        raise ValidationError("a network needs at least one agent")
    rng = np.random.default_rng(seed)
    graph = nx.gnp_random_graph(n, p, seed=seed)
    for node in range(1, n):
        graph.add_edge(node, int(rng.integers(0, node)))

    thetas = rng.uniform(theta_range[0], theta_range[1], size=n)
    arrivals = rng.uniform(0.0, deadline, size=n)
    agents = [
        AgentProfile(
            id=node + 1,
            theta=float(thetas[node]),
            arrival=float(arrivals[node]),
            neighbors=frozenset(j + 1 for j in graph.neighbors(node)),
        )
        for node in range(n)
    ]
    return SocialNetwork(agents)


def referral_scenario() -> Tuple[SocialNetwork, List[ContributionEvent]]:
    """
    Five initially aware contributors; agents 1, 3, 4 and 5 refer their outside
    neighbors, who join the project below them.
    """
    links = {1: [6, 7], 2: [], 3: [8], 4: [9, 10], 5: [11]}
    neighbors: Dict[int, set] = {i: set() for i in range(1, 12)}
    for referrer, targets in links.items():
        for target in targets:
            neighbors[referrer].add(target)
            neighbors[target].add(referrer)
    # Contributors know each other along a path 1-2-3-4-5
    for a, b in [(1, 2), (2, 3), (3, 4), (4, 5)]:
        neighbors[a].add(b)
        neighbors[b].add(a)

    agents = [AgentProfile(i, 1.0, 0.0, frozenset(neighbors[i])) for i in range(1, 12)]
    network = SocialNetwork(agents)
    events = [
        ContributionEvent(agent=i, amount=0.5, time=0.0, referred=frozenset(links[i]))
        for i in range(1, 6)
    ]
    events += [
        ContributionEvent(agent=j, amount=0.25, time=1.0)
        for targets in links.values() for j in targets
    ]
    return network, events
