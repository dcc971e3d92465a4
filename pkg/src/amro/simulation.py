"""
Simulated agent pool, mixed-intent workloads, routing baselines and the brute-force oracle.
"""

import logging
import math
import threading
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .cost import CostWeights
from .errors import ConfigError, RoutingError
from .evolution import OutcomeOracle
from .graph import LayeredGraph
from .interfaces import (
    ExecutionOutcome,
    IAgentBackend,
    IRouteSession,
    IRoutingPolicy,
    LabeledOutcome,
    NodeId,
    RoutePath,
    RouterSample,
    RouteTrace,
    StageRecord,
    TaskSet,
    WeightVector,
)

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 10**6
ARRIVAL_MODES = ("closed", "open")


@dataclass(frozen=True)
class AgentModel:
    """Quality and cost profile of one simulated agent node."""

    node: NodeId
    base_quality: dict[str, float]
    latency_mean: float = 1.0
    latency_jitter: float = 0.2
    tokens_mean: float = 120.0
    tokens_jitter: float = 30.0
    load_sensitivity: float = 0.0
    capacity: float = 8.0
    theta_soft: float = 1.0
    quality_jitter: float = 0.0

    def __post_init__(self):
        for task, q in self.base_quality.items():
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"base quality of {self.node} for {task} outside [0, 1]: {q}")
        if min(self.latency_mean, self.latency_jitter, self.tokens_mean, self.tokens_jitter) < 0:
            raise ValueError(f"latency and token parameters of {self.node} must be nonnegative")
        if self.load_sensitivity < 0 or self.theta_soft < 0 or self.quality_jitter < 0:
            raise ValueError(f"load parameters of {self.node} must be nonnegative")
        if self.capacity <= 0:
            raise ValueError(f"capacity of {self.node} must be positive")

    def mean_quality(self, mix: Mapping[str, float], load: float = 0.0) -> float:
        """Mixture-weighted quality minus the linear overload penalty, clamped to [0, 1]."""
        base = math.fsum(weight * self.base_quality[task] for task, weight in mix.items())
        penalty = self.load_sensitivity * max(0.0, load - self.theta_soft)
        return min(1.0, max(0.0, base - penalty))


def build_agent_models(graph: LayeredGraph, config: Mapping[str, Any]) -> dict[NodeId, AgentModel]:
    """Agent models from config; unspecified nodes use defaults with quality = ability."""
    defaults = dict(config.get("defaults", {}))
    overrides: dict[NodeId, dict[str, Any]] = {}
    for entry in config.get("nodes", []):
        node = NodeId(int(entry["layer"]), int(entry["slot"]))
        if node not in set(graph.nodes()):
            raise ConfigError(f"agent model for unknown node {node}")
        overrides[node] = dict(entry)

    models = {}
    for node in graph.nodes():
        spec = {**defaults, **overrides.get(node, {})}
        quality = dict(spec.get("base_quality") or graph.profile(node).ability)
        missing = [t for t in graph.tasks if t not in quality]
        if missing:
            raise ConfigError(f"agent model for {node} lacks base quality for {missing}")
        latency = dict(spec.get("latency", {}))
        tokens = dict(spec.get("tokens", {}))
        try:
            models[node] = AgentModel(
                node=node,
                base_quality={t: float(quality[t]) for t in graph.tasks},
                latency_mean=float(latency.get("mean", 1.0)),
                latency_jitter=float(latency.get("jitter", 0.2)),
                tokens_mean=float(tokens.get("mean", 120.0)),
                tokens_jitter=float(tokens.get("jitter", 30.0)),
                load_sensitivity=float(spec.get("load_sensitivity", 0.0)),
                capacity=float(spec.get("capacity", 8.0)),
                theta_soft=float(spec.get("theta_soft", 1.0)),
                quality_jitter=float(spec.get("quality_jitter", 0.0)),
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e
    return models


def simulate_execute(
    agent: AgentModel,
    mix: Mapping[str, float],
    current_load: float,
    rng: np.random.Generator,
    tokens_in: int = 0,
) -> ExecutionOutcome:
    """Draw one stage execution; latency stretches with load above nominal capacity."""
    quality_noise = rng.uniform(-agent.quality_jitter, agent.quality_jitter)
    latency_noise = rng.uniform(-agent.latency_jitter, agent.latency_jitter)
    token_noise = rng.uniform(-agent.tokens_jitter, agent.tokens_jitter)

    base = math.fsum(weight * agent.base_quality[task] for task, weight in mix.items())
    penalty = agent.load_sensitivity * max(0.0, current_load - agent.theta_soft)
    quality = min(1.0, max(0.0, base - penalty + quality_noise))
    latency = max(0.0, agent.latency_mean + latency_noise) * max(1.0, current_load)
    tokens_out = max(0, int(round(agent.tokens_mean + token_noise)))
    return ExecutionOutcome(quality, int(tokens_in), tokens_out, latency)


class SimulatedAgentPool(IAgentBackend):
    """Agent pool whose node load is in-flight requests over capacity."""

    def __init__(self, graph: LayeredGraph, agents: Mapping[NodeId, AgentModel]):
        missing = [n for n in graph.nodes() if n not in agents]
        if missing:
            raise ConfigError(f"no agent model for nodes {[str(n) for n in missing]}")
        self.graph = graph
        self.agents = dict(agents)
        self._lock = threading.Lock()
        self._in_flight = dict.fromkeys(graph.nodes(), 0)

    def dispatch(self, node: NodeId) -> float:
        with self._lock:
            self._in_flight[node] += 1
            load = self._in_flight[node] / self.agents[node].capacity
            self.graph.update_telemetry(node, load=load)
        return load

    def execute(
        self,
        node: NodeId,
        w: WeightVector,
        load: float,
        tokens_in: int,
        rng: np.random.Generator,
    ) -> ExecutionOutcome:
        return simulate_execute(self.agents[node], self.graph.tasks.mix(w), load, rng, tokens_in)

    def complete(self, node: NodeId, latency: float) -> None:
        with self._lock:
            if self._in_flight[node] <= 0:
                raise RuntimeError(f"completion without dispatch on {node}")
            self._in_flight[node] -= 1
            load = self._in_flight[node] / self.agents[node].capacity
            self.graph.update_telemetry(node, load=load, response_time=latency)

    def in_flight(self, node: NodeId) -> int:
        with self._lock:
            return self._in_flight[node]

    def total_in_flight(self) -> int:
        with self._lock:
            return sum(self._in_flight.values())

    def reset(self):
        with self._lock:
            self._in_flight = dict.fromkeys(self.graph.nodes(), 0)
        self.graph.reset_telemetry()


class SimulatorOracle(OutcomeOracle):
    """Grades warm-up paths by executing them on idle simulated agents."""

    def __init__(
        self,
        graph: LayeredGraph,
        agents: Mapping[NodeId, AgentModel],
        prompt_tokens: int = 16,
    ):
        self.graph = graph
        self.agents = dict(agents)
        self.prompt_tokens = prompt_tokens

    def has_data(self, task: str) -> bool:
        return task in self.graph.tasks

    def evaluate(self, task: str, path: RoutePath, rng: np.random.Generator) -> LabeledOutcome:
        mix = {t: 1.0 if t == task else 0.0 for t in self.graph.tasks}
        stages = []
        previous_out = 0
        for node in path:
            tokens_in = self.prompt_tokens + previous_out
            outcome = simulate_execute(self.agents[node], mix, 0.0, rng, tokens_in)
            stages.append(
                StageRecord(
                    node, outcome.tokens_in, outcome.tokens_out, outcome.latency, 0.0, outcome.quality
                )
            )
            previous_out = outcome.tokens_out
        trace = RouteTrace(tuple(stages), math.fsum(s.latency for s in stages))
        return LabeledOutcome(f"warmup:{task}", task, path, trace.quality, trace)


def expected_utility(
    path: RoutePath,
    agents: Mapping[NodeId, AgentModel],
    mix: Mapping[str, float],
    weights: CostWeights,
    prompt_tokens: int = 16,
    router_tokens: int = 0,
) -> float:
    """Utility of a path under analytic means on idle agents."""
    qualities = []
    tokens = float(router_tokens)
    latency = 0.0
    previous_out = 0.0
    for node in path:
        agent = agents[node]
        qualities.append(agent.mean_quality(mix))
        tokens += prompt_tokens + previous_out + agent.tokens_mean
        previous_out = agent.tokens_mean
        latency += agent.latency_mean
    quality = math.fsum(qualities) / len(qualities)
    cost = weights.omega_tok * tokens + weights.omega_lat * latency
    return quality - weights.lam * cost


def brute_force_best_path(
    graph: LayeredGraph,
    w: WeightVector,
    agents: Mapping[NodeId, AgentModel],
    weights: CostWeights,
    prompt_tokens: int = 16,
    router_tokens: int = 0,
) -> RoutePath:
    """Exhaustive argmax of expected utility; the lexicographically first path wins ties."""
    if graph.path_count() > BRUTE_FORCE_LIMIT:
        raise ValueError(f"search space too large: {graph.path_count()} paths")
    mix = graph.tasks.mix(w)
    best_path = None
    best_value = -math.inf
    for path in graph.enumerate_paths():
        value = expected_utility(path, agents, mix, weights, prompt_tokens, router_tokens)
        if value > best_value:
            best_path, best_value = path, value
    assert best_path is not None
    return best_path


# Workload generation

QUERY_TEMPLATES: dict[str, list[str]] = {
    "math": [
        "solve for x when {a}x plus 3 equals 40",
        "prove that the sum of the first {a} odd numbers is a square",
        "what is the probability of rolling {a} sixes in a row",
        "compute the integral of x to the power {a}",
        "find the roots of the equation x^2 minus {a} = 0",
    ],
    "code": [
        "write a python function that reverses a list of {a} items",
        "debug this loop that runs {a} times too often",
        "why does my program fail to compile on line {a}",
        "design an algorithm to sort {a} records by date",
        "add a unit test for the parser with {a} cases",
    ],
    "general": [
        "explain the causes of the flood in year {a}",
        "summarize the plot of a novel in {a} sentences",
        "recommend {a} books about travel",
        "what is the capital of the country ranked {a} by area",
        "tell me about the history of a town founded {a} years ago",
    ],
}


def compose_query(task: str, rng: np.random.Generator) -> str:
    """One templated query for a task; unknown tasks get a generic template."""
    templates = QUERY_TEMPLATES.get(task, [f"handle request {{a}} about {task}"])
    template = templates[int(rng.integers(len(templates)))]
    return template.format(a=int(rng.integers(2, 100)))


@dataclass(frozen=True)
class WorkloadSpec:
    """Arrival mixture, size and arrival process of a workload."""

    mix: WeightVector
    count: int = 200
    arrival: str = "closed"
    rate: float | None = None
    seed: int = 0
    ramp_up: float = 3.0
    mixed_fraction: float = 0.2

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("workload count must be at least 1")
        if self.arrival not in ARRIVAL_MODES:
            raise ValueError(f"arrival must be one of {ARRIVAL_MODES}: {self.arrival}")
        if self.arrival == "open" and (self.rate is None or self.rate <= 0):
            raise ValueError("open-loop arrival needs a positive rate")
        if not 0.0 <= self.mixed_fraction <= 1.0:
            raise ValueError(f"mixed_fraction must lie in [0, 1]: {self.mixed_fraction}")
        if self.ramp_up < 0:
            raise ValueError("ramp_up must be nonnegative")


@dataclass(frozen=True)
class WorkloadQuery:
    index: int
    query: str
    target: WeightVector
    arrival_time: float = 0.0


def _draw_queries(
    tasks: TaskSet,
    mix: WeightVector,
    count: int,
    mixed_fraction: float,
    rng: np.random.Generator,
) -> list[tuple[str, WeightVector]]:
    if len(mix) != len(tasks):
        raise ValueError("task-set mismatch")
    k = len(tasks)
    p = mix.as_array()
    can_mix = np.count_nonzero(p) >= 2
    drawn = []
    for _ in range(count):
        if can_mix and rng.random() < mixed_fraction:
            pair = sorted(int(i) for i in rng.choice(k, size=2, replace=False, p=p))
            query = " and ".join(compose_query(tasks.tasks[i], rng) for i in pair)
            target = WeightVector(tuple(0.5 if i in pair else 0.0 for i in range(k)))
        else:
            index = int(rng.choice(k, p=p))
            query = compose_query(tasks.tasks[index], rng)
            target = WeightVector.one_hot(k, index)
        drawn.append((query, target))
    return drawn


def generate_workload(spec: WorkloadSpec, tasks: TaskSet) -> list[WorkloadQuery]:
    """Fixed, seeded query set; open-loop arrivals follow a Poisson process."""
    rng = np.random.default_rng(spec.seed)
    drawn = _draw_queries(tasks, spec.mix, spec.count, spec.mixed_fraction, rng)
    if spec.arrival == "open":
        assert spec.rate is not None
        arrivals = np.cumsum(rng.exponential(1.0 / spec.rate, size=spec.count))
    else:
        arrivals = np.zeros(spec.count)
    return [
        WorkloadQuery(i, query, target, float(arrivals[i]))
        for i, (query, target) in enumerate(drawn)
    ]


def generate_router_dataset(
    tasks: TaskSet, count: int, rng: np.random.Generator, mixed_fraction: float = 0.2
) -> list[RouterSample]:
    """Synthetic labeled queries over a uniform task mixture."""
    drawn = _draw_queries(tasks, WeightVector.uniform(len(tasks)), count, mixed_fraction, rng)
    return [RouterSample(query, target) for query, target in drawn]


# Baselines


class SmoothWeightedRoundRobin:
    """Smooth weighted round robin over the slots of one layer."""

    def __init__(self, weights: Sequence[float]):
        if not weights or any(w <= 0 for w in weights):
            raise ValueError("round-robin weights must be positive")
        self._weights = [float(w) for w in weights]
        self._current = [0.0] * len(weights)
        self._lock = threading.Lock()

    def select(self, eligible: set[int] | None = None) -> int:
        """Pick a 1-based slot among eligible slots (all when None)."""
        candidates = sorted(eligible) if eligible is not None else range(1, len(self._weights) + 1)
        indices = [slot - 1 for slot in candidates]
        if not indices:
            raise RoutingError("no feasible successor")
        with self._lock:
            total = 0.0
            for i in indices:
                self._current[i] += self._weights[i]
                total += self._weights[i]
            best = max(indices, key=lambda i: (self._current[i], -i))
            self._current[best] -= total
        return best + 1


@dataclass
class WrrState:
    """One smooth round-robin per layer."""

    layers: list[SmoothWeightedRoundRobin] = field(default_factory=list)

    @classmethod
    def uniform(cls, num_layers: int, nodes_per_layer: int) -> "WrrState":
        return cls([SmoothWeightedRoundRobin([1.0] * nodes_per_layer) for _ in range(num_layers)])


def route_wrr(state: WrrState, layer: int, eligible: set[int] | None = None) -> int:
    """Next slot of a layer in smooth weighted round-robin order."""
    return state.layers[layer - 1].select(eligible)


def route_random(allowed: set[int], rng: np.random.Generator) -> int:
    """Uniform draw over the allowed slots."""
    if not allowed:
        raise RoutingError("no feasible successor")
    candidates = sorted(allowed)
    return candidates[int(rng.integers(len(candidates)))]


class _WrrSession(IRouteSession):
    def __init__(self, graph: LayeredGraph, state: WrrState):
        self._graph = graph
        self._state = state

    def next_hop(self, previous: NodeId | None, rng: np.random.Generator) -> NodeId:
        layer = 1 if previous is None else previous.layer + 1
        eligible = self._graph.available_into(layer)
        if not eligible:
            raise RoutingError(f"no feasible successor in layer {layer}")
        return NodeId(layer, route_wrr(self._state, layer, eligible))


class WrrPolicy(IRoutingPolicy):
    """Load-blind, semantics-blind weighted round robin with uniform nominal weights."""

    name = "wrr"

    def __init__(self, graph: LayeredGraph):
        self.graph = graph
        self.state = WrrState.uniform(graph.num_layers, graph.nodes_per_layer)

    def start_route(self, w: WeightVector) -> IRouteSession:
        return _WrrSession(self.graph, self.state)


class _RandomSession(IRouteSession):
    def __init__(self, graph: LayeredGraph):
        self._graph = graph

    def next_hop(self, previous: NodeId | None, rng: np.random.Generator) -> NodeId:
        layer = 1 if previous is None else previous.layer + 1
        allowed = self._graph.allowed_into(layer) or self._graph.available_into(layer)
        return NodeId(layer, route_random(allowed, rng))


class RandomPolicy(IRoutingPolicy):
    """Uniform choice over feasible nodes at every hop."""

    name = "random"

    def __init__(self, graph: LayeredGraph):
        self.graph = graph

    def start_route(self, w: WeightVector) -> IRouteSession:
        return _RandomSession(self.graph)


class _SingleSession(IRouteSession):
    def __init__(self, graph: LayeredGraph, slots: tuple[int, ...]):
        self._graph = graph
        self._slots = slots

    def next_hop(self, previous: NodeId | None, rng: np.random.Generator) -> NodeId:
        layer = 1 if previous is None else previous.layer + 1
        slot = self._slots[layer - 1]
        if slot not in self._graph.available_into(layer):
            raise RoutingError(f"no feasible successor in layer {layer}: slot {slot} is unavailable")
        return NodeId(layer, slot)


class SinglePolicy(IRoutingPolicy):
    """Single-agent baseline: every query takes the same fixed node in each layer.

    Without an explicit slot, each layer uses the node with the highest mean
    ability across tasks. Load and semantics are ignored.
    """

    name = "single"

    def __init__(self, graph: LayeredGraph, slot: int | None = None):
        if slot is not None and not 1 <= slot <= graph.nodes_per_layer:
            raise ConfigError(f"single-agent slot must lie in [1, {graph.nodes_per_layer}]: {slot}")
        self.graph = graph
        if slot is None:
            self.slots = tuple(
                int(np.argmax(graph.ability_matrix(layer).mean(axis=1))) + 1
                for layer in range(1, graph.num_layers + 1)
            )
        else:
            self.slots = (slot,) * graph.num_layers
        self.path = RoutePath.from_slots(self.slots)

    def start_route(self, w: WeightVector) -> IRouteSession:
        return _SingleSession(self.graph, self.slots)
