"""
Domain types and abstract interfaces for AMRO.

Routers, judges, routing policies and agent backends are defined as ABCs so
that deterministic, simulated and model-backed implementations can be swapped
behind the same contract.
"""

import math
from abc import ABC, abstractmethod
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

WEIGHT_TOLERANCE = 1e-9


@dataclass(frozen=True, order=True)
class NodeId:
    """Agent node address. Layers and slots are 1-based."""

    layer: int
    slot: int

    def __str__(self) -> str:
        return f"L{self.layer}S{self.slot}"


@dataclass(frozen=True)
class RoutePath:
    """One node per layer, in layer order."""

    nodes: tuple[NodeId, ...]

    @classmethod
    def from_slots(cls, slots: Sequence[int]) -> "RoutePath":
        """Build a path from per-layer slot indices."""
        return cls(tuple(NodeId(layer, int(slot)) for layer, slot in enumerate(slots, start=1)))

    @property
    def slots(self) -> tuple[int, ...]:
        return tuple(node.slot for node in self.nodes)

    def edges(self) -> list[tuple[NodeId, NodeId]]:
        """Consecutive node pairs along the path."""
        return list(zip(self.nodes, self.nodes[1:], strict=False))

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[NodeId]:
        return iter(self.nodes)

    def __str__(self) -> str:
        return "-".join(str(slot) for slot in self.slots)


@dataclass(frozen=True)
class TaskSet:
    """Ordered task identifiers; the order indexes weight vectors and specialists."""

    tasks: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(str(t) for t in self.tasks))
        if not self.tasks:
            raise ValueError("task set must contain at least one task")
        if len(set(self.tasks)) != len(self.tasks):
            raise ValueError(f"task identifiers must be unique: {list(self.tasks)}")

    def index(self, task: str) -> int:
        try:
            return self.tasks.index(task)
        except ValueError:
            raise ValueError(f"unknown task: {task}") from None

    def mix(self, weights: "WeightVector") -> dict[str, float]:
        """Map each task to its weight."""
        if len(weights) != len(self):
            raise ValueError("task-set mismatch")
        return dict(zip(self.tasks, weights.weights, strict=True))

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self) -> Iterator[str]:
        return iter(self.tasks)

    def __contains__(self, task: object) -> bool:
        return task in self.tasks


@dataclass(frozen=True)
class WeightVector:
    """Normalized task-mixture distribution for one query.

    Entries must be nonnegative and sum to 1 within WEIGHT_TOLERANCE; they
    are renormalized on construction.
    """

    weights: tuple[float, ...]
    low_confidence: bool = False

    def __post_init__(self):
        values = tuple(float(w) for w in self.weights)
        if not values:
            raise ValueError("weight vector must not be empty")
        if any(not math.isfinite(w) or w < 0 for w in values):
            raise ValueError(f"weights must be finite and nonnegative: {values}")
        total = math.fsum(values)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"weights must sum to 1 (got {total!r})")
        if total != 1.0:
            values = tuple(w / total for w in values)
        object.__setattr__(self, "weights", values)

    @classmethod
    def normalized(cls, scores: Sequence[float], low_confidence: bool = False) -> "WeightVector":
        """Normalize nonnegative raw scores into a weight vector."""
        values = [float(s) for s in scores]
        total = math.fsum(values)
        if not math.isfinite(total) or total <= 0:
            raise ValueError("scores must have a positive finite sum")
        return cls(tuple(v / total for v in values), low_confidence)

    @classmethod
    def uniform(cls, k: int, low_confidence: bool = False) -> "WeightVector":
        return cls(tuple(1.0 / k for _ in range(k)), low_confidence)

    @classmethod
    def one_hot(cls, k: int, index: int) -> "WeightVector":
        return cls(tuple(1.0 if i == index else 0.0 for i in range(k)))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def argmax(self) -> int:
        """Index of the largest weight, lowest index on ties."""
        return int(np.argmax(self.as_array()))

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class RouterSample:
    """Query with its annotated target distribution."""

    query: str
    target: WeightVector


@dataclass(frozen=True)
class StageRecord:
    """Execution telemetry for one stage of a routed request."""

    node: NodeId
    tokens_in: int
    tokens_out: int
    latency: float
    load_at_dispatch: float
    quality: float = 1.0

    def __post_init__(self):
        if self.tokens_in < 0 or self.tokens_out < 0:
            raise ValueError("token counts must be nonnegative")
        if self.latency < 0 or self.load_at_dispatch < 0:
            raise ValueError("latency and load must be nonnegative")


@dataclass(frozen=True)
class RouteTrace:
    """A routed path plus per-stage telemetry and end-to-end wall time."""

    stages: tuple[StageRecord, ...]
    wall_time: float
    router_tokens: int = 0

    def __post_init__(self):
        if self.wall_time < 0 or self.router_tokens < 0:
            raise ValueError("wall time and router tokens must be nonnegative")

    @property
    def path(self) -> RoutePath:
        return RoutePath(tuple(stage.node for stage in self.stages))

    @property
    def quality(self) -> float:
        """Path quality: mean stage quality."""
        if not self.stages:
            return 0.0
        return math.fsum(stage.quality for stage in self.stages) / len(self.stages)


@dataclass(frozen=True)
class ExecutionOutcome:
    """Result of executing one stage on an agent."""

    quality: float
    tokens_in: int
    tokens_out: int
    latency: float

    @property
    def tokens(self) -> int:
        return self.tokens_in + self.tokens_out


@dataclass(frozen=True)
class LabeledOutcome:
    """Ground-truth graded outcome of a path for one task."""

    query: str
    task: str
    path: RoutePath
    success: float
    trace: RouteTrace

    def __post_init__(self):
        if not 0.0 <= self.success <= 1.0:
            raise ValueError(f"success must lie in [0, 1]: {self.success}")


@dataclass(frozen=True)
class ServingRecord:
    """One served request as seen by the evolution buffer."""

    query: str
    w: WeightVector
    path: RoutePath
    output: str
    trace: RouteTrace


class IIntentRouter(ABC):
    """Maps a query to a task-mixture weight vector."""

    @property
    @abstractmethod
    def tasks(self) -> TaskSet:
        """Task set the router emits weights over."""
        pass

    @abstractmethod
    def infer_weights(self, query: str) -> WeightVector:
        """Infer the task mixture of a query."""
        pass

    def overhead_tokens(self, query: str) -> int:
        """Tokens the router itself spends on a query."""
        return 0


class IQualityJudge(ABC):
    """Binary accept/reject verdict on a serving trajectory."""

    @abstractmethod
    def judge(self, record: ServingRecord) -> int:
        """Return 1 to accept the record for learning, 0 to discard it."""
        pass


class IRouteSession(ABC):
    """Routing state for a single query, advanced one hop at a time."""

    @abstractmethod
    def next_hop(self, previous: NodeId | None, rng: np.random.Generator) -> NodeId:
        """Choose the node of the next layer (layer 1 when previous is None)."""
        pass


class IRoutingPolicy(ABC):
    """Path selection strategy (learned routing or a baseline)."""

    name: str = "policy"

    @abstractmethod
    def start_route(self, w: WeightVector) -> IRouteSession:
        """Open a routing session for one query."""
        pass

    def select_path(self, w: WeightVector, rng: np.random.Generator, num_layers: int) -> RoutePath:
        """Route every layer at once against the current telemetry."""
        session = self.start_route(w)
        nodes: list[NodeId] = []
        previous: NodeId | None = None
        for _ in range(num_layers):
            previous = session.next_hop(previous, rng)
            nodes.append(previous)
        return RoutePath(tuple(nodes))


class IAgentBackend(ABC):
    """Executes routed stages and reports node load."""

    @abstractmethod
    def dispatch(self, node: NodeId) -> float:
        """Register an in-flight request on a node and return its load."""
        pass

    @abstractmethod
    def execute(
        self,
        node: NodeId,
        w: WeightVector,
        load: float,
        tokens_in: int,
        rng: np.random.Generator,
    ) -> ExecutionOutcome:
        """Run one stage."""
        pass

    @abstractmethod
    def complete(self, node: NodeId, latency: float) -> None:
        """Release an in-flight request and record its response time."""
        pass


class IConfigManager(ABC):
    """Interface for scenario configuration."""

    @abstractmethod
    def get_graph_config(self) -> dict[str, Any]:
        """Get the graph section."""
        pass

    @abstractmethod
    def get_router_config(self) -> dict[str, Any]:
        """Get the router section."""
        pass

    @abstractmethod
    def get_seed(self) -> int:
        """Get the global seed."""
        pass

    @abstractmethod
    def config_hash(self) -> str:
        """Hash of the fully resolved scenario."""
        pass
