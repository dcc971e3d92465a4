"""
Pheromone specialists, query-conditioned fusion, the task-aware heuristic and path sampling.

Layout of a specialist: ``source`` has shape (n,) and holds the virtual-source
row into layer 1; ``edges`` has shape (N-1, n, n) where ``edges[l-1, i, j]``
is the preference for moving from slot i+1 of layer l to slot j+1 of layer l+1.
"""

import logging
import threading
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import RoutingError
from .graph import LayeredGraph, NodeProfile, NodeTelemetry
from .interfaces import IRouteSession, IRoutingPolicy, NodeId, RoutePath, TaskSet, WeightVector

logger = logging.getLogger(__name__)

TAU_MIN = 1e-6
SIGNALS = ("ability", "inv_load", "inv_rt")


@dataclass(frozen=True)
class SamplerParams:
    """Transition-rule exponents, exploration rate and heuristic mixing weights."""

    alpha: float = 1.0
    beta: float = 2.0
    gamma: float = 0.1
    lambda_a: float = 1.0
    lambda_l: float = 0.5
    lambda_r: float = 0.5
    epsilon: float = 0.1
    q_low: float = 0.05
    q_high: float = 0.95
    window_size: int = 256

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1]: {self.gamma}")
        if min(self.lambda_a, self.lambda_l, self.lambda_r) < 0:
            raise ValueError("heuristic weights must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 <= self.q_low < self.q_high <= 1.0:
            raise ValueError(f"need 0 <= q_low < q_high <= 1, got ({self.q_low}, {self.q_high})")
        if self.window_size < 1:
            raise ValueError("window_size must be positive")


class PheromoneSpecialist:
    """Per-task edge preferences, strictly positive."""

    def __init__(self, task: str, source: np.ndarray, edges: np.ndarray):
        source = np.array(source, dtype=float)
        edges = np.array(edges, dtype=float)
        if source.ndim != 1 or edges.ndim != 3 or edges.shape[1:] != (len(source), len(source)):
            raise ValueError(
                f"shape mismatch: source {source.shape} and edges {edges.shape} are inconsistent"
            )
        if not (np.all(np.isfinite(source)) and np.all(np.isfinite(edges))):
            raise ValueError("pheromone values must be finite")
        if np.any(source <= 0) or np.any(edges <= 0):
            raise ValueError("pheromone values must be strictly positive")
        self.task = task
        self.source = source
        self.edges = edges

    @classmethod
    def uniform(
        cls, task: str, num_layers: int, nodes_per_layer: int, value: float = 1.0
    ) -> "PheromoneSpecialist":
        return cls(
            task,
            np.full(nodes_per_layer, value),
            np.full((num_layers - 1, nodes_per_layer, nodes_per_layer), value),
        )

    @property
    def num_layers(self) -> int:
        return self.edges.shape[0] + 1

    @property
    def nodes_per_layer(self) -> int:
        return self.source.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.num_layers, self.nodes_per_layer

    @property
    def writable(self) -> bool:
        return bool(self.source.flags.writeable)

    def copy(self) -> "PheromoneSpecialist":
        return PheromoneSpecialist(self.task, self.source.copy(), self.edges.copy())

    def freeze(self) -> "PheromoneSpecialist":
        """Make the arrays read-only in place."""
        self.source.setflags(write=False)
        self.edges.setflags(write=False)
        return self

    def row(self, previous: NodeId | None) -> np.ndarray:
        """Outgoing preferences of a node (the virtual source when None)."""
        if previous is None:
            return self.source
        return self.edges[previous.layer - 1, previous.slot - 1]

    def rows(self) -> Iterable[tuple[str, np.ndarray]]:
        """Every row with a label: ``src`` then ``L{l}S{i}``."""
        yield "src", self.source
        for layer in range(1, self.num_layers):
            for slot in range(1, self.nodes_per_layer + 1):
                yield f"L{layer}S{slot}", self.edges[layer - 1, slot - 1]

    def row_entropy(self) -> dict[str, float]:
        """Shannon entropy (nats) of each row normalized to a distribution."""
        result = {}
        for label, row in self.rows():
            p = row / row.sum()
            result[label] = float(-np.sum(p * np.log(p)))
        return result

    def apply_floor(self):
        np.maximum(self.source, TAU_MIN, out=self.source)
        np.maximum(self.edges, TAU_MIN, out=self.edges)

    def values_equal(self, other: "PheromoneSpecialist") -> bool:
        """Bitwise equality of all values."""
        return (
            self.task == other.task
            and np.array_equal(self.source, other.source)
            and np.array_equal(self.edges, other.edges)
        )

    def as_fused(self) -> "FusedPheromone":
        return FusedPheromone(self.source, self.edges)

    def __repr__(self) -> str:
        return f"PheromoneSpecialist(task={self.task!r}, shape={self.shape})"


@dataclass(frozen=True)
class FusedPheromone:
    """Query-conditioned pheromone: the weight-averaged specialists."""

    source: np.ndarray
    edges: np.ndarray

    def row(self, previous: NodeId | None) -> np.ndarray:
        if previous is None:
            return self.source
        return self.edges[previous.layer - 1, previous.slot - 1]


def fuse_pheromone(
    specialists: Sequence[PheromoneSpecialist],
    w: WeightVector,
    tasks: TaskSet | None = None,
) -> FusedPheromone:
    """Entrywise sum over tasks of w_t times that task's specialist."""
    if len(specialists) != len(w):
        raise ValueError("task-set mismatch")
    if tasks is not None and tuple(s.task for s in specialists) != tasks.tasks:
        raise ValueError("task-set mismatch")
    shape = specialists[0].shape
    if any(s.shape != shape for s in specialists):
        raise ValueError("shape mismatch")

    weights = w.as_array()
    source = np.tensordot(weights, np.stack([s.source for s in specialists]), axes=1)
    edges = np.tensordot(weights, np.stack([s.edges for s in specialists]), axes=1)
    return FusedPheromone(source, edges)


@dataclass(frozen=True)
class SpecialistSnapshot:
    """Immutable set of specialists, one per task, with a publication version."""

    tasks: TaskSet
    specialists: tuple[PheromoneSpecialist, ...]
    version: int = 0

    def __post_init__(self):
        if tuple(s.task for s in self.specialists) != self.tasks.tasks:
            raise ValueError("task-set mismatch")
        shape = self.specialists[0].shape
        if any(s.shape != shape for s in self.specialists):
            raise ValueError("shape mismatch")

    @classmethod
    def uniform(
        cls, tasks: TaskSet, num_layers: int, nodes_per_layer: int, value: float = 1.0
    ) -> "SpecialistSnapshot":
        return cls(
            tasks,
            tuple(
                PheromoneSpecialist.uniform(t, num_layers, nodes_per_layer, value).freeze()
                for t in tasks
            ),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.specialists[0].shape

    def specialist(self, task: str) -> PheromoneSpecialist:
        return self.specialists[self.tasks.index(task)]

    def fused(self, w: WeightVector) -> FusedPheromone:
        return fuse_pheromone(self.specialists, w)

    def working_copy(self) -> list[PheromoneSpecialist]:
        return [s.copy() for s in self.specialists]

    def matches(self, graph: LayeredGraph) -> bool:
        return self.tasks == graph.tasks and self.shape == (
            graph.num_layers,
            graph.nodes_per_layer,
        )

    def values_equal(self, other: "SpecialistSnapshot") -> bool:
        return self.tasks == other.tasks and all(
            a.values_equal(b) for a, b in zip(self.specialists, other.specialists, strict=True)
        )


class SnapshotStore:
    """Holds the current snapshot; publication swaps it atomically."""

    def __init__(self, snapshot: SpecialistSnapshot):
        self._lock = threading.Lock()
        self._snapshot = self._frozen(snapshot)

    @staticmethod
    def _frozen(snapshot: SpecialistSnapshot) -> SpecialistSnapshot:
        for specialist in snapshot.specialists:
            specialist.freeze()
        return snapshot

    @property
    def current(self) -> SpecialistSnapshot:
        return self._snapshot

    def publish(self, specialists: Sequence[PheromoneSpecialist]) -> SpecialistSnapshot:
        """Install new specialists as the next version."""
        with self._lock:
            snapshot = SpecialistSnapshot(
                self._snapshot.tasks,
                tuple(s.freeze() for s in specialists),
                self._snapshot.version + 1,
            )
            self._snapshot = snapshot
        logger.debug(f"Published pheromone snapshot version {snapshot.version}")
        return snapshot

    def reset(self, snapshot: SpecialistSnapshot):
        with self._lock:
            self._snapshot = self._frozen(snapshot)


def quantile_bounds(window: Sequence[float], q_low: float, q_high: float) -> tuple[float, float]:
    values = np.asarray(window, dtype=float)
    if values.size == 0:
        raise ValueError("empty window")
    if not 0.0 <= q_low < q_high <= 1.0:
        raise ValueError(f"need 0 <= q_low < q_high <= 1, got ({q_low}, {q_high})")
    lo, hi = np.quantile(values, [q_low, q_high])
    return float(lo), float(hi)


def scale_to_bounds(values: np.ndarray | float, lo: float, hi: float) -> np.ndarray:
    """Clip to [lo, hi] and rescale to [0, 1]; 0.5 when the bounds coincide."""
    values = np.asarray(values, dtype=float)
    if hi <= lo:
        return np.full_like(values, 0.5)
    return (np.clip(values, lo, hi) - lo) / (hi - lo)


def robust_normalize(window: Sequence[float], value: float, q_low: float, q_high: float) -> float:
    """Min-max normalize a value against the quantile-clipped range of a window."""
    lo, hi = quantile_bounds(window, q_low, q_high)
    return float(scale_to_bounds(value, lo, hi))


class NormalizationWindows:
    """Global sliding windows, one per heuristic signal."""

    def __init__(self, size: int = 256, q_low: float = 0.05, q_high: float = 0.95):
        self.q_low = q_low
        self.q_high = q_high
        self._lock = threading.Lock()
        self._windows: dict[str, deque[float]] = {s: deque(maxlen=size) for s in SIGNALS}

    def observe(self, signal: str, values: Iterable[float]):
        with self._lock:
            self._windows[signal].extend(float(v) for v in values)

    def values(self, signal: str) -> list[float]:
        with self._lock:
            return list(self._windows[signal])

    def bounds(self, signal: str) -> tuple[float, float]:
        return quantile_bounds(self.values(signal), self.q_low, self.q_high)

    def normalize(self, signal: str, value: float | np.ndarray) -> np.ndarray:
        lo, hi = self.bounds(signal)
        return scale_to_bounds(value, lo, hi)


def node_heuristic(
    profile: NodeProfile,
    telemetry: NodeTelemetry,
    task: str,
    params: SamplerParams,
    windows: NormalizationWindows,
) -> float:
    """Task-aware desirability of one node from ability, load and response time."""
    if task not in profile.ability:
        raise ValueError(f"unknown task: {task}")

    eta = 0.0
    if params.lambda_a > 0:
        eta += params.lambda_a * float(windows.normalize("ability", profile.ability[task]))
    if params.lambda_l > 0:
        inv_load = 1.0 / (telemetry.load + params.epsilon)
        eta += params.lambda_l * float(windows.normalize("inv_load", inv_load))
    if params.lambda_r > 0:
        inv_rt = 1.0 / (telemetry.response_time + params.epsilon)
        eta += params.lambda_r * float(windows.normalize("inv_rt", inv_rt))
    return eta


def fuse_heuristic(per_task: np.ndarray, w: WeightVector) -> np.ndarray:
    """Weight-average per-task heuristics; ``per_task`` has shape (tasks, nodes)."""
    per_task = np.asarray(per_task, dtype=float)
    if per_task.ndim != 2 or per_task.shape[0] != len(w):
        raise ValueError("task-set mismatch")
    return w.as_array() @ per_task


def layer_heuristic(
    graph: LayeredGraph,
    layer: int,
    w: WeightVector,
    params: SamplerParams,
    windows: NormalizationWindows,
) -> np.ndarray:
    """Fused heuristic for every slot of a layer, observing the live signals first."""
    _, load, response_time = graph.layer_signals(layer)
    inv_load = 1.0 / (load + params.epsilon)
    inv_rt = 1.0 / (response_time + params.epsilon)

    terms = np.zeros((graph.nodes_per_layer, len(graph.tasks)))
    if params.lambda_a > 0:
        terms += params.lambda_a * windows.normalize("ability", graph.ability_matrix(layer))
    if params.lambda_l > 0:
        windows.observe("inv_load", inv_load)
        terms += params.lambda_l * windows.normalize("inv_load", inv_load)[:, None]
    if params.lambda_r > 0:
        windows.observe("inv_rt", inv_rt)
        terms += params.lambda_r * windows.normalize("inv_rt", inv_rt)[:, None]
    return fuse_heuristic(terms.T, w)


@dataclass
class SamplerStats:
    """Counters for fallback events during sampling."""

    degenerate_heuristic: int = 0
    relaxed_filter: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, event: str):
        with self._lock:
            setattr(self, event, getattr(self, event) + 1)


def _power(values: np.ndarray, exponent: float) -> np.ndarray:
    # 0 ** 0 is taken as 1
    if exponent == 0:
        return np.ones_like(values)
    return np.power(values, exponent)


def transition_probs(
    tau_row: np.ndarray,
    eta: np.ndarray,
    allowed: set[int],
    alpha: float,
    beta: float,
    stats: SamplerStats | None = None,
) -> np.ndarray:
    """Proportional rule tau^alpha * eta^beta over allowed slots (1-based), 0 elsewhere."""
    if not allowed:
        raise RoutingError("no feasible successor")
    tau_row = np.asarray(tau_row, dtype=float)
    eta = np.asarray(eta, dtype=float)
    idx = np.array(sorted(allowed)) - 1

    weights = _power(tau_row[idx], alpha) * _power(eta[idx], beta)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0:
        logger.debug("Degenerate heuristic, falling back to pheromone-only weights")
        if stats is not None:
            stats.record("degenerate_heuristic")
        weights = _power(tau_row[idx], alpha)
        total = weights.sum()

    probs = np.zeros_like(tau_row)
    probs[idx] = weights / total
    return probs


def sample_next(
    probs: np.ndarray, allowed: set[int], gamma: float, rng: np.random.Generator
) -> int:
    """Draw a slot: uniform over allowed with probability gamma, else from probs."""
    if not allowed:
        raise RoutingError("no feasible successor")
    candidates = sorted(allowed)
    if len(candidates) == 1:
        return candidates[0]
    if gamma > 0 and rng.random() < gamma:
        return candidates[int(rng.integers(len(candidates)))]
    p = np.asarray(probs, dtype=float)[np.array(candidates) - 1]
    return candidates[int(rng.choice(len(candidates), p=p / p.sum()))]


class PathSampler:
    """Samples routes hop by hop against the graph's live telemetry."""

    def __init__(
        self,
        graph: LayeredGraph,
        params: SamplerParams,
        windows: NormalizationWindows | None = None,
    ):
        self.graph = graph
        self.params = params
        self.windows = windows or NormalizationWindows(
            params.window_size, params.q_low, params.q_high
        )
        if not self.windows.values("ability"):
            self.windows.observe("ability", graph.ability_values())
        self.stats = SamplerStats()

    def candidates(self, layer: int) -> set[int]:
        """Feasible slots of a layer, relaxing the load bound when nothing passes it."""
        allowed = self.graph.allowed_into(layer)
        if allowed:
            return allowed
        relaxed = self.graph.available_into(layer)
        if not relaxed:
            raise RoutingError(f"no feasible successor in layer {layer}")
        logger.debug(f"Load filter emptied layer {layer}, relaxing to available nodes")
        self.stats.record("relaxed_filter")
        return relaxed

    def distribution(
        self, pheromone: FusedPheromone, w: WeightVector, previous: NodeId | None
    ) -> tuple[np.ndarray, set[int]]:
        """Transition probabilities (before exploration mixing) into the next layer."""
        if previous is not None and previous.layer >= self.graph.num_layers:
            raise ValueError("no successor layer")
        layer = 1 if previous is None else previous.layer + 1
        allowed = self.candidates(layer)
        eta = layer_heuristic(self.graph, layer, w, self.params, self.windows)
        probs = transition_probs(
            pheromone.row(previous), eta, allowed, self.params.alpha, self.params.beta, self.stats
        )
        return probs, allowed

    def next_hop(
        self,
        pheromone: FusedPheromone,
        w: WeightVector,
        previous: NodeId | None,
        rng: np.random.Generator,
        gamma: float | None = None,
    ) -> NodeId:
        probs, allowed = self.distribution(pheromone, w, previous)
        slot = sample_next(probs, allowed, self.params.gamma if gamma is None else gamma, rng)
        return NodeId(1 if previous is None else previous.layer + 1, slot)

    def sample_path(
        self,
        pheromone: FusedPheromone,
        w: WeightVector,
        rng: np.random.Generator,
        gamma: float | None = None,
    ) -> RoutePath:
        nodes: list[NodeId] = []
        previous = None
        for _ in range(self.graph.num_layers):
            previous = self.next_hop(pheromone, w, previous, rng, gamma)
            nodes.append(previous)
        return RoutePath(tuple(nodes))

    def greedy_path(self, pheromone: FusedPheromone, w: WeightVector) -> RoutePath:
        """Most probable successor at every layer, lowest slot on ties."""
        nodes: list[NodeId] = []
        previous = None
        for layer in range(1, self.graph.num_layers + 1):
            probs, _ = self.distribution(pheromone, w, previous)
            previous = NodeId(layer, int(np.argmax(probs)) + 1)
            nodes.append(previous)
        return RoutePath(tuple(nodes))

    def path_probability(
        self,
        pheromone: FusedPheromone,
        w: WeightVector,
        path: RoutePath,
        gamma: float = 0.0,
    ) -> float:
        """Probability that one sampling pass yields exactly this path."""
        probability = 1.0
        previous = None
        for node in path:
            probs, allowed = self.distribution(pheromone, w, previous)
            if node.slot not in allowed:
                return 0.0
            probability *= (1.0 - gamma) * probs[node.slot - 1] + gamma / len(allowed)
            previous = node
        return float(probability)


def sample_path(
    graph: LayeredGraph,
    specialists: Sequence[PheromoneSpecialist],
    w: WeightVector,
    params: SamplerParams,
    rng: np.random.Generator,
) -> RoutePath:
    """Fuse once for the query, then sample every layer in order."""
    fused = fuse_pheromone(specialists, w, graph.tasks)
    return PathSampler(graph, params).sample_path(fused, w, rng)


class AmroRouteSession(IRouteSession):
    """One query's routing state: its weights and the pheromone fused from one snapshot."""

    def __init__(self, sampler: PathSampler, fused: FusedPheromone, w: WeightVector, version: int):
        self._sampler = sampler
        self._fused = fused
        self._w = w
        self.snapshot_version = version

    def next_hop(self, previous: NodeId | None, rng: np.random.Generator) -> NodeId:
        return self._sampler.next_hop(self._fused, self._w, previous, rng)


class AmroPolicy(IRoutingPolicy):
    """Learned routing over the current specialist snapshot."""

    name = "amro"

    def __init__(self, store: SnapshotStore, sampler: PathSampler):
        self.store = store
        self.sampler = sampler

    def start_route(self, w: WeightVector) -> AmroRouteSession:
        snapshot = self.store.current
        return AmroRouteSession(self.sampler, snapshot.fused(w), w, snapshot.version)
