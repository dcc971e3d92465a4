"""
Layered routing topology, per-node telemetry and the feasibility filter.
"""

import itertools
import logging
import math
import threading
from collections import deque
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .errors import ConfigError
from .interfaces import NodeId, RoutePath, TaskSet

logger = logging.getLogger(__name__)

DEFAULT_THETA_LOAD = 0.8
RESPONSE_TIME_WINDOW = 50


@dataclass(frozen=True)
class NodeProfile:
    """Static description of an agent node: backbone, policy and per-task ability."""

    id: NodeId
    backbone: str
    policy: str
    ability: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class NodeTelemetry:
    """Live node state. Records are immutable and swapped whole on update."""

    available: bool = True
    load: float = 0.0
    response_time: float = 0.0


class LayeredGraph:
    """N layers of n agent nodes with complete bipartite edges between adjacent layers."""

    def __init__(
        self,
        tasks: TaskSet,
        num_layers: int,
        nodes_per_layer: int,
        profiles: Mapping[NodeId, NodeProfile],
        theta_load: float = DEFAULT_THETA_LOAD,
        response_time_window: int = RESPONSE_TIME_WINDOW,
    ):
        if num_layers < 2:
            raise ConfigError("at least two layers required")
        if nodes_per_layer < 1:
            raise ConfigError("at least one node per layer required")
        if theta_load < 0:
            raise ConfigError(f"theta_load must be nonnegative: {theta_load}")

        self.tasks = tasks
        self.num_layers = num_layers
        self.nodes_per_layer = nodes_per_layer
        self.theta_load = theta_load
        self._profiles = dict(profiles)
        self._validate_profiles()

        self._window_size = response_time_window
        self._lock = threading.Lock()
        self._telemetry: dict[NodeId, NodeTelemetry] = {}
        self._rt_windows: dict[NodeId, deque[float]] = {}
        self.reset_telemetry()

        self._ability = np.zeros((num_layers, nodes_per_layer, len(tasks)))
        for node, profile in self._profiles.items():
            self._ability[node.layer - 1, node.slot - 1] = [profile.ability[t] for t in tasks]

    def _validate_profiles(self):
        expected = self.num_layers * self.nodes_per_layer
        if len(self._profiles) != expected:
            raise ConfigError(
                f"dimension mismatch: expected {expected} node profiles, got {len(self._profiles)}"
            )
        for node, profile in self._profiles.items():
            if node != profile.id:
                raise ConfigError(f"profile key {node} does not match profile id {profile.id}")
            self._check_node(node)
            missing = [t for t in self.tasks if t not in profile.ability]
            if missing:
                raise ConfigError(f"incomplete ability map for node {node}: missing {missing}")
            for task, score in profile.ability.items():
                if not 0.0 <= score <= 1.0:
                    raise ConfigError(f"ability of {node} for {task} outside [0, 1]: {score}")

    def _check_node(self, node: NodeId):
        if not (1 <= node.layer <= self.num_layers and 1 <= node.slot <= self.nodes_per_layer):
            raise ConfigError(
                f"dimension mismatch: {node} outside {self.num_layers}x{self.nodes_per_layer} graph"
            )

    @property
    def num_edges(self) -> int:
        return (self.num_layers - 1) * self.nodes_per_layer**2

    def nodes(self, layer: int | None = None) -> list[NodeId]:
        """All nodes, or the nodes of one layer, in slot order."""
        layers = range(1, self.num_layers + 1) if layer is None else [layer]
        return [NodeId(lay, slot) for lay in layers for slot in range(1, self.nodes_per_layer + 1)]

    def profile(self, node: NodeId) -> NodeProfile:
        return self._profiles[node]

    def telemetry(self, node: NodeId) -> NodeTelemetry:
        return self._telemetry[node]

    def ability_matrix(self, layer: int) -> np.ndarray:
        """Ability priors of one layer, shape (nodes_per_layer, tasks)."""
        return self._ability[layer - 1]

    def ability_values(self) -> np.ndarray:
        return self._ability.ravel()

    def layer_signals(self, layer: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Availability, load and response time of one layer as arrays."""
        records = [self._telemetry[node] for node in self.nodes(layer)]
        available = np.array([r.available for r in records], dtype=bool)
        load = np.array([r.load for r in records], dtype=float)
        response_time = np.array([r.response_time for r in records], dtype=float)
        return available, load, response_time

    def allowed(self, from_node: NodeId, theta_load: float | None = None) -> set[int]:
        """Feasible successor slots of a node: available and load at most theta_load."""
        self._check_node(from_node)
        if from_node.layer >= self.num_layers:
            raise ValueError("no successor layer")
        return self.allowed_into(from_node.layer + 1, theta_load)

    def allowed_into(self, layer: int, theta_load: float | None = None) -> set[int]:
        """Feasible slots of a layer."""
        theta = self.theta_load if theta_load is None else theta_load
        allowed = set()
        for node in self.nodes(layer):
            record = self._telemetry[node]
            if record.available and record.load <= theta:
                allowed.add(node.slot)
        return allowed

    def available_into(self, layer: int) -> set[int]:
        """Available slots of a layer regardless of load."""
        return {node.slot for node in self.nodes(layer) if self._telemetry[node].available}

    def update_telemetry(
        self,
        node: NodeId,
        *,
        load: float | None = None,
        response_time: float | None = None,
        available: bool | None = None,
    ):
        """Overwrite telemetry fields; response time feeds a sliding-window mean."""
        self._check_node(node)
        if load is not None and (load < 0 or not math.isfinite(load)):
            raise ValueError(f"load must be nonnegative: {load}")
        if response_time is not None and (response_time < 0 or not math.isfinite(response_time)):
            raise ValueError(f"response_time must be nonnegative: {response_time}")

        with self._lock:
            record = self._telemetry[node]
            changes: dict[str, Any] = {}
            if load is not None:
                changes["load"] = float(load)
            if available is not None:
                changes["available"] = bool(available)
            if response_time is not None:
                window = self._rt_windows[node]
                window.append(float(response_time))
                changes["response_time"] = math.fsum(window) / len(window)
            self._telemetry[node] = replace(record, **changes)

    def reset_telemetry(self):
        """Return every node to available, idle, zero response time."""
        with self._lock:
            self._telemetry = {node: NodeTelemetry() for node in self.nodes()}
            self._rt_windows = {node: deque(maxlen=self._window_size) for node in self.nodes()}

    def validate_path(self, path: RoutePath):
        """Raise ValueError unless the path visits exactly one node per layer in order."""
        if len(path) != self.num_layers:
            raise ValueError(f"path has {len(path)} nodes, graph has {self.num_layers} layers")
        for layer, node in enumerate(path, start=1):
            if node.layer != layer:
                raise ValueError(f"path node {node} is not in layer {layer}")
            if not 1 <= node.slot <= self.nodes_per_layer:
                raise ValueError(f"path node {node} has no such slot")

    def enumerate_paths(self) -> Iterator[RoutePath]:
        """Every path, in lexicographic slot order."""
        slots = range(1, self.nodes_per_layer + 1)
        for combo in itertools.product(slots, repeat=self.num_layers):
            yield RoutePath.from_slots(combo)

    def path_count(self) -> int:
        return int(self.nodes_per_layer**self.num_layers)


def build_graph(config: Mapping[str, Any]) -> LayeredGraph:
    """Build and validate a graph from a graph config mapping.

    Node profiles come from ``nodes``; when absent, ``seed`` generates them.
    """
    try:
        num_layers = int(config["num_layers"])
        nodes_per_layer = int(config["nodes_per_layer"])
        tasks = TaskSet(tuple(config["tasks"]))
    except KeyError as e:
        raise ConfigError(f"graph config missing key: {e.args[0]}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid graph config: {e}") from e

    if num_layers < 2:
        raise ConfigError("at least two layers required")

    theta_load = float(config.get("theta_load", DEFAULT_THETA_LOAD))
    window = int(config.get("response_time_window", RESPONSE_TIME_WINDOW))

    if "nodes" in config:
        profiles = _parse_profiles(config["nodes"])
    elif "seed" in config:
        profiles = _generate_profiles(num_layers, nodes_per_layer, tasks, int(config["seed"]))
    else:
        raise ConfigError("graph config needs either 'nodes' or a generator 'seed'")

    graph = LayeredGraph(tasks, num_layers, nodes_per_layer, profiles, theta_load, window)
    logger.debug(
        f"Built {num_layers}x{nodes_per_layer} graph with {graph.num_edges} edges "
        f"over tasks {list(tasks)}"
    )
    return graph


def _parse_profiles(entries: Any) -> dict[NodeId, NodeProfile]:
    profiles: dict[NodeId, NodeProfile] = {}
    for entry in entries:
        try:
            node = NodeId(int(entry["layer"]), int(entry["slot"]))
            ability = {str(t): float(s) for t, s in dict(entry.get("ability", {})).items()}
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid node entry {entry!r}: {e}") from e
        if node in profiles:
            raise ConfigError(f"duplicate NodeId {node}")
        profiles[node] = NodeProfile(
            id=node,
            backbone=str(entry.get("backbone", "unknown")),
            policy=str(entry.get("policy", "default")),
            ability=ability,
        )
    return profiles


def _generate_profiles(
    num_layers: int, nodes_per_layer: int, tasks: TaskSet, seed: int
) -> dict[NodeId, NodeProfile]:
    rng = np.random.default_rng(seed)
    profiles = {}
    for layer in range(1, num_layers + 1):
        for slot in range(1, nodes_per_layer + 1):
            node = NodeId(layer, slot)
            scores = np.round(rng.uniform(0.2, 1.0, size=len(tasks)), 3)
            profiles[node] = NodeProfile(
                id=node,
                backbone=f"model-{slot}",
                policy=f"stage-{layer}",
                ability={t: float(s) for t, s in zip(tasks, scores, strict=True)},
            )
    return profiles
