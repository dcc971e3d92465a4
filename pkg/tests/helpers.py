"""
Builders shared by the test modules.
"""

from amro.graph import LayeredGraph, NodeProfile
from amro.interfaces import (
    NodeId,
    RoutePath,
    RouteTrace,
    ServingRecord,
    StageRecord,
    TaskSet,
    WeightVector,
)


def make_graph(
    num_layers: int = 3,
    nodes_per_layer: int = 2,
    tasks: tuple[str, ...] = ("math", "code"),
    ability: dict[NodeId, dict[str, float]] | None = None,
    theta_load: float = 0.8,
) -> LayeredGraph:
    """Graph with ability 0.5 everywhere unless overridden per node."""
    task_set = TaskSet(tasks)
    ability = ability or {}
    profiles = {}
    for layer in range(1, num_layers + 1):
        for slot in range(1, nodes_per_layer + 1):
            node = NodeId(layer, slot)
            profiles[node] = NodeProfile(
                id=node,
                backbone=f"model-{slot}",
                policy=f"stage-{layer}",
                ability=ability.get(node, dict.fromkeys(tasks, 0.5)),
            )
    return LayeredGraph(task_set, num_layers, nodes_per_layer, profiles, theta_load)


def make_trace(
    slots: tuple[int, ...],
    tokens: tuple[tuple[int, int], ...] | None = None,
    wall_time: float = 1.0,
    loads: tuple[float, ...] | None = None,
    quality: float = 1.0,
    router_tokens: int = 0,
) -> RouteTrace:
    path = RoutePath.from_slots(slots)
    tokens = tokens or tuple((10, 10) for _ in slots)
    loads = loads or tuple(0.0 for _ in slots)
    stages = tuple(
        StageRecord(node, t_in, t_out, wall_time / len(slots), load, quality)
        for node, (t_in, t_out), load in zip(path, tokens, loads, strict=True)
    )
    return RouteTrace(stages, wall_time, router_tokens)


def make_record(
    slots: tuple[int, ...], w: WeightVector, quality: float = 1.0, **trace_kwargs
) -> ServingRecord:
    trace = make_trace(slots, quality=quality, **trace_kwargs)
    return ServingRecord("query", w, trace.path, "output", trace)
