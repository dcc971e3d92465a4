"""
Decomposed path cost and the quality/cost utility.
"""

import math
from collections.abc import Mapping
from dataclasses import dataclass, field

from .graph import LayeredGraph
from .interfaces import RouteTrace

LOAD_STATS = ("max", "mean")


@dataclass(frozen=True)
class CostWeights:
    """Per-component cost weights, the utility trade-off and the display price table."""

    omega_tok: float = 0.001
    omega_lat: float = 0.1
    omega_load: float = 0.1
    lam: float = 0.1
    load_stat: str = "max"
    price_table: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if min(self.omega_tok, self.omega_lat, self.omega_load) < 0:
            raise ValueError("cost weights must be nonnegative")
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive: {self.lam}")
        if self.load_stat not in LOAD_STATS:
            raise ValueError(f"load_stat must be one of {LOAD_STATS}: {self.load_stat}")
        if any(price < 0 for price in self.price_table.values()):
            raise ValueError("prices must be nonnegative")


@dataclass(frozen=True)
class CostBreakdown:
    tokens: int
    latency: float
    load_agg: float
    weighted_total: float

    def to_dict(self) -> dict[str, float]:
        return {
            "tokens": self.tokens,
            "latency": self.latency,
            "load_agg": self.load_agg,
            "weighted_total": self.weighted_total,
        }


def path_cost(
    trace: RouteTrace,
    weights: CostWeights,
    load_stat: str | None = None,
    num_layers: int | None = None,
) -> CostBreakdown:
    """Tokens (stages plus router overhead), end-to-end latency and aggregated load."""
    if not trace.stages or (num_layers is not None and len(trace.stages) != num_layers):
        raise ValueError("missing stage record")

    stat = load_stat or weights.load_stat
    if stat not in LOAD_STATS:
        raise ValueError(f"load_stat must be one of {LOAD_STATS}: {stat}")

    tokens = sum(s.tokens_in + s.tokens_out for s in trace.stages) + trace.router_tokens
    loads = [s.load_at_dispatch for s in trace.stages]
    load_agg = max(loads) if stat == "max" else math.fsum(loads) / len(loads)
    latency = trace.wall_time
    total = weights.omega_tok * tokens + weights.omega_lat * latency + weights.omega_load * load_agg
    return CostBreakdown(tokens, latency, load_agg, total)


def utility(quality: float, cost: CostBreakdown, lam: float) -> float:
    """Quality minus lambda-weighted cost."""
    return quality - lam * cost.weighted_total


def usd_cost(trace: RouteTrace, graph: LayeredGraph, price_table: Mapping[str, float]) -> float:
    """Display-only dollar cost from per-backbone prices per 1k tokens."""
    total = 0.0
    for stage in trace.stages:
        price = price_table.get(graph.profile(stage.node).backbone, 0.0)
        total += (stage.tokens_in + stage.tokens_out) / 1000.0 * price
    return total
