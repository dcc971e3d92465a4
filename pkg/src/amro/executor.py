"""
Per-query serving pipeline: intent inference, hop-by-hop routing and execution,
cost accounting and the hand-off to bypass evolution.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .cost import CostBreakdown, CostWeights, path_cost, usd_cost, utility
from .evolution import BypassEvolver
from .graph import LayeredGraph
from .interfaces import (
    ExecutionOutcome,
    IAgentBackend,
    IIntentRouter,
    IRouteSession,
    IRoutingPolicy,
    NodeId,
    RoutePath,
    RouteTrace,
    ServingRecord,
    StageRecord,
    WeightVector,
)

logger = logging.getLogger(__name__)


@dataclass
class QueryState:
    """A query in flight through the pipeline."""

    query: str
    w: WeightVector
    session: IRouteSession
    prompt_tokens: int
    router_tokens: int
    stages: list[StageRecord] = field(default_factory=list)

    @property
    def last_node(self) -> NodeId | None:
        return self.stages[-1].node if self.stages else None

    @property
    def next_tokens_in(self) -> int:
        previous_out = self.stages[-1].tokens_out if self.stages else 0
        return self.prompt_tokens + previous_out


@dataclass(frozen=True)
class ServeResult:
    query: str
    w: WeightVector
    path: RoutePath
    trace: RouteTrace
    quality: float
    cost: CostBreakdown
    utility: float
    usd: float
    admitted: bool = False

    def to_log(self) -> dict[str, object]:
        return {
            "query": self.query,
            "w": list(self.w.weights),
            "low_confidence": self.w.low_confidence,
            "path": list(self.path.slots),
            "quality": self.quality,
            "cost": self.cost.to_dict(),
            "utility": self.utility,
            "usd": self.usd,
        }


class ServingExecutor:
    """Serves queries against an agent backend with a pluggable routing policy.

    The pipeline is split into steps so that event-driven drivers can
    interleave stages of many queries; ``serve`` chains them synchronously.
    """

    def __init__(
        self,
        graph: LayeredGraph,
        router: IIntentRouter,
        policy: IRoutingPolicy,
        backend: IAgentBackend,
        weights: CostWeights,
        evolver: BypassEvolver | None = None,
    ):
        self.graph = graph
        self.router = router
        self.policy = policy
        self.backend = backend
        self.weights = weights
        self.evolver = evolver

    def begin(self, query: str) -> QueryState:
        """Infer the task mixture and open a routing session."""
        w = self.router.infer_weights(query)
        return QueryState(
            query=query,
            w=w,
            session=self.policy.start_route(w),
            prompt_tokens=len(query.split()),
            router_tokens=self.router.overhead_tokens(query),
        )

    def dispatch_next(
        self, state: QueryState, rng: np.random.Generator
    ) -> tuple[NodeId, float, ExecutionOutcome]:
        """Route the next hop against live telemetry, dispatch and execute it."""
        node = state.session.next_hop(state.last_node, rng)
        load = self.backend.dispatch(node)
        try:
            outcome = self.backend.execute(node, state.w, load, state.next_tokens_in, rng)
        except Exception:
            self.backend.complete(node, 0.0)
            raise
        return node, load, outcome

    def complete_stage(
        self, state: QueryState, node: NodeId, load: float, outcome: ExecutionOutcome
    ):
        self.backend.complete(node, outcome.latency)
        state.stages.append(
            StageRecord(
                node=node,
                tokens_in=outcome.tokens_in,
                tokens_out=outcome.tokens_out,
                latency=outcome.latency,
                load_at_dispatch=load,
                quality=outcome.quality,
            )
        )

    def is_done(self, state: QueryState) -> bool:
        return len(state.stages) >= self.graph.num_layers

    def finish(
        self, state: QueryState, rng: np.random.Generator, wall_time: float | None = None
    ) -> ServeResult:
        """Account the trace and offer it to the evolution buffer."""
        stages = tuple(state.stages)
        if wall_time is None:
            wall_time = math.fsum(s.latency for s in stages)
        trace = RouteTrace(stages, wall_time, state.router_tokens)
        cost = path_cost(trace, self.weights, num_layers=self.graph.num_layers)
        quality = trace.quality

        admitted = False
        if self.evolver is not None:
            record = ServingRecord(
                query=state.query,
                w=state.w,
                path=trace.path,
                output=f"simulated response via {trace.path}",
                trace=trace,
            )
            admitted = self.evolver.submit(record, rng)

        return ServeResult(
            query=state.query,
            w=state.w,
            path=trace.path,
            trace=trace,
            quality=quality,
            cost=cost,
            utility=utility(quality, cost, self.weights.lam),
            usd=usd_cost(trace, self.graph, self.weights.price_table),
            admitted=admitted,
        )

    def serve(
        self,
        query: str,
        rng: np.random.Generator,
        pause: Callable[[float], None] | None = None,
    ) -> ServeResult:
        """Serve one query end to end; ``pause`` is called with each stage latency."""
        state = self.begin(query)
        while not self.is_done(state):
            node, load, outcome = self.dispatch_next(state, rng)
            if pause is not None:
                try:
                    pause(outcome.latency)
                except BaseException:
                    self.backend.complete(node, outcome.latency)
                    raise
            self.complete_stage(state, node, load, outcome)
        return self.finish(state, rng)
