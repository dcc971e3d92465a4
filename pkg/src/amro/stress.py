"""
Concurrency stress harness.

Two drivers run the same fixed workload at several worker counts: a
discrete-event driver on a virtual clock (deterministic) and a threaded
driver that sleeps scaled latencies on real worker threads.
"""

import heapq
import itertools
import logging
import math
import threading
import time
from abc import ABC, abstractmethod
from collections import deque
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .executor import QueryState, ServeResult, ServingExecutor
from .interfaces import RoutePath, WeightVector
from .simulation import WorkloadQuery, WorkloadSpec

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = (20, 50, 100, 200, 500, 1000)
STRESS_MODES = ("virtual", "threaded")


def query_rng(seed: int, index: int) -> np.random.Generator:
    """Per-query random stream, independent of scheduling order."""
    return np.random.default_rng([seed, index])


@dataclass
class LevelRun:
    wall_time: float
    results: list[ServeResult]


class StressDriver(ABC):
    """Runs a workload against one executor with a fixed number of workers.

    ``evolution_mode`` is the bypass evolver mode the driver can host.
    """

    evolution_mode = "inline"

    def __init__(self, seed: int):
        self.seed = seed

    @abstractmethod
    def run(
        self,
        executor: ServingExecutor,
        workload: Sequence[WorkloadQuery],
        workers: int,
        spec: WorkloadSpec,
    ) -> LevelRun:
        """Serve the whole workload and report wall time and per-query results."""
        pass


@dataclass
class _InFlight:
    item: WorkloadQuery
    state: QueryState
    rng: np.random.Generator
    started: float


class VirtualTimeDriver(StressDriver):
    """Discrete-event simulation: stage completions are events on a virtual clock."""

    def run(
        self,
        executor: ServingExecutor,
        workload: Sequence[WorkloadQuery],
        workers: int,
        spec: WorkloadSpec,
    ) -> LevelRun:
        events: list[tuple[float, int, str, Any]] = []
        sequence = itertools.count()
        results: list[ServeResult | None] = [None] * len(workload)
        positions = {item.index: position for position, item in enumerate(workload)}
        pending = deque(workload)
        waiting: deque[WorkloadQuery] = deque()
        active = 0
        clock = 0.0

        def push(when: float, kind: str, payload: Any):
            heapq.heappush(events, (when, next(sequence), kind, payload))

        def dispatch(now: float, flight: _InFlight):
            node, load, outcome = executor.dispatch_next(flight.state, flight.rng)
            push(now + outcome.latency, "stage", (flight, node, load, outcome))

        def start(now: float, item: WorkloadQuery):
            nonlocal active
            active += 1
            rng = query_rng(self.seed, item.index)
            flight = _InFlight(item, executor.begin(item.query), rng, now)
            dispatch(now, flight)

        if spec.arrival == "closed":
            for worker in range(min(workers, len(workload))):
                push(spec.ramp_up * worker / workers, "worker", None)
        else:
            for item in workload:
                push(item.arrival_time, "arrival", item)

        while events:
            now, _, kind, payload = heapq.heappop(events)
            if kind == "worker":
                if pending:
                    start(now, pending.popleft())
            elif kind == "arrival":
                if active < workers:
                    start(now, payload)
                else:
                    waiting.append(payload)
            else:
                flight, node, load, outcome = payload
                executor.complete_stage(flight.state, node, load, outcome)
                if not executor.is_done(flight.state):
                    dispatch(now, flight)
                    continue
                results[positions[flight.item.index]] = executor.finish(
                    flight.state, flight.rng, now - flight.started
                )
                active -= 1
                clock = now
                if spec.arrival == "closed":
                    if pending:
                        start(now, pending.popleft())
                elif waiting:
                    start(now, waiting.popleft())

        return LevelRun(clock, _collect(results))


class ThreadedDriver(StressDriver):
    """Closed-loop worker threads sleeping ``latency * time_scale`` per stage."""

    evolution_mode = "async"

    def __init__(self, seed: int, time_scale: float = 0.01):
        super().__init__(seed)
        if time_scale < 0:
            raise ValueError("time_scale must be nonnegative")
        self.time_scale = time_scale

    def run(
        self,
        executor: ServingExecutor,
        workload: Sequence[WorkloadQuery],
        workers: int,
        spec: WorkloadSpec,
    ) -> LevelRun:
        evolver = executor.evolver
        if evolver is not None and evolver.mode != self.evolution_mode:
            raise ValueError(
                f"threaded runs need an {self.evolution_mode} evolver, got {evolver.mode}"
            )
        results: list[ServeResult | None] = [None] * len(workload)
        lock = threading.Lock()
        cursor = iter(range(len(workload)))

        def pause(seconds: float):
            time.sleep(seconds * self.time_scale)

        def worker_loop(worker: int):
            pause(spec.ramp_up * worker / workers)
            while True:
                with lock:
                    position = next(cursor, None)
                if position is None:
                    return
                item = workload[position]
                results[position] = executor.serve(
                    item.query, query_rng(self.seed, item.index), pause
                )

        started = time.perf_counter()
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="amro-worker") as pool:
            futures = [pool.submit(worker_loop, i) for i in range(workers)]
            for future in as_completed(futures):
                future.result()
        wall_time = (time.perf_counter() - started) / self.time_scale if self.time_scale else 0.0
        return LevelRun(wall_time, _collect(results))


def _collect(results: list[ServeResult | None]) -> list[ServeResult]:
    missing = [i for i, r in enumerate(results) if r is None]
    if missing:
        raise RuntimeError(f"{len(missing)} queries were never completed")
    return [r for r in results if r is not None]


@dataclass(frozen=True)
class StressRow:
    system: str
    workers: int
    time_s: float
    speedup: float
    routing_accuracy: float
    mean_quality: float
    queries: int


@dataclass
class StressReport:
    """Per-system, per-level stress results with provenance."""

    rows: list[StressRow] = field(default_factory=list)
    config_hash: str = ""
    seed: int = 0

    def for_system(self, system: str) -> list[StressRow]:
        return [r for r in self.rows if r.system == system]

    def systems(self) -> list[str]:
        return list(dict.fromkeys(r.system for r in self.rows))


def stress_run(
    levels: Sequence[int],
    workload: Sequence[WorkloadQuery],
    systems: Mapping[str, Callable[[], ServingExecutor]],
    optimal_path: Callable[[WeightVector], RoutePath],
    driver: StressDriver,
    spec: WorkloadSpec,
    config_hash: str = "",
) -> StressReport:
    """Run the same workload at every level for every system.

    ``systems`` maps a system name to a factory returning a freshly reset
    executor, so each level starts from identical state.
    """
    if not levels or any(level < 1 for level in levels):
        raise ValueError("levels must be positive worker counts")
    if list(levels) != sorted(levels):
        raise ValueError("levels must be sorted ascending")
    if not workload:
        raise ValueError("workload is empty")

    optimal_cache: dict[tuple[float, ...], RoutePath] = {}

    def is_optimal(item: WorkloadQuery, result: ServeResult) -> bool:
        key = item.target.weights
        if key not in optimal_cache:
            optimal_cache[key] = optimal_path(item.target)
        return result.path == optimal_cache[key]

    report = StressReport(config_hash=config_hash, seed=driver.seed)
    for system, make_executor in systems.items():
        baseline_time: float | None = None
        for workers in levels:
            executor = make_executor()
            try:
                run = driver.run(executor, workload, workers, spec)
            finally:
                if executor.evolver is not None:
                    executor.evolver.close()

            if baseline_time is None:
                baseline_time = run.wall_time
            speedup = baseline_time / run.wall_time if run.wall_time > 0 else 1.0
            mean_quality = math.fsum(r.quality for r in run.results) / len(run.results)
            optimal = sum(is_optimal(item, r) for item, r in zip(workload, run.results, strict=True))
            row = StressRow(
                system=system,
                workers=workers,
                time_s=run.wall_time,
                speedup=speedup,
                routing_accuracy=optimal / len(run.results),
                mean_quality=mean_quality,
                queries=len(run.results),
            )
            report.rows.append(row)
            logger.info(
                f"{system} x{workers}: {row.time_s:.2f}s, speedup {row.speedup:.2f}, "
                f"routing accuracy {row.routing_accuracy:.4f}, mean quality {row.mean_quality:.4f}"
            )
    return report
