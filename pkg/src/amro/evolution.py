"""
Offline warm-up and online quality-gated bypass evolution of pheromone specialists.
"""

import logging
import math
import threading
from abc import ABC, abstractmethod
from collections import deque
from collections.abc import Sequence
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .base import BaseQualityJudge
from .cost import CostBreakdown, CostWeights, path_cost
from .errors import DataError
from .graph import LayeredGraph
from .interfaces import (
    IQualityJudge,
    LabeledOutcome,
    RoutePath,
    RouteTrace,
    ServingRecord,
    StageRecord,
    WeightVector,
)
from .pheromone import (
    PathSampler,
    PheromoneSpecialist,
    SamplerParams,
    SnapshotStore,
    SpecialistSnapshot,
)

logger = logging.getLogger(__name__)

F_FLOOR = 0.01
FITNESS_WINDOW = 20
EVAPORATION_MODES = ("path", "global")
EVOLUTION_MODES = ("inline", "async")


@dataclass(frozen=True)
class EvolutionParams:
    """Evaporation, deposit and buffering parameters."""

    rho: float = 0.1
    q: float = 1.0
    epsilon: float = 1e-6
    sampling_rate: float = 0.1
    batch_size: int = 32
    online_evaporation: str = "path"
    elite_weight: float = 1.0
    elite_min_visits: int = 5

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1): {self.rho}")
        if self.q <= 0:
            raise ValueError(f"Q must be positive: {self.q}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative: {self.epsilon}")
        if not 0.0 <= self.sampling_rate <= 1.0:
            raise ValueError(f"sampling_rate must lie in [0, 1]: {self.sampling_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive: {self.batch_size}")
        if self.online_evaporation not in EVAPORATION_MODES:
            raise ValueError(f"online_evaporation must be one of {EVAPORATION_MODES}")
        if self.elite_weight < 0:
            raise ValueError(f"elite_weight must be nonnegative: {self.elite_weight}")
        if self.elite_min_visits < 1:
            raise ValueError(f"elite_min_visits must be positive: {self.elite_min_visits}")


def _path_index(path: RoutePath) -> tuple[int, list[tuple[int, int, int]]]:
    slots = [s - 1 for s in path.slots]
    edges = [(layer, slots[layer], slots[layer + 1]) for layer in range(len(slots) - 1)]
    return slots[0], edges


def _check_path(specialist: PheromoneSpecialist, path: RoutePath):
    if len(path) != specialist.num_layers or any(
        not 1 <= s <= specialist.nodes_per_layer for s in path.slots
    ):
        raise ValueError(f"path {path} does not fit a {specialist.shape} specialist")


# Offline warm-up


def offline_fitness(
    outcome: LabeledOutcome, cost: CostBreakdown, lam: float, cost_scale: float = 1.0
) -> float:
    """Task fitness from ground truth; smaller is better and always positive."""
    c_norm = cost.weighted_total / cost_scale if cost_scale > 0 else cost.weighted_total
    return (1.0 - outcome.success) + lam * c_norm + F_FLOOR


def offline_update(
    specialist: PheromoneSpecialist, path: RoutePath, fitness: float, params: EvolutionParams
):
    """Evaporate every edge, then deposit Q/(fitness+eps) on the path's edges."""
    if fitness <= 0:
        raise ValueError(f"fitness must be positive: {fitness}")
    _check_path(specialist, path)

    gain = params.q / (fitness + params.epsilon)
    specialist.source *= 1.0 - params.rho
    specialist.edges *= 1.0 - params.rho
    first, edges = _path_index(path)
    specialist.source[first] += gain
    for layer, i, j in edges:
        specialist.edges[layer, i, j] += gain
    specialist.apply_floor()


def elite_deposit(
    specialist: PheromoneSpecialist, path: RoutePath, fitness: float, params: EvolutionParams
):
    """Extra elite_weight * Q/(fitness+eps) on the elite path, without evaporation."""
    if fitness <= 0:
        raise ValueError(f"fitness must be positive: {fitness}")
    _check_path(specialist, path)

    gain = params.elite_weight * params.q / (fitness + params.epsilon)
    first, edges = _path_index(path)
    specialist.source[first] += gain
    for layer, i, j in edges:
        specialist.edges[layer, i, j] += gain
    specialist.apply_floor()


class FitnessTally:
    """Running mean fitness per sampled path of one task.

    The elite is the path with the lowest mean among those sampled at least
    ``min_visits`` times; ties go to the lexicographically first path.
    """

    def __init__(self, min_visits: int):
        if min_visits < 1:
            raise ValueError("min_visits must be positive")
        self.min_visits = min_visits
        self._sums: dict[tuple[int, ...], float] = {}
        self._counts: dict[tuple[int, ...], int] = {}

    def record(self, path: RoutePath, fitness: float):
        key = path.slots
        self._sums[key] = self._sums.get(key, 0.0) + fitness
        self._counts[key] = self._counts.get(key, 0) + 1

    def visits(self, path: RoutePath) -> int:
        return self._counts.get(path.slots, 0)

    def mean(self, path: RoutePath) -> float:
        count = self._counts.get(path.slots, 0)
        if count == 0:
            raise KeyError(f"path {path} was never sampled")
        return self._sums[path.slots] / count

    def elite(self) -> tuple[RoutePath, float] | None:
        eligible = [
            (self._sums[key] / count, key)
            for key, count in self._counts.items()
            if count >= self.min_visits
        ]
        if not eligible:
            return None
        mean, key = min(eligible)
        return RoutePath.from_slots(key), mean


class OutcomeOracle(ABC):
    """Source of graded outcomes for sampled warm-up paths."""

    @abstractmethod
    def has_data(self, task: str) -> bool:
        """Whether the oracle can grade paths for a task."""
        pass

    @abstractmethod
    def evaluate(self, task: str, path: RoutePath, rng: np.random.Generator) -> LabeledOutcome:
        """Grade one path for one task."""
        pass


class RecordedOutcomeOracle(OutcomeOracle):
    """Replays labeled outcomes; unseen paths score zero at the task's mean observed cost."""

    def __init__(self, outcomes: Sequence[LabeledOutcome]):
        self._by_task: dict[str, list[LabeledOutcome]] = {}
        self._by_path: dict[tuple[str, tuple[int, ...]], list[LabeledOutcome]] = {}
        for outcome in outcomes:
            self._by_task.setdefault(outcome.task, []).append(outcome)
            self._by_path.setdefault((outcome.task, outcome.path.slots), []).append(outcome)

    def has_data(self, task: str) -> bool:
        return bool(self._by_task.get(task))

    def evaluate(self, task: str, path: RoutePath, rng: np.random.Generator) -> LabeledOutcome:
        matches = self._by_path.get((task, path.slots))
        if matches:
            return matches[int(rng.integers(len(matches)))]
        return self._unseen(task, path)

    def _unseen(self, task: str, path: RoutePath) -> LabeledOutcome:
        records = self._by_task.get(task)
        if not records:
            raise DataError(f"empty dataset for task {task}")
        stages = []
        for position, node in enumerate(path):
            observed = [r.trace.stages[position] for r in records if len(r.trace.stages) > position]
            if not observed:
                stages.append(StageRecord(node, 0, 0, 0.0, 0.0, quality=0.0))
                continue
            stages.append(
                StageRecord(
                    node=node,
                    tokens_in=int(round(np.mean([s.tokens_in for s in observed]))),
                    tokens_out=int(round(np.mean([s.tokens_out for s in observed]))),
                    latency=float(np.mean([s.latency for s in observed])),
                    load_at_dispatch=0.0,
                    quality=0.0,
                )
            )
        wall_time = float(np.mean([r.trace.wall_time for r in records]))
        return LabeledOutcome("", task, path, 0.0, RouteTrace(tuple(stages), wall_time))


def calibrate_cost_scale(
    graph: LayeredGraph,
    oracle: OutcomeOracle,
    weights: CostWeights,
    rng: np.random.Generator,
    samples: int = 100,
) -> float:
    """Largest weighted cost over random paths; used to normalize warm-up cost."""
    tasks = [t for t in graph.tasks if oracle.has_data(t)]
    if not tasks:
        raise DataError("no task has warm-up data")
    worst = 0.0
    for i in range(samples):
        slots = rng.integers(1, graph.nodes_per_layer + 1, size=graph.num_layers)
        outcome = oracle.evaluate(tasks[i % len(tasks)], RoutePath.from_slots(slots), rng)
        worst = max(worst, path_cost(outcome.trace, weights).weighted_total)
    return worst if worst > 0 else 1.0


@dataclass(frozen=True)
class WarmupRow:
    iteration: int
    task: str
    mean_fitness: float
    modal_path_prob: float


@dataclass
class WarmupReport:
    """Per-iteration, per-task convergence metrics."""

    rows: list[WarmupRow] = field(default_factory=list)
    greedy_paths: dict[str, RoutePath] = field(default_factory=dict)
    cost_scale: float = 1.0

    def final(self, task: str) -> WarmupRow | None:
        rows = [r for r in self.rows if r.task == task]
        return rows[-1] if rows else None


def warmup(
    graph: LayeredGraph,
    specialists: Sequence[PheromoneSpecialist],
    oracle: OutcomeOracle,
    iterations: int,
    params: EvolutionParams,
    sampler_params: SamplerParams,
    rng: np.random.Generator,
    cost_weights: CostWeights | None = None,
    fitness_lambda: float | None = None,
    cost_scale: float | None = None,
) -> WarmupReport:
    """Train each task's specialist on its own, from one-hot routed samples.

    Only the specialist of the task being trained is modified.
    """
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    if tuple(s.task for s in specialists) != graph.tasks.tasks:
        raise ValueError("task-set mismatch")
    for task in graph.tasks:
        if not oracle.has_data(task):
            raise DataError(f"empty dataset for task {task}")

    weights = cost_weights or CostWeights()
    report = WarmupReport()
    if iterations == 0:
        return report

    task_rngs = rng.spawn(len(graph.tasks))
    if cost_scale is None:
        cost_scale = calibrate_cost_scale(graph, oracle, weights, rng)
    lam = weights.lam * cost_scale if fitness_lambda is None else fitness_lambda
    report.cost_scale = cost_scale

    k = len(graph.tasks)
    samplers = [PathSampler(graph, sampler_params) for _ in range(k)]
    recent: list[deque[float]] = [deque(maxlen=FITNESS_WINDOW) for _ in range(k)]
    tallies = [FitnessTally(params.elite_min_visits) for _ in range(k)]

    for iteration in range(1, iterations + 1):
        for t, task in enumerate(graph.tasks):
            specialist = specialists[t]
            w = WeightVector.one_hot(k, t)
            sampler = samplers[t]

            path = sampler.sample_path(specialist.as_fused(), w, task_rngs[t])
            outcome = oracle.evaluate(task, path, task_rngs[t])
            cost = path_cost(outcome.trace, weights)
            fitness = offline_fitness(outcome, cost, lam, cost_scale)
            offline_update(specialist, path, fitness, params)
            recent[t].append(fitness)
            tallies[t].record(path, fitness)

            elite = tallies[t].elite() if params.elite_weight > 0 else None
            if elite is not None:
                elite_deposit(specialist, elite[0], elite[1], params)

            fused = specialist.as_fused()
            greedy = sampler.greedy_path(fused, w)
            report.rows.append(
                WarmupRow(
                    iteration=iteration,
                    task=task,
                    mean_fitness=math.fsum(recent[t]) / len(recent[t]),
                    modal_path_prob=sampler.path_probability(fused, w, greedy, gamma=0.0),
                )
            )
            report.greedy_paths[task] = greedy

    for task in graph.tasks:
        row = report.final(task)
        if row is not None:
            logger.info(
                f"Warm-up {task}: greedy path {report.greedy_paths[task]}, "
                f"modal probability {row.modal_path_prob:.3f}"
            )
    return report


# Online bypass evolution


@dataclass
class EvolutionStats:
    """Counters for the online pipeline."""

    admitted: int = 0
    batches_triggered: int = 0
    batches_published: int = 0
    records_applied: int = 0
    gated_out: int = 0
    judge_incidents: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, counter: str, amount: int = 1):
        with self._lock:
            setattr(self, counter, getattr(self, counter) + amount)

    def to_dict(self) -> dict[str, int]:
        return {
            "admitted": self.admitted,
            "batches_triggered": self.batches_triggered,
            "batches_published": self.batches_published,
            "records_applied": self.records_applied,
            "gated_out": self.gated_out,
            "judge_incidents": self.judge_incidents,
        }


class EvolutionBuffer:
    """Bounded FIFO of sampled serving records."""

    def __init__(self, capacity: int, sampling_rate: float):
        if capacity < 1:
            raise ValueError("buffer capacity must be positive")
        if not 0.0 <= sampling_rate <= 1.0:
            raise ValueError(f"sampling_rate must lie in [0, 1]: {sampling_rate}")
        self.capacity = capacity
        self.sampling_rate = sampling_rate
        self._records: deque[ServingRecord] = deque(maxlen=capacity)
        self._lock = threading.Lock()

    def offer(self, record: ServingRecord):
        """Append a record, evicting the oldest when full."""
        with self._lock:
            self._records.append(record)

    def drain(self) -> list[ServingRecord]:
        with self._lock:
            records = list(self._records)
            self._records.clear()
        return records

    def records(self) -> list[ServingRecord]:
        with self._lock:
            return list(self._records)

    def is_full(self) -> bool:
        return len(self) >= self.capacity

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)


def enqueue_sample(
    buffer: EvolutionBuffer, record: ServingRecord, rng: np.random.Generator
) -> bool:
    """Admit a record with probability equal to the buffer's sampling rate."""
    admitted = bool(rng.random() < buffer.sampling_rate)
    if admitted:
        buffer.offer(record)
    return admitted


class ThresholdJudge(BaseQualityJudge):
    """Accepts records whose path quality reaches the threshold."""

    def __init__(self, threshold: float = 0.7):
        super().__init__(threshold)

    def _score(self, record: ServingRecord) -> float:
        return record.trace.quality


class AlwaysAcceptJudge(BaseQualityJudge):
    def __init__(self):
        super().__init__(0.0)

    def _score(self, record: ServingRecord) -> float:
        return 1.0


class AlwaysRejectJudge(BaseQualityJudge):
    def __init__(self):
        super().__init__(1.0)

    def _score(self, record: ServingRecord) -> float:
        return 0.0


def quality_gate(
    judge: IQualityJudge, record: ServingRecord, stats: EvolutionStats | None = None
) -> int:
    """Judge verdict in {0, 1}; any judge failure counts as a rejection."""
    try:
        verdict = judge.judge(record)
    except Exception as e:
        logger.warning(f"Quality judge failed, rejecting record: {e}")
        if stats is not None:
            stats.add("judge_incidents")
        return 0
    return 1 if verdict == 1 else 0


def system_fitness(
    trace: RouteTrace, weights: CostWeights, num_layers: int | None = None
) -> float:
    """Online fitness from measurable overhead only."""
    return path_cost(trace, weights, num_layers=num_layers).weighted_total + F_FLOOR


def reinforce_online(
    specialists: Sequence[PheromoneSpecialist],
    w: WeightVector,
    path: RoutePath,
    f_sys: float,
    params: EvolutionParams,
):
    """Apply one record to every specialist in proportion to the record's task weights."""
    if len(specialists) != len(w):
        raise ValueError("task-set mismatch")
    first, edges = _path_index(path)
    for specialist, weight in zip(specialists, w.weights, strict=True):
        _check_path(specialist, path)
        gain = weight * params.q / (f_sys + params.epsilon)
        if params.online_evaporation == "global":
            specialist.source *= 1.0 - params.rho
            specialist.edges *= 1.0 - params.rho
            specialist.source[first] += gain
            for layer, i, j in edges:
                specialist.edges[layer, i, j] += gain
        else:
            specialist.source[first] = (1.0 - params.rho) * specialist.source[first] + gain
            for layer, i, j in edges:
                specialist.edges[layer, i, j] = (1.0 - params.rho) * specialist.edges[
                    layer, i, j
                ] + gain
        specialist.apply_floor()


def online_update(
    store: SnapshotStore,
    batch: Sequence[ServingRecord],
    params: EvolutionParams,
    weights: CostWeights,
) -> SpecialistSnapshot | None:
    """Apply a gated batch to a working copy and publish it as the next snapshot.

    An empty batch publishes nothing.
    """
    if not batch:
        return None
    working = store.current.working_copy()
    num_layers = working[0].num_layers
    for record in batch:
        f_sys = system_fitness(record.trace, weights, num_layers)
        reinforce_online(working, record.w, record.path, f_sys, params)
    return store.publish(working)


class BypassEvolver:
    """Buffers sampled serving records and applies gated batches off the request path.

    ``inline`` runs a batch on the thread that filled the buffer; ``async``
    hands it to a single background worker. At most one batch is in flight.
    """

    def __init__(
        self,
        store: SnapshotStore,
        judge: IQualityJudge,
        params: EvolutionParams,
        weights: CostWeights,
        mode: str = "inline",
    ):
        if mode not in EVOLUTION_MODES:
            raise ValueError(f"evolution mode must be one of {EVOLUTION_MODES}: {mode}")
        self.store = store
        self.judge = judge
        self.params = params
        self.weights = weights
        self.mode = mode
        self.buffer = EvolutionBuffer(params.batch_size, params.sampling_rate)
        self.stats = EvolutionStats()
        self._lock = threading.Lock()
        self._pending: Future[None] | None = None
        self._executor = (
            ThreadPoolExecutor(max_workers=1, thread_name_prefix="amro-evolve")
            if mode == "async"
            else None
        )

    def submit(self, record: ServingRecord, rng: np.random.Generator) -> bool:
        """Serving-side touchpoint: maybe admit the record, trigger a batch when full."""
        admitted = enqueue_sample(self.buffer, record, rng)
        if admitted:
            self.stats.add("admitted")
            if self.buffer.is_full():
                self._trigger()
        return admitted

    def _trigger(self):
        with self._lock:
            if self._pending is not None and not self._pending.done():
                return
            batch = self.buffer.drain()
            if not batch:
                return
            self.stats.add("batches_triggered")
            if self._executor is None:
                self._run_batch(batch)
            else:
                self._pending = self._executor.submit(self._run_batch, batch)

    def _run_batch(self, batch: list[ServingRecord]):
        gated = [r for r in batch if quality_gate(self.judge, r, self.stats) == 1]
        self.stats.add("gated_out", len(batch) - len(gated))
        try:
            snapshot = online_update(self.store, gated, self.params, self.weights)
        except Exception:
            logger.exception("Online evolution batch failed; snapshot left unchanged")
            return
        if snapshot is not None:
            self.stats.add("batches_published")
            self.stats.add("records_applied", len(gated))

    def flush(self):
        """Wait for the in-flight batch, if any."""
        pending = self._pending
        if pending is not None:
            pending.result()

    def close(self):
        self.flush()
        if self._executor is not None:
            self._executor.shutdown(wait=True)

    def __enter__(self) -> "BypassEvolver":
        return self

    def __exit__(self, *exc_info):
        self.close()
