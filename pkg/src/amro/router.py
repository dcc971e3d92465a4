"""
Intent routers mapping queries to task-mixture weight vectors, and KL-based evaluation.
"""

import logging
import math
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .base import BaseIntentRouter
from .errors import ConfigError, DataError, InfiniteDivergenceError
from .interfaces import IIntentRouter, RouterSample, TaskSet, WeightVector

logger = logging.getLogger(__name__)

DEFAULT_KEYWORDS: dict[str, list[str]] = {
    "math": ["prove", "solve", "equation", "integral", "probability"],
    "code": ["python function", "debug", "compile", "algorithm", "unit test"],
    "general": ["explain", "summarize", "recommend", "capital", "history"],
}


def default_keywords(tasks: TaskSet) -> dict[str, list[str]]:
    """Built-in keyword lists; unknown tasks match their own name."""
    return {task: list(DEFAULT_KEYWORDS.get(task, [task])) for task in tasks}


class TableRouter(BaseIntentRouter):
    """Exact query lookup against an annotated table."""

    def __init__(
        self,
        tasks: TaskSet,
        table: Mapping[str, WeightVector],
        count_overhead: bool = False,
    ):
        super().__init__(tasks, count_overhead)
        for query, weights in table.items():
            if len(weights) != len(tasks):
                raise ConfigError(f"table entry {query!r} does not cover {len(tasks)} tasks")
        self._table = {self._key(q): w for q, w in table.items()}

    @classmethod
    def from_samples(cls, tasks: TaskSet, samples: Iterable[RouterSample]) -> "TableRouter":
        return cls(tasks, {s.query: s.target for s in samples})

    @staticmethod
    def _key(query: str) -> str:
        return " ".join(query.split())

    def _score(self, query: str) -> Sequence[float] | None:
        entry = self._table.get(self._key(query))
        return None if entry is None else entry.weights


class KeywordRouter(BaseIntentRouter):
    """Weights proportional to per-task keyword hit counts.

    Keywords match case-insensitively on word boundaries; multi-word
    keywords match as phrases.
    """

    def __init__(
        self,
        tasks: TaskSet,
        keywords: Mapping[str, Sequence[str]],
        count_overhead: bool = False,
    ):
        super().__init__(tasks, count_overhead)
        unknown = set(keywords) - set(tasks)
        if unknown:
            raise ConfigError(f"keywords given for unknown tasks: {sorted(unknown)}")
        self._patterns = [
            [
                re.compile(r"\b" + r"\s+".join(map(re.escape, kw.lower().split())) + r"\b")
                for kw in keywords.get(task, [])
                if kw.strip()
            ]
            for task in tasks
        ]

    def keyword_hits(self, query: str) -> list[int]:
        text = query.lower()
        return [sum(len(p.findall(text)) for p in patterns) for patterns in self._patterns]

    def _score(self, query: str) -> Sequence[float] | None:
        hits = self.keyword_hits(query)
        return hits if sum(hits) > 0 else None


def kl_divergence(target: WeightVector, predicted: WeightVector) -> float:
    """KL(target || predicted) in nats, with 0 ln(0/x) = 0."""
    if len(target) != len(predicted):
        raise ValueError("task-set mismatch")

    t = target.as_array()
    p = predicted.as_array()
    support = t > 0
    if np.any(p[support] == 0):
        raise InfiniteDivergenceError("infinite divergence")
    value = float(np.sum(t[support] * np.log(t[support] / p[support])))
    return max(value, 0.0)


@dataclass
class RouterEvaluation:
    """Aggregate router quality over a labeled dataset."""

    mean_kl: float
    top1_accuracy: float
    per_task_accuracy: dict[str, float] = field(default_factory=dict)
    samples: int = 0
    infinite_count: int = 0

    def to_dict(self) -> dict[str, object]:
        return {
            "mean_kl": self.mean_kl if math.isfinite(self.mean_kl) else "inf",
            "top1_accuracy": self.top1_accuracy,
            "per_task_accuracy": dict(self.per_task_accuracy),
            "samples": self.samples,
            "infinite_count": self.infinite_count,
        }


def evaluate_router(router: IIntentRouter, dataset: Sequence[RouterSample]) -> RouterEvaluation:
    """Mean KL (finite samples only) and top-1 accuracy, also broken down per target task."""
    if not dataset:
        raise DataError("empty dataset")

    tasks = router.tasks
    divergences = []
    infinite = 0
    correct = 0
    per_task_total = dict.fromkeys(tasks, 0)
    per_task_correct = dict.fromkeys(tasks, 0)

    for sample in dataset:
        predicted = router.infer_weights(sample.query)
        try:
            divergences.append(kl_divergence(sample.target, predicted))
        except InfiniteDivergenceError:
            infinite += 1

        target_task = tasks.tasks[sample.target.argmax()]
        hit = predicted.argmax() == sample.target.argmax()
        correct += int(hit)
        per_task_total[target_task] += 1
        per_task_correct[target_task] += int(hit)

    if infinite:
        logger.warning(f"{infinite} samples had infinite divergence and were excluded from mean KL")

    mean_kl = math.fsum(divergences) / len(divergences) if divergences else math.inf
    return RouterEvaluation(
        mean_kl=mean_kl,
        top1_accuracy=correct / len(dataset),
        per_task_accuracy={
            task: per_task_correct[task] / per_task_total[task]
            for task in tasks
            if per_task_total[task]
        },
        samples=len(dataset),
        infinite_count=infinite,
    )
