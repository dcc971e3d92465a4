"""
Base classes implementing common functionality (Template Method Pattern).
"""

import logging
from collections.abc import Sequence

from .interfaces import IIntentRouter, IQualityJudge, ServingRecord, TaskSet, WeightVector

logger = logging.getLogger(__name__)

# rounding slack for scores averaged from stage qualities
SCORE_TOLERANCE = 1e-9


class BaseIntentRouter(IIntentRouter):
    """Base router: subclasses score tasks, the base normalizes and handles fallback."""

    def __init__(self, tasks: TaskSet, count_overhead: bool = False):
        self._tasks = tasks
        self.count_overhead = count_overhead

    @property
    def tasks(self) -> TaskSet:
        return self._tasks

    def infer_weights(self, query: str) -> WeightVector:
        """Template method: score, then normalize or fall back to uniform."""
        scores = self._score(query)
        if scores is None or sum(scores) <= 0:
            logger.debug(f"Low-confidence routing for query: {query!r}")
            return WeightVector.uniform(len(self._tasks), low_confidence=True)

        if len(scores) != len(self._tasks):
            raise ValueError(
                f"router produced {len(scores)} scores for {len(self._tasks)} tasks"
            )
        return WeightVector.normalized(scores)

    def overhead_tokens(self, query: str) -> int:
        return len(query.split()) if self.count_overhead else 0

    def _score(self, query: str) -> Sequence[float] | None:
        """Nonnegative per-task scores, or None when the query is not recognized."""
        raise NotImplementedError("Subclasses must implement _score")


class BaseQualityJudge(IQualityJudge):
    """Base judge: subclasses score a record in [0, 1], the base thresholds it."""

    def __init__(self, threshold: float):
        if not 0.0 <= threshold <= 1.0:
            raise ValueError(f"judge threshold must lie in [0, 1]: {threshold}")
        self.threshold = threshold

    def judge(self, record: ServingRecord) -> int:
        score = self._score(record)
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"judge score out of range: {score}")
        return 1 if score >= self.threshold - SCORE_TOLERANCE else 0

    def _score(self, record: ServingRecord) -> float:
        """Quality score of a served record."""
        raise NotImplementedError("Subclasses must implement _score")
