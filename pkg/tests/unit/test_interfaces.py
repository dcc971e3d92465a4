"""
Unit tests for AMRO domain types and interfaces.
"""

import numpy as np
import pytest

from amro.interfaces import (
    IRouteSession,
    IRoutingPolicy,
    LabeledOutcome,
    NodeId,
    RoutePath,
    RouteTrace,
    StageRecord,
    TaskSet,
    WeightVector,
)

from tests.helpers import make_trace


class TestNodeAndPath:
    """Test node addresses and paths."""

    def test_node_str_and_order(self):
        """Nodes print compactly and sort by layer then slot."""
        assert str(NodeId(1, 2)) == "L1S2"
        assert sorted([NodeId(2, 1), NodeId(1, 3), NodeId(1, 1)]) == [
            NodeId(1, 1),
            NodeId(1, 3),
            NodeId(2, 1),
        ]

    def test_path_from_slots(self):
        """Slot lists map to one node per layer."""
        path = RoutePath.from_slots([1, 2, 1])

        assert path.nodes == (NodeId(1, 1), NodeId(2, 2), NodeId(3, 1))
        assert path.slots == (1, 2, 1)
        assert str(path) == "1-2-1"
        assert len(path) == 3

    def test_path_edges(self):
        """Edges are consecutive node pairs."""
        path = RoutePath.from_slots([1, 2, 1])

        assert path.edges() == [(NodeId(1, 1), NodeId(2, 2)), (NodeId(2, 2), NodeId(3, 1))]


class TestTaskSet:
    """Test ordered task sets."""

    def test_index_and_membership(self):
        """Tasks are indexed by position."""
        tasks = TaskSet(("math", "code"))

        assert tasks.index("code") == 1
        assert "math" in tasks
        assert list(tasks) == ["math", "code"]

    def test_unknown_task(self):
        """Indexing an unknown task fails."""
        with pytest.raises(ValueError, match="unknown task: art"):
            TaskSet(("math",)).index("art")

    @pytest.mark.parametrize("tasks", [(), ("math", "math")])
    def test_invalid_sets(self, tasks):
        """Task sets are nonempty and unique."""
        with pytest.raises(ValueError):
            TaskSet(tasks)

    def test_mix(self):
        """Weights pair with task names in order."""
        tasks = TaskSet(("math", "code"))

        assert tasks.mix(WeightVector((0.25, 0.75))) == {"math": 0.25, "code": 0.75}

        with pytest.raises(ValueError, match="task-set mismatch"):
            tasks.mix(WeightVector.uniform(3))


class TestWeightVector:
    """Test task-mixture weight vectors."""

    def test_renormalizes_within_tolerance(self):
        """Sums within tolerance are renormalized to exactly 1."""
        w = WeightVector((0.5, 0.5 + 1e-12))

        assert sum(w.weights) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("weights", [(0.5, 0.6), (-0.5, 1.5), (), (float("nan"), 1.0)])
    def test_invalid(self, weights):
        """Weights are nonempty, finite, nonnegative and sum to 1."""
        with pytest.raises(ValueError):
            WeightVector(weights)

    def test_constructors(self):
        """Normalized, uniform and one-hot constructors."""
        assert WeightVector.normalized([2, 6]).weights == (0.25, 0.75)
        assert WeightVector.uniform(4, low_confidence=True).low_confidence is True
        assert WeightVector.one_hot(3, 2).weights == (0.0, 0.0, 1.0)

    def test_normalized_needs_mass(self):
        """All-zero scores cannot be normalized."""
        with pytest.raises(ValueError, match="positive finite sum"):
            WeightVector.normalized([0, 0])

    def test_argmax_ties_lowest(self):
        """Ties resolve to the lowest index."""
        assert WeightVector.uniform(3).argmax() == 0
        assert WeightVector((0.2, 0.8)).argmax() == 1


class TestRecords:
    """Test telemetry records."""

    def test_trace_path_and_quality(self):
        """Traces expose their path and mean stage quality."""
        trace = RouteTrace(
            (
                StageRecord(NodeId(1, 1), 1, 2, 0.5, 0.0, quality=1.0),
                StageRecord(NodeId(2, 2), 1, 2, 0.5, 0.0, quality=0.0),
            ),
            wall_time=1.0,
        )

        assert trace.path.slots == (1, 2)
        assert trace.quality == pytest.approx(0.5)

    def test_empty_trace_quality(self):
        """A trace with no stages has zero quality."""
        assert RouteTrace((), 0.0).quality == 0.0

    def test_negative_tokens(self):
        """Token counts are nonnegative."""
        with pytest.raises(ValueError, match="token counts"):
            StageRecord(NodeId(1, 1), -1, 0, 0.0, 0.0)

    def test_labeled_outcome_range(self):
        """Graded success lies in [0, 1]."""
        trace = make_trace((1, 1))

        with pytest.raises(ValueError, match="success must lie"):
            LabeledOutcome("q", "math", trace.path, 1.5, trace)


class TestRoutingPolicy:
    """Test the default select_path of routing policies."""

    class FixedSession(IRouteSession):
        """Always picks slot 2."""

        def next_hop(self, previous, rng):
            layer = 1 if previous is None else previous.layer + 1
            return NodeId(layer, 2)

    class FixedPolicy(IRoutingPolicy):
        """Policy opening fixed sessions."""

        def start_route(self, w):
            return TestRoutingPolicy.FixedSession()

    def test_select_path_walks_layers(self):
        """select_path asks the session for one hop per layer."""
        path = self.FixedPolicy().select_path(WeightVector.uniform(2), np.random.default_rng(0), 3)

        assert path.slots == (2, 2, 2)
