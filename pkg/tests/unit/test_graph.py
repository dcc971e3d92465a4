"""
Unit tests for the layered graph and the feasibility filter.
"""

import numpy as np
import pytest

from amro.errors import ConfigError
from amro.graph import build_graph
from amro.interfaces import NodeId, RoutePath
from tests.helpers import make_graph


def graph_config(**overrides):
    config = {
        "num_layers": 3,
        "nodes_per_layer": 2,
        "tasks": ["math", "code"],
        "seed": 5,
    }
    config.update(overrides)
    return config


class TestBuildGraph:
    """Test graph construction from config mappings."""

    def test_dimensions(self):
        """A 3x2 graph has 6 nodes and 8 edges."""
        graph = build_graph(graph_config())

        assert len(graph.nodes()) == 6
        assert graph.num_edges == 8
        assert graph.path_count() == 8

    def test_generated_profiles_are_deterministic(self):
        """The same generator seed yields the same ability priors."""
        first = build_graph(graph_config())
        second = build_graph(graph_config())

        for node in first.nodes():
            assert first.profile(node).ability == second.profile(node).ability
            assert all(0.0 <= a <= 1.0 for a in first.profile(node).ability.values())

    def test_explicit_nodes(self):
        """Node entries provide backbone, policy and ability."""
        nodes = [
            {"layer": layer, "slot": slot, "backbone": "m", "ability": {"math": 0.3, "code": 0.9}}
            for layer in (1, 2)
            for slot in (1, 2)
        ]
        graph = build_graph(graph_config(num_layers=2, nodes=nodes))

        assert graph.profile(NodeId(2, 1)).backbone == "m"
        assert graph.profile(NodeId(2, 1)).policy == "default"
        assert graph.ability_matrix(1).tolist() == [[0.3, 0.9], [0.3, 0.9]]

    def test_single_layer_rejected(self):
        """At least two layers are required."""
        with pytest.raises(ConfigError, match="at least two layers"):
            build_graph(graph_config(num_layers=1))

    def test_missing_key(self):
        """Missing dimensions are reported by name."""
        config = graph_config()
        del config["tasks"]

        with pytest.raises(ConfigError, match="tasks"):
            build_graph(config)

    def test_no_profile_source(self):
        """Either nodes or a seed must be given."""
        config = graph_config()
        del config["seed"]

        with pytest.raises(ConfigError, match="either 'nodes'"):
            build_graph(config)

    def test_missing_node_profile(self):
        """Too few node entries is a dimension mismatch."""
        nodes = [{"layer": 1, "slot": 1, "ability": {"math": 0.5, "code": 0.5}}]

        with pytest.raises(ConfigError, match="dimension mismatch"):
            build_graph(graph_config(num_layers=2, nodes_per_layer=1, nodes=nodes))

    def test_duplicate_node(self):
        """Duplicate NodeIds are rejected."""
        entry = {"layer": 1, "slot": 1, "ability": {"math": 0.5, "code": 0.5}}

        with pytest.raises(ConfigError, match="duplicate NodeId"):
            build_graph(graph_config(num_layers=2, nodes_per_layer=1, nodes=[entry, entry]))

    def test_incomplete_ability(self):
        """Every node needs an ability for every task."""
        nodes = [
            {"layer": layer, "slot": 1, "ability": {"math": 0.5}} for layer in (1, 2)
        ]

        with pytest.raises(ConfigError, match="incomplete ability map"):
            build_graph(graph_config(num_layers=2, nodes_per_layer=1, nodes=nodes))

    def test_ability_out_of_range(self):
        """Ability priors must lie in [0, 1]."""
        nodes = [
            {"layer": layer, "slot": 1, "ability": {"math": 1.5, "code": 0.5}} for layer in (1, 2)
        ]

        with pytest.raises(ConfigError, match="outside"):
            build_graph(graph_config(num_layers=2, nodes_per_layer=1, nodes=nodes))

    def test_node_outside_grid(self):
        """A node beyond the declared dimensions is rejected."""
        nodes = [
            {"layer": 1, "slot": 1, "ability": {"math": 0.5, "code": 0.5}},
            {"layer": 2, "slot": 2, "ability": {"math": 0.5, "code": 0.5}},
        ]

        with pytest.raises(ConfigError, match="dimension mismatch"):
            build_graph(graph_config(num_layers=2, nodes_per_layer=1, nodes=nodes))


class TestFeasibility:
    """Test the load and availability filter."""

    def test_all_idle_nodes_allowed(self, graph):
        """Idle available nodes all pass."""
        assert graph.allowed(NodeId(1, 1)) == {1, 2}

    def test_overloaded_node_excluded(self, graph):
        """A node above theta_load is filtered out."""
        graph.update_telemetry(NodeId(2, 1), load=0.9)

        assert graph.allowed(NodeId(1, 2)) == {2}

    def test_load_at_threshold_allowed(self, graph):
        """The bound is inclusive."""
        graph.update_telemetry(NodeId(2, 1), load=0.8)

        assert graph.allowed(NodeId(1, 1)) == {1, 2}

    def test_unavailable_node_excluded(self, graph):
        """Unavailable nodes never pass, even when idle."""
        graph.update_telemetry(NodeId(2, 2), available=False)

        assert graph.allowed(NodeId(1, 1)) == {1}
        assert graph.available_into(2) == {1}

    def test_empty_result(self, graph):
        """Everything overloaded gives an empty set, not an error."""
        graph.update_telemetry(NodeId(2, 1), load=1.0)
        graph.update_telemetry(NodeId(2, 2), load=1.0)

        assert graph.allowed(NodeId(1, 1)) == set()
        assert graph.available_into(2) == {1, 2}

    def test_explicit_theta(self, graph):
        """A caller-supplied threshold overrides the graph default."""
        graph.update_telemetry(NodeId(2, 1), load=0.5)

        assert graph.allowed(NodeId(1, 1), theta_load=0.4) == {2}

    def test_monotone_in_theta(self):
        """Raising theta_load never shrinks the allowed set."""
        graph = make_graph(num_layers=2, nodes_per_layer=6)
        rng = np.random.default_rng(11)
        for slot in range(1, 7):
            graph.update_telemetry(NodeId(2, slot), load=float(rng.uniform(0.0, 1.5)))

        previous = set()
        for theta in np.linspace(0.0, 1.6, 33):
            allowed = graph.allowed(NodeId(1, 1), theta_load=float(theta))
            assert previous <= allowed <= set(range(1, 7))
            previous = allowed
        assert previous == set(range(1, 7))

    def test_unavailability_never_grows(self):
        """Marking nodes unavailable one at a time only removes slots."""
        graph = make_graph(num_layers=2, nodes_per_layer=6)
        graph.update_telemetry(NodeId(2, 4), load=0.95)

        previous = graph.allowed(NodeId(1, 1))
        for slot in (6, 4, 1, 3):
            graph.update_telemetry(NodeId(2, slot), available=False)
            allowed = graph.allowed(NodeId(1, 1))
            assert allowed <= previous
            assert slot not in allowed
            previous = allowed
        assert previous == {2, 5}

    def test_last_layer_has_no_successor(self, graph):
        """Asking for successors of the sink layer is an error."""
        with pytest.raises(ValueError, match="no successor layer"):
            graph.allowed(NodeId(3, 1))

    def test_unknown_node(self, graph):
        """Nodes outside the grid are rejected."""
        with pytest.raises(ConfigError, match="dimension mismatch"):
            graph.allowed(NodeId(1, 3))


class TestTelemetry:
    """Test telemetry updates."""

    def test_response_time_window_mean(self, graph):
        """Response time is the mean over the sliding window."""
        node = NodeId(1, 1)
        graph.update_telemetry(node, response_time=1.0)
        graph.update_telemetry(node, response_time=3.0)

        assert graph.telemetry(node).response_time == pytest.approx(2.0)

    def test_partial_update_keeps_other_fields(self, graph):
        """Fields not named in an update are unchanged."""
        node = NodeId(1, 1)
        graph.update_telemetry(node, load=0.3)
        graph.update_telemetry(node, available=False)

        record = graph.telemetry(node)
        assert record.load == 0.3
        assert record.available is False

    def test_negative_load_rejected(self, graph):
        """Loads must be nonnegative."""
        with pytest.raises(ValueError, match="load must be nonnegative"):
            graph.update_telemetry(NodeId(1, 1), load=-0.1)

    def test_reset(self, graph):
        """Reset returns nodes to idle and available."""
        node = NodeId(2, 2)
        graph.update_telemetry(node, load=0.9, response_time=4.0, available=False)
        graph.reset_telemetry()

        record = graph.telemetry(node)
        assert (record.available, record.load, record.response_time) == (True, 0.0, 0.0)

    def test_layer_signals(self, graph):
        """Signals come back as per-slot arrays."""
        graph.update_telemetry(NodeId(3, 2), load=0.25, available=False)

        available, load, response_time = graph.layer_signals(3)

        assert available.tolist() == [True, False]
        assert load.tolist() == [0.0, 0.25]
        assert response_time.tolist() == [0.0, 0.0]


class TestPaths:
    """Test path enumeration and validation."""

    def test_enumeration_is_lexicographic(self):
        """Paths come out in slot order."""
        graph = make_graph(num_layers=2, nodes_per_layer=2)

        slots = [path.slots for path in graph.enumerate_paths()]

        assert slots == [(1, 1), (1, 2), (2, 1), (2, 2)]

    def test_validate_path(self, graph):
        """Valid paths pass, short or misordered ones fail."""
        graph.validate_path(RoutePath.from_slots((1, 2, 1)))

        with pytest.raises(ValueError, match="3 layers"):
            graph.validate_path(RoutePath.from_slots((1, 2)))
        with pytest.raises(ValueError, match="not in layer"):
            graph.validate_path(RoutePath((NodeId(2, 1), NodeId(1, 1), NodeId(3, 1))))
        with pytest.raises(ValueError, match="no such slot"):
            graph.validate_path(RoutePath.from_slots((1, 3, 1)))
