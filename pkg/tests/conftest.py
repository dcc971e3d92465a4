"""
Pytest configuration and fixtures for AMRO tests.
"""

import shutil
import tempfile
from pathlib import Path

import numpy as np
import pytest
import yaml

from amro.interfaces import TaskSet
from tests.helpers import make_graph


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests."""
    temp_dir = tempfile.mkdtemp()
    yield Path(temp_dir)
    shutil.rmtree(temp_dir)


@pytest.fixture(autouse=True)
def mock_environment(monkeypatch, temp_dir):
    """Run every test inside its own temporary directory with default logging."""
    monkeypatch.chdir(temp_dir)
    monkeypatch.delenv("AMRO_LOG", raising=False)


@pytest.fixture
def tasks():
    return TaskSet(("math", "code"))


@pytest.fixture
def graph():
    """3 layers x 2 nodes, two tasks, uniform ability."""
    return make_graph()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scenario_data():
    """Small scenario: slot 1 is best for math, slot 2 for code, slot 3 is slow."""
    nodes = []
    for layer in (1, 2, 3):
        nodes.append({"layer": layer, "slot": 1, "ability": {"math": 0.95, "code": 0.4}})
        nodes.append({"layer": layer, "slot": 2, "ability": {"math": 0.4, "code": 0.95}})
        nodes.append({"layer": layer, "slot": 3, "ability": {"math": 0.6, "code": 0.6}})
    return {
        "seed": 11,
        "graph": {"num_layers": 3, "nodes_per_layer": 3, "tasks": ["math", "code"], "nodes": nodes},
        "router": {"type": "keyword"},
        "agent_models": {
            "defaults": {"latency": {"mean": 1.0, "jitter": 0.1}, "tokens": {"mean": 50, "jitter": 5}},
            "nodes": [{"layer": layer, "slot": 3, "latency": {"mean": 3.0, "jitter": 0.1}} for layer in (1, 2, 3)],
        },
        "workload": {"count": 24, "mixed_fraction": 0.0},
        "cost": {"omega_tok": 0.001, "omega_lat": 0.1, "omega_load": 0.1, "lambda": 0.1},
        "sampler": {"alpha": 1.0, "beta": 1.0, "gamma": 0.05},
        "evolution": {"rho": 0.1, "Q": 1.0, "sampling_rate": 0.5, "batch_size": 4},
        "warmup": {"iterations": 40},
        "levels": [1, 2, 4],
    }


@pytest.fixture
def scenario_file(temp_dir, scenario_data):
    path = temp_dir / "scenario.yaml"
    with open(path, "w") as f:
        yaml.safe_dump(scenario_data, f)
    return path


@pytest.fixture
def cli_runner():
    """Click CLI test runner."""
    from click.testing import CliRunner

    return CliRunner()
