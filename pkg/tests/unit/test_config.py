"""
Unit tests for scenario configuration management.
"""

import json
from pathlib import Path
from unittest.mock import patch

import pytest
import yaml

from amro.config import ConfigDisplay, ConfigManager, read_mapping
from amro.errors import ConfigError
from amro.interfaces import TaskSet


class TestReadMapping:
    """Test reading configuration files."""

    def test_yaml(self, temp_dir):
        """YAML files load into a mapping."""
        path = temp_dir / "a.yaml"
        path.write_text("seed: 3\n")

        assert read_mapping(path) == {"seed": 3}

    def test_json(self, temp_dir):
        """JSON is chosen by suffix."""
        path = temp_dir / "a.json"
        path.write_text(json.dumps({"seed": 4}))

        assert read_mapping(path) == {"seed": 4}

    def test_toml(self, temp_dir):
        """TOML is chosen by suffix."""
        path = temp_dir / "a.toml"
        path.write_text("seed = 5\n")

        assert read_mapping(path) == {"seed": 5}

    def test_empty_file(self, temp_dir):
        """An empty file is an empty mapping."""
        path = temp_dir / "empty.yaml"
        path.write_text("")

        assert read_mapping(path) == {}

    def test_missing_file(self, temp_dir):
        """A missing file is a configuration error."""
        with pytest.raises(ConfigError, match="Configuration file not found"):
            read_mapping(temp_dir / "nope.yaml")

    def test_invalid_syntax(self, temp_dir):
        """Parse failures are configuration errors."""
        path = temp_dir / "bad.json"
        path.write_text("{not json")

        with pytest.raises(ConfigError, match="Invalid configuration file"):
            read_mapping(path)

    def test_not_a_mapping(self, temp_dir):
        """Top-level lists are rejected."""
        path = temp_dir / "list.yaml"
        path.write_text("- 1\n- 2\n")

        with pytest.raises(ConfigError, match="must contain a mapping"):
            read_mapping(path)


class TestConfigManager:
    """Test typed access to scenario sections."""

    def test_load(self, scenario_file):
        """Loading remembers the scenario path."""
        manager = ConfigManager.load(scenario_file)

        assert manager.config_path == scenario_file
        assert manager.get_seed() == 11

    def test_save_and_reload(self, temp_dir, scenario_data):
        """Saved scenarios reload unchanged."""
        path = temp_dir / "out" / "scenario.yaml"
        ConfigManager(scenario_data).save(path)

        assert ConfigManager.load(path).data == scenario_data

    def test_create_default(self):
        """The default scenario is complete and seeded."""
        manager = ConfigManager.create_default(seed=9)
        graph = manager.get_graph_config()

        assert manager.get_seed() == 9
        assert graph["tasks"] == ["math", "code", "general"]
        assert len(graph["nodes"]) == 12
        assert manager.get_levels() == [4, 8, 16, 32, 64]
        assert manager.get_evolution_mode() == "inline"

    def test_graph_config_from_file(self, temp_dir, scenario_data):
        """A graph_config path resolves relative to the scenario file."""
        (temp_dir / "graphs").mkdir()
        with open(temp_dir / "graphs" / "g.yaml", "w") as f:
            yaml.safe_dump(scenario_data["graph"], f)
        data = {"graph_config": "graphs/g.yaml", "theta_load": 0.6}
        path = temp_dir / "scenario.yaml"
        ConfigManager(data).save(path)

        graph = ConfigManager.load(path).get_graph_config()

        assert graph["num_layers"] == 3
        assert graph["theta_load"] == 0.6

    def test_missing_graph(self):
        """A scenario must describe its graph."""
        with pytest.raises(ConfigError, match="no 'graph' or 'graph_config'"):
            ConfigManager({}).get_graph_config()

    def test_router_default(self):
        """Without a router section the keyword router is used."""
        assert ConfigManager({}).get_router_config() == {"type": "keyword"}

    def test_workload_mix_by_name(self, scenario_data):
        """Named mixes are normalized in task order."""
        scenario_data["workload"]["mix"] = {"code": 3.0, "math": 1.0}

        spec = ConfigManager(scenario_data).get_workload_spec(TaskSet(("math", "code")))

        assert spec.mix.weights == pytest.approx((0.25, 0.75))
        assert spec.count == 24
        assert spec.seed == 11

    def test_workload_mix_as_list(self):
        """List mixes are positional."""
        manager = ConfigManager({"workload": {"mix": [1, 1]}})

        spec = manager.get_workload_spec(TaskSet(("math", "code")))

        assert spec.mix.weights == pytest.approx((0.5, 0.5))
        assert spec.mixed_fraction == pytest.approx(0.2)

    def test_workload_unknown_task(self):
        """Mixes may only name configured tasks."""
        manager = ConfigManager({"workload": {"mix": {"art": 1.0}}})

        with pytest.raises(ConfigError, match="workload mix names unknown tasks"):
            manager.get_workload_spec(TaskSet(("math", "code")))

    def test_workload_invalid(self):
        """Invalid workload values are configuration errors."""
        manager = ConfigManager({"workload": {"count": 0}})

        with pytest.raises(ConfigError, match="invalid workload config"):
            manager.get_workload_spec(TaskSet(("math",)))

    @pytest.mark.parametrize("key", ["lambda", "lam"])
    def test_cost_lambda_spellings(self, key):
        """The cost tradeoff accepts either spelling."""
        weights = ConfigManager({"cost": {key: 0.3}}).get_cost_weights()

        assert weights.lam == pytest.approx(0.3)

    def test_cost_invalid(self):
        """Negative weights are configuration errors."""
        with pytest.raises(ConfigError, match="invalid cost config"):
            ConfigManager({"cost": {"omega_tok": -1}}).get_cost_weights()

    def test_sampler_params(self, scenario_data):
        """Sampler values override defaults."""
        params = ConfigManager(scenario_data).get_sampler_params()

        assert params.beta == pytest.approx(1.0)
        assert params.gamma == pytest.approx(0.05)
        assert params.lambda_l == pytest.approx(0.5)

    def test_sampler_unknown_key(self):
        """Unknown sampler keys are rejected."""
        with pytest.raises(ConfigError, match="invalid sampler config"):
            ConfigManager({"sampler": {"temperature": 1.0}}).get_sampler_params()

    def test_evolution_params(self, scenario_data):
        """Q maps onto the deposit constant; mode and judge are separate."""
        scenario_data["evolution"]["Q"] = 2.5
        scenario_data["evolution"]["mode"] = "async"
        manager = ConfigManager(scenario_data)

        params = manager.get_evolution_params()

        assert params.q == pytest.approx(2.5)
        assert params.batch_size == 4
        assert manager.get_evolution_mode() == "async"

    def test_elite_settings(self, scenario_data):
        """Elitist warm-up settings default on and can be switched off."""
        assert ConfigManager.create_default().get_evolution_params().elite_weight == 1.0

        scenario_data["evolution"]["elite_weight"] = 0.0
        scenario_data["evolution"]["elite_min_visits"] = 3
        params = ConfigManager(scenario_data).get_evolution_params()

        assert params.elite_weight == 0.0
        assert params.elite_min_visits == 3

    def test_evolution_invalid(self):
        """Out-of-range evolution values are configuration errors."""
        with pytest.raises(ConfigError, match="invalid evolution config"):
            ConfigManager({"evolution": {"rho": 1.5}}).get_evolution_params()

    def test_evolution_unknown_mode(self):
        """Only inline and async evolution exist."""
        with pytest.raises(ConfigError, match="evolution mode must be one of"):
            ConfigManager({"evolution": {"mode": "batch"}}).get_evolution_mode()

    def test_judge_defaults(self):
        """The default judge is a 0.7 threshold."""
        assert ConfigManager({}).get_judge_config() == {"type": "threshold", "threshold": 0.7}

    def test_warmup_dataset_resolution(self, temp_dir):
        """Warm-up datasets resolve relative to the scenario file."""
        path = temp_dir / "scenario.yaml"
        ConfigManager({"warmup": {"iterations": 5, "dataset": "data/outcomes.jsonl"}}).save(path)

        warmup = ConfigManager.load(path).get_warmup_config()

        assert warmup["iterations"] == 5
        assert warmup["dataset"] == temp_dir / "data" / "outcomes.jsonl"
        assert warmup["prompt_tokens"] == 16

    def test_warmup_negative_iterations(self):
        """Warm-up cannot run backwards."""
        with pytest.raises(ConfigError, match="warm-up iterations must be nonnegative"):
            ConfigManager({"warmup": {"iterations": -1}}).get_warmup_config()

    def test_levels_and_seed(self):
        """Levels and seed are coerced to integers."""
        manager = ConfigManager({"levels": ["1", 2], "seed": "5"})

        assert manager.get_levels() == [1, 2]
        assert manager.get_seed() == 5

    def test_invalid_seed(self):
        """Non-numeric seeds are configuration errors."""
        with pytest.raises(ConfigError, match="invalid seed"):
            ConfigManager({"seed": "abc"}).get_seed()

    def test_section_must_be_mapping(self):
        """Sections given as scalars are rejected."""
        with pytest.raises(ConfigError, match="section 'cost' must be a mapping"):
            ConfigManager({"cost": 3}).get_cost_weights()


class TestResolvedScenario:
    """Test resolution and hashing of whole scenarios."""

    def test_resolved_sections(self, scenario_data):
        """Resolved scenarios list every section with defaults."""
        resolved = ConfigManager(scenario_data).resolved()

        assert set(resolved) == {
            "graph",
            "router",
            "agent_models",
            "workload",
            "cost",
            "sampler",
            "evolution",
            "warmup",
            "levels",
            "seed",
        }
        assert resolved["workload"]["mix"] == pytest.approx([0.5, 0.5])
        assert resolved["evolution"]["judge"]["threshold"] == 0.7

    def test_hash_stable(self, scenario_data):
        """Equal scenarios hash equally."""
        assert ConfigManager(scenario_data).config_hash() == ConfigManager(scenario_data).config_hash()

    def test_hash_sees_defaults(self, scenario_data):
        """Spelling out a default does not change the hash."""
        explicit = dict(scenario_data, router={"type": "keyword"})
        implicit = {k: v for k, v in scenario_data.items() if k != "router"}

        assert ConfigManager(explicit).config_hash() == ConfigManager(implicit).config_hash()

    def test_hash_changes_with_values(self, scenario_data):
        """Changing any value changes the hash."""
        other = dict(scenario_data, seed=12)

        assert ConfigManager(scenario_data).config_hash() != ConfigManager(other).config_hash()


class TestConfigDisplay:
    """Test scenario rendering."""

    @patch("amro.config.console")
    def test_show_prints_tables(self, mock_console, scenario_data):
        """The summary and node tables are printed."""
        ConfigDisplay(ConfigManager(scenario_data)).show()

        assert mock_console.print.call_count == 2

    @patch("amro.config.console")
    def test_show_without_nodes(self, mock_console):
        """Generated graphs print only the summary."""
        data = {"graph": {"num_layers": 2, "nodes_per_layer": 2, "tasks": ["math"], "seed": 1}}

        ConfigDisplay(ConfigManager(data)).show()

        assert mock_console.print.call_count == 1


def test_scenario_path_is_path(scenario_file):
    """Loaded managers keep a Path."""
    assert isinstance(ConfigManager.load(str(scenario_file)).config_path, Path)
