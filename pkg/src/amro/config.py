"""
Scenario configuration management.

A scenario file (YAML, JSON or TOML) bundles the graph, router, agent
models, workload, cost weights, sampler and evolution parameters, warm-up
settings, stress levels and the global seed.
"""

import copy
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict
from pathlib import Path
from typing import Any

import yaml
from rich.table import Table

from .cost import CostWeights
from .errors import ConfigError
from .evolution import EVOLUTION_MODES, EvolutionParams
from .interfaces import IConfigManager, TaskSet, WeightVector
from .pheromone import SamplerParams
from .simulation import WorkloadSpec
from .stress import DEFAULT_LEVELS
from .utils import config_hash, console

logger = logging.getLogger(__name__)

DEFAULT_SCENARIO_FILE = "scenario.yaml"
DEFAULT_WARMUP_ITERATIONS = 300
DEFAULT_PROMPT_TOKENS = 16

# Accepted spellings of each section name, preferred first.
SECTION_ALIASES: dict[str, tuple[str, ...]] = {
    "cost": ("cost", "cost_config"),
    "sampler": ("sampler", "sampler_params"),
    "evolution": ("evolution", "evolution_config"),
}


def read_mapping(path: Path) -> dict[str, Any]:
    """Read a YAML, JSON or TOML file into a mapping."""
    if not path.exists():
        raise ConfigError(f"Configuration file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".json":
            data = json.loads(text)
        elif path.suffix == ".toml":
            data = tomllib.loads(text)
        else:
            data = yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Invalid configuration file {path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"Cannot read configuration file {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Configuration file {path} must contain a mapping")
    return data


class ConfigManager(IConfigManager):
    """Typed access to one scenario."""

    def __init__(self, config_data: dict[str, Any] | None = None, config_path: Path | None = None):
        self._data = copy.deepcopy(config_data) if config_data else {}
        self._config_path = config_path
        self._graph_config: dict[str, Any] | None = None

    @classmethod
    def load(cls, config_path: Path) -> "ConfigManager":
        """Load a scenario from file."""
        return cls(read_mapping(Path(config_path)), Path(config_path))

    @classmethod
    def create_default(cls, seed: int = 7) -> "ConfigManager":
        """The seeded load-sensitive stress scenario.

        Slots 1 to 3 of every layer are high-capacity specialists for one
        task each; slot 4 is a low-capacity generalist that is best for
        mixed queries but degrades when overloaded.
        """
        tasks = ["math", "code", "general"]
        nodes = []
        agents = []
        for layer in (1, 2, 3):
            for slot, own in enumerate(tasks, start=1):
                ability = {t: 0.97 if t == own else 0.86 for t in tasks}
                nodes.append(
                    {
                        "layer": layer,
                        "slot": slot,
                        "backbone": f"{own}-specialist",
                        "policy": f"stage-{layer}",
                        "ability": ability,
                    }
                )
                agents.append({"layer": layer, "slot": slot, "capacity": 32})
            nodes.append(
                {
                    "layer": layer,
                    "slot": 4,
                    "backbone": "generalist",
                    "policy": f"stage-{layer}",
                    "ability": dict.fromkeys(tasks, 0.93),
                }
            )
            agents.append({"layer": layer, "slot": 4, "capacity": 2})

        data = {
            "seed": seed,
            "graph": {
                "num_layers": 3,
                "nodes_per_layer": 4,
                "tasks": tasks,
                "theta_load": 0.8,
                "nodes": nodes,
            },
            "router": {"type": "keyword", "count_overhead": False},
            "agent_models": {
                "defaults": {
                    "latency": {"mean": 1.0, "jitter": 0.2},
                    "tokens": {"mean": 120, "jitter": 30},
                    "load_sensitivity": 0.4,
                    "theta_soft": 1.0,
                    "quality_jitter": 0.02,
                },
                "nodes": agents,
            },
            "workload": {
                "mix": dict.fromkeys(tasks, 1.0),
                "count": 640,
                "arrival": "closed",
                "ramp_up": 3.0,
                "mixed_fraction": 0.0,
            },
            "cost": {
                "omega_tok": 0.001,
                "omega_lat": 0.1,
                "omega_load": 0.1,
                "lambda": 0.1,
                "load_stat": "max",
                "price_table": {
                    "math-specialist": 0.002,
                    "code-specialist": 0.002,
                    "general-specialist": 0.002,
                    "generalist": 0.01,
                },
            },
            "sampler": {
                "alpha": 1.0,
                "beta": 2.0,
                "gamma": 0.02,
                "lambda_a": 1.0,
                "lambda_l": 0.2,
                "lambda_r": 0.2,
            },
            "evolution": {
                "rho": 0.1,
                "Q": 1.0,
                "sampling_rate": 0.1,
                "batch_size": 32,
                "elite_weight": 1.0,
                "elite_min_visits": 5,
                "mode": "inline",
                "judge": {"type": "threshold", "threshold": 0.7},
            },
            "warmup": {"iterations": DEFAULT_WARMUP_ITERATIONS},
            "levels": [4, 8, 16, 32, 64],
        }
        return cls(data)

    def save(self, config_path: Path | None = None):
        """Save the scenario as YAML."""
        config_path = config_path or self._config_path or Path(DEFAULT_SCENARIO_FILE)
        config_path.parent.mkdir(parents=True, exist_ok=True)
        with open(config_path, "w", encoding="utf-8") as f:
            yaml.safe_dump(self._data, f, default_flow_style=False, indent=2, sort_keys=False)
        self._config_path = config_path

    @property
    def config_path(self) -> Path | None:
        return self._config_path

    @property
    def data(self) -> dict[str, Any]:
        return self._data

    def _resolve_path(self, value: str | Path) -> Path:
        path = Path(value)
        if not path.is_absolute() and self._config_path is not None:
            path = self._config_path.parent / path
        return path

    def _section(self, name: str) -> dict[str, Any]:
        for key in SECTION_ALIASES.get(name, (name,)):
            if key in self._data:
                section = self._data[key]
                if section is None:
                    return {}
                if not isinstance(section, dict):
                    raise ConfigError(f"section '{key}' must be a mapping")
                return dict(section)
        return {}

    def get_graph_config(self) -> dict[str, Any]:
        """Graph section, inline or loaded from ``graph_config``; top-level theta_load wins."""
        if self._graph_config is None:
            if isinstance(self._data.get("graph"), dict):
                graph = dict(self._data["graph"])
            elif isinstance(self._data.get("graph_config"), dict):
                graph = dict(self._data["graph_config"])
            elif isinstance(self._data.get("graph_config"), str):
                graph = read_mapping(self._resolve_path(self._data["graph_config"]))
            else:
                raise ConfigError("scenario has no 'graph' or 'graph_config' section")
            if "theta_load" in self._data:
                graph["theta_load"] = self._data["theta_load"]
            self._graph_config = graph
        return copy.deepcopy(self._graph_config)

    def get_router_config(self) -> dict[str, Any]:
        """Router section, inline or loaded from ``router_config``; keyword router by default."""
        if isinstance(self._data.get("router_config"), str):
            return read_mapping(self._resolve_path(self._data["router_config"]))
        return self._section("router") or {"type": "keyword"}

    def get_agent_models_config(self) -> dict[str, Any]:
        return self._section("agent_models")

    def get_workload_spec(self, tasks: TaskSet) -> WorkloadSpec:
        section = self._section("workload")
        mix_config = section.get("mix")
        try:
            if mix_config is None:
                mix = WeightVector.uniform(len(tasks))
            elif isinstance(mix_config, dict):
                unknown = [t for t in mix_config if t not in tasks]
                if unknown:
                    raise ConfigError(f"workload mix names unknown tasks {unknown}")
                mix = WeightVector.normalized([float(mix_config.get(t, 0.0)) for t in tasks])
            else:
                mix = WeightVector.normalized([float(x) for x in mix_config])
            rate = section.get("rate")
            return WorkloadSpec(
                mix=mix,
                count=int(section.get("count", 200)),
                arrival=str(section.get("arrival", "closed")),
                rate=None if rate is None else float(rate),
                seed=int(section.get("seed", self.get_seed())),
                ramp_up=float(section.get("ramp_up", 3.0)),
                mixed_fraction=float(section.get("mixed_fraction", 0.2)),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid workload config: {e}") from e

    def get_cost_weights(self) -> CostWeights:
        section = self._section("cost")
        try:
            return CostWeights(
                omega_tok=float(section.get("omega_tok", 0.001)),
                omega_lat=float(section.get("omega_lat", 0.1)),
                omega_load=float(section.get("omega_load", 0.1)),
                lam=float(section.get("lambda", section.get("lam", 0.1))),
                load_stat=str(section.get("load_stat", "max")),
                price_table={str(k): float(v) for k, v in (section.get("price_table") or {}).items()},
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid cost config: {e}") from e

    def get_sampler_params(self) -> SamplerParams:
        try:
            return SamplerParams(**self._section("sampler"))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid sampler config: {e}") from e

    def get_evolution_params(self) -> EvolutionParams:
        section = self._section("evolution")
        section.pop("judge", None)
        section.pop("mode", None)
        if "Q" in section:
            section["q"] = section.pop("Q")
        try:
            return EvolutionParams(**section)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid evolution config: {e}") from e

    def get_evolution_mode(self) -> str:
        mode = str(self._section("evolution").get("mode", "inline"))
        if mode not in EVOLUTION_MODES:
            raise ConfigError(f"evolution mode must be one of {EVOLUTION_MODES}: {mode}")
        return mode

    def get_judge_config(self) -> dict[str, Any]:
        judge = self._section("evolution").get("judge") or {}
        return {"type": "threshold", "threshold": 0.7, **judge}

    def get_warmup_config(self) -> dict[str, Any]:
        """Warm-up iterations, optional recorded-outcome dataset path and prompt size."""
        section = self._section("warmup")
        dataset = section.get("dataset")
        try:
            iterations = int(section.get("iterations", DEFAULT_WARMUP_ITERATIONS))
            prompt_tokens = int(section.get("prompt_tokens", DEFAULT_PROMPT_TOKENS))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid warmup config: {e}") from e
        if iterations < 0:
            raise ConfigError("warm-up iterations must be nonnegative")
        return {
            "iterations": iterations,
            "dataset": None if dataset is None else self._resolve_path(dataset),
            "prompt_tokens": prompt_tokens,
        }

    def get_levels(self) -> list[int]:
        levels = self._data.get("levels", list(DEFAULT_LEVELS))
        try:
            return [int(level) for level in levels]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid levels: {levels!r}") from e

    def get_seed(self) -> int:
        try:
            return int(self._data.get("seed", 0))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid seed: {self._data.get('seed')!r}") from e

    def resolved(self) -> dict[str, Any]:
        """Every section with defaults filled in."""
        graph = self.get_graph_config()
        tasks = TaskSet(tuple(graph.get("tasks", ())))
        workload = asdict(self.get_workload_spec(tasks))
        workload["mix"] = list(workload["mix"]["weights"])
        warmup = self.get_warmup_config()
        warmup["dataset"] = None if warmup["dataset"] is None else str(warmup["dataset"])
        return {
            "graph": graph,
            "router": self.get_router_config(),
            "agent_models": self.get_agent_models_config(),
            "workload": workload,
            "cost": asdict(self.get_cost_weights()),
            "sampler": asdict(self.get_sampler_params()),
            "evolution": {
                **asdict(self.get_evolution_params()),
                "mode": self.get_evolution_mode(),
                "judge": self.get_judge_config(),
            },
            "warmup": warmup,
            "levels": self.get_levels(),
            "seed": self.get_seed(),
        }

    def config_hash(self) -> str:
        return config_hash(self.resolved())


class ConfigDisplay:
    """Renders a resolved scenario as rich tables."""

    def __init__(self, config_manager: ConfigManager):
        self.config_manager = config_manager

    def show(self):
        resolved = self.config_manager.resolved()
        graph = resolved["graph"]

        summary = Table(title=f"Scenario {self.config_manager.config_hash()}")
        summary.add_column("Section", style="cyan")
        summary.add_column("Value")
        summary.add_row(
            "graph",
            f"{graph['num_layers']} layers x {graph['nodes_per_layer']} nodes, "
            f"tasks {', '.join(graph['tasks'])}, theta_load {graph.get('theta_load', 0.8)}",
        )
        summary.add_row("router", str(resolved["router"].get("type", "keyword")))
        for name in ("workload", "cost", "sampler", "evolution", "warmup"):
            summary.add_row(name, _format_section(resolved[name]))
        summary.add_row("levels", ", ".join(str(level) for level in resolved["levels"]))
        summary.add_row("seed", str(resolved["seed"]))
        console.print(summary)

        nodes = graph.get("nodes")
        if nodes:
            table = Table(title="Nodes")
            table.add_column("Node", style="cyan")
            table.add_column("Backbone")
            table.add_column("Ability")
            for entry in nodes:
                ability = ", ".join(f"{t}={v}" for t, v in entry.get("ability", {}).items())
                table.add_row(f"L{entry['layer']}S{entry['slot']}", entry.get("backbone", ""), ability)
            console.print(table)


def _format_section(section: dict[str, Any]) -> str:
    return ", ".join(f"{key}={value}" for key, value in section.items() if value not in ({}, None))
