"""
Command-line interface for AMRO.
"""

import contextlib
import dataclasses
import logging
import sys
from collections.abc import Iterator
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np
from rich.table import Table

from .artifacts import (
    ArtifactMeta,
    export_heatmaps,
    load_labeled_outcomes,
    load_router_dataset,
    load_snapshot,
    save_snapshot,
    summarize_results,
    write_json,
    write_route_log,
    write_router_dataset,
    write_run_meta,
    write_stress_report,
    write_warmup_report,
)
from .config import DEFAULT_SCENARIO_FILE, ConfigDisplay, ConfigManager, read_mapping
from .errors import AmroError, ConfigError
from .evolution import BypassEvolver, OutcomeOracle, RecordedOutcomeOracle, WarmupReport, warmup
from .executor import ServeResult, ServingExecutor
from .factory import ComponentFactory
from .graph import build_graph
from .interfaces import RoutePath, TaskSet, WeightVector
from .pheromone import PheromoneSpecialist, SnapshotStore, SpecialistSnapshot
from .router import evaluate_router
from .simulation import (
    SimulatedAgentPool,
    SimulatorOracle,
    brute_force_best_path,
    build_agent_models,
    generate_router_dataset,
    generate_workload,
)
from .stress import (
    STRESS_MODES,
    StressDriver,
    ThreadedDriver,
    VirtualTimeDriver,
    query_rng,
    stress_run,
)
from .utils import (
    TOOL_VERSION,
    config_hash,
    console,
    format_duration,
    format_percent,
    print_error,
    print_info,
    print_success,
    print_warning,
    setup_logging,
)

UTC = timezone.utc

logger = logging.getLogger(__name__)

BASELINES = ("wrr", "random", "single")


class DependencyContainer:
    """Wires one scenario into graph, agents, router and parameter objects."""

    def __init__(self, config_manager: ConfigManager, seed: int | None = None):
        self.config_manager = config_manager
        self.seed = config_manager.get_seed() if seed is None else seed
        self.factory = ComponentFactory()

        self.graph = build_graph(config_manager.get_graph_config())
        self.agents = build_agent_models(self.graph, config_manager.get_agent_models_config())
        self.router = self.factory.create_router(
            config_manager.get_router_config(), self.graph.tasks
        )
        self.cost_weights = config_manager.get_cost_weights()
        self.sampler_params = config_manager.get_sampler_params()
        self.evolution_params = config_manager.get_evolution_params()
        self.evolution_mode = config_manager.get_evolution_mode()
        self.warmup_config = config_manager.get_warmup_config()
        self.meta = ArtifactMeta(config_manager.config_hash(), self.seed)

    def warmup_oracle(self) -> OutcomeOracle:
        dataset = self.warmup_config["dataset"]
        if dataset is not None:
            return RecordedOutcomeOracle(load_labeled_outcomes(dataset, self.graph))
        return SimulatorOracle(self.graph, self.agents, self.warmup_config["prompt_tokens"])

    def run_warmup(self, iterations: int | None = None) -> tuple[SpecialistSnapshot, WarmupReport]:
        if iterations is None:
            iterations = self.warmup_config["iterations"]
        specialists = [
            PheromoneSpecialist.uniform(t, self.graph.num_layers, self.graph.nodes_per_layer)
            for t in self.graph.tasks
        ]
        report = warmup(
            self.graph,
            specialists,
            self.warmup_oracle(),
            iterations,
            self.evolution_params,
            self.sampler_params,
            np.random.default_rng(self.seed),
            cost_weights=self.cost_weights,
        )
        self.graph.reset_telemetry()
        return SpecialistSnapshot(self.graph.tasks, tuple(specialists)), report

    def load_snapshot(self, path: Path) -> SpecialistSnapshot:
        snapshot, _ = load_snapshot(path, self.graph)
        return snapshot

    def make_executor(
        self,
        policy_name: str,
        snapshot: SpecialistSnapshot,
        evolution_mode: str | None = None,
    ) -> ServingExecutor:
        """A fresh executor over idle agents; only the learned policy evolves."""
        backend = SimulatedAgentPool(self.graph, self.agents)
        backend.reset()
        store = SnapshotStore(snapshot)
        policy = self.factory.create_policy(policy_name, self.graph, store, self.sampler_params)
        evolver = None
        if policy_name == "amro":
            evolver = BypassEvolver(
                store,
                self.factory.create_judge(self.config_manager.get_judge_config()),
                self.evolution_params,
                self.cost_weights,
                evolution_mode or self.evolution_mode,
            )
        return ServingExecutor(self.graph, self.router, policy, backend, self.cost_weights, evolver)

    def optimal_path(self, w: WeightVector) -> RoutePath:
        return brute_force_best_path(
            self.graph, w, self.agents, self.cost_weights, self.warmup_config["prompt_tokens"]
        )


@contextlib.contextmanager
def _command_errors(action: str) -> Iterator[None]:
    """Report a failure and exit with the code mapped to its error class."""
    try:
        yield
    except AmroError as e:
        print_error(f"{action} failed: {e}")
        sys.exit(e.exit_code)
    except Exception as e:
        logger.debug(f"{action} failed", exc_info=True)
        print_error(f"{action} failed: {e}")
        sys.exit(1)


def _parse_levels(
    _ctx: click.Context, _param: click.Parameter, value: str | None
) -> list[int] | None:
    if value is None:
        return None
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError as e:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}") from e


scenario_option = click.option(
    "--scenario", "-s", type=click.Path(path_type=Path), required=True, help="Scenario file"
)
out_option = click.option(
    "--out", "-o", type=click.Path(path_type=Path), default=Path("out"), show_default=True,
    help="Output directory",
)
seed_option = click.option("--seed", type=int, help="Override the scenario seed")


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose output")
@click.version_option(version=TOOL_VERSION, prog_name="amro")
def cli(verbose: bool):
    """AMRO: task-aware ant colony routing for layered multi-agent systems."""
    setup_logging(verbose)


@cli.command(name="warmup")
@scenario_option
@out_option
@seed_option
@click.option("--iterations", "-n", type=int, help="Override warm-up iterations")
def warmup_command(scenario: Path, out: Path, seed: int | None, iterations: int | None):
    """Train one pheromone specialist per task offline."""
    started = datetime.now(UTC)
    with _command_errors("Warm-up"):
        if iterations is not None and iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        container = DependencyContainer(ConfigManager.load(scenario), seed)
        snapshot, report = container.run_warmup(iterations)

        save_snapshot(out / "snapshot.json", snapshot, container.meta)
        write_warmup_report(out / "warmup_report.csv", report, container.meta)
        write_run_meta(out, "warmup", container.meta, started)

        for task, path in report.greedy_paths.items():
            final = report.final(task)
            assert final is not None
            print_info(f"{task}: greedy path {path}, modal probability {final.modal_path_prob:.3f}")
        print_success(f"Snapshot written to {out / 'snapshot.json'}")


@cli.command()
@scenario_option
@out_option
@seed_option
@click.option("--snapshot", type=click.Path(path_type=Path), help="Warm-up snapshot to serve from")
@click.option("--queries", "-q", type=int, help="Override the workload size")
@click.option(
    "--policy",
    type=click.Choice(["amro", *BASELINES]),
    default="amro",
    show_default=True,
    help="Routing policy",
)
@click.option("--async-evolution", is_flag=True, help="Run evolution batches on a background worker")
def simulate(
    scenario: Path,
    out: Path,
    seed: int | None,
    snapshot: Path | None,
    queries: int | None,
    policy: str,
    async_evolution: bool,
):
    """Serve a workload with online evolution and log every route."""
    started = datetime.now(UTC)
    with _command_errors("Simulation"):
        container = DependencyContainer(ConfigManager.load(scenario), seed)
        if snapshot is not None:
            initial = container.load_snapshot(snapshot)
        else:
            print_warning("No snapshot given; warming up in process")
            initial, _ = container.run_warmup()

        spec = container.config_manager.get_workload_spec(container.graph.tasks)
        if queries is not None:
            spec = dataclasses.replace(spec, count=queries)
        workload = generate_workload(spec, container.graph.tasks)

        mode = "async" if async_evolution else None
        executor = container.make_executor(policy, initial, mode)
        results: list[ServeResult] = []
        try:
            for item in workload:
                results.append(executor.serve(item.query, query_rng(container.seed, item.index)))
        finally:
            if executor.evolver is not None:
                executor.evolver.close()

        summary = summarize_results(results)
        summary["policy"] = policy
        if executor.evolver is not None:
            final = executor.evolver.store.current
            summary["evolution"] = executor.evolver.stats.to_dict()
            summary["snapshot_version"] = final.version
            save_snapshot(out / "snapshot_final.json", final, container.meta)

        write_route_log(out / "routes.jsonl", results, container.meta)
        write_json(out / "summary.json", summary, container.meta)
        write_run_meta(out, "simulate", container.meta, started)

        print_info(
            f"{summary['queries']} queries: mean quality {summary['mean_quality']:.4f}, "
            f"mean cost {summary['mean_cost']:.4f}, mean utility {summary['mean_utility']:.4f}"
        )
        print_success(f"Route log written to {out / 'routes.jsonl'}")


@cli.command()
@scenario_option
@out_option
@seed_option
@click.option("--levels", callback=_parse_levels, help="Comma-separated worker counts")
@click.option("--mode", type=click.Choice(STRESS_MODES), default="virtual", show_default=True)
@click.option("--baseline", type=click.Choice(BASELINES), default="wrr", show_default=True)
@click.option("--snapshot", type=click.Path(path_type=Path), help="Warm-up snapshot to start from")
@click.option("--queries", "-q", type=int, help="Override the workload size")
@click.option(
    "--time-scale",
    type=float,
    default=0.01,
    show_default=True,
    help="Real seconds per simulated second in threaded mode",
)
def stress(
    scenario: Path,
    out: Path,
    seed: int | None,
    levels: list[int] | None,
    mode: str,
    baseline: str,
    snapshot: Path | None,
    queries: int | None,
    time_scale: float,
):
    """Run the same workload at increasing concurrency for AMRO and a baseline."""
    started = datetime.now(UTC)
    with _command_errors("Stress test"):
        config_manager = ConfigManager.load(scenario)
        container = DependencyContainer(config_manager, seed)
        if snapshot is not None:
            initial = container.load_snapshot(snapshot)
        else:
            initial, _ = container.run_warmup()

        spec = config_manager.get_workload_spec(container.graph.tasks)
        if queries is not None:
            spec = dataclasses.replace(spec, count=queries)
        workload = generate_workload(spec, container.graph.tasks)
        driver: StressDriver = (
            VirtualTimeDriver(container.seed)
            if mode == "virtual"
            else ThreadedDriver(container.seed, time_scale)
        )

        report = stress_run(
            levels or config_manager.get_levels(),
            workload,
            {
                "amro": lambda: container.make_executor(
                    "amro", initial, driver.evolution_mode
                ),
                baseline: lambda: container.make_executor(baseline, initial),
            },
            container.optimal_path,
            driver,
            spec,
            container.meta.config_hash,
        )
        write_stress_report(out, report, container.meta)
        write_run_meta(out, "stress", container.meta, started)

        table = Table(title=f"Stress test ({mode})")
        for column in ("System", "Workers", "Time", "Speedup", "Routing accuracy", "Mean quality"):
            table.add_column(column)
        for row in report.rows:
            table.add_row(
                row.system,
                str(row.workers),
                format_duration(row.time_s),
                f"{row.speedup:.2f}x",
                format_percent(row.routing_accuracy),
                format_percent(row.mean_quality),
            )
        console.print(table)
        print_success(f"Stress report written to {out / 'stress_report.csv'}")


@cli.command(name="export-heatmap")
@click.option("--snapshot", type=click.Path(path_type=Path), required=True, help="Snapshot file")
@out_option
def export_heatmap(snapshot: Path, out: Path):
    """Write each specialist's pheromone matrix and per-row entropy as CSV."""
    with _command_errors("Heatmap export"):
        loaded, meta = load_snapshot(snapshot)
        written = export_heatmaps(loaded, out, meta)
        print_success(f"Wrote {len(written)} heatmaps to {out}")


@cli.command(name="eval-router")
@click.option("--router-config", type=click.Path(path_type=Path), help="Router config file")
@click.option("--scenario", "-s", type=click.Path(path_type=Path), help="Scenario with a router")
@click.option("--dataset", type=click.Path(path_type=Path), required=True, help="JSONL samples")
@out_option
def eval_router(router_config: Path | None, scenario: Path | None, dataset: Path, out: Path):
    """Score a router by mean KL divergence and top-1 accuracy."""
    with _command_errors("Router evaluation"):
        factory = ComponentFactory()
        if router_config is not None:
            config = read_mapping(router_config)
            if "tasks" not in config:
                raise ConfigError(f"router config {router_config} must list its tasks")
            tasks = TaskSet(tuple(config["tasks"]))
            meta = ArtifactMeta(config_hash(config), 0)
        elif scenario is not None:
            container = DependencyContainer(ConfigManager.load(scenario))
            config = container.config_manager.get_router_config()
            tasks = container.graph.tasks
            meta = container.meta
        else:
            raise ConfigError("either --router-config or --scenario is required")

        router = factory.create_router(config, tasks)
        evaluation = evaluate_router(router, load_router_dataset(dataset, tasks))
        write_json(out / "router_eval.json", evaluation.to_dict(), meta)

        print_info(
            f"{evaluation.samples} samples: mean KL {evaluation.mean_kl:.4f}, "
            f"top-1 accuracy {format_percent(evaluation.top1_accuracy)}"
        )
        print_success(f"Evaluation written to {out / 'router_eval.json'}")


@cli.command(name="make-dataset")
@click.option("--scenario", "-s", type=click.Path(path_type=Path), help="Take tasks from a scenario")
@click.option("--tasks", default="math,code,general", show_default=True, help="Comma-separated tasks")
@click.option("--count", "-n", type=int, default=300, show_default=True)
@click.option("--mixed-fraction", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@out_option
def make_dataset(
    scenario: Path | None, tasks: str, count: int, mixed_fraction: float, seed: int, out: Path
):
    """Generate a synthetic labeled router dataset."""
    with _command_errors("Dataset generation"):
        if scenario is not None:
            task_set = build_graph(ConfigManager.load(scenario).get_graph_config()).tasks
        else:
            task_set = TaskSet(tuple(t.strip() for t in tasks.split(",") if t.strip()))
        if count < 1:
            raise ConfigError("count must be positive")
        samples = generate_router_dataset(
            task_set, count, np.random.default_rng(seed), mixed_fraction
        )
        meta = ArtifactMeta(
            config_hash({"tasks": list(task_set), "count": count, "mixed_fraction": mixed_fraction}),
            seed,
        )
        write_router_dataset(out / "router_dataset.jsonl", samples, meta)
        print_success(f"Wrote {count} samples to {out / 'router_dataset.jsonl'}")


@cli.command()
@click.argument("path", type=click.Path(path_type=Path), default=Path(DEFAULT_SCENARIO_FILE))
@click.option("--force", is_flag=True, help="Overwrite an existing file")
def init(path: Path, force: bool):
    """Write the default stress scenario."""
    with _command_errors("Initialization"):
        if path.exists() and not force:
            raise ConfigError(f"{path} already exists (use --force to overwrite)")
        ConfigManager.create_default().save(path)
        print_success(f"Scenario written to {path}")


@cli.command(name="show-scenario")
@scenario_option
def show_scenario(scenario: Path):
    """Display the resolved scenario."""
    with _command_errors("Scenario display"):
        ConfigDisplay(ConfigManager.load(scenario)).show()

