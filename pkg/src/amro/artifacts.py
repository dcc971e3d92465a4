"""
Reproducible output artifacts.

Every primary artifact embeds a provenance header (tool, version, config
hash, seed): CSV files start with ``# key: value`` comment lines, JSON files
carry a ``meta`` object and JSONL files open with a ``{"_meta": ...}`` line.
Timestamps only go to the ``run_meta.json`` sidecar, so primary outputs are
byte-identical across reruns with the same inputs.
"""

import csv
import json
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DataError, StateMismatchError
from .evolution import WarmupReport
from .executor import ServeResult
from .graph import LayeredGraph
from .interfaces import (
    LabeledOutcome,
    RoutePath,
    RouterSample,
    RouteTrace,
    StageRecord,
    TaskSet,
    WeightVector,
)
from .pheromone import PheromoneSpecialist, SpecialistSnapshot
from .stress import StressReport
from .utils import TOOL_NAME, TOOL_VERSION

UTC = timezone.utc

logger = logging.getLogger(__name__)

RUN_META_FILE = "run_meta.json"


@dataclass(frozen=True)
class ArtifactMeta:
    """Reproducibility header embedded in every artifact."""

    config_hash: str
    seed: int
    tool: str = TOOL_NAME
    version: str = TOOL_VERSION

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ArtifactMeta":
        return cls(
            config_hash=str(data.get("config_hash", "")),
            seed=int(data.get("seed", 0)),
            tool=str(data.get("tool", TOOL_NAME)),
            version=str(data.get("version", TOOL_VERSION)),
        )


def write_csv(
    path: Path, fieldnames: Sequence[str], rows: Iterable[Mapping[str, Any]], meta: ArtifactMeta
):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        for key, value in meta.to_dict().items():
            f.write(f"# {key}: {value}\n")
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fieldnames})


def read_csv(path: Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Read a CSV written by ``write_csv``: (header meta, rows)."""
    meta: dict[str, str] = {}
    with path.open(encoding="utf-8", newline="") as f:
        lines = f.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# ") and not body:
            key, _, value = line[2:].partition(": ")
            meta[key] = value
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))


def write_json(path: Path, payload: Mapping[str, Any], meta: ArtifactMeta):
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"meta": meta.to_dict(), **payload}
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_jsonl(path: Path, records: Iterable[Mapping[str, Any]], meta: ArtifactMeta):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write(json.dumps({"_meta": meta.to_dict()}, sort_keys=True) + "\n")
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + "\n")


def read_jsonl(path: Path) -> list[dict[str, Any]]:
    """Records of a JSONL file, skipping blank lines and the ``_meta`` header."""
    if not path.exists():
        raise DataError(f"Dataset file not found: {path}")
    records = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}:{number}: invalid JSON: {e}") from e
        if not isinstance(record, dict):
            raise DataError(f"{path}:{number}: expected a JSON object")
        if "_meta" in record:
            continue
        records.append(record)
    return records


def write_run_meta(out_dir: Path, command: str, meta: ArtifactMeta, started: datetime):
    """Sidecar with wall-clock timestamps, kept out of the primary artifacts."""
    out_dir.mkdir(parents=True, exist_ok=True)
    sidecar = {
        **meta.to_dict(),
        "command": command,
        "started_at": started.isoformat(),
        "finished_at": datetime.now(UTC).isoformat(),
    }
    (out_dir / RUN_META_FILE).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


# Pheromone snapshots


SNAPSHOT_FIELDS = ("tasks", "num_layers", "nodes_per_layer", "version", "virtual_source", "meta")


def snapshot_to_dict(snapshot: SpecialistSnapshot) -> dict[str, Any]:
    """Snapshot file layout.

    Each task is a top-level key holding ``{"edges": [[from_layer, from_slot,
    to_slot, value], ...]}``; ``virtual_source`` maps each task to its
    ``[[slot, value], ...]`` entries. Shape, task order and version sit
    alongside, so task names may not reuse those keys.
    """
    clashes = set(snapshot.tasks) & set(SNAPSHOT_FIELDS)
    if clashes:
        raise ValueError(f"task names clash with snapshot fields: {sorted(clashes)}")
    num_layers, n = snapshot.shape
    data: dict[str, Any] = {
        "tasks": list(snapshot.tasks),
        "num_layers": num_layers,
        "nodes_per_layer": n,
        "version": snapshot.version,
        "virtual_source": {},
    }
    for specialist in snapshot.specialists:
        data[specialist.task] = {
            "edges": [
                [layer, i, j, float(specialist.edges[layer - 1, i - 1, j - 1])]
                for layer in range(1, num_layers)
                for i in range(1, n + 1)
                for j in range(1, n + 1)
            ]
        }
        data["virtual_source"][specialist.task] = [
            [j, float(specialist.source[j - 1])] for j in range(1, n + 1)
        ]
    return data


def snapshot_from_dict(data: Mapping[str, Any]) -> SpecialistSnapshot:
    try:
        tasks = TaskSet(tuple(data["tasks"]))
        num_layers = int(data["num_layers"])
        n = int(data["nodes_per_layer"])
        specialists = []
        for task in tasks:
            source = np.full(n, np.nan)
            edges = np.full((num_layers - 1, n, n), np.nan)
            for j, value in data["virtual_source"][task]:
                source[int(j) - 1] = float(value)
            for layer, i, j, value in data[task]["edges"]:
                edges[int(layer) - 1, int(i) - 1, int(j) - 1] = float(value)
            specialists.append(PheromoneSpecialist(task, source, edges))
        return SpecialistSnapshot(tasks, tuple(specialists), int(data.get("version", 0)))
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise DataError(f"corrupt snapshot: {e}") from e


def save_snapshot(path: Path, snapshot: SpecialistSnapshot, meta: ArtifactMeta):
    write_json(path, snapshot_to_dict(snapshot), meta)
    logger.debug(f"Saved snapshot version {snapshot.version} to {path}")


def load_snapshot(
    path: Path, graph: LayeredGraph | None = None
) -> tuple[SpecialistSnapshot, ArtifactMeta]:
    """Load a snapshot; with a graph, also check that its shape fits."""
    if not path.exists():
        raise DataError(f"Snapshot file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"corrupt snapshot {path}: {e}") from e
    if not isinstance(data, dict):
        raise DataError(f"corrupt snapshot {path}: expected a JSON object")
    snapshot = snapshot_from_dict(data)
    if graph is not None and not snapshot.matches(graph):
        num_layers, n = snapshot.shape
        raise StateMismatchError(
            f"snapshot {path} ({num_layers}x{n}, tasks {list(snapshot.tasks)}) does not match "
            f"graph ({graph.num_layers}x{graph.nodes_per_layer}, tasks {list(graph.tasks)})"
        )
    return snapshot, ArtifactMeta.from_dict(data.get("meta", {}))


def export_heatmaps(snapshot: SpecialistSnapshot, out_dir: Path, meta: ArtifactMeta) -> list[Path]:
    """One raw-value matrix per specialist plus a per-row entropy summary."""
    n = snapshot.shape[1]
    columns = ["from"] + [f"S{j}" for j in range(1, n + 1)]
    written = []
    entropy_rows = []
    for specialist in snapshot.specialists:
        rows = [
            {"from": label, **{f"S{j}": float(row[j - 1]) for j in range(1, n + 1)}}
            for label, row in specialist.rows()
        ]
        path = out_dir / f"heatmap_{specialist.task}.csv"
        write_csv(path, columns, rows, meta)
        written.append(path)
        for label, entropy in specialist.row_entropy().items():
            entropy_rows.append({"task": specialist.task, "from": label, "entropy": entropy})
    write_csv(out_dir / "heatmap_entropy.csv", ["task", "from", "entropy"], entropy_rows, meta)
    return written


# Datasets


def load_router_dataset(path: Path, tasks: TaskSet | None = None) -> list[RouterSample]:
    """Router samples from JSONL lines ``{"query": ..., "weights": [...]}``."""
    samples = []
    for record in read_jsonl(path):
        try:
            sample = RouterSample(str(record["query"]), WeightVector(tuple(record["weights"])))
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"invalid router sample {record!r}: {e}") from e
        if tasks is not None and len(sample.target) != len(tasks):
            raise DataError(f"router sample has {len(sample.target)} weights for {len(tasks)} tasks")
        samples.append(sample)
    return samples


def write_router_dataset(path: Path, samples: Sequence[RouterSample], meta: ArtifactMeta):
    write_jsonl(
        path,
        ({"query": s.query, "weights": list(s.target.weights)} for s in samples),
        meta,
    )


def load_labeled_outcomes(path: Path, graph: LayeredGraph) -> list[LabeledOutcome]:
    """Warm-up outcomes; each line has query, task, path, success and per-stage telemetry."""
    outcomes = []
    for record in read_jsonl(path):
        try:
            route = RoutePath.from_slots(record["path"])
            graph.validate_path(route)
            stages = tuple(
                StageRecord(
                    node=node,
                    tokens_in=int(stage.get("tokens_in", 0)),
                    tokens_out=int(stage.get("tokens_out", 0)),
                    latency=float(stage.get("latency", 0.0)),
                    load_at_dispatch=float(stage.get("load", 0.0)),
                )
                for node, stage in zip(route, record["stages"], strict=True)
            )
            wall_time = float(record.get("wall_time", math.fsum(s.latency for s in stages)))
            outcomes.append(
                LabeledOutcome(
                    query=str(record.get("query", "")),
                    task=str(record["task"]),
                    path=route,
                    success=float(record["success"]),
                    trace=RouteTrace(stages, wall_time),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"invalid labeled outcome {record!r}: {e}") from e
    unknown = {o.task for o in outcomes} - set(graph.tasks)
    if unknown:
        raise DataError(f"labeled outcomes name unknown tasks {sorted(unknown)}")
    return outcomes


# Reports


def write_warmup_report(path: Path, report: WarmupReport, meta: ArtifactMeta):
    write_csv(
        path,
        ["iteration", "task", "mean_fitness", "modal_path_prob"],
        (asdict(row) for row in report.rows),
        meta,
    )


def write_stress_report(out_dir: Path, report: StressReport, meta: ArtifactMeta) -> list[Path]:
    """Long-form rows per system and level, plus the side-by-side accuracy table.

    Accuracy is routing accuracy: the share of queries served on the
    exhaustive-optimal path. Mean realized quality stays in the long form.
    """
    long_path = out_dir / "stress_report.csv"
    write_csv(
        long_path,
        ["system", "workers", "time_s", "speedup", "routing_accuracy", "mean_quality", "queries"],
        (asdict(row) for row in report.rows),
        meta,
    )

    systems = report.systems()
    ours, others = systems[0], systems[1:]
    by_level: dict[int, dict[str, Any]] = {}
    for row in report.for_system(ours):
        by_level[row.workers] = {
            "level": row.workers,
            "time_s": row.time_s,
            "speedup": row.speedup,
            "accuracy_ours": row.routing_accuracy,
        }
    for system in others:
        for row in report.for_system(system):
            by_level.setdefault(row.workers, {"level": row.workers})[f"accuracy_{system}"] = (
                row.routing_accuracy
            )
    table_path = out_dir / "stress_table.csv"
    write_csv(
        table_path,
        ["level", "time_s", "speedup", "accuracy_ours", *[f"accuracy_{s}" for s in others]],
        (by_level[level] for level in sorted(by_level)),
        meta,
    )
    return [long_path, table_path]


def summarize_results(results: Sequence[ServeResult]) -> dict[str, Any]:
    if not results:
        return {"queries": 0}
    count = len(results)
    return {
        "queries": count,
        "mean_quality": math.fsum(r.quality for r in results) / count,
        "mean_cost": math.fsum(r.cost.weighted_total for r in results) / count,
        "mean_utility": math.fsum(r.utility for r in results) / count,
        "mean_tokens": math.fsum(r.cost.tokens for r in results) / count,
        "mean_latency": math.fsum(r.cost.latency for r in results) / count,
        "total_usd": math.fsum(r.usd for r in results),
        "admitted": sum(r.admitted for r in results),
        "low_confidence": sum(r.w.low_confidence for r in results),
    }


def write_route_log(path: Path, results: Sequence[ServeResult], meta: ArtifactMeta):
    write_jsonl(path, (r.to_log() for r in results), meta)
