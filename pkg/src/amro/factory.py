"""
Component factory mapping configuration ``type`` strings to implementations (Open/Closed Principle).
"""

from collections.abc import Callable, Mapping
from typing import Any

from .errors import ConfigError
from .evolution import AlwaysAcceptJudge, AlwaysRejectJudge, ThresholdJudge
from .graph import LayeredGraph
from .interfaces import IIntentRouter, IQualityJudge, IRoutingPolicy, TaskSet, WeightVector
from .pheromone import AmroPolicy, PathSampler, SamplerParams, SnapshotStore
from .router import KeywordRouter, TableRouter, default_keywords
from .simulation import RandomPolicy, SinglePolicy, WrrPolicy

RouterCreator = Callable[[Mapping[str, Any], TaskSet], IIntentRouter]
JudgeCreator = Callable[[Mapping[str, Any]], IQualityJudge]
PolicyCreator = Callable[[LayeredGraph, SnapshotStore, SamplerParams], IRoutingPolicy]


class ComponentFactory:
    """Creates routers, judges and routing policies by name."""

    def __init__(self):
        self._router_creators: dict[str, RouterCreator] = {
            "table": self._create_table_router,
            "keyword": self._create_keyword_router,
        }
        self._judge_creators: dict[str, JudgeCreator] = {
            "threshold": lambda config: ThresholdJudge(float(config.get("threshold", 0.7))),
            "always_accept": lambda _config: AlwaysAcceptJudge(),
            "always_reject": lambda _config: AlwaysRejectJudge(),
        }
        self._policy_creators: dict[str, PolicyCreator] = {
            "amro": lambda graph, store, params: AmroPolicy(store, PathSampler(graph, params)),
            "wrr": lambda graph, _store, _params: WrrPolicy(graph),
            "random": lambda graph, _store, _params: RandomPolicy(graph),
            "single": lambda graph, _store, _params: SinglePolicy(graph),
        }

    def create_router(self, config: Mapping[str, Any], tasks: TaskSet) -> IIntentRouter:
        """Create an intent router from its config section."""
        router_type = config.get("type", "keyword")
        if router_type not in self._router_creators:
            raise ConfigError(f"Unsupported router type: {router_type}")
        declared = config.get("tasks")
        if declared is not None and tuple(declared) != tasks.tasks:
            raise ConfigError(f"router tasks {list(declared)} do not match {list(tasks)}")
        try:
            return self._router_creators[router_type](config, tasks)
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid {router_type} router config: {e}") from e

    def create_judge(self, config: Mapping[str, Any]) -> IQualityJudge:
        judge_type = config.get("type", "threshold")
        if judge_type not in self._judge_creators:
            raise ConfigError(f"Unsupported judge type: {judge_type}")
        try:
            return self._judge_creators[judge_type](config)
        except ValueError as e:
            raise ConfigError(f"invalid {judge_type} judge config: {e}") from e

    def create_policy(
        self,
        name: str,
        graph: LayeredGraph,
        store: SnapshotStore,
        params: SamplerParams,
    ) -> IRoutingPolicy:
        if name not in self._policy_creators:
            raise ConfigError(f"Unsupported routing policy: {name}")
        return self._policy_creators[name](graph, store, params)

    def get_supported_routers(self) -> list[str]:
        return list(self._router_creators.keys())

    def get_supported_judges(self) -> list[str]:
        return list(self._judge_creators.keys())

    def get_supported_policies(self) -> list[str]:
        return list(self._policy_creators.keys())

    def register_router(self, router_type: str, creator: RouterCreator):
        """Register a new router type (Open/Closed Principle)."""
        self._router_creators[router_type] = creator

    def register_judge(self, judge_type: str, creator: JudgeCreator):
        self._judge_creators[judge_type] = creator

    def register_policy(self, name: str, creator: PolicyCreator):
        self._policy_creators[name] = creator

    def _create_table_router(self, config: Mapping[str, Any], tasks: TaskSet) -> IIntentRouter:
        table = {
            str(entry["query"]): WeightVector(tuple(entry["weights"]))
            for entry in config.get("table", [])
        }
        if not table:
            raise ConfigError("table router needs a nonempty 'table'")
        return TableRouter(tasks, table, bool(config.get("count_overhead", False)))

    def _create_keyword_router(self, config: Mapping[str, Any], tasks: TaskSet) -> IIntentRouter:
        keywords = config.get("keywords") or default_keywords(tasks)
        return KeywordRouter(tasks, keywords, bool(config.get("count_overhead", False)))
