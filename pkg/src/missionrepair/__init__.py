"""Multi-agent strike-mission simulator with a novelty-detecting, self-repairing agent."""

from .campaign import CampaignConfig, MetricsReport, compute_metrics, run_campaign
from .inconsistency import InconsistencyConfig, check
from .model import MMO, PlanningModel, apply_mmo, default_catalog, model_from_scenario
from .planner import plan
from .repair import RepairMemory, repair_environment_zone, repair_model
from .scenario import ScenarioConfig, default_scenario, load_scenario, parse_scenario
from .simulator import NoveltySpec, environment_from_scenario, execute, inject_novelty

__version__ = "0.1.0"

__all__ = [
    "CampaignConfig", "InconsistencyConfig", "MMO", "MetricsReport", "NoveltySpec",
    "PlanningModel", "RepairMemory", "ScenarioConfig", "apply_mmo", "check",
    "compute_metrics", "default_catalog", "default_scenario", "environment_from_scenario",
    "execute", "inject_novelty", "load_scenario", "model_from_scenario", "parse_scenario",
    "plan", "repair_environment_zone", "repair_model", "run_campaign",
]
