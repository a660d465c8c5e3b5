"""Grid-based pedestrian route choice simulation.

Agents pick among alternative paths with a softmax over travel time,
perceived queueing and imitation of nearby agents who just changed route.
"""

from .choice import ChoiceField, PathEvaluation, UtilityWeights, choose_path
from .cognitive import Knowledge, Path, PathsTree, build_cognitive_map, build_knowledge, build_paths_tree, paths
from .engine import Agent, Model, RunResult, Simulation, localize, run
from .fields import FloorField, compute_obstacle_field, compute_path_field, rebuild_proxemic_field
from .scenario import (
    CELL_SIZE,
    Opening,
    Region,
    Scenario,
    ScenarioError,
    SimulationConfig,
    close_openings,
    load_experiment,
    load_scenario,
    parse_scenario,
)

__all__ = [
    "Agent",
    "CELL_SIZE",
    "ChoiceField",
    "FloorField",
    "Knowledge",
    "Model",
    "Opening",
    "Path",
    "PathEvaluation",
    "PathsTree",
    "Region",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "Simulation",
    "SimulationConfig",
    "UtilityWeights",
    "build_cognitive_map",
    "build_knowledge",
    "build_paths_tree",
    "choose_path",
    "close_openings",
    "compute_obstacle_field",
    "compute_path_field",
    "load_experiment",
    "load_scenario",
    "localize",
    "parse_scenario",
    "paths",
    "rebuild_proxemic_field",
    "run",
]
