"""Grid-world simulation of context-sensitive rule compliance for generative agents."""

from .pave import AssessmentTuple, Verdict, generate_verdict, run_pipeline
from .scenario import RunConfig, ScenarioSpec, Simulation, load_scenario, run_cell, run_matrix
from .world import TileMap, hazard_severity_at, legal_shortest_path, load_map

__version__ = "0.1.0"

__all__ = [
    "AssessmentTuple",
    "RunConfig",
    "ScenarioSpec",
    "Simulation",
    "TileMap",
    "Verdict",
    "generate_verdict",
    "hazard_severity_at",
    "legal_shortest_path",
    "load_map",
    "load_scenario",
    "run_cell",
    "run_matrix",
    "run_pipeline",
]
