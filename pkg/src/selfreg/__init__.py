"""Decentralized supply-demand self-regulation with transactive signals."""

from .engine import SelectionFunction, build_tree, run_epos
from .ingest import DataSource, Scenario
from .metrics import EvaluationReport, response, savings
from .pipeline import ExperimentGrid, RunRecord, ScenarioConfig, run_grid, run_pipeline
from .plangen import GenerationScheme, generate
from .provision import UpperBoundKind, upper_bound, upper_bound_1, upper_bound_2
from .signals import SignalKind, TransactiveSignal, reflect, normalize_reflection, stats

__version__ = "0.1.0"

__all__ = [
    "DataSource",
    "EvaluationReport",
    "ExperimentGrid",
    "GenerationScheme",
    "RunRecord",
    "Scenario",
    "ScenarioConfig",
    "SelectionFunction",
    "SignalKind",
    "TransactiveSignal",
    "UpperBoundKind",
    "build_tree",
    "generate",
    "normalize_reflection",
    "reflect",
    "response",
    "run_epos",
    "run_grid",
    "run_pipeline",
    "savings",
    "stats",
    "upper_bound",
    "upper_bound_1",
    "upper_bound_2",
]
