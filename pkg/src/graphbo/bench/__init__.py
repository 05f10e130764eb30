"""Experiment harness: configs, end-to-end runs, baselines and export."""

from .config import ExperimentConfig, GraphSpec, MethodSpec, ObjectiveSpec, SamplerSpec
from .export import aggregate, aggregate_and_export, mean_ci
from .runner import (Problem, RegretTrace, build_problem, initial_omega_size, run,
                     run_baseline, run_graph_bo, traversal_order)

__all__ = [
    "ExperimentConfig", "GraphSpec", "MethodSpec", "ObjectiveSpec", "SamplerSpec",
    "aggregate", "aggregate_and_export", "mean_ci",
    "Problem", "RegretTrace", "build_problem", "initial_omega_size", "run",
    "run_baseline", "run_graph_bo", "traversal_order",
]
