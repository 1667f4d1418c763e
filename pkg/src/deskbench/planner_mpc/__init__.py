"""Receding-horizon NLP planner with an augmented-Lagrangian solver."""

from .nlp import (
    MpcParams,
    NlpProblem,
    build_nlp,
    constraints,
    destination,
    max_violation,
    objective,
    objective_and_gradient,
    objective_residuals,
    resample_prediction,
    rollout,
)
from .planner import MpcPlanner, MpcPlannerConfig, MpcPlannerState, extend_route
from .solver import MpcSolution, constant_violation, solve

__all__ = [
    "MpcParams", "MpcPlanner", "MpcPlannerConfig", "MpcPlannerState", "MpcSolution", "NlpProblem",
    "build_nlp", "constant_violation", "constraints", "destination", "extend_route", "max_violation",
    "objective", "objective_and_gradient", "objective_residuals", "resample_prediction", "rollout",
    "solve",
]
