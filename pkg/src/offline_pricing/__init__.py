"""Offline dynamic pricing with Poisson demand and partially identified rates."""

from .errors import InvalidInputError, UnlearnableError
from .identification import IntervalSet, LambdaEstimates, estimate_lambdas, refined_intervals
from .learners import (
    LearnerOutput,
    learn,
    learn_greedy,
    learn_opportunistic,
    learn_refined_pessimistic,
    learn_vanilla_pessimistic,
    optimize_q_over_interval,
)
from .mdp import Policy, PricingModel, evaluate_policy_exact, solve_optimal
from .simulation import OfflineDataset, generate_dataset, scenario_behavior, stream

__all__ = [
    "InvalidInputError",
    "IntervalSet",
    "LambdaEstimates",
    "LearnerOutput",
    "OfflineDataset",
    "Policy",
    "PricingModel",
    "UnlearnableError",
    "estimate_lambdas",
    "evaluate_policy_exact",
    "generate_dataset",
    "learn",
    "learn_greedy",
    "learn_opportunistic",
    "learn_refined_pessimistic",
    "learn_vanilla_pessimistic",
    "optimize_q_over_interval",
    "refined_intervals",
    "scenario_behavior",
    "solve_optimal",
    "stream",
]
