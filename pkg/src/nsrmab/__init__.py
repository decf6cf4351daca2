"""Whittle index learning for restless bandits with drifting transition kernels."""

from .environments import build_environment
from .harness import ExperimentConfig, emit_results, run_experiment, sublinearity_check
from .learning import LearnerConfig, SlidingWindowWhittle
from .mdp import policy_iteration, value_iteration
from .whittle import whittle_index, whittle_indices

__all__ = [
    "build_environment", "ExperimentConfig", "emit_results", "run_experiment",
    "sublinearity_check", "LearnerConfig", "SlidingWindowWhittle", "policy_iteration",
    "value_iteration", "whittle_index", "whittle_indices",
]
__version__ = "0.1.0"
