from .ball import (
    ConfidenceBall,
    build_ball,
    monotone_optimistic_kernel,
    optimistic_kernel,
    transport,
)
from .counts import (
    DRIFTING,
    KNOWN,
    STATIONARY,
    PriorKnowledge,
    PriorKnowledgeViolation,
    WindowedCounts,
    confidence_radii,
    drift_exponent,
    empirical_kernel,
    record_transition,
    select_window,
)
from .learner import (
    IndexPolicy,
    LearnerConfig,
    SlidingWindowWhittle,
    algorithm1_step,
    stationary_ablation,
)

__all__ = [
    "ConfidenceBall", "build_ball", "monotone_optimistic_kernel", "optimistic_kernel", "transport",
    "DRIFTING", "KNOWN", "STATIONARY", "PriorKnowledge", "PriorKnowledgeViolation",
    "WindowedCounts", "confidence_radii", "drift_exponent", "empirical_kernel",
    "record_transition", "select_window", "IndexPolicy", "LearnerConfig",
    "SlidingWindowWhittle", "algorithm1_step", "stationary_ablation",
]
