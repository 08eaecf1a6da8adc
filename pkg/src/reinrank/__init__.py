"""Teleportation-free reinforcement ranking and Page Rank on link graphs."""
from .graph import (
    GraphDelta,
    LinkGraph,
    apply_delta,
    load_graph,
    transpose_check,
    weakly_connected_components,
)
from .ranking import (
    ConvergenceTrace,
    IterationConfig,
    Policy,
    ScoreVector,
    exact_solve_pagerank,
    exact_solve_rr,
    pagerank,
    reinforcement_rank,
    residual,
    truncated_rank,
    uniform_policy,
    uniform_rewards,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceTrace", "GraphDelta", "IterationConfig", "LinkGraph", "Policy",
    "ScoreVector", "apply_delta", "exact_solve_pagerank", "exact_solve_rr",
    "load_graph", "pagerank", "reinforcement_rank", "residual",
    "transpose_check", "truncated_rank", "uniform_policy", "uniform_rewards",
    "weakly_connected_components",
]
