"""Decentralized multi-agent multi-resource allocation.

A simulated world of resource-carrying agents and demanding consumers, an
exact assignment solver used for reward shaping and as an expert baseline,
a contractive cluster-consensus network architecture for decentralized
policies and values, and an independent PPO trainer.
"""

from .config import EnvConfig, NetConfig, RewardGains, RunConfig, TrainConfig
from .world import (
    Agent,
    CommGraph,
    Consumer,
    DepletionReport,
    Observation,
    ResourceKind,
    WorldState,
    comm_graph,
    observe,
    observe_all,
    reset,
    step,
)
from .assignment import AssignmentProblem, objective, solve_exact, solve_oracle
from .rewards import RewardBreakdown, total_reward
from .analysis import (
    cluster_decay_fit,
    contraction_rate,
    detect_clusters,
    jacobian_log_norm,
    log_norm_inf,
)
from .training import TrainResult, gae, train

__all__ = [
    "Agent",
    "AssignmentProblem",
    "CommGraph",
    "Consumer",
    "DepletionReport",
    "EnvConfig",
    "NetConfig",
    "Observation",
    "ResourceKind",
    "RewardBreakdown",
    "RewardGains",
    "RunConfig",
    "TrainConfig",
    "TrainResult",
    "WorldState",
    "cluster_decay_fit",
    "comm_graph",
    "contraction_rate",
    "detect_clusters",
    "gae",
    "jacobian_log_norm",
    "log_norm_inf",
    "objective",
    "observe",
    "observe_all",
    "reset",
    "solve_exact",
    "solve_oracle",
    "step",
    "total_reward",
    "train",
]

__version__ = "0.1.0"
