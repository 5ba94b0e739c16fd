"""Centralized baseline controller.

Given the exact assignment, each agent is driven straight at its consumer by
a proportional term, with a centrally computed pairwise repulsion that kicks
in below the collision threshold.  The assignment is re-solved whenever a
consumer's instantaneous demand is fully depleted.
"""

from __future__ import annotations

import numpy as np

from .assignment import assigned_consumer
from .config import EnvConfig, RewardGains
from .runner import play_episode
from .world import WorldState

K_P = 1.0
K_REP = 0.05


def expert_actions(state: WorldState, a: np.ndarray, k_p: float = K_P,
                   k_rep: float = K_REP, eps_safe: float = 0.01,
                   u_max: float = 1.0) -> np.ndarray:
    """Velocity commands toward assigned consumers with pairwise repulsion.

    ``eps_safe`` thresholds the *squared* pairwise distance, matching the
    collision penalty's activation region.
    """
    targets = state.consumer_positions[assigned_consumer(a)]
    u = k_p * (targets - state.positions)
    diffs = state.positions[:, None, :] - state.positions[None, :, :]
    sq = (diffs ** 2).sum(axis=-1)
    n = state.n_agents
    for i in range(n):
        for j in range(n):
            if j != i and 0.0 < sq[i, j] < eps_safe:
                u[i] += k_rep * diffs[i, j] / sq[i, j]
    return np.clip(u, -u_max, u_max)


def expert_action_fn(env_cfg: EnvConfig, k_p: float = K_P, k_rep: float = K_REP,
                     eps_safe: float | None = None):
    if eps_safe is None:
        eps_safe = 0.01

    def fn(state, observations, graph, assign, t):
        return expert_actions(state, assign, k_p, k_rep, eps_safe, env_cfg.u_max)

    return fn


def evaluate_expert(env_cfg: EnvConfig, gains: RewardGains, seeds,
                    trace=None, record_state=None) -> np.ndarray:
    """Mean episode returns of the expert, one per seed."""
    fn = expert_action_fn(env_cfg, eps_safe=gains.collision_eps)
    out = []
    for seed in seeds:
        out.append(play_episode(env_cfg, gains, seed, fn, refresh="on_satisfied",
                                trace=trace, record_state=record_state).mean_return)
    return np.array(out)
