"""Episode orchestration shared by evaluation, expert rollouts and baselines.

A runner owns the assignment refresh rule, feeds per-step rewards from the
current exact assignment, and optionally records a structured trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import assignment, policy, rewards, world
from .config import EnvConfig, RewardGains
from .network import initial_state, team_inputs


@dataclass
class EpisodeStats:
    per_agent_returns: np.ndarray   # (N,) summed per-agent rewards
    mean_return: float              # team average of the per-agent sums
    steps: int


def _refresh_assignment(state) -> np.ndarray:
    a, _ = assignment.solve_exact(assignment.from_state(state))
    return a


def play_episode(env_cfg: EnvConfig, gains: RewardGains, seed: int, action_fn,
                 refresh: str = "interval", trace=None,
                 record_state=None) -> EpisodeStats:
    """Run one episode.

    ``action_fn(state, observations, graph, assign, t)`` returns (N, dim)
    velocity commands.  ``refresh`` chooses when the assignment is re-solved:
    every ``assign_interval`` steps, or whenever a consumer's instantaneous
    demand was fully depleted ("on_satisfied").  ``record_state(t)`` may
    return an extra dict merged into the trace record (e.g. policy state).
    """
    state = world.reset(env_cfg, seed)
    assign = _refresh_assignment(state)
    totals = np.zeros(env_cfg.n_agents)
    for t in range(env_cfg.horizon):
        if refresh == "interval" and t > 0 and t % env_cfg.assign_interval == 0:
            assign = _refresh_assignment(state)
        graph = world.comm_graph(state, env_cfg.comm_radius)
        observations = world.observe_all(state)
        actions = action_fn(state, observations, graph, assign, t)
        nxt, report = world.step(state, actions, env_cfg.dt, env_cfg.u_max)
        next_graph = world.comm_graph(nxt, env_cfg.comm_radius)
        breakdown = rewards.total_reward(state, nxt, next_graph, assign, report, gains)
        totals += breakdown.total
        if trace is not None:
            record = {
                "kind": "step",
                "t": t,
                "positions": nxt.positions.tolist(),
                "supplies": nxt.supplies.tolist(),
                "demands": nxt.demands.tolist(),
                "actions": np.asarray(actions).tolist(),
                "rewards": {name: vals.tolist() for name, vals in breakdown.terms.items()},
                "reward_total": breakdown.total.tolist(),
            }
            if record_state is not None:
                record.update(record_state(t))
            trace.write(record)
        if refresh == "on_satisfied" and bool(report.satisfied_now.any()):
            assign = _refresh_assignment(nxt)
        state = nxt
    return EpisodeStats(per_agent_returns=totals,
                        mean_return=float(totals.mean()),
                        steps=env_cfg.horizon)


def policy_action_fn(actor: dict, env_cfg: EnvConfig, sigma_mode: str,
                     rng=None, deterministic: bool = True):
    """Stateful action function wrapping the learned policy.

    Carries the actor's consensus state across steps; ``states`` exposes the
    per-step (N, F) snapshots for cluster analysis.
    """
    x = None
    snapshots = []

    def fn(state, observations, graph, assign, t):
        nonlocal x
        if t == 0 or x is None:
            x = initial_state(env_cfg.n_agents, actor)
        cons_in, agent_in, positions = team_inputs(observations)
        actions, _, x = policy.act(actor, cons_in, agent_in, positions,
                                   graph.support, x, env_cfg.dt, rng,
                                   sigma_mode, deterministic=deterministic)
        snapshots.append(x.copy())
        return actions

    fn.states = snapshots
    return fn


def random_action_fn(env_cfg: EnvConfig, rng):
    def fn(state, observations, graph, assign, t):
        return rng.uniform(-env_cfg.u_max, env_cfg.u_max,
                           size=(env_cfg.n_agents, env_cfg.dim))
    return fn


def evaluate_policy(env_cfg: EnvConfig, gains: RewardGains, actor: dict,
                    sigma_mode: str, seeds) -> np.ndarray:
    """Mean episode returns for the deterministic policy, one per seed."""
    out = []
    for seed in seeds:
        fn = policy_action_fn(actor, env_cfg, sigma_mode, deterministic=True)
        out.append(play_episode(env_cfg, gains, seed, fn).mean_return)
    return np.array(out)


def evaluate_random(env_cfg: EnvConfig, gains: RewardGains, seeds,
                    noise_seed: int = 0) -> np.ndarray:
    out = []
    for k, seed in enumerate(seeds):
        rng = np.random.default_rng((noise_seed, k))
        out.append(play_episode(env_cfg, gains, seed,
                                random_action_fn(env_cfg, rng)).mean_return)
    return np.array(out)
