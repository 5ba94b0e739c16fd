"""Per-agent reward: four local terms, a pairwise collision penalty, and two
global terms shared by the whole team.

Local terms are driven by the depletion report and by the current exact
assignment; the global terms reward total demand reduction and full coverage
of every consumer in the same step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import assigned_consumer
from .config import RewardGains
from .errors import ShapeMismatch
from .world import CommGraph, DepletionReport, WorldState

TERMS = ("id", "im", "is", "rc", "collision", "s", "g")


@dataclass(frozen=True)
class RewardBreakdown:
    terms: dict            # term name -> (N,) array
    total: np.ndarray      # (N,)

    def per_agent(self, i: int) -> dict:
        return {name: float(vals[i]) for name, vals in self.terms.items()}


def global_demand_reward(prev: WorldState, nxt: WorldState) -> float:
    """Team reward: total demand decrease between consecutive states."""
    if prev.demands.shape != nxt.demands.shape:
        raise ShapeMismatch(
            f"demand shapes differ: {prev.demands.shape} vs {nxt.demands.shape}"
        )
    return float((prev.demands - nxt.demands).sum())


def coverage_reward(report: DepletionReport, gains: RewardGains) -> float:
    """Bonus when every consumer is served this step; 0 for an empty world."""
    if report.consumer_covered.size == 0:
        return 0.0
    return gains.all_covered if bool(report.consumer_covered.all()) else 0.0


def collision_penalty(state: WorldState, graph: CommGraph,
                      gains: RewardGains) -> np.ndarray:
    """-collision * squared distance, for neighbor pairs closer than the
    squared-distance threshold.  Vanishes at exact contact by construction."""
    n = state.n_agents
    out = np.zeros(n)
    sq = np.sum(
        (state.positions[:, None, :] - state.positions[None, :, :]) ** 2, axis=-1
    )
    for i in range(n):
        for j in graph.neighbors[i]:
            if sq[i, j] < gains.collision_eps:
                out[i] -= gains.collision * sq[i, j]
    return out


def assignment_shaping(prev: WorldState, nxt: WorldState, a: np.ndarray,
                       gains: RewardGains) -> np.ndarray:
    """Progress toward the assigned consumer, or a flat bonus once inside."""
    targets = assigned_consumer(a)
    goal = nxt.consumer_positions[targets]
    dist_now = np.linalg.norm(nxt.positions - goal, axis=1)
    dist_prev = np.linalg.norm(prev.positions - goal, axis=1)
    inside = dist_now <= nxt.radii[targets]
    progress = dist_prev ** 2 - dist_now ** 2
    return np.where(inside, gains.in_area, progress)


def release_rewards(report: DepletionReport,
                    gains: RewardGains) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(released-quantity, sub-team completion, persistent-hold) terms."""
    im = gains.release * report.released
    contributed = report.released_to[:, report.satisfied_now].sum(axis=1) > 0.0
    rc = gains.subteam * contributed
    is_ = gains.hold * report.covering
    return im, rc, is_


def total_reward(prev: WorldState, nxt: WorldState, graph: CommGraph,
                 a: np.ndarray, report: DepletionReport,
                 gains: RewardGains) -> RewardBreakdown:
    n = nxt.n_agents
    im, rc, is_ = release_rewards(report, gains)
    terms = {
        "id": assignment_shaping(prev, nxt, a, gains),
        "im": im,
        "is": is_,
        "rc": rc,
        "collision": collision_penalty(nxt, graph, gains),
        "s": np.full(n, coverage_reward(report, gains)),
        "g": np.full(n, global_demand_reward(prev, nxt)),
    }
    total = np.zeros(n)
    for name in TERMS:
        total = total + terms[name]
    return RewardBreakdown(terms=terms, total=total)
