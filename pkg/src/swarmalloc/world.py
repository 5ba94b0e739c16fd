"""Discrete-time simulation of the allocation environment.

Agents are single integrators in a bounded box.  Consumers sit at fixed
locations, each with an interaction radius and a per-resource demand.
Instantaneous resources transfer the moment a supplying agent enters the
radius; persistent demands are only *covered* while a matching agent stays
inside, their value never decreases.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .config import EnvConfig
from .errors import ConfigError, DimensionError


class ResourceKind(enum.IntEnum):
    INSTANTANEOUS = 0
    PERSISTENT = 1


@dataclass(frozen=True)
class Agent:
    position: np.ndarray       # (dim,)
    supply: np.ndarray         # (r,), non-negative
    kinds: np.ndarray          # (r,) ResourceKind values


@dataclass(frozen=True)
class Consumer:
    position: np.ndarray       # (dim,)
    demand: np.ndarray         # (r,), non-negative
    kinds: np.ndarray          # (r,) ResourceKind values
    radius: float


@dataclass
class WorldState:
    positions: np.ndarray           # (N, dim)
    supplies: np.ndarray            # (N, r)
    supply_kinds: np.ndarray        # (N, r) int
    consumer_positions: np.ndarray  # (M, dim)
    demands: np.ndarray             # (M, r)
    demand_kinds: np.ndarray        # (M, r) int
    radii: np.ndarray               # (M,)
    bounds: np.ndarray              # (2, dim) rows: lo, hi
    time: int = 0

    @property
    def n_agents(self) -> int:
        return self.positions.shape[0]

    @property
    def n_consumers(self) -> int:
        return self.consumer_positions.shape[0]

    @property
    def n_resources(self) -> int:
        return self.supplies.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def agent(self, i: int) -> Agent:
        return Agent(self.positions[i].copy(), self.supplies[i].copy(),
                     self.supply_kinds[i].copy())

    def consumer(self, m: int) -> Consumer:
        return Consumer(self.consumer_positions[m].copy(), self.demands[m].copy(),
                        self.demand_kinds[m].copy(), float(self.radii[m]))

    def copy(self) -> "WorldState":
        return WorldState(
            self.positions.copy(), self.supplies.copy(), self.supply_kinds.copy(),
            self.consumer_positions.copy(), self.demands.copy(),
            self.demand_kinds.copy(), self.radii.copy(), self.bounds.copy(),
            self.time,
        )


@dataclass(frozen=True)
class Observation:
    """One agent's partial view: itself plus every consumer, nothing else."""

    own_position: np.ndarray        # (dim,), normalized to [-1, 1]
    own_supply: np.ndarray          # (r,)
    own_kinds: np.ndarray           # (r,)
    consumer_positions: np.ndarray  # (M, dim), normalized
    consumer_demands: np.ndarray    # (M, r)
    consumer_kinds: np.ndarray      # (M, r)
    consumer_radii: np.ndarray      # (M,)


@dataclass(frozen=True)
class CommGraph:
    support: np.ndarray   # (N, N) left-normalized adjacency with self-loops
    neighbors: tuple      # tuple of tuples, excludes self


@dataclass
class DepletionReport:
    released: np.ndarray            # (N,) total quantity released this step
    released_to: np.ndarray         # (N, M) per-consumer released quantities
    covering: np.ndarray            # (N,) bool, holding a persistent demand
    persistent_covered: np.ndarray  # (M,) bool
    satisfied_now: np.ndarray       # (M,) bool, instantaneous demand hit 0 this step
    consumer_covered: np.ndarray    # (M,) bool, served by at least one agent

    @classmethod
    def empty(cls, n_agents: int, n_consumers: int) -> "DepletionReport":
        return cls(
            released=np.zeros(n_agents),
            released_to=np.zeros((n_agents, n_consumers)),
            covering=np.zeros(n_agents, dtype=bool),
            persistent_covered=np.zeros(n_consumers, dtype=bool),
            satisfied_now=np.zeros(n_consumers, dtype=bool),
            consumer_covered=np.zeros(n_consumers, dtype=bool),
        )


def _place_consumers(rng, config: EnvConfig, lo, hi) -> np.ndarray:
    """Uniform consumer positions with pairwise separation >= 2 * radius."""
    min_sep = 2.0 * config.radius
    for _ in range(64):
        placed = []
        ok = True
        for _ in range(config.n_consumers):
            for _ in range(256):
                cand = rng.uniform(lo, hi, size=config.dim)
                if all(np.linalg.norm(cand - p) >= min_sep for p in placed):
                    placed.append(cand)
                    break
            else:
                ok = False
                break
        if ok:
            return np.array(placed)
    raise ConfigError(
        f"could not place {config.n_consumers} consumers with separation {min_sep} "
        f"inside bounds [{config.bounds_lo}, {config.bounds_hi}]^{config.dim}"
    )


def reset(config: EnvConfig, seed: int) -> WorldState:
    """Sample a fresh episode state; deterministic for a fixed seed.

    Total supply is rescaled to not exceed total demand so the assignment
    problem always has a meaningful optimum.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    lo = np.full(config.dim, config.bounds_lo)
    hi = np.full(config.dim, config.bounds_hi)

    positions = rng.uniform(lo, hi, size=(config.n_agents, config.dim))
    consumer_positions = _place_consumers(rng, config, lo, hi)
    demands = rng.uniform(config.demand_low, config.demand_high,
                          size=(config.n_consumers, config.n_resources))
    supplies = rng.uniform(config.supply_low, config.supply_high,
                           size=(config.n_agents, config.n_resources))
    total_supply = supplies.sum()
    total_demand = demands.sum()
    if total_supply > total_demand:
        supplies *= total_demand / total_supply

    # one kind per resource slot, shared by every agent and consumer
    kinds = (rng.random(config.n_resources) < config.persistent_prob).astype(np.int64)
    return WorldState(
        positions=positions,
        supplies=supplies,
        supply_kinds=np.tile(kinds, (config.n_agents, 1)),
        consumer_positions=consumer_positions,
        demands=demands,
        demand_kinds=np.tile(kinds, (config.n_consumers, 1)),
        radii=np.full(config.n_consumers, config.radius),
        bounds=np.stack([lo, hi]),
        time=0,
    )


def step(state: WorldState, actions: np.ndarray, dt: float,
         u_max: float = 1.0) -> tuple[WorldState, DepletionReport]:
    """Advance one tick: integrate motion, clamp to bounds, deplete resources."""
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != (state.n_agents, state.dim):
        raise DimensionError(
            f"actions must have shape {(state.n_agents, state.dim)}, got {actions.shape}"
        )
    if dt <= 0:
        raise ValueError("dt must be positive")

    nxt = state.copy()
    u = np.clip(actions, -u_max, u_max)
    nxt.positions = np.clip(state.positions + u * dt, state.bounds[0], state.bounds[1])
    nxt.time = state.time + 1

    report = DepletionReport.empty(state.n_agents, state.n_consumers)
    inst_open_before = _open_instantaneous(nxt)

    dists = np.linalg.norm(
        nxt.positions[:, None, :] - nxt.consumer_positions[None, :, :], axis=-1
    )
    for i in range(nxt.n_agents):
        inside = np.flatnonzero(dists[i] <= nxt.radii)
        # nearest consumer is served first when areas overlap
        for m in inside[np.lexsort((inside, dists[i, inside]))]:
            for l in range(nxt.n_resources):
                if nxt.supply_kinds[i, l] != nxt.demand_kinds[m, l]:
                    continue
                if nxt.demand_kinds[m, l] == ResourceKind.INSTANTANEOUS:
                    amount = min(nxt.supplies[i, l], nxt.demands[m, l])
                    if amount > 0.0:
                        nxt.supplies[i, l] -= amount
                        nxt.demands[m, l] -= amount
                        report.released[i] += amount
                        report.released_to[i, m] += amount
                else:
                    if nxt.supplies[i, l] > 0.0 and nxt.demands[m, l] > 0.0:
                        report.covering[i] = True
                        report.persistent_covered[m] = True

    inst_open_after = _open_instantaneous(nxt)
    report.satisfied_now = inst_open_before & ~inst_open_after
    report.consumer_covered = (report.released_to.sum(axis=0) > 0.0) | report.persistent_covered
    return nxt, report


def _open_instantaneous(state: WorldState) -> np.ndarray:
    """Per consumer: True while any instantaneous demand is still positive."""
    inst = state.demand_kinds == ResourceKind.INSTANTANEOUS
    return ((state.demands > 0.0) & inst).any(axis=1)


def normalize_positions(positions: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    lo, hi = bounds[0], bounds[1]
    return 2.0 * (positions - lo) / (hi - lo) - 1.0


def observe(state: WorldState, i: int) -> Observation:
    if not 0 <= i < state.n_agents:
        raise IndexError(f"agent index {i} out of range for {state.n_agents} agents")
    return Observation(
        own_position=normalize_positions(state.positions[i], state.bounds),
        own_supply=state.supplies[i].copy(),
        own_kinds=state.supply_kinds[i].copy(),
        consumer_positions=normalize_positions(state.consumer_positions, state.bounds),
        consumer_demands=state.demands.copy(),
        consumer_kinds=state.demand_kinds.copy(),
        consumer_radii=state.radii.copy(),
    )


def observe_all(state: WorldState) -> list[Observation]:
    return [observe(state, i) for i in range(state.n_agents)]


def comm_graph(state: WorldState, comm_radius: float) -> CommGraph:
    """Left-normalized adjacency with self-loops; neighbors within the radius."""
    if comm_radius <= 0:
        raise ValueError("comm_radius must be positive")
    n = state.n_agents
    diffs = state.positions[:, None, :] - state.positions[None, :, :]
    dists = np.linalg.norm(diffs, axis=-1)
    adjacency = (dists <= comm_radius).astype(np.float64)
    np.fill_diagonal(adjacency, 1.0)
    support = adjacency / adjacency.sum(axis=1, keepdims=True)
    neighbors = tuple(
        tuple(j for j in range(n) if j != i and adjacency[i, j] > 0.0) for i in range(n)
    )
    return CommGraph(support=support, neighbors=neighbors)
