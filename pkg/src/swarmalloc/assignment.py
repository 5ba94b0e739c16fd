"""Exact agent-to-consumer assignment.

The cost couples a quadratic demand-mismatch term with a linear term that
prefers short trips and supply-starved consumers.  Every agent is assigned
to exactly one consumer and every consumer receives at least one agent, so
the search space is the surjections from agents onto consumers.

``solve_exact`` runs a small branch-and-bound over per-agent choices;
``solve_oracle`` enumerates everything and exists to cross-check it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded, ConstraintViolation, Infeasible

DEMAND_FLOOR = 1e-6  # guards the elementwise reciprocal of the demand matrix


@dataclass(frozen=True)
class AssignmentProblem:
    distances: np.ndarray  # (N, M) agent-to-consumer Euclidean distances
    supplies: np.ndarray   # (N, r)
    demands: np.ndarray    # (M, r)

    def __post_init__(self):
        for name in ("distances", "supplies", "demands"):
            arr = getattr(self, name)
            object.__setattr__(self, name, np.asarray(arr, dtype=np.float64))
        if self.distances.shape != (self.n_agents, self.n_consumers):
            raise ConstraintViolation(
                f"distances must be (N={self.n_agents}, M={self.n_consumers}), "
                f"got {self.distances.shape}"
            )
        if not all(np.all(np.isfinite(a)) for a in (self.distances, self.supplies, self.demands)):
            raise ConstraintViolation("problem data must be finite")

    @property
    def n_agents(self) -> int:
        return self.supplies.shape[0]

    @property
    def n_consumers(self) -> int:
        return self.demands.shape[0]


def from_state(state) -> AssignmentProblem:
    dists = np.linalg.norm(
        state.positions[:, None, :] - state.consumer_positions[None, :, :], axis=-1
    )
    return AssignmentProblem(dists, state.supplies.copy(), state.demands.copy())


def choice_to_matrix(choices, n_consumers: int) -> np.ndarray:
    a = np.zeros((len(choices), n_consumers), dtype=np.int64)
    a[np.arange(len(choices)), list(choices)] = 1
    return a


def check_feasible(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or not np.isin(a, (0, 1)).all():
        raise ConstraintViolation("assignment must be a binary matrix")
    if not (a.sum(axis=1) == 1).all():
        raise ConstraintViolation("every agent must be assigned to exactly one consumer")
    if not (a.sum(axis=0) >= 1).all():
        raise ConstraintViolation("every consumer must receive at least one agent")
    return a


def _trip_costs(problem: AssignmentProblem) -> np.ndarray:
    """Per-(agent, consumer) linear cost: distance weighted by the agent's
    total load, plus supply divided by (floored) demand."""
    total_supply = problem.supplies.sum(axis=1)
    demand = np.maximum(problem.demands, DEMAND_FLOOR)
    return problem.distances * total_supply[:, None] + problem.supplies @ (1.0 / demand).T


def objective(problem: AssignmentProblem, a: np.ndarray) -> float:
    """Demand-mismatch plus trip cost for a feasible assignment."""
    a = check_feasible(a)
    if a.shape != problem.distances.shape:
        raise ConstraintViolation(
            f"assignment shape {a.shape} does not match problem {problem.distances.shape}"
        )
    mismatch = problem.demands - a.T @ problem.supplies
    quad = float((mismatch * mismatch).sum())
    linear = float(np.abs(_trip_costs(problem) * a).sum())
    return quad + linear


def iter_choice_vectors(n_agents: int, n_consumers: int):
    """All row-feasible assignments as per-agent consumer indices."""
    return itertools.product(range(n_consumers), repeat=n_agents)


def solve_oracle(problem: AssignmentProblem,
                 budget: int = 10 ** 6) -> tuple[np.ndarray, float]:
    """Exhaustive minimum; ties resolved toward the row-major smallest matrix."""
    n, m = problem.n_agents, problem.n_consumers
    if n < m:
        raise Infeasible(f"{n} agents cannot cover {m} consumers")
    if m ** n > budget:
        raise BudgetExceeded(f"{m}^{n} candidates exceed the oracle budget {budget}")
    best = None
    for choices in iter_choice_vectors(n, m):
        if len(set(choices)) < m:
            continue
        a = choice_to_matrix(choices, m)
        key = (objective(problem, a), tuple(a.ravel()))
        if best is None or key < best[0]:
            best = (key, a)
    return best[1], best[0][0]


def solve_exact(problem: AssignmentProblem,
                node_budget: int = 2 * 10 ** 6) -> tuple[np.ndarray, float]:
    """Branch-and-bound over per-agent choices.

    The bound under a partial assignment adds, per remaining agent, the
    cheapest trip cost, and counts only irreversible demand overshoot in the
    quadratic term (future deliveries can still close any undershoot).
    Slack on the prune keeps float summation-order noise from cutting the
    optimum; final selection among explored leaves matches the oracle's
    tie rule exactly.
    """
    n, m = problem.n_agents, problem.n_consumers
    if n < m:
        raise Infeasible(f"{n} agents cannot cover {m} consumers")
    costs = _trip_costs(problem)
    cheapest_trip = costs.min(axis=1)
    suffix_trips = np.concatenate([np.cumsum(cheapest_trip[::-1])[::-1], [0.0]])

    best_key = None
    best_a = None
    nodes = 0
    choices = np.zeros(n, dtype=np.int64)
    column_counts = np.zeros(m, dtype=np.int64)
    delivered = np.zeros_like(problem.demands)

    def overshoot() -> float:
        over = np.maximum(delivered - problem.demands, 0.0)
        return float((over * over).sum())

    def descend(i: int, partial_trips: float):
        nonlocal best_key, best_a, nodes
        nodes += 1
        if nodes > node_budget:
            raise BudgetExceeded(f"branch-and-bound exceeded {node_budget} nodes")
        uncovered = int((column_counts == 0).sum())
        if uncovered > n - i:
            return
        bound = partial_trips + suffix_trips[i] + overshoot()
        if best_key is not None and bound >= best_key[0] + 1e-12 * (1.0 + abs(best_key[0])):
            return
        if i == n:
            a = choice_to_matrix(choices, m)
            key = (objective(problem, a), tuple(a.ravel()))
            if best_key is None or key < best_key:
                best_key, best_a = key, a
            return
        for j in range(m - 1, -1, -1):
            choices[i] = j
            column_counts[j] += 1
            delivered[j] += problem.supplies[i]
            descend(i + 1, partial_trips + costs[i, j])
            delivered[j] -= problem.supplies[i]
            column_counts[j] -= 1

    descend(0, 0.0)
    return best_a, best_key[0]


def assigned_consumer(a: np.ndarray) -> np.ndarray:
    """Per-agent consumer index of a feasible assignment."""
    return np.argmax(check_feasible(a), axis=1)
