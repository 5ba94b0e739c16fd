import numpy as np
import pytest

from swarmalloc import AssignmentProblem, objective, solve_exact, solve_oracle
from swarmalloc.assignment import (
    assigned_consumer,
    choice_to_matrix,
    from_state,
    iter_choice_vectors,
)
from swarmalloc.errors import BudgetExceeded, ConstraintViolation, Infeasible


def random_problem(rng, n, m, r):
    return AssignmentProblem(
        distances=rng.uniform(0.0, 2.0, (n, m)),
        supplies=rng.uniform(0.0, 1.5, (n, r)),
        demands=rng.uniform(0.0, 1.5, (m, r)),
    )


class TestObjective:
    def test_single_pair_hand_value(self):
        # zero distance, matched supply/demand: mismatch 0, trip cost so/de = 1
        problem = AssignmentProblem([[0.0]], [[1.0]], [[1.0]])
        assert objective(problem, np.array([[1]])) == 1.0

    def test_infeasible_rejected(self):
        problem = AssignmentProblem([[0.0, 0.0], [0.0, 0.0]],
                                    [[1.0], [1.0]], [[1.0], [1.0]])
        with pytest.raises(ConstraintViolation):
            objective(problem, np.array([[0, 0], [1, 0]]))

    def test_zero_supply_leaves_only_mismatch(self):
        rng = np.random.default_rng(0)
        demands = rng.uniform(0.5, 1.5, (2, 2))
        problem = AssignmentProblem(rng.uniform(0, 1, (3, 2)),
                                    np.zeros((3, 2)), demands)
        a = choice_to_matrix((0, 1, 0), 2)
        assert np.isclose(objective(problem, a), (demands ** 2).sum())

    def test_matched_delivery_zeroes_mismatch(self):
        # two agents fully covering two consumers: only trip costs remain
        supplies = np.array([[1.0], [2.0]])
        demands = np.array([[1.0], [2.0]])
        problem = AssignmentProblem(np.zeros((2, 2)), supplies, demands)
        a = np.eye(2, dtype=int)
        trips = supplies[:, 0] / demands[:, 0]
        assert np.isclose(objective(problem, a), trips.sum())

    def test_agent_permutation_invariance(self):
        rng = np.random.default_rng(3)
        problem = random_problem(rng, 5, 3, 2)
        a = choice_to_matrix((0, 1, 2, 0, 1), 3)
        perm = rng.permutation(5)
        permuted = AssignmentProblem(problem.distances[perm],
                                     problem.supplies[perm], problem.demands)
        assert np.isclose(objective(problem, a), objective(permuted, a[perm]))

    def test_demand_floor_guards_reciprocal(self):
        problem = AssignmentProblem([[0.0]], [[1.0]], [[0.0]])
        value = objective(problem, np.array([[1]]))
        assert np.isfinite(value)


class TestOracle:
    def test_enumeration_counts_two_by_two(self):
        candidates = list(iter_choice_vectors(2, 2))
        assert len(candidates) == 4
        feasible = [c for c in candidates if len(set(c)) == 2]
        assert len(feasible) == 2

    def test_enumeration_counts_three_by_two(self):
        candidates = list(iter_choice_vectors(3, 2))
        assert len(candidates) == 8
        feasible = [c for c in candidates if len(set(c)) == 2]
        assert len(feasible) == 6

    def test_budget_guard(self):
        problem = AssignmentProblem(np.zeros((8, 3)), np.ones((8, 1)),
                                    np.ones((3, 1)))
        with pytest.raises(BudgetExceeded):
            solve_oracle(problem, budget=100)

    def test_infeasible_when_agents_short(self):
        problem = AssignmentProblem(np.zeros((1, 2)), np.ones((1, 1)),
                                    np.ones((2, 1)))
        with pytest.raises(Infeasible):
            solve_oracle(problem)


class TestExact:
    def test_adjacent_pairs_get_identity(self):
        # agent i sits next to consumer i; matched unit supplies and demands
        problem = AssignmentProblem(
            distances=np.array([[0.1, 2.0], [2.0, 0.1]]),
            supplies=np.array([[1.0], [1.0]]),
            demands=np.array([[1.0], [1.0]]),
        )
        a, value = solve_exact(problem)
        assert np.array_equal(a, np.eye(2, dtype=int))
        feasible = [np.eye(2, dtype=int), np.eye(2, dtype=int)[::-1]]
        assert value == min(objective(problem, f) for f in feasible)

    def test_single_pair_unique_point(self):
        problem = AssignmentProblem([[0.7]], [[0.4]], [[1.2]])
        a, value = solve_exact(problem)
        assert np.array_equal(a, [[1]])
        assert value == objective(problem, np.array([[1]]))

    def test_infeasible(self):
        problem = AssignmentProblem(np.zeros((1, 2)), np.ones((1, 1)),
                                    np.ones((2, 1)))
        with pytest.raises(Infeasible):
            solve_exact(problem)

    def test_node_budget(self):
        rng = np.random.default_rng(0)
        problem = random_problem(rng, 6, 3, 1)
        with pytest.raises(BudgetExceeded):
            solve_exact(problem, node_budget=5)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_oracle_on_random_instances(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, min(n, 3) + 1))
        r = int(rng.integers(1, 3))
        problem = random_problem(rng, n, m, r)
        a_exact, v_exact = solve_exact(problem)
        a_oracle, v_oracle = solve_oracle(problem)
        assert v_exact == v_oracle
        assert np.array_equal(a_exact, a_oracle)

    def test_four_by_two_instances(self):
        for seed in range(10):
            rng = np.random.default_rng((seed, 42))
            problem = random_problem(rng, 4, 2, 2)
            _, v_exact = solve_exact(problem)
            _, v_oracle = solve_oracle(problem)
            assert v_exact == v_oracle


def test_from_state_distances(small_env):
    from swarmalloc import reset

    state = reset(small_env, seed=1)
    problem = from_state(state)
    expected = np.linalg.norm(state.positions[0] - state.consumer_positions[1])
    assert np.isclose(problem.distances[0, 1], expected)


def test_assigned_consumer_roundtrip():
    a = choice_to_matrix((2, 0, 1, 2), 3)
    assert np.array_equal(assigned_consumer(a), [2, 0, 1, 2])
