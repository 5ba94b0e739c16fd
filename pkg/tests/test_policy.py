import numpy as np
import pytest

from swarmalloc import EnvConfig, NetConfig, comm_graph, observe_all, reset
from swarmalloc import autodiff as ad
from swarmalloc import network as net
from swarmalloc import policy
from swarmalloc.errors import NonFiniteOutput

DT = 0.05


@pytest.fixture
def scene(small_env):
    state = reset(small_env, seed=6)
    graph = comm_graph(state, small_env.comm_radius)
    cons_in, agent_in, positions = net.team_inputs(observe_all(state))
    return cons_in, agent_in, positions, graph.support


@pytest.fixture
def actor(small_env, tiny_net):
    return policy.init_actor(tiny_net, small_env.dim, small_env.n_resources, seed=0)


@pytest.fixture
def critic(small_env, tiny_net):
    return policy.init_critic(tiny_net, small_env.dim, small_env.n_resources, seed=1)


def initial(params, n=4):
    return net.initial_state(n, params)


class TestAct:
    def test_deterministic_mode_returns_mean(self, scene, actor):
        cons_in, agent_in, positions, support = scene
        x = initial(actor)
        actions, _, _ = policy.act(actor, cons_in, agent_in, positions, support,
                                   x, DT, None, deterministic=True)
        mu, _, _ = policy.policy_output(actor, cons_in, agent_in, positions,
                                        support, x, DT)
        assert np.array_equal(actions, mu.val)

    def test_log_prob_of_mean(self, scene, actor):
        cons_in, agent_in, positions, support = scene
        x = initial(actor)
        mu, sigma, _ = policy.policy_output(actor, cons_in, agent_in, positions,
                                            support, x, DT)
        lp = policy.gaussian_log_prob(mu, sigma, mu.val).val
        expected = -np.log(sigma.val * np.sqrt(2 * np.pi)).sum(axis=-1)
        assert np.allclose(lp, expected, atol=1e-12)

    def test_fixed_seed_reproducible(self, scene, actor):
        cons_in, agent_in, positions, support = scene
        x = initial(actor)
        a1, lp1, x1 = policy.act(actor, cons_in, agent_in, positions, support,
                                 x, DT, np.random.default_rng(9))
        a2, lp2, x2 = policy.act(actor, cons_in, agent_in, positions, support,
                                 x, DT, np.random.default_rng(9))
        assert np.array_equal(a1, a2)
        assert np.array_equal(lp1, lp2)
        assert np.array_equal(x1, x2)

    def test_reevaluation_is_bit_identical(self, scene, actor):
        cons_in, agent_in, positions, support = scene
        x = initial(actor)
        actions, log_probs, _ = policy.act(actor, cons_in, agent_in, positions,
                                           support, x, DT,
                                           np.random.default_rng(3))
        again, _ = policy.action_log_prob(actor, cons_in, agent_in, positions,
                                          support, x, actions, DT)
        assert np.array_equal(log_probs, again.val)

    def test_sigma_positive_and_floored(self, scene, actor):
        cons_in, agent_in, positions, support = scene
        _, sigma, _ = policy.policy_output(actor, cons_in, agent_in, positions,
                                           support, initial(actor), DT)
        assert (sigma.val >= policy.SIGMA_FLOOR).all()

    def test_nonfinite_rejected(self, scene, actor):
        cons_in, agent_in, positions, support = scene
        bad = {k: v for k, v in actor.items()}
        bad["head.w0"] = ad.parameter(actor["head.w0"].val * np.nan)
        with np.errstate(invalid="ignore"), pytest.raises(NonFiniteOutput):
            policy.act(bad, cons_in, agent_in, positions, support,
                       initial(actor), DT, np.random.default_rng(0))


class TestGlobalSigma:
    def test_global_vector_fallback(self, small_env):
        cfg = NetConfig(embed=6, state=5, head=(8,), sigma_mode="global")
        actor = policy.init_actor(cfg, small_env.dim, small_env.n_resources, seed=0)
        assert "sigma_raw" in actor
        state = reset(small_env, seed=2)
        graph = comm_graph(state, small_env.comm_radius)
        cons_in, agent_in, positions = net.team_inputs(observe_all(state))
        mu, sigma, _ = policy.policy_output(actor, cons_in, agent_in, positions,
                                            graph.support, initial(actor), DT,
                                            sigma_mode="global")
        assert mu.shape == (4, 2)
        assert sigma.shape == (4, 2)
        assert np.allclose(sigma.val, sigma.val[0])


class TestEvaluate:
    def test_single_agent_single_value(self, tiny_net):
        cfg = EnvConfig(n_agents=1, n_consumers=1, n_resources=1)
        critic = policy.init_critic(tiny_net, cfg.dim, cfg.n_resources, seed=0)
        state = reset(cfg, seed=4)
        graph = comm_graph(state, cfg.comm_radius)
        cons_in, agent_in, positions = net.team_inputs(observe_all(state))
        values, x_next = policy.evaluate(critic, cons_in, agent_in, positions,
                                         graph.support, initial(critic, 1), DT)
        assert values.shape == (1,)
        assert x_next.shape == (1, tiny_net.state)

    def test_deterministic(self, scene, critic):
        cons_in, agent_in, positions, support = scene
        v1, _ = policy.evaluate(critic, cons_in, agent_in, positions, support,
                                initial(critic), DT)
        v2, _ = policy.evaluate(critic, cons_in, agent_in, positions, support,
                                initial(critic), DT)
        assert np.array_equal(v1, v2)

    def test_identical_agents_identical_values(self, tiny_net):
        # two clones (same observation, same state) must agree exactly
        cfg = EnvConfig(n_agents=2, n_consumers=1, n_resources=1)
        critic = policy.init_critic(tiny_net, cfg.dim, cfg.n_resources, seed=0)
        state = reset(cfg, seed=5)
        state.positions[1] = state.positions[0]
        state.supplies[1] = state.supplies[0]
        graph = comm_graph(state, cfg.comm_radius)
        cons_in, agent_in, positions = net.team_inputs(observe_all(state))
        values, _ = policy.evaluate(critic, cons_in, agent_in, positions,
                                    graph.support, initial(critic, 2), DT)
        assert values[0] == values[1]

    def test_value_spread_codecays_with_state_spread(self, tiny_net):
        # two agents, same inputs, different initial states: as the consensus
        # states contract together, so do the values
        cfg = EnvConfig(n_agents=2, n_consumers=1, n_resources=1)
        critic = policy.init_critic(tiny_net, cfg.dim, cfg.n_resources, seed=3)
        state = reset(cfg, seed=6)
        state.positions[1] = state.positions[0]
        state.supplies[1] = state.supplies[0]
        graph = comm_graph(state, cfg.comm_radius)
        cons_in, agent_in, positions = net.team_inputs(observe_all(state))
        x = np.random.default_rng(0).uniform(-1, 1, (2, tiny_net.state))
        state_spreads, value_spreads = [], []
        for _ in range(400):
            values, x = policy.evaluate(critic, cons_in, agent_in, positions,
                                        graph.support, x, DT)
            state_spreads.append(np.abs(x[0] - x[1]).max())
            value_spreads.append(abs(values[0] - values[1]))
        assert state_spreads[-1] < 1e-6 * state_spreads[0]
        assert value_spreads[-1] < 1e-4 * max(value_spreads[0], 1e-12)
        # decay is essentially monotone in both
        ratio = np.array(value_spreads[1:]) / (np.array(value_spreads[:-1]) + 1e-300)
        assert np.median(ratio) < 1.0
