import numpy as np
import pytest

from swarmalloc import EnvConfig, NetConfig, comm_graph, observe_all, reset
from swarmalloc import autodiff as ad
from swarmalloc import network as net
from swarmalloc.analysis import jacobian_log_norm
from swarmalloc.errors import NonFiniteState, ShapeMismatch

from conftest import max_rel_err

DT = 0.05


@pytest.fixture
def team(small_env, tiny_net):
    state = reset(small_env, seed=3)
    graph = comm_graph(state, small_env.comm_radius)
    cons_in, agent_in, positions = net.team_inputs(observe_all(state))
    params = net.init_params(tiny_net, small_env.dim, small_env.n_resources,
                             out_dim=4, seed=0)
    return params, cons_in, agent_in, positions, graph.support


def random_cell_params(seed, f=4, tau_scale=1.0, coupling_scale=0.1):
    """Parameter draws satisfying the cell invariants by construction."""
    rng = np.random.default_rng(seed)
    return {
        "cell.tau_raw": ad.parameter(rng.normal(scale=tau_scale, size=f)),
        "cell.coupling_raw": ad.parameter(rng.normal(size=(f, f)) * coupling_scale),
        "cell.drive": ad.parameter(rng.uniform(-1.0, 1.0, size=f)),
    }


def normalized_support(rng, n):
    adjacency = (rng.random((n, n)) < 0.5).astype(float)
    adjacency = np.maximum(adjacency, adjacency.T)
    np.fill_diagonal(adjacency, 1.0)
    return adjacency / adjacency.sum(axis=1, keepdims=True)


class TestEncoders:
    def test_resource_order_invariance(self, team):
        params, cons_in, *_ = team
        swapped = cons_in[:, ::-1, :].copy()
        a = net.encode_consumers(params, cons_in).val
        b = net.encode_consumers(params, swapped).val
        assert np.allclose(a, b, atol=1e-12)

    def test_identical_consumers_identical_rows(self, team):
        params, cons_in, *_ = team
        dup = np.concatenate([cons_in[:1], cons_in[:1]], axis=0)
        feats = net.encode_consumers(params, dup).val
        assert np.array_equal(feats[0], feats[1])

    def test_zero_demand_consumer_is_finite(self, team):
        params, cons_in, *_ = team
        cons = cons_in.copy()
        cons[:, :, -2] = 0.0
        assert np.all(np.isfinite(net.encode_consumers(params, cons).val))

    def test_identical_agents_identical_rows(self, team):
        params, _, agent_in, *_ = team
        dup = np.concatenate([agent_in[:1], agent_in[:1]], axis=0)
        feats = net.encode_agents(params, dup).val
        assert np.array_equal(feats[0], feats[1])

    def test_embedding_width_from_config(self, small_env):
        params = net.init_params(NetConfig(embed=64, state=16, head=(8,)),
                                 small_env.dim, small_env.n_resources, 2, seed=1)
        state = reset(small_env, seed=0)
        cons_in, agent_in, _ = net.team_inputs(observe_all(state))
        assert net.encode_consumers(params, cons_in).shape == (small_env.n_consumers, 64)
        assert net.encode_agents(params, agent_in).shape == (small_env.n_agents, 64)

    def test_agent_permutation_permutes_rows(self, team):
        params, _, agent_in, *_ = team
        perm = np.array([2, 0, 3, 1])
        feats = net.encode_agents(params, agent_in).val
        permuted = net.encode_agents(params, agent_in[perm]).val
        assert np.array_equal(permuted, feats[perm])


class TestMixFeatures:
    def test_identity_support_reduces_to_two_filters(self, team):
        params, cons_in, agent_in, _, _ = team
        n = agent_in.shape[0]
        agent_feat = net.encode_agents(params, agent_in)
        cons_feat = net.encode_consumers(params, cons_in)
        hop1_zero = {k: v for k, v in params.items()}
        hop1_zero["mix.hop1"] = ad.parameter(np.zeros_like(params["mix.hop1"].val))
        mixed = net.mix_features(hop1_zero, agent_feat, cons_feat, np.eye(n)).val
        expected = (
            agent_feat.val @ params["mix.hop0"].val
            + cons_feat.val.sum(axis=0)
            + params["mix.bias"].val
        )
        assert np.allclose(mixed, expected, atol=1e-12)

    def test_permutation_equivariance(self, team):
        params, cons_in, agent_in, _, support = team
        agent_feat = net.encode_agents(params, agent_in)
        cons_feat = net.encode_consumers(params, cons_in)
        base = net.mix_features(params, agent_feat, cons_feat, support).val
        perm = np.array([1, 3, 0, 2])
        permuted = net.mix_features(
            params, net.encode_agents(params, agent_in[perm]), cons_feat,
            support[np.ix_(perm, perm)]).val
        assert np.allclose(permuted, base[perm], atol=1e-12)

    def test_width_mismatch_rejected(self, team):
        params, cons_in, agent_in, _, support = team
        cons_feat = net.encode_consumers(params, cons_in)
        with pytest.raises(ShapeMismatch):
            net.mix_features(params, np.zeros((4, 3)), cons_feat, support)


class TestAttention:
    def test_rows_sum_to_one(self, team):
        params, cons_in, agent_in, _, support = team
        res = net.forward(params, cons_in, agent_in, team[3], support,
                          np.zeros((4, 5)), DT)
        assert np.allclose(res.attn.val.sum(axis=-1), 1.0, atol=1e-9)

    def test_equal_logits_uniform(self):
        m = 4
        attn = ad.softmax(ad.wrap(np.zeros((3, m))), axis=-1)
        assert np.allclose(attn.val, 1.0 / m)

    def test_single_consumer_all_ones(self, small_env, tiny_net):
        cfg = EnvConfig(n_agents=3, n_consumers=1, n_resources=2)
        state = reset(cfg, seed=1)
        graph = comm_graph(state, cfg.comm_radius)
        cons_in, agent_in, positions = net.team_inputs(observe_all(state))
        params = net.init_params(tiny_net, cfg.dim, cfg.n_resources, 4, seed=0)
        res = net.forward(params, cons_in, agent_in, positions, graph.support,
                          np.zeros((3, tiny_net.state)), DT)
        assert np.array_equal(res.attn.val, np.ones((3, 1)))


class TestGate:
    def test_nonnegative(self, team):
        params, cons_in, agent_in, positions, support = team
        res = net.forward(params, cons_in, agent_in, positions, support,
                          np.zeros((4, 5)), DT)
        assert (res.gate.val >= 0.0).all()

    def test_same_choice_same_row(self, team):
        params, cons_in, *_ = team
        cons_feat = net.encode_consumers(params, cons_in)
        attn = np.array([[0.9, 0.1], [0.8, 0.2], [0.1, 0.9]])
        gate = net.consumer_gate(params, attn, cons_feat).val
        assert np.array_equal(gate[0], gate[1])
        assert not np.array_equal(gate[0], gate[2])

    def test_argmax_scale_invariance(self, team):
        params, cons_in, *_ = team
        cons_feat = net.encode_consumers(params, cons_in)
        attn = np.array([[0.7, 0.3], [0.2, 0.8]])
        a = net.consumer_gate(params, attn, cons_feat).val
        b = net.consumer_gate(params, attn * 5.0, cons_feat).val
        assert np.array_equal(a, b)

    def test_tie_picks_lowest_index(self):
        attn = np.array([[0.5, 0.5], [0.2, 0.8]])
        assert np.array_equal(net.top_consumer(attn), [0, 1])


class TestCellStep:
    def test_zero_dynamics_fixed_point(self):
        params = random_cell_params(0)
        params["cell.tau_raw"] = ad.parameter(np.full(4, -60.0))  # tau ~ 0
        params["cell.coupling_raw"] = ad.parameter(np.zeros((4, 4)))
        x = np.random.default_rng(1).uniform(-1, 1, (3, 4))
        out = net.cell_step(params, x, np.zeros((3, 4)), np.eye(3), DT).val
        assert np.allclose(out, x, atol=1e-20)

    def test_zero_state_moves_along_gated_drive(self):
        params = random_cell_params(2)
        gate = np.abs(np.random.default_rng(3).normal(size=(3, 4)))
        out = net.cell_step(params, np.zeros((3, 4)), gate, np.eye(3), DT).val
        assert np.allclose(out, DT * gate * params["cell.drive"].val, atol=1e-15)

    def test_same_gate_rows_converge_monotonically(self):
        params = random_cell_params(4, tau_scale=0.5)
        rng = np.random.default_rng(5)
        support = np.full((2, 2), 0.5)
        gate = np.tile(np.abs(rng.normal(size=(1, 4))), (2, 1))
        x = rng.uniform(-1, 1, (2, 4))
        gaps = []
        for _ in range(200):
            gaps.append(np.abs(x[0] - x[1]).max())
            x = net.cell_step(params, x, gate, support, DT).val
        gaps = np.array(gaps)
        assert (np.diff(gaps) <= 1e-12).all()
        assert gaps[-1] < 1e-3 * gaps[0]

    def test_state_stays_in_box(self):
        for seed in range(5):
            params = random_cell_params(seed, coupling_scale=0.5)
            rng = np.random.default_rng(seed + 100)
            n, f = 4, 4
            support = normalized_support(rng, n)
            x = rng.uniform(-1, 1, (n, f))
            for _ in range(100):
                gate = np.abs(rng.normal(size=(n, f)))
                x = net.cell_step(params, x, gate, support, DT).val
                assert (np.abs(x) <= 1.0).all()

    def test_nonfinite_state_rejected(self):
        params = random_cell_params(0)
        x = np.full((2, 4), np.nan)
        with pytest.raises(NonFiniteState):
            net.cell_step(params, x, np.zeros((2, 4)), np.eye(2), DT)

    def test_contraction_bound_under_identical_inputs(self):
        # tau dominates the coupling: the Jacobian log-norm is negative and
        # trajectory gaps shrink at least that fast
        params = random_cell_params(7, coupling_scale=0.05)
        params["cell.tau_raw"] = ad.parameter(np.full(4, net.softplus_inverse(2.0)))
        rng = np.random.default_rng(8)
        n = 3
        support = normalized_support(rng, n)
        tau = np.logaddexp(0, params["cell.tau_raw"].val)
        raw = params["cell.coupling_raw"].val
        rate = jacobian_log_norm(tau, raw.T @ raw, support, np.zeros((n, 4)))
        assert rate < 0.0
        x1 = rng.uniform(-1, 1, (n, 4))
        x2 = rng.uniform(-1, 1, (n, 4))
        gap0 = np.abs(x1 - x2).max()
        for k in range(1, 120):
            gate = np.abs(rng.normal(size=(n, 4)))
            x1 = net.cell_step(params, x1, gate, support, DT).val
            x2 = net.cell_step(params, x2, gate, support, DT).val
            bound = 1.1 * np.exp(rate * k * DT) * gap0
            assert np.abs(x1 - x2).max() <= bound

    def test_stability_condition_holds_by_construction(self):
        from swarmalloc.analysis import log_norm_inf

        for seed in range(5):
            params = random_cell_params(seed, coupling_scale=0.6)
            raw = params["cell.coupling_raw"].val
            support = normalized_support(np.random.default_rng(seed), 4)
            assert log_norm_inf(np.kron((raw.T @ raw).T, support)) >= 0.0


class TestForward:
    def test_output_width(self, small_env):
        cfg = NetConfig(embed=6, state=5, head=(8,))
        params = net.init_params(cfg, small_env.dim, small_env.n_resources, 3, seed=2)
        state = reset(small_env, seed=1)
        graph = comm_graph(state, small_env.comm_radius)
        cons_in, agent_in, positions = net.team_inputs(observe_all(state))
        res = net.forward(params, cons_in, agent_in, positions, graph.support,
                          np.zeros((4, 5)), DT)
        n = small_env.n_agents
        feats = net.output_features(res.x_new, res.attn, res.cons_feat,
                                    res.mixed, positions)
        assert feats.shape == (n, 5 + 6 + 6 + small_env.dim)
        assert res.out.shape == (n, 3)

    def test_zero_inputs_zero_features(self):
        feats = net.output_features(np.zeros((2, 3)), np.zeros((2, 2)),
                                    np.zeros((2, 4)), np.zeros((2, 4)),
                                    np.zeros((2, 2)))
        assert np.array_equal(feats.val, np.zeros((2, 13)))

    def test_full_forward_permutation_equivariance(self, team):
        params, cons_in, agent_in, positions, support = team
        x = np.random.default_rng(0).uniform(-0.5, 0.5, (4, 5))
        base = net.forward(params, cons_in, agent_in, positions, support, x, DT)
        perm = np.array([3, 1, 0, 2])
        permuted = net.forward(params, cons_in, agent_in[perm], positions[perm],
                               support[np.ix_(perm, perm)], x[perm], DT)
        assert np.allclose(permuted.out.val, base.out.val[perm], atol=1e-12)
        assert np.allclose(permuted.x_new.val, base.x_new.val[perm], atol=1e-12)

    def test_batched_matches_single(self, team):
        params, cons_in, agent_in, positions, support = team
        rng = np.random.default_rng(1)
        xs = rng.uniform(-0.5, 0.5, (3, 4, 5))
        singles = [net.forward(params, cons_in, agent_in, positions, support,
                               xs[b], DT).out.val for b in range(3)]
        batched = net.forward(params, np.stack([cons_in] * 3),
                              np.stack([agent_in] * 3),
                              np.stack([positions] * 3),
                              np.stack([support] * 3), xs, DT).out.val
        assert np.allclose(batched, np.stack(singles), atol=1e-12)


class TestGradients:
    def test_forward_gradcheck(self, team):
        params, cons_in, agent_in, positions, support = team
        x = np.random.default_rng(2).uniform(-0.4, 0.4, (4, 5))

        def loss(p):
            res = net.forward(p, cons_in, agent_in, positions, support, x, DT)
            return ad.tsum(ad.square(res.out)) + ad.tsum(ad.square(res.x_new))

        got = ad.grad(params, loss)
        expected = ad.finite_difference(params, loss)
        assert max_rel_err(got, expected) < 1e-4


class TestCheckpoints:
    def test_roundtrip_bit_exact(self, team, tmp_path):
        params = team[0]
        path = tmp_path / "net.ckpt"
        net.save_checkpoint(path, params, {"role": "actor", "note": "t"})
        arrays, meta = net.load_checkpoint(path)
        assert meta == {"role": "actor", "note": "t"}
        assert set(arrays) == set(params)
        for name in params:
            assert np.array_equal(arrays[name], params[name].val)
            assert arrays[name].dtype == params[name].val.dtype

    def test_rejects_other_files(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"definitely not a checkpoint")
        with pytest.raises(ValueError):
            net.load_checkpoint(path)

    def test_deterministic_bytes(self, team, tmp_path):
        params = team[0]
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        net.save_checkpoint(p1, params, {"role": "actor"})
        net.save_checkpoint(p2, params, {"role": "actor"})
        assert p1.read_bytes() == p2.read_bytes()
