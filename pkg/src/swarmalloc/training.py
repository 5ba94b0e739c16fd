"""Independent PPO with generalized advantage estimation and a soft
contraction penalty on both networks.

Each rollout stores full team steps (observations, graph, both consensus
states), so minibatch updates can re-run the exact forward pass that
produced every stored action.  Agents share one actor and one critic but
keep per-agent rewards, values and advantages.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import analysis, assignment, autodiff as ad, network as net, policy, rewards, world
from .autodiff import Tensor
from .config import RunConfig
from .errors import NonFiniteLoss, ShapeMismatch


# advantage estimation --------------------------------------------------------


def gae(reward_seq: np.ndarray, value_seq: np.ndarray, dones: np.ndarray,
        bootstrap: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    """GAE-lambda advantages per agent.

    ``reward_seq`` and ``value_seq`` are (T, N); ``dones`` (T,) marks steps
    that end an episode; ``bootstrap`` (N,) is the value of the state after
    the last step.
    """
    reward_seq = np.asarray(reward_seq, dtype=np.float64)
    value_seq = np.asarray(value_seq, dtype=np.float64)
    if reward_seq.shape != value_seq.shape:
        raise ShapeMismatch(
            f"rewards {reward_seq.shape} and values {value_seq.shape} differ"
        )
    t_len = reward_seq.shape[0]
    if dones.shape != (t_len,):
        raise ShapeMismatch(f"dones must be ({t_len},), got {dones.shape}")
    adv = np.zeros_like(reward_seq)
    next_value = np.asarray(bootstrap, dtype=np.float64)
    carry = np.zeros_like(next_value)
    for t in range(t_len - 1, -1, -1):
        alive = 1.0 - float(dones[t])
        delta = reward_seq[t] + gamma * next_value * alive - value_seq[t]
        carry = delta + gamma * lam * alive * carry
        adv[t] = carry
        next_value = value_seq[t]
    return adv


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


# losses -----------------------------------------------------------------------


def ppo_policy_loss(new_log_probs: Tensor, old_log_probs: np.ndarray,
                    advantages: np.ndarray, clip: float) -> Tensor:
    """Clipped surrogate, negated for minimization, averaged over the batch."""
    ratio = ad.exp(new_log_probs - ad.wrap(old_log_probs))
    clipped = ad.clip(ratio, 1.0 - clip, 1.0 + clip)
    surrogate = ad.minimum(ratio * advantages, clipped * advantages)
    return ad.tmean(surrogate) * -1.0


def value_loss(values: Tensor, returns: np.ndarray) -> Tensor:
    return ad.tmean(ad.square(values - ad.wrap(returns)))


def contraction_penalty(params: dict, gate_batch) -> Tensor:
    """softplus(rate) + sum softplus(tau), with the rate evaluated on the
    batch-max gate (worst case) and the minimal row-stochastic support (I)."""
    tau = ad.softplus(params["cell.tau_raw"])
    coupling = net.coupling_matrix(params)
    f_dim = tau.shape[0]
    diag_idx = (np.arange(f_dim), np.arange(f_dim))
    diag = coupling[diag_idx]
    col_abs = ad.tsum(ad.absolute(coupling), axis=0)
    gate_batch = ad.wrap(gate_batch)
    if gate_batch.ndim > 2:
        gate_batch = ad.tmax(gate_batch, axis=tuple(range(gate_batch.ndim - 2)))
    rate_rows = gate_batch + tau + diag + (col_abs - ad.absolute(diag))
    rate = ad.tmax(rate_rows)
    return ad.softplus(rate) + ad.tsum(ad.softplus(tau))


def measured_rate(params: dict, gate: np.ndarray) -> float:
    """Numpy-side rate for metrics, matching contraction_penalty's rate."""
    tau = np.logaddexp(0.0, params["cell.tau_raw"].val)
    raw = params["cell.coupling_raw"].val
    coupling = raw.T @ raw
    n = gate.shape[0]
    return analysis.contraction_rate(tau, coupling, np.eye(n), gate)


# optimizer ---------------------------------------------------------------------


class Adam:
    """Standard adaptive-moment recursion with bias correction."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(t.val) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.val) for k, t in params.items()}

    def step(self, grads: dict):
        self.step_count += 1
        correct1 = 1.0 - self.beta1 ** self.step_count
        correct2 = 1.0 - self.beta2 ** self.step_count
        for name, g in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / correct1
            v_hat = self.v[name] / correct2
            self.params[name].val -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for name in grads:
            grads[name] = grads[name] * scale
    return total


# rollout -----------------------------------------------------------------------


@dataclass
class Rollout:
    cons_in: np.ndarray      # (T, M, r, dim+2)
    agent_in: np.ndarray     # (T, N, .)
    positions: np.ndarray    # (T, N, dim)
    support: np.ndarray      # (T, N, N)
    x_actor: np.ndarray      # (T, N, F) state fed into the step
    x_critic: np.ndarray     # (T, N, F)
    actions: np.ndarray      # (T, N, dim)
    log_probs: np.ndarray    # (T, N)
    reward_seq: np.ndarray   # (T, N)
    value_seq: np.ndarray    # (T, N)
    dones: np.ndarray        # (T,)
    bootstrap: np.ndarray    # (N,)
    episode_returns: list = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def finalize(self, gamma: float, lam: float):
        adv = gae(self.reward_seq, self.value_seq, self.dones, self.bootstrap,
                  gamma, lam)
        self.returns = adv + self.value_seq
        self.advantages = normalize_advantages(adv)


class _EpisodeDriver:
    """Carries env + both consensus states across rollout boundaries."""

    def __init__(self, cfg: RunConfig, actor: dict, critic: dict, seed: int):
        self.cfg = cfg
        self.actor = actor
        self.critic = critic
        self.env_seeds = np.random.default_rng((seed, 101))
        self.action_rng = np.random.default_rng((seed, 202))
        self.state = None

    def begin_episode(self):
        env = self.cfg.env
        self.state = world.reset(env, int(self.env_seeds.integers(2 ** 62)))
        self.x_a = net.initial_state(env.n_agents, self.actor)
        self.x_v = net.initial_state(env.n_agents, self.critic)
        self.assign, _ = assignment.solve_exact(assignment.from_state(self.state))
        self.ep_step = 0
        self.ep_reward = np.zeros(env.n_agents)


def collect_rollout(cfg: RunConfig, driver: _EpisodeDriver, n_steps: int) -> Rollout:
    env, gains = cfg.env, cfg.gains
    sigma_mode = cfg.net.sigma_mode
    store = None
    episode_returns = []

    if driver.state is None:
        driver.begin_episode()

    for t in range(n_steps):
        state = driver.state
        if driver.ep_step > 0 and driver.ep_step % env.assign_interval == 0:
            driver.assign, _ = assignment.solve_exact(assignment.from_state(state))
        graph = world.comm_graph(state, env.comm_radius)
        cons_in, agent_in, positions = net.team_inputs(world.observe_all(state))
        if store is None:
            store = Rollout(
                cons_in=np.zeros((n_steps,) + cons_in.shape),
                agent_in=np.zeros((n_steps,) + agent_in.shape),
                positions=np.zeros((n_steps,) + positions.shape),
                support=np.zeros((n_steps,) + graph.support.shape),
                x_actor=np.zeros((n_steps,) + driver.x_a.shape),
                x_critic=np.zeros((n_steps,) + driver.x_v.shape),
                actions=np.zeros((n_steps, env.n_agents, env.dim)),
                log_probs=np.zeros((n_steps, env.n_agents)),
                reward_seq=np.zeros((n_steps, env.n_agents)),
                value_seq=np.zeros((n_steps, env.n_agents)),
                dones=np.zeros(n_steps, dtype=bool),
                bootstrap=np.zeros(env.n_agents),
            )
        store.cons_in[t] = cons_in
        store.agent_in[t] = agent_in
        store.positions[t] = positions
        store.support[t] = graph.support
        store.x_actor[t] = driver.x_a
        store.x_critic[t] = driver.x_v

        actions, log_probs, x_a_next = policy.act(
            driver.actor, cons_in, agent_in, positions, graph.support,
            driver.x_a, env.dt, driver.action_rng, sigma_mode)
        values, x_v_next = policy.evaluate(
            driver.critic, cons_in, agent_in, positions, graph.support,
            driver.x_v, env.dt)

        nxt, report = world.step(state, actions, env.dt, env.u_max)
        next_graph = world.comm_graph(nxt, env.comm_radius)
        breakdown = rewards.total_reward(state, nxt, next_graph, driver.assign,
                                         report, gains)

        store.actions[t] = actions
        store.log_probs[t] = log_probs
        store.reward_seq[t] = breakdown.total
        store.value_seq[t] = values
        driver.ep_reward += breakdown.total
        driver.ep_step += 1
        driver.state = nxt
        driver.x_a = x_a_next
        driver.x_v = x_v_next

        if driver.ep_step >= env.horizon:
            store.dones[t] = True
            episode_returns.append(float(driver.ep_reward.mean()))
            driver.begin_episode()

    if store.dones[-1]:
        store.bootstrap[:] = 0.0
    else:
        state = driver.state
        graph = world.comm_graph(state, env.comm_radius)
        cons_in, agent_in, positions = net.team_inputs(world.observe_all(state))
        store.bootstrap, _ = policy.evaluate(
            driver.critic, cons_in, agent_in, positions, graph.support,
            driver.x_v, env.dt)
    store.episode_returns = episode_returns
    return store


# update ------------------------------------------------------------------------


def _policy_loss_on_batch(actor: dict, batch: dict, clip: float,
                          alpha: float) -> Tensor:
    new_lp, res = policy.action_log_prob(
        actor, batch["cons_in"], batch["agent_in"], batch["positions"],
        batch["support"], batch["x_actor"], batch["actions"], batch["dt"],
        batch["sigma_mode"])
    loss = ppo_policy_loss(new_lp, batch["log_probs"], batch["advantages"], clip)
    if alpha > 0.0:
        loss = loss + contraction_penalty(actor, res.gate) * alpha
    return loss


def _value_loss_on_batch(critic: dict, batch: dict, alpha: float) -> Tensor:
    values, res = policy.value_output(
        critic, batch["cons_in"], batch["agent_in"], batch["positions"],
        batch["support"], batch["x_critic"], batch["dt"])
    loss = value_loss(values, batch["returns"])
    if alpha > 0.0:
        loss = loss + contraction_penalty(critic, res.gate) * alpha
    return loss


@dataclass
class TrainResult:
    actor: dict
    critic: dict
    metrics: list


def train(cfg: RunConfig, seed: int, metrics_writer=None, stop_fn=None,
          log=None) -> TrainResult:
    """Full training run; deterministic for fixed config and seed.

    ``metrics_writer.write(record)`` receives one record per iteration;
    ``stop_fn(record, result)`` sees each record plus the live TrainResult
    (parameters included) and may end training early; ``log(msg)`` gets
    progress lines including wall time (kept out of the metrics records so
    reruns are byte-identical).
    """
    cfg.validate()
    env, tr = cfg.env, cfg.train
    actor = policy.init_actor(cfg.net, env.dim, env.n_resources, seed)
    critic = policy.init_critic(cfg.net, env.dim, env.n_resources, seed + 1)
    opt_actor = Adam(actor, tr.lr)
    opt_critic = Adam(critic, tr.lr)
    driver = _EpisodeDriver(cfg, actor, critic, seed)
    shuffle_rng = np.random.default_rng((seed, 303))
    metrics = []
    result = TrainResult(actor=actor, critic=critic, metrics=metrics)
    started = time.perf_counter()

    for iteration in range(tr.iterations):
        roll = collect_rollout(cfg, driver, tr.rollout)
        roll.finalize(tr.gamma, tr.gae_lambda)
        assert roll.advantages is not None and roll.returns is not None

        policy_losses = []
        value_losses = []
        last_gate_actor = None
        last_gate_critic = None
        for _ in range(tr.epochs):
            order = shuffle_rng.permutation(tr.rollout)
            for start in range(0, tr.rollout - tr.batch + 1, tr.batch):
                idx = order[start:start + tr.batch]
                batch = {
                    "cons_in": roll.cons_in[idx],
                    "agent_in": roll.agent_in[idx],
                    "positions": roll.positions[idx],
                    "support": roll.support[idx],
                    "x_actor": roll.x_actor[idx],
                    "x_critic": roll.x_critic[idx],
                    "actions": roll.actions[idx],
                    "log_probs": roll.log_probs[idx],
                    "advantages": roll.advantages[idx],
                    "returns": roll.returns[idx],
                    "dt": env.dt,
                    "sigma_mode": cfg.net.sigma_mode,
                }

                ad.zero_grads(actor)
                p_loss = _policy_loss_on_batch(actor, batch, tr.clip, tr.alpha)
                if not np.isfinite(p_loss.val):
                    raise NonFiniteLoss(
                        f"policy loss non-finite at iteration {iteration}"
                    )
                p_loss.backward()
                grads = _collect_grads(actor)
                clip_grad_norm(grads, tr.max_grad_norm)
                opt_actor.step(grads)
                np.clip(actor["cell.drive"].val, -1.0, 1.0, out=actor["cell.drive"].val)
                policy_losses.append(float(p_loss.val))

                ad.zero_grads(critic)
                v_loss = _value_loss_on_batch(critic, batch, tr.alpha)
                if not np.isfinite(v_loss.val):
                    raise NonFiniteLoss(
                        f"value loss non-finite at iteration {iteration}"
                    )
                v_loss.backward()
                grads = _collect_grads(critic)
                clip_grad_norm(grads, tr.max_grad_norm)
                opt_critic.step(grads)
                value_losses.append(float(v_loss.val))

        # worst-case gates over the whole rollout, for the logged rates
        with ad.no_grad():
            gate_a = _rollout_gates(actor, roll, roll.x_actor, env.dt)
            gate_c = _rollout_gates(critic, roll, roll.x_critic, env.dt)
        record = {
            "kind": "iteration",
            "iteration": iteration,
            "mean_episode_reward": (
                float(np.mean(roll.episode_returns)) if roll.episode_returns else None
            ),
            "episodes": len(roll.episode_returns),
            "policy_loss": float(np.mean(policy_losses)),
            "value_loss": float(np.mean(value_losses)),
            "rate_actor": measured_rate(actor, gate_a),
            "rate_critic": measured_rate(critic, gate_c),
            "tau_actor": float(np.logaddexp(0.0, actor["cell.tau_raw"].val).sum()),
            "tau_critic": float(np.logaddexp(0.0, critic["cell.tau_raw"].val).sum()),
        }
        metrics.append(record)
        if metrics_writer is not None:
            metrics_writer.write(record)
        if log is not None:
            log(
                f"iter {iteration}: reward={record['mean_episode_reward']} "
                f"policy_loss={record['policy_loss']:.4f} "
                f"value_loss={record['value_loss']:.4f} "
                f"elapsed={time.perf_counter() - started:.1f}s"
            )
        if stop_fn is not None and stop_fn(record, result):
            break

    return result


def _collect_grads(params: dict) -> dict:
    return {
        name: (t.grad if t.grad is not None else np.zeros_like(t.val))
        for name, t in params.items()
    }


def _rollout_gates(params: dict, roll: Rollout, x_seq: np.ndarray,
                   dt: float) -> np.ndarray:
    """Batch-max gate over the stored rollout, as a worst case for the rate."""
    cons_feat = net.encode_consumers(params, roll.cons_in)
    agent_feat = net.encode_agents(params, roll.agent_in)
    mixed = net.mix_features(params, agent_feat, cons_feat, roll.support)
    attn = net.attention_weights(params, mixed, x_seq, cons_feat, roll.support)
    gate = net.consumer_gate(params, attn, cons_feat)
    return gate.val.max(axis=0)
