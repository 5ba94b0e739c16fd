"""Gaussian velocity policy and per-agent value estimates.

Actor and critic are two independent parameter sets of the same shared
architecture; each one carries its own consensus state between steps.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import network as net
from .autodiff import Tensor
from .config import NetConfig
from .errors import NonFiniteOutput

SIGMA_FLOOR = 1e-3
_LOG_2PI = float(np.log(2.0 * np.pi))


def init_actor(cfg: NetConfig, dim: int, n_resources: int, seed: int) -> dict:
    out_dim = 2 * dim if cfg.sigma_mode == "state" else dim
    params = net.init_params(cfg, dim, n_resources, out_dim, seed)
    last = sum(1 for k in params if k.startswith("head.w")) - 1
    if cfg.sigma_mode == "state":
        params[f"head.b{last}"].val[dim:] = net.softplus_inverse(cfg.sigma_init)
    else:
        params["sigma_raw"] = ad.parameter(
            np.full(dim, net.softplus_inverse(cfg.sigma_init)))
    return params


def init_critic(cfg: NetConfig, dim: int, n_resources: int, seed: int) -> dict:
    return net.init_params(cfg, dim, n_resources, 1, seed)


def policy_output(params: dict, cons_in, agent_in, positions, support, x,
                  dt: float, sigma_mode: str = "state"):
    """(mean, std, forward result); std is floored softplus, always positive."""
    res = net.forward(params, cons_in, agent_in, positions, support, x, dt)
    dim = np.asarray(positions).shape[-1]
    mu = res.out[..., :dim]
    if sigma_mode == "state":
        sigma = ad.softplus(res.out[..., dim:]) + SIGMA_FLOOR
    else:
        sigma = ad.softplus(params["sigma_raw"]) + SIGMA_FLOOR
        sigma = sigma * np.ones_like(mu.val)
    return mu, sigma, res


def gaussian_log_prob(mu, sigma, actions) -> Tensor:
    """Per-agent log density of diagonal-Gaussian actions, summed over axes."""
    z = (ad.wrap(actions) - mu) / sigma
    per_dim = z * z * -0.5 - ad.log(sigma) - 0.5 * _LOG_2PI
    return ad.tsum(per_dim, axis=-1)


def action_log_prob(params: dict, cons_in, agent_in, positions, support, x,
                    actions, dt: float, sigma_mode: str = "state"):
    """Log density of given actions; the differentiable path used by training."""
    mu, sigma, res = policy_output(params, cons_in, agent_in, positions,
                                   support, x, dt, sigma_mode)
    return gaussian_log_prob(mu, sigma, actions), res


def act(params: dict, cons_in, agent_in, positions, support, x, dt: float,
        rng, sigma_mode: str = "state", deterministic: bool = False):
    """Sample actions and advance the actor state.

    Returns (actions (N, dim), log_probs (N,), x_next (N, F)) as arrays.
    Re-evaluating ``action_log_prob`` with the same inputs reproduces the
    returned log densities bit-for-bit.
    """
    with ad.no_grad():
        mu, sigma, res = policy_output(params, cons_in, agent_in, positions,
                                       support, x, dt, sigma_mode)
        if not (np.all(np.isfinite(mu.val)) and np.all(np.isfinite(sigma.val))):
            raise NonFiniteOutput("policy produced non-finite action statistics")
        if deterministic:
            actions = mu.val.copy()
        else:
            actions = mu.val + sigma.val * rng.standard_normal(mu.val.shape)
        log_probs = gaussian_log_prob(mu, sigma, actions).val
    return actions, log_probs, res.x_new.val


def evaluate(params: dict, cons_in, agent_in, positions, support, x,
             dt: float):
    """Per-agent values and the advanced critic state, as arrays."""
    with ad.no_grad():
        res = net.forward(params, cons_in, agent_in, positions, support, x, dt)
        values = res.out[..., 0].val
        if not np.all(np.isfinite(values)):
            raise NonFiniteOutput("critic produced non-finite values")
    return values, res.x_new.val


def value_output(params: dict, cons_in, agent_in, positions, support, x,
                 dt: float):
    """Differentiable critic forward; returns ((..., N) values, result)."""
    res = net.forward(params, cons_in, agent_in, positions, support, x, dt)
    return res.out[..., 0], res
