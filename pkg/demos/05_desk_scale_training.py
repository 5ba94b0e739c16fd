#!/usr/bin/env python3
"""Desk-scale PPO training run.

Three agents, two consumers, one instantaneous resource.  Prints per-
iteration metrics and compares the trained policy against the centralized
expert and a uniform-random baseline on shared evaluation seeds.

Takes a few minutes; pass a smaller --iterations for a quick look.
"""

import argparse

import numpy as np

from swarmalloc import EnvConfig, NetConfig, RunConfig, TrainConfig, train
from swarmalloc.expert import evaluate_expert
from swarmalloc.runner import evaluate_policy, evaluate_random

parser = argparse.ArgumentParser()
parser.add_argument("--iterations", type=int, default=120)
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()

cfg = RunConfig(
    env=EnvConfig(n_agents=3, n_consumers=2, n_resources=1,
                  persistent_prob=0.0, horizon=128, assign_interval=128),
    net=NetConfig(embed=8, state=8, head=(32, 32), sigma_init=0.3),
    train=TrainConfig(rollout=1024, iterations=args.iterations, batch=64,
                      lr=3e-3, gamma=0.9, alpha=0.01),
)

rng = np.random.default_rng(99)
eval_seeds = [int(s) for s in rng.integers(2 ** 62, size=20)]
expert = evaluate_expert(cfg.env, cfg.gains, eval_seeds).mean()
random_ = evaluate_random(cfg.env, cfg.gains, eval_seeds).mean()
print(f"baselines: expert {expert:.2f}, random {random_:.2f}")

result = train(cfg, args.seed, log=print)

trained = evaluate_policy(cfg.env, cfg.gains, result.actor,
                          cfg.net.sigma_mode, eval_seeds).mean()
print(f"\ntrained policy {trained:.2f} "
      f"(fraction of expert-random gap closed: "
      f"{(trained - random_) / (expert - random_):.0%})")
print(f"final contraction-penalty rates: actor "
      f"{result.metrics[-1]['rate_actor']:.2f}, critic "
      f"{result.metrics[-1]['rate_critic']:.2f}")
