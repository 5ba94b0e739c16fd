#!/usr/bin/env python3
"""A first look at the environment: agents, consumers, resource depletion.

Rolls a short episode with random velocity commands and prints how supplies
flow into demands, then saves a picture of the trajectories.
"""

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from swarmalloc import EnvConfig, ResourceKind, comm_graph, observe, reset, step

cfg = EnvConfig(n_agents=6, n_consumers=3, n_resources=2, seed=7)
state = reset(cfg, seed=7)

kinds = ["instantaneous" if k == ResourceKind.INSTANTANEOUS else "persistent"
         for k in state.demand_kinds[0]]
print(f"{cfg.n_agents} agents, {cfg.n_consumers} consumers, "
      f"resource kinds: {kinds}")
print(f"total supply {state.supplies.sum():.2f} <= total demand "
      f"{state.demands.sum():.2f}")

rng = np.random.default_rng(0)
path = [state.positions.copy()]
released_total = 0.0
for t in range(120):
    actions = rng.uniform(-1, 1, (cfg.n_agents, cfg.dim))
    state, report = step(state, actions, cfg.dt, cfg.u_max)
    released_total += report.released.sum()
    path.append(state.positions.copy())
    if report.released.any():
        movers = np.flatnonzero(report.released)
        print(f"  t={t:3d}: agents {movers.tolist()} released "
              f"{report.released[movers].round(3).tolist()}")

print(f"after 120 random steps: {released_total:.2f} units delivered, "
      f"remaining demand {state.demands.sum():.2f}")

obs = observe(state, 0)
print(f"agent 0 sees its own position {obs.own_position.round(2)} and all "
      f"{len(obs.consumer_demands)} consumers, nothing about other agents")

graph = comm_graph(state, cfg.comm_radius)
print(f"communication rows sum to "
      f"{graph.support.sum(axis=1).round(12).tolist()}")

path = np.array(path)
fig, ax = plt.subplots(figsize=(5, 5))
for i in range(cfg.n_agents):
    ax.plot(path[:, i, 0], path[:, i, 1], lw=0.8, alpha=0.7)
for m in range(cfg.n_consumers):
    circle = plt.Circle(state.consumer_positions[m], cfg.radius,
                        color="tab:red", alpha=0.2)
    ax.add_patch(circle)
    ax.plot(*state.consumer_positions[m], "ro", ms=4)
ax.set_xlim(-1.05, 1.05)
ax.set_ylim(-1.05, 1.05)
ax.set_title("random-walk agents and consumer interaction areas")
fig.tight_layout()
fig.savefig("demo01_world.png", dpi=120)
print("wrote demo01_world.png")
