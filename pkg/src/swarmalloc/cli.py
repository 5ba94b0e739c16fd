"""Command line entry point.

Subcommands: ``train``, ``eval``, ``expert-rollout``, ``solve``, ``analyze``.
Every run is reproducible from its config file and seed; artifacts land in
--out (falling back to $SWARMALLOC_OUT_ROOT, then the working directory).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import analysis, assignment, expert, network, policy, runner, training
from .config import RunConfig, config_hash, load_config
from .errors import SwarmAllocError
from .trace import NdjsonWriter, read_ndjson, split_header


def _out_dir(args, default_name: str) -> str:
    out = args.out or os.path.join(
        os.environ.get("SWARMALLOC_OUT_ROOT", "."), default_name
    )
    os.makedirs(out, exist_ok=True)
    return out


def _load_run_config(args) -> RunConfig:
    if args.config:
        return load_config(args.config)
    return RunConfig().validate()


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args, f"train_seed{args.seed}")
    metrics_path = os.path.join(out, "metrics.ndjson")
    with NdjsonWriter(metrics_path, "metrics/1", cfg, args.seed) as writer:
        result = training.train(cfg, args.seed, metrics_writer=writer,
                                log=lambda msg: print(msg, file=sys.stderr))
    meta = {"config_hash": config_hash(cfg), "seed": args.seed,
            "sigma_mode": cfg.net.sigma_mode}
    network.save_checkpoint(os.path.join(out, "actor.ckpt"), result.actor,
                            dict(meta, role="actor"))
    network.save_checkpoint(os.path.join(out, "critic.ckpt"), result.critic,
                            dict(meta, role="critic"))
    print(f"wrote {metrics_path} and checkpoints under {out}")
    return 0


def _episode_seeds(cfg: RunConfig, base_seed: int, episodes: int) -> list[int]:
    rng = np.random.default_rng((base_seed, 707))
    return [int(s) for s in rng.integers(2 ** 62, size=episodes)]


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    arrays, meta = network.load_checkpoint(args.checkpoint)
    if meta.get("config_hash") not in (None, config_hash(cfg)):
        print("warning: checkpoint was trained under a different config",
              file=sys.stderr)
    actor = network.params_from_arrays(arrays)
    sigma_mode = meta.get("sigma_mode", cfg.net.sigma_mode)
    out = _out_dir(args, f"eval_seed{args.seed}")
    seeds = _episode_seeds(cfg, args.seed, args.episodes)

    returns = []
    trace_path = os.path.join(out, "traces.ndjson")
    with NdjsonWriter(trace_path, "trace/1", cfg, args.seed) as trace_writer:
        for ep, seed in enumerate(seeds):
            fn = runner.policy_action_fn(actor, cfg.env, sigma_mode,
                                         deterministic=True)
            writer = _EpisodeTrace(trace_writer, ep)
            stats = runner.play_episode(
                cfg.env, cfg.gains, seed, fn, trace=writer,
                record_state=lambda t: {"cell_state": fn.states[t].tolist()})
            returns.append(stats.mean_return)
    report_path = os.path.join(out, "report.ndjson")
    with NdjsonWriter(report_path, "report/1", cfg, args.seed) as report:
        report.write({
            "kind": "summary",
            "episodes": args.episodes,
            "mean_episode_reward": float(np.mean(returns)),
            "std_episode_reward": float(np.std(returns)),
        })
    print(f"mean episode reward {np.mean(returns):.4f} +- {np.std(returns):.4f} "
          f"over {args.episodes} episodes")
    return 0


class _EpisodeTrace:
    """Prefixes every record with its episode index."""

    def __init__(self, writer, episode: int):
        self._writer = writer
        self._episode = episode

    def write(self, record: dict):
        self._writer.write(dict(record, episode=self._episode))


def cmd_expert_rollout(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args, f"expert_seed{args.seed}")
    seeds = _episode_seeds(cfg, args.seed, args.episodes)
    returns = []
    trace_path = os.path.join(out, "traces.ndjson")
    with NdjsonWriter(trace_path, "trace/1", cfg, args.seed) as trace_writer:
        for ep, seed in enumerate(seeds):
            stats = runner.play_episode(
                cfg.env, cfg.gains, seed,
                expert.expert_action_fn(cfg.env, eps_safe=cfg.gains.collision_eps),
                refresh="on_satisfied", trace=_EpisodeTrace(trace_writer, ep))
            returns.append(stats.mean_return)
    report_path = os.path.join(out, "report.ndjson")
    with NdjsonWriter(report_path, "report/1", cfg, args.seed) as report:
        report.write({
            "kind": "summary",
            "episodes": args.episodes,
            "mean_episode_reward": float(np.mean(returns)),
            "std_episode_reward": float(np.std(returns)),
        })
    print(f"expert mean episode reward {np.mean(returns):.4f} over "
          f"{args.episodes} episodes")
    return 0


def cmd_solve(args) -> int:
    with open(args.problem) as fh:
        data = json.load(fh)
    problem = assignment.AssignmentProblem(
        np.asarray(data["distances"], dtype=np.float64),
        np.asarray(data["supplies"], dtype=np.float64),
        np.asarray(data["demands"], dtype=np.float64),
    )
    a, value = assignment.solve_exact(problem)
    print("assignment:")
    for row in a:
        print("  " + " ".join(str(int(v)) for v in row))
    print(f"objective: {value!r}")
    if args.out:
        out = _out_dir(args, "solve")
        cfg = _load_run_config(args)
        with NdjsonWriter(os.path.join(out, "solution.ndjson"), "solution/1",
                          cfg, args.seed) as writer:
            writer.write({"kind": "solution", "assignment": a.tolist(),
                          "objective": value})
    return 0


def cmd_analyze(args) -> int:
    records = read_ndjson(args.trace)
    header, body = split_header(records)
    states = [r["cell_state"] for r in body
              if r.get("kind") == "step" and "cell_state" in r
              and r.get("episode", 0) == args.episode]
    if not states:
        print("trace contains no cell_state records to analyze", file=sys.stderr)
        return 1
    trajectories = np.asarray(states, dtype=np.float64)
    clusters = analysis.detect_clusters(trajectories, tol=args.tol,
                                        window=min(args.window, len(states)))
    spreads = analysis.cluster_spreads(trajectories, clusters)
    try:
        fits = analysis.cluster_decay_fit(trajectories, clusters)
    except SwarmAllocError:
        fits = []
    print(f"clusters: {clusters}")
    for fit in fits:
        print(f"cluster {fit.cluster}: rate {fit.rate:.4f} "
              f"(residual {fit.residual:.4f})")
    if args.out:
        cfg = _load_run_config(args)
        out = _out_dir(args, "analyze")
        with NdjsonWriter(os.path.join(out, "clusters.ndjson"), "clusters/1",
                          cfg, args.seed) as writer:
            writer.write({"kind": "clusters", "partition": clusters,
                          "tol": args.tol, "window": args.window})
            for t in range(spreads.shape[0]):
                writer.write({"kind": "spread", "t": t,
                              "per_cluster": spreads[t].tolist()})
            for fit in fits:
                writer.write({"kind": "fit", "cluster": fit.cluster,
                              "rate": fit.rate, "residual": fit.residual})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmalloc",
        description="decentralized multi-agent resource allocation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output directory")

    p_train = sub.add_parser("train", help="train actor and critic")
    common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a trained policy")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, default=50)

    p_exp = sub.add_parser("expert-rollout", help="run the centralized expert")
    common(p_exp)
    p_exp.add_argument("--episodes", type=int, default=50)

    p_solve = sub.add_parser("solve", help="solve one assignment problem")
    common(p_solve)
    p_solve.add_argument("--problem", required=True,
                         help="JSON file with distances, supplies, demands")

    p_an = sub.add_parser("analyze", help="cluster analysis of a trace")
    common(p_an)
    p_an.add_argument("--trace", required=True)
    p_an.add_argument("--episode", type=int, default=0)
    p_an.add_argument("--tol", type=float, default=1e-3)
    p_an.add_argument("--window", type=int, default=20)

    return parser


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "expert-rollout": cmd_expert_rollout,
    "solve": cmd_solve,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SwarmAllocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
