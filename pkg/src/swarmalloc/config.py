"""Run configuration: environment, reward gains, network sizes, training.

Configs are plain dataclasses that round-trip through a single JSON file
with sections ``env``, ``gains``, ``net`` and ``train``.  Every artifact
written by the CLI embeds ``config_hash`` so results can be traced back to
the exact configuration that produced them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class EnvConfig:
    n_agents: int = 10
    n_consumers: int = 4
    n_resources: int = 2
    dim: int = 2
    comm_radius: float = 1.0
    radius: float = 0.35
    bounds_lo: float = -1.0
    bounds_hi: float = 1.0
    u_max: float = 1.0
    dt: float = 0.05
    horizon: int = 128
    supply_low: float = 0.5
    supply_high: float = 1.5
    demand_low: float = 0.5
    demand_high: float = 1.5
    persistent_prob: float = 0.5
    assign_interval: int = 10
    seed: int = 0

    def validate(self):
        if self.n_agents < self.n_consumers or self.n_consumers < 1:
            raise ConfigError(
                f"need n_agents >= n_consumers >= 1, got {self.n_agents} and {self.n_consumers}"
            )
        if self.n_resources < 1:
            raise ConfigError("need at least one resource type")
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.bounds_hi <= self.bounds_lo:
            raise ConfigError("empty environment bounds")
        if self.radius <= 0 or self.comm_radius <= 0 or self.dt <= 0:
            raise ConfigError("radius, comm_radius and dt must be positive")
        return self


@dataclass(frozen=True)
class RewardGains:
    """Gains for the per-agent reward terms; all exposed in the config file."""

    collision: float = 5.0       # scales the squared-distance collision penalty
    in_area: float = 0.1         # per-step bonus while inside the assigned area
    release: float = 1.0         # per unit of instantaneous resource released
    subteam: float = 1.0         # bonus when a consumer is fully satisfied
    hold: float = 0.05           # per step covering a persistent demand
    all_covered: float = 0.1     # team bonus when every consumer is served
    collision_eps: float = 0.01  # squared-distance threshold for the penalty

    def validate(self, radius: float):
        if not 0.0 < self.collision_eps < radius:
            raise ConfigError(
                f"collision_eps must lie in (0, radius={radius}), got {self.collision_eps}"
            )
        if self.in_area <= 0:
            raise ConfigError("in_area gain must be positive")
        if min(self.collision, self.release, self.subteam, self.hold, self.all_covered) < 0:
            raise ConfigError("reward gains must be non-negative")
        return self


@dataclass(frozen=True)
class NetConfig:
    embed: int = 64              # width of consumer/agent feature embeddings
    state: int = 64              # width of the per-agent consensus state
    head: tuple = (256, 256)     # hidden widths of the output MLP
    sigma_mode: str = "state"    # "state": head predicts stds; "global": learned vector
    sigma_init: float = 0.5      # initial action standard deviation

    def validate(self):
        if self.embed < 1 or self.state < 1:
            raise ConfigError("embed and state widths must be >= 1")
        if self.sigma_mode not in ("state", "global"):
            raise ConfigError(f"unknown sigma_mode {self.sigma_mode!r}")
        if self.sigma_init <= 0:
            raise ConfigError("sigma_init must be positive")
        return self


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    batch: int = 64
    epochs: int = 4
    max_grad_norm: float = 0.5
    lr: float = 2e-4
    alpha: float = 0.01          # weight of the contraction penalty
    rollout: int = 6144
    iterations: int = 200

    def validate(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError("gae_lambda must lie in [0, 1]")
        if self.clip <= 0:
            raise ConfigError("clip must be positive")
        if self.batch < 1 or self.rollout < self.batch:
            raise ConfigError("need rollout >= batch >= 1")
        return self


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = EnvConfig()
    gains: RewardGains = RewardGains()
    net: NetConfig = NetConfig()
    train: TrainConfig = TrainConfig()

    def validate(self):
        self.env.validate()
        self.gains.validate(self.env.radius)
        self.net.validate()
        self.train.validate()
        return self


_SECTIONS = {"env": EnvConfig, "gains": RewardGains, "net": NetConfig, "train": TrainConfig}


def config_from_dict(data: dict) -> RunConfig:
    parts = {}
    for key, value in data.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config section {key!r}")
        cls = _SECTIONS[key]
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(value) - known
        if bad:
            raise ConfigError(f"unknown keys in section {key!r}: {sorted(bad)}")
        if "head" in value:
            value = dict(value, head=tuple(value["head"]))
        parts[key] = cls(**value)
    return RunConfig(**parts).validate()


def config_to_dict(config: RunConfig) -> dict:
    data = dataclasses.asdict(config)
    data["net"]["head"] = list(data["net"]["head"])
    return data


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def save_config(config: RunConfig, path):
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
