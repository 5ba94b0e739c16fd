import numpy as np
import pytest

from swarmalloc import EnvConfig, NetConfig, RewardGains, RunConfig, TrainConfig


@pytest.fixture
def small_env():
    return EnvConfig(n_agents=4, n_consumers=2, n_resources=2, persistent_prob=0.5)


@pytest.fixture
def tiny_net():
    return NetConfig(embed=6, state=5, head=(8,))


@pytest.fixture
def gains():
    return RewardGains()


def desk_config(**overrides) -> RunConfig:
    """Small, fast run configuration used by training-oriented tests."""
    defaults = dict(
        env=EnvConfig(n_agents=3, n_consumers=2, n_resources=1,
                      persistent_prob=0.0, horizon=64),
        net=NetConfig(embed=8, state=8, head=(32, 32)),
        train=TrainConfig(rollout=128, iterations=2, batch=64),
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


def max_rel_err(got: dict, expected: dict) -> float:
    worst = 0.0
    for name in expected:
        denom = max(np.abs(expected[name]).max(), 1e-6)
        worst = max(worst, float(np.abs(got[name] - expected[name]).max() / denom))
    return worst
