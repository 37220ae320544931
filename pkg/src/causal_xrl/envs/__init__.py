"""Environment registry and seeded trajectory collection."""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..data import TrajectoryDataset
from ..errors import InvalidConfig, UnknownEnvironment
from ..graph import CausalSkeleton
from . import appendix_c, blackjack, collision, crop, toy


@dataclass(frozen=True)
class Environment:
    id: str
    skeleton: Callable[[], CausalSkeleton]
    run_episode: Callable
    default_horizon: int | None  # None: episodes run until the environment ends them


ENVIRONMENTS: dict[str, Environment] = {
    "crop": Environment("crop", crop.skeleton, crop.run_episode, crop.DEFAULT_HORIZON),
    "collision": Environment("collision", collision.skeleton, collision.run_episode, None),
    "blackjack": Environment("blackjack", blackjack.skeleton, blackjack.run_episode, None),
    "toy": Environment("toy", toy.skeleton, toy.run_episode, 1),
    "appendix_c": Environment("appendix_c", appendix_c.skeleton, appendix_c.run_episode, 1),
}


def get_environment(env_id: str) -> Environment:
    try:
        return ENVIRONMENTS[env_id]
    except KeyError:
        raise UnknownEnvironment(f"unknown environment {env_id!r}; known: {sorted(ENVIRONMENTS)}") from None


# per-environment default regressor kind for each vertex ("*" = the rest)
DEFAULT_REGRESSORS: dict[str, dict[str, str]] = {
    "crop": {"*": "mlp", "I": "analytic"},
    "collision": {"*": "linear", "A": "analytic"},
    "blackjack": {"*": "analytic"},
    "toy": {"*": "analytic"},
    "appendix_c": {"*": "analytic"},
}


def analytic_mechanisms(env_id: str, qtable=None, collision_config=None) -> dict:
    """Closed-form structural functions an environment can supply, by vertex."""
    get_environment(env_id)
    if env_id == "crop":
        return crop.regressors()
    if env_id == "collision":
        return {"A": collision.regressors(collision_config)["A"]}
    if env_id == "blackjack":
        if qtable is None:
            raise InvalidConfig("blackjack action mechanism needs the trained Q-table")
        return blackjack.regressors(qtable)
    if env_id == "toy":
        return toy.regressors()
    return appendix_c.regressors()


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Named, reproducible random stream derived from one seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode()), *extra])


def collect(
    env_id: str,
    policy,
    episodes: int,
    horizon: int | None = None,
    seed: int = 0,
    policy_id: str | None = None,
    options: dict | None = None,
) -> TrajectoryDataset:
    """Roll out ``episodes`` episodes; each uses its own stream derived from ``seed``."""
    env = get_environment(env_id)
    if episodes < 1:
        raise InvalidConfig(f"episodes must be >= 1, got {episodes}")
    if horizon is not None and horizon < 1:
        raise InvalidConfig(f"horizon must be >= 1, got {horizon}")
    horizon = env.default_horizon if horizon is None else horizon
    options = options or {}
    eps = [
        env.run_episode(policy, substream(seed, f"env/{env_id}", i), horizon, i, **options) for i in range(episodes)
    ]
    provenance = {
        "env": env_id,
        "policy": policy_id or getattr(policy, "id", "custom"),
        "seed": int(seed),
        "episodes": int(episodes),
        "horizon": horizon,
    }
    return TrajectoryDataset(eps, provenance)


__all__ = [
    "ENVIRONMENTS",
    "DEFAULT_REGRESSORS",
    "Environment",
    "analytic_mechanisms",
    "collect",
    "get_environment",
    "substream",
    "appendix_c",
    "blackjack",
    "collision",
    "crop",
    "toy",
]
