"""Policies queried by the explainer: tabular MC control for Blackjack and
closed-form policies for the other environments behind one interface."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .envs import blackjack as bj
from .envs import appendix_c, collision, crop, toy
from .errors import InvalidConfig, IoError, UnknownEnvironment, UnseenState

StateKey = tuple[int, int, int]  # (hand, ace, dealer)
ACTIONS = (bj.STICK, bj.DRAW)
BUST_VALUE = -1.0
SAFE_DRAW_MAX = 10 + 1  # no card can bust a hand of 11 or less


@dataclass
class QTable:
    values: dict[tuple[int, int, int, int], float] = field(default_factory=dict)
    counts: dict[tuple[int, int, int, int], int] = field(default_factory=dict)

    def states(self) -> set[StateKey]:
        return {k[:3] for k in self.values}

    def __contains__(self, state: StateKey) -> bool:
        return any((*state, a) in self.values for a in ACTIONS)

    def value(self, state: StateKey, action: int) -> float:
        return self.values.get((*state, action), 0.0)

    def greedy(self, state: StateKey) -> int:
        """argmax over actions; ties go to stick. Hands that cannot bust always draw."""
        if state[0] <= SAFE_DRAW_MAX:
            return bj.DRAW
        stick, draw = self.value(state, bj.STICK), self.value(state, bj.DRAW)
        return bj.DRAW if draw > stick else bj.STICK

    def to_dict(self) -> dict:
        rows = [
            {"hand": k[0], "ace": k[1], "dealer": k[2], "action": k[3], "value": v, "count": self.counts.get(k, 0)}
            for k, v in sorted(self.values.items())
        ]
        return {"format": "causal-xrl/qtable@1", "entries": rows}

    @classmethod
    def from_dict(cls, d: Mapping) -> "QTable":
        values, counts = {}, {}
        for r in d["entries"]:
            k = (int(r["hand"]), int(r["ace"]), int(r["dealer"]), int(r["action"]))
            values[k] = float(r["value"])
            counts[k] = int(r.get("count", 0))
        return cls(values, counts)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "QTable":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        try:
            Path(path).write_text(self.dumps() + "\n", encoding="utf-8")
        except OSError as exc:
            raise IoError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "QTable":
        try:
            return cls.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoError(str(exc)) from exc


def linear_epsilon(start: float = 1.0, end: float = 0.05, fraction: float = 0.5) -> Callable[[int, int], float]:
    """Linear decay from ``start`` to ``end`` over the first ``fraction`` of training."""

    def schedule(k: int, total: int) -> float:
        span = max(1.0, fraction * total)
        return end if k >= span else start + (end - start) * k / span

    return schedule


def state_key(obs: Mapping[str, float]) -> StateKey:
    return (int(round(obs["hand"])), int(round(obs["ace"])), int(round(obs["dealer"])))


def mc_control_train(
    episodes: int = 50_000,
    epsilon_schedule: Callable[[int, int], float] | None = None,
    seed: int = 0,
) -> QTable:
    """First-visit on-policy Monte-Carlo control with epsilon-greedy exploration.

    Rewards arrive only at the end of a hand and are undiscounted, so every
    visited pair is credited with the final reward. Drawing dominates on hands
    that cannot bust, so those states draw without exploring.
    """
    if episodes < 1:
        raise InvalidConfig(f"episodes must be >= 1, got {episodes}")
    schedule = epsilon_schedule or linear_epsilon()
    rng = np.random.default_rng([int(seed), 0x51])
    table = QTable()
    for k in range(episodes):
        eps = schedule(k, episodes)
        state = bj.blackjack_reset(rng)
        visited: list[tuple[int, int, int, int]] = []
        reward = 0.0
        while True:
            key = state_key(state.observation())
            if key[0] <= SAFE_DRAW_MAX:
                a = bj.DRAW
            elif rng.random() < eps:
                a = int(rng.integers(2))
            else:
                a = table.greedy(key)
            if (*key, a) not in visited:
                visited.append((*key, a))
            state, reward, done = bj.blackjack_step(state, a, rng)
            if done:
                break
        for pair in visited:
            n = table.counts.get(pair, 0) + 1
            q = table.values.get(pair, 0.0)
            table.counts[pair] = n
            table.values[pair] = q + (reward - q) / n
    return table


def q_lookup(qtable: QTable, state: Mapping[str, float] | StateKey, action: float, fallback: bool = True) -> float:
    """Stored estimate for (state, action), with hand/dealer rounded to integers.

    Hands above 21 are certain losses (value -1 for both actions). Unvisited
    states fall back to the nearest visited state with the same ace flag
    (L1 distance over hand and dealer) unless ``fallback`` is False.
    """
    key = state if isinstance(state, tuple) else state_key(state)
    a = int(round(action))
    if key[0] > 21:
        return BUST_VALUE
    if (*key, a) in qtable.values:
        return qtable.values[(*key, a)]
    if key in qtable:
        return qtable.value(key, a)
    if not fallback:
        raise UnseenState(f"state {key} was not visited during training")
    near = _nearest(qtable, key)
    return qtable.value(near, a)


def _nearest(qtable: QTable, key: StateKey) -> StateKey:
    cands = sorted(qtable.states())
    same = [s for s in cands if s[1] == key[1]] or cands
    if not same:
        raise UnseenState("empty Q-table")
    return min(same, key=lambda s: (abs(s[0] - key[0]) + abs(s[2] - key[2]), s))


@dataclass(frozen=True)
class PolicyHandle:
    """Deterministic policy over named state features, optionally with its Q function."""

    id: str
    act: Callable[[Mapping[str, float]], float]
    state_features: tuple[str, ...]
    q: Callable[[Mapping[str, float], float], float] | None = None
    actions: tuple[float, ...] | None = None  # discrete action set
    interval: tuple[float, float] | None = None  # continuous action range

    def __call__(self, state: Mapping[str, float]) -> float:
        return float(self.act(state))

    def snap(self, action: float) -> float:
        """Map a numeric action onto the action space (nearest discrete action)."""
        if self.actions is not None:
            return min(self.actions, key=lambda a: (abs(a - action), a))
        return float(action)


def blackjack_policy(qtable: QTable, policy_id: str = "blackjack-mc") -> PolicyHandle:
    def act(state) -> float:
        key = state_key(state)
        if key[0] > 21:
            return float(bj.STICK)
        if key not in qtable:
            key = _nearest(qtable, key)
        return float(qtable.greedy(key))

    def q(state, action) -> float:
        return q_lookup(qtable, state, action)

    return PolicyHandle(policy_id, act, bj.FEATURES, q, (float(bj.STICK), float(bj.DRAW)))


def wrap_analytic_policy(env_id: str, **options) -> PolicyHandle:
    """Closed-form policy for ``env_id``; the two-feature system also carries its exact Q."""
    if env_id == "crop":
        return PolicyHandle("crop-suboptimal", crop.crop_policy, ("C", "D", "H"), interval=(0.0, 1.0))
    if env_id == "collision":
        cfg = options.get("config") or collision.CollisionConfig()
        return PolicyHandle(
            "collision-bang-bang", collision.policy_for(cfg), collision.FEATURES, actions=(-cfg.e_max, cfg.e_max)
        )
    if env_id == "appendix_c":
        return PolicyHandle("appendix_c-optimal", appendix_c.policy, ("S1", "S2"), appendix_c.q_function, (-1.0, 1.0))
    if env_id == "toy":
        return PolicyHandle("toy-quadratic", toy.toy_policy(options.get("params")), ("S1", "S2", "S3"))
    if env_id == "blackjack":
        if "qtable" not in options:
            raise InvalidConfig("the blackjack policy is learned; pass a trained Q-table")
        return blackjack_policy(options["qtable"])
    raise UnknownEnvironment(f"unknown environment {env_id!r}")
