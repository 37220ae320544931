"""Straight-line collision avoidance under bang-bang control.

State [V, X, D] with D = X_goal - X; the action is an acceleration in
[-e_max, e_max]. The car starts at rest and must stop at the goal.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..data import StepRecord
from ..errors import OutOfRange
from ..graph import CausalSkeleton, Edge, EdgeClass, Role, Variable
from ..scm import AnalyticRegressor, register_analytic

ENV_ID = "collision"
FEATURES = ("V", "X", "D")


@dataclass(frozen=True)
class CollisionConfig:
    v_max: float = 10.0
    e_max: float = 1.0
    x_goal: float = 100.0
    # dyadic step keeps the kinematics exact in floating point
    dt: float = 1.0 / 32.0
    max_steps: int = 10_000

    @property
    def stopping_distance(self) -> float:
        return self.v_max**2 / (2.0 * self.e_max)


def skeleton(cfg: CollisionConfig | None = None) -> CausalSkeleton:
    cfg = cfg or CollisionConfig()
    variables = (
        Variable("V", Role.STATE, range=(0.0, cfg.v_max)),
        Variable("X", Role.STATE, range=(0.0, cfg.x_goal)),
        Variable("D", Role.STATE, range=(0.0, cfg.x_goal)),
        Variable("A", Role.ACTION, range=(-cfg.e_max, cfg.e_max)),
    )
    edges = (
        Edge("X", "D", EdgeClass.INTRA),
        Edge("V", "A", EdgeClass.POLICY),
        Edge("X", "A", EdgeClass.POLICY),
        Edge("D", "A", EdgeClass.POLICY),
        Edge("V", "V", EdgeClass.TRANSITION),
        Edge("A", "V", EdgeClass.TRANSITION),
        Edge("X", "X", EdgeClass.TRANSITION),
        Edge("V", "X", EdgeClass.TRANSITION),
        Edge("A", "X", EdgeClass.TRANSITION),
    )
    return CausalSkeleton(variables, edges)


def bang_bang_policy(distance: float, v_max: float, e_max: float) -> float:
    """Full throttle until inside the stopping distance, then full brake (boundary brakes)."""
    if distance < 0:
        raise OutOfRange(f"negative distance to goal {distance}")
    return -e_max if distance <= v_max**2 / (2.0 * e_max) else e_max


def collision_step(state, accel: float, cfg: CollisionConfig | None = None) -> dict[str, float]:
    cfg = cfg or CollisionConfig()
    v, x = state["V"], state["X"]
    if abs(accel) > cfg.e_max or v > cfg.v_max:
        raise OutOfRange(f"accel={accel}, V={v} outside limits")
    nv = min(cfg.v_max, max(0.0, v + accel * cfg.dt))
    nx = x + v * cfg.dt + 0.5 * accel * cfg.dt**2
    return {"V": nv, "X": nx, "D": cfg.x_goal - nx}


def policy_for(cfg: CollisionConfig | None = None):
    cfg = cfg or CollisionConfig()

    def act(state) -> float:
        return bang_bang_policy(max(0.0, state["D"]), cfg.v_max, cfg.e_max)

    return act


@register_analytic("collision.A")
def _policy(p):
    v_max, e_max = p["v_max"], p["e_max"]
    return lambda x: bang_bang_policy(max(0.0, x["D"]), v_max, e_max)


def regressors(cfg: CollisionConfig | None = None) -> dict:
    cfg = cfg or CollisionConfig()
    return {"*": "linear", "A": AnalyticRegressor("collision.A", {"v_max": cfg.v_max, "e_max": cfg.e_max})}


def run_episode(policy, rng, horizon: int | None, episode: int, cfg: CollisionConfig | None = None) -> list[StepRecord]:
    cfg = cfg or CollisionConfig()
    limit = cfg.max_steps if horizon is None else horizon
    state = {"V": 0.0, "X": 0.0, "D": cfg.x_goal}
    out: list[StepRecord] = []
    for t in range(limit):
        a = float(policy(state))
        nxt = collision_step(state, a, cfg)
        arrived = a < 0 and nxt["V"] <= 0.0
        done = arrived or nxt["D"] <= 0.0 or t == limit - 1
        out.append(StepRecord(episode, t, {**state, "A": a}, a, -cfg.dt, done, nxt))
        if done:
            break
        state = nxt
    return out


def config_dict(cfg: CollisionConfig) -> dict:
    return asdict(cfg)
