"""Crop irrigation.

Per step: precipitation P and solar radiation D are fresh U(0, 1) draws,
humidity H = 0.3*H_prev + 0.7*P, and crop weight grows by
0.07*(1 - (0.4*H + 0.6*I_prev - D**2)**2) + 0.03*U(0, 1). The irrigation
policy I(H, C, D) reads humidity, crop weight and radiation.
"""

from __future__ import annotations

import numpy as np

from ..data import StepRecord
from ..errors import OutOfRange
from ..graph import CausalSkeleton, Edge, EdgeClass, Role, Variable
from ..scm import AnalyticRegressor, register_analytic

ENV_ID = "crop"
FEATURES = ("P", "H", "C", "D")
DEFAULT_HORIZON = 10
UNIT = (0.0, 1.0)


def skeleton() -> CausalSkeleton:
    variables = (
        Variable("P", Role.AUXILIARY, range=UNIT),
        Variable("H", Role.STATE, range=UNIT),
        Variable("C", Role.STATE, range=UNIT),
        Variable("D", Role.STATE, range=UNIT),
        Variable("I", Role.ACTION, range=UNIT),
    )
    edges = (
        Edge("P", "H", EdgeClass.INTRA),
        Edge("H", "H", EdgeClass.TRANSITION),
        Edge("H", "C", EdgeClass.INTRA),
        Edge("C", "C", EdgeClass.TRANSITION),
        Edge("D", "C", EdgeClass.INTRA),
        Edge("I", "C", EdgeClass.TRANSITION),
        Edge("H", "I", EdgeClass.POLICY),
        Edge("C", "I", EdgeClass.POLICY),
        Edge("D", "I", EdgeClass.POLICY),
    )
    return CausalSkeleton(variables, edges)


def _clip(v: float) -> float:
    return min(1.0, max(0.0, v))


def _check_unit(**values: float) -> None:
    for k, v in values.items():
        if not 0.0 <= v <= 1.0:
            raise OutOfRange(f"{k}={v} outside [0, 1]")


def growth(humidity: float, irrigation: float, radiation: float) -> float:
    """Deterministic crop-weight increment; maximal (0.07) when 0.4H + 0.6I = D**2."""
    return 0.07 * (1.0 - (0.4 * humidity + 0.6 * irrigation - radiation**2) ** 2)


def crop_step(state, irrigation: float, rng: np.random.Generator) -> dict[str, float]:
    _check_unit(I=irrigation, **{k: state[k] for k in FEATURES})
    p = float(rng.uniform())
    d = float(rng.uniform())
    noise = float(rng.uniform())
    h = 0.3 * state["H"] + 0.7 * p
    c = state["C"] + growth(h, irrigation, d) + 0.03 * noise
    return {"P": p, "H": _clip(h), "C": _clip(c), "D": d}


def crop_policy(state) -> float:
    h, c, d = state["H"], state["C"], state["D"]
    return _clip((d**2 - 0.4 * h) * (1.6 * c + 0.2) / 0.6)


def crop_reset(rng: np.random.Generator) -> dict[str, float]:
    p = float(rng.uniform())
    d = float(rng.uniform())
    c = float(rng.uniform(0.0, 0.5))
    return {"P": p, "H": 0.7 * p, "C": c, "D": d}


@register_analytic("crop.I")
def _policy(_params):
    return crop_policy


@register_analytic("crop.H")
def _humidity(_params):
    return lambda x: 0.3 * x["H_prev"] + 0.7 * x["P"]


@register_analytic("crop.C")
def _crop_weight(_params):
    # mean of the 0.03*U(0,1) term is left in the residual
    return lambda x: x["C_prev"] + growth(x["H"], x["I_prev"], x["D"])


def regressors() -> dict:
    return {n: AnalyticRegressor(f"crop.{n}") for n in ("H", "C", "I")}


def run_episode(policy, rng: np.random.Generator, horizon: int, episode: int) -> list[StepRecord]:
    state = crop_reset(rng)
    out = []
    for t in range(horizon):
        a = float(policy(state))
        nxt = crop_step(state, a, rng)
        done = t == horizon - 1
        out.append(StepRecord(episode, t, {**state, "I": a}, a, nxt["C"] - state["C"], done, nxt))
        state = nxt
    return out
