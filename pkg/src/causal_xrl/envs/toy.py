"""One-step MDP with a quadratic policy and an unobserved-by-policy parent of S3.

    S1 = u1,  S2 = c12*S1 + u2,  Vp = up,  S3 = cp*Vp + u3,
    A  = c1*S1 + c2*S2**2 + c3*S3 + ua
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..data import StepRecord
from ..graph import CausalSkeleton, Edge, EdgeClass, Role, Variable
from ..scm import AnalyticRegressor, StructuralFunction, StructuralModel, register_analytic

ENV_ID = "toy"
FEATURES = ("S1", "S2", "S3", "Vp")


@dataclass(frozen=True)
class ToyParams:
    c1: float = 1.0
    c2: float = -2.0
    c3: float = 3.0
    c12: float = 2.0
    cp: float = -1.0
    u1: float = 0.50
    u2: float = -0.14
    u3: float = 0.65
    up: float = 1.52
    ua: float = -0.23

    def constants(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k.startswith("c")}


def skeleton() -> CausalSkeleton:
    variables = (
        Variable("S1"),
        Variable("S2"),
        Variable("S3"),
        Variable("Vp", Role.AUXILIARY),
        Variable("A", Role.ACTION),
    )
    edges = (
        Edge("S1", "S2", EdgeClass.INTRA),
        Edge("Vp", "S3", EdgeClass.INTRA),
        Edge("S1", "A", EdgeClass.POLICY),
        Edge("S2", "A", EdgeClass.POLICY),
        Edge("S3", "A", EdgeClass.POLICY),
    )
    return CausalSkeleton(variables, edges)


@register_analytic("toy.S2")
def _s2(p):
    return lambda x: p["c12"] * x["S1"]


@register_analytic("toy.S3")
def _s3(p):
    return lambda x: p["cp"] * x["Vp"]


@register_analytic("toy.A")
def _action(p):
    return lambda x: p["c1"] * x["S1"] + p["c2"] * x["S2"] ** 2 + p["c3"] * x["S3"]


def toy_generate(params: ToyParams) -> tuple[dict[str, float], float]:
    p = params
    s1 = p.u1
    s2 = p.c12 * s1 + p.u2
    vp = p.up
    s3 = p.cp * vp + p.u3
    a = p.c1 * s1 + p.c2 * s2**2 + p.c3 * s3 + p.ua
    return {"S1": s1, "S2": s2, "S3": s3, "Vp": vp}, a


def regressors(params: ToyParams | None = None) -> dict:
    c = (params or ToyParams()).constants()
    return {k: AnalyticRegressor(f"toy.{k}", c) for k in ("S2", "S3", "A")}


def toy_model(params: ToyParams | None = None) -> StructuralModel:
    """The ground-truth SCM with analytic mechanisms."""
    sk = skeleton()
    fns = {
        name: StructuralFunction(name, sk.parents_of(name), reg)
        for name, reg in regressors(params).items()
    }
    return StructuralModel(sk, fns, {"env": ENV_ID})


def toy_policy(params: ToyParams | None = None):
    p = params or ToyParams()

    def act(state) -> float:
        return p.c1 * state["S1"] + p.c2 * state["S2"] ** 2 + p.c3 * state["S3"] + p.ua

    return act


def toy_analytic_importance(params: ToyParams, state, u2: float, delta: float) -> dict[str, tuple[float, float | None]]:
    """Closed-form (causal, saliency) importance per feature; saliency of Vp is None."""
    c1, c2, c3, c12, cp = params.c1, params.c2, params.c3, params.c12, params.cp
    s1, s2 = state["S1"], state["S2"]
    return {
        "S1": (abs(c1 + c2 * c12 * (c12 * (2 * s1 + delta) + 2 * u2)), abs(c1)),
        "S2": (abs(c2 * (2 * s2 + delta)), abs(c2 * (2 * s2 + delta))),
        "S3": (abs(c3), abs(c3)),
        "Vp": (abs(cp * c3), None),
    }


def run_episode(policy, rng: np.random.Generator, horizon: int, episode: int, params: ToyParams | None = None):
    c = (params or ToyParams()).constants()
    u = rng.standard_normal(5)
    p = ToyParams(**c, u1=u[0], u2=u[1], u3=u[2], up=u[3], ua=u[4])
    state, a = toy_generate(p)
    values = {k: float(v) for k, v in state.items()}
    values["A"] = float(a)
    return [StepRecord(episode, 0, values, float(a), 0.0, True, None)]
