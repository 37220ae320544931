"""One-step MDP where the Q-function and the policy weight the state features differently.

R(S, a) = 100*S2 + a*S1; the optimal policy plays sign(S1) and ignores S2.
"""

from __future__ import annotations

import numpy as np

from ..data import StepRecord
from ..graph import CausalSkeleton, Edge, EdgeClass, Role, Variable
from ..scm import AnalyticRegressor, StructuralFunction, StructuralModel, register_analytic

ENV_ID = "appendix_c"


def skeleton() -> CausalSkeleton:
    return CausalSkeleton(
        (
            Variable("S1", Role.STATE, range=(-1.0, 1.0)),
            Variable("S2", Role.STATE, range=(-1.0, 1.0)),
            Variable("A", Role.ACTION, range=(-1.0, 1.0)),
        ),
        (Edge("S1", "A", EdgeClass.POLICY), Edge("S2", "A", EdgeClass.POLICY)),
    )


def policy(state) -> float:
    return -1.0 if state["S1"] < 0 else 1.0


def q_function(state, action: float) -> float:
    return 100.0 * state["S2"] + action * state["S1"]


@register_analytic("appendix_c.policy")
def _policy(_params):
    return policy


def regressors() -> dict:
    return {"A": AnalyticRegressor("appendix_c.policy")}


def model() -> StructuralModel:
    sk = skeleton()
    return StructuralModel(sk, {"A": StructuralFunction("A", sk.parents_of("A"), regressors()["A"])}, {"env": ENV_ID})


def appendixC_env():
    """(skeleton, exact Q, optimal policy)."""
    return skeleton(), q_function, policy


def run_episode(pol, rng: np.random.Generator, horizon: int, episode: int):
    s = rng.uniform(-1.0, 1.0, size=2)
    state = {"S1": float(s[0]), "S2": float(s[1])}
    a = float(pol(state))
    return [StepRecord(episode, 0, {**state, "A": a}, a, q_function(state, a), True, None)]
