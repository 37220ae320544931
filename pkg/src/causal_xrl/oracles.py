"""Closed-form checks of the explainer on the two analytic one-step systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import appendix_c, toy
from .explain import PerturbationSpec, action_importance, q_importance, saliency_importance
from .policies import wrap_analytic_policy


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def toy_table_check(draws: int = 100, seed: int = 0, tol: float = 1e-9) -> CheckResult:
    """Explainer output against the closed-form importance table on random (state, delta)."""
    rng = np.random.default_rng([seed, 1])
    base = toy.ToyParams()
    model = toy.toy_model(base)
    worst = 0.0
    na_ok = True
    for _ in range(draws):
        u = rng.normal(size=5)
        delta = float(rng.uniform(1e-3, 1.0))
        p = toy.ToyParams(**base.constants(), u1=u[0], u2=u[1], u3=u[2], up=u[3], ua=u[4])
        state, a = toy.toy_generate(p)
        spec = PerturbationSpec(absolute=delta)
        causal = action_importance(model, state, a, spec=spec)
        sal = saliency_importance(wrap_analytic_policy("toy", params=p), state, spec, model.skeleton)
        expect = toy.toy_analytic_importance(p, state, p.u2, delta)
        for f, (c, s) in expect.items():
            worst = max(worst, abs(causal.value(f) - c))
            got = sal.value(f)
            if s is None:
                na_ok = na_ok and got is None
            else:
                worst = max(worst, abs(got - s))
        na_ok = na_ok and causal.value("Vp") is not None
    return CheckResult(
        "toy importance table", worst <= tol and na_ok, f"max abs error {worst:.3e} over {draws} draws, Vp N/A ok={na_ok}"
    )


def appendix_c_check(n: int = 21) -> CheckResult:
    """Action metric ranks S1 >= S2 wherever S1 != 0; the Q metric ranks S2 > S1 everywhere."""
    model = appendix_c.model()
    spec = PerturbationSpec(fraction=0.01)
    grid = np.linspace(-1.0, 1.0, n)
    action_ok = q_ok = True
    for s1 in grid:
        for s2 in grid:
            state = {"S1": float(s1), "S2": float(s2)}
            a = appendix_c.policy(state)
            ra = action_importance(model, state, a, spec=spec)
            rq = q_importance(model, state, a, appendix_c.q_function, spec)
            if s1 != 0 and not ra.value("S1") >= ra.value("S2"):
                action_ok = False
            if not rq.value("S2") > rq.value("S1"):
                q_ok = False
    return CheckResult(
        "two-feature ranking flip", action_ok and q_ok, f"{n}x{n} grid, action S1>=S2: {action_ok}, q S2>S1: {q_ok}"
    )


def run_all(seed: int = 0) -> list[CheckResult]:
    return [toy_table_check(seed=seed), appendix_c_check()]
