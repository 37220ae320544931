from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_xrl.data import StepRecord
from causal_xrl.envs import appendix_c, collect, collision, toy
from causal_xrl.errors import AllZero, InvalidConfig, SegmentTooShort
from causal_xrl.explain import (
    CounterfactualContext,
    ImportanceEntry,
    ImportanceReport,
    PerturbationSpec,
    action_importance,
    context_importance,
    delta_sweep,
    explain_step,
    normalize,
    parse_reports,
    q_importance,
    saliency_importance,
    temporal_importance,
)
from causal_xrl.graph import Edge, EdgeClass, Kind, Role, Variable, build_skeleton
from causal_xrl.policies import wrap_analytic_policy
from causal_xrl.scm import LinearRegressor, StructuralFunction, StructuralModel, fit

finite = st.floats(-3, 3, allow_nan=False)


def toy_case(u, delta):
    p = toy.ToyParams(**toy.ToyParams().constants(), u1=u[0], u2=u[1], u3=u[2], up=u[3], ua=u[4])
    state, a = toy.toy_generate(p)
    return p, state, a, PerturbationSpec(absolute=delta)


def toy_action(p: toy.ToyParams, s1: float) -> float:
    """Action as a function of S1 with every exogenous term held fixed."""
    s2 = p.c12 * s1 + p.u2
    s3 = p.cp * p.up + p.u3
    return p.c1 * s1 + p.c2 * s2**2 + p.c3 * s3 + p.ua


# single step -----------------------------------------------------------------


def test_reference_state_table():
    p, state, a, spec = toy_case([0.5, -0.14, 0.65, 1.52, -0.23], 0.01)
    rep = action_importance(toy.toy_model(p), state, a, spec=spec)
    assert rep.value("S1") == pytest.approx(5.96, abs=1e-9)
    assert rep.value("S2") == pytest.approx(abs(p.c2 * (2 * state["S2"] + 0.01)), abs=1e-9)
    assert rep.value("S3") == pytest.approx(3.0, abs=1e-9)
    assert rep.value("Vp") == pytest.approx(3.0, abs=1e-9)
    sal = saliency_importance(wrap_analytic_policy("toy", params=p), state, spec, toy.skeleton())
    assert sal.value("S1") == pytest.approx(1.0, abs=1e-9) and sal.value("Vp") is None


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=5, max_size=5), st.floats(1e-3, 1.0))
def test_saliency_equivalence_without_intra_children(u, delta):
    p, state, a, spec = toy_case(u, delta)
    causal = action_importance(toy.toy_model(p), state, a, spec=spec)
    sal = saliency_importance(wrap_analytic_policy("toy", params=p), state, spec, toy.skeleton())
    for f in ("S2", "S3"):
        assert causal.value(f) == pytest.approx(sal.value(f), rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=5, max_size=5), st.floats(1e-3, 1.0))
def test_nonnegative_and_na_discipline(u, delta):
    p, state, a, spec = toy_case(u, delta)
    causal = action_importance(toy.toy_model(p), state, a, spec=spec)
    sal = saliency_importance(wrap_analytic_policy("toy", params=p), state, spec, toy.skeleton())
    assert all(e.importance is not None and e.importance >= 0 for e in causal.entries)
    assert all(e.importance is None or e.importance >= 0 for e in sal.entries)
    assert sal.value("Vp") is None and causal.value("Vp") is not None


def test_finite_difference_convergence():
    p, state, a, _ = toy_case([0.5, -0.14, 0.65, 1.52, -0.23], 0.01)
    model = toy.toy_model(p)
    h = 1e-5
    fd = abs((toy_action(p, state["S1"] + h) - toy_action(p, state["S1"] - h)) / (2 * h))
    errors = [abs(action_importance(model, state, a, spec=PerturbationSpec(absolute=d)).value("S1") - fd) for d in (1e-2, 1e-4, 1e-8)]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] <= 1e-6


def test_feature_without_path_is_zero():
    sk = build_skeleton(
        [Variable("s"), Variable("z", Role.AUXILIARY), Variable("a", Role.ACTION)], [Edge("s", "a", EdgeClass.POLICY)]
    )
    model = StructuralModel(sk, {"a": StructuralFunction("a", (("s", 0),), LinearRegressor(np.array([2.0]), 0.1))})
    rep = action_importance(model, {"s": 1.0, "z": 5.0}, 2.3, spec=PerturbationSpec(absolute=0.5))
    assert rep.value("z") == 0.0 and rep.value("s") == pytest.approx(2.0)


def test_linear_model_delta_invariance():
    sk = build_skeleton(
        [Variable("s1"), Variable("s2"), Variable("a", Role.ACTION)],
        [Edge("s1", "s2"), Edge("s1", "a", EdgeClass.POLICY), Edge("s2", "a", EdgeClass.POLICY)],
    )
    model = StructuralModel(
        sk,
        {
            "s2": StructuralFunction("s2", (("s1", 0),), LinearRegressor(np.array([0.75]), 0.0)),
            "a": StructuralFunction("a", (("s1", 0), ("s2", 0)), LinearRegressor(np.array([-1.5, 2.0]), 0.2)),
        },
    )
    state = {"s1": 0.4, "s2": 0.1}
    r1 = action_importance(model, state, 0.5, spec=PerturbationSpec(absolute=0.1))
    r2 = action_importance(model, state, 0.5, spec=PerturbationSpec(absolute=0.2))
    for e in r1.entries:
        assert r2.value(e.feature) == pytest.approx(e.importance, abs=1e-9)
    assert r1.value("s1") == pytest.approx(0.0, abs=1e-9)  # -1.5 + 2.0 * 0.75
    assert r1.value("s2") == pytest.approx(2.0)


def test_two_feature_q_metric():
    model = appendix_c.model()
    state = {"S1": 0.5, "S2": -0.2}
    rq = q_importance(model, state, 1.0, appendix_c.q_function, PerturbationSpec(fraction=0.01))
    assert rq.value("S2") == pytest.approx(100.0) and rq.value("S1") == pytest.approx(1.0)
    ra = action_importance(model, {"S1": -0.01, "S2": 0.3}, -1.0, spec=PerturbationSpec(fraction=0.01))
    assert ra.value("S1") == pytest.approx(2 / 0.02) and ra.value("S2") == 0.0


def test_perturbation_rules():
    spec = PerturbationSpec(fraction=0.1, overrides={"y": 0.5})
    assert spec.perturb(Variable("x", range=(0.0, 4.0)), 1.0) == (1.4, pytest.approx(0.4))
    assert spec.perturb(Variable("y", range=(0.0, 4.0)), 1.0) == (1.5, 0.5)
    assert spec.perturb(Variable("n", kind=Kind.INTEGER, range=(0, 9)), 3.0) == (4.0, 1.0)
    assert spec.perturb(Variable("b", kind=Kind.BOOLEAN), 1.0) == (0.0, 1.0)
    with pytest.raises(InvalidConfig):
        PerturbationSpec(fraction=0.0)
    with pytest.raises(InvalidConfig):
        spec.delta(Variable("free"))


# temporal ----------------------------------------------------------------------


def identity_transition_model(k: float = -1.7):
    sk = build_skeleton(
        [Variable("s"), Variable("w"), Variable("a", Role.ACTION)],
        [
            Edge("s", "w"),
            Edge("s", "a", EdgeClass.POLICY),
            Edge("w", "a", EdgeClass.POLICY),
            Edge("s", "s", EdgeClass.TRANSITION),
            Edge("w", "w", EdgeClass.TRANSITION),
        ],
    )
    fns = {
        "w": StructuralFunction("w", (("s", 0), ("w", 1)), LinearRegressor(np.array([0.0, 1.0]), 0.0)),
        "s": StructuralFunction("s", (("s", 1),), LinearRegressor(np.array([1.0]), 0.0)),
        "a": StructuralFunction("a", (("s", 0), ("w", 0)), LinearRegressor(np.array([k, 0.5]), 0.0)),
    }
    return StructuralModel(sk, fns)


def linear_episode(model, n: int, seed: int) -> list[StepRecord]:
    rng = np.random.default_rng(seed)
    s, w = rng.normal(size=2)
    out = []
    for t in range(n):
        s, w = s + rng.normal(), w + rng.normal()
        a = -1.7 * s + 0.5 * w + rng.normal()
        out.append(StepRecord(0, t, {"s": s, "w": w, "a": a}, a, 0.0, t == n - 1))
    return out


@pytest.mark.parametrize("horizon", [1, 2, 4])
def test_identity_transitions_match_single_step(horizon):
    model = identity_transition_model()
    ep = linear_episode(model, 6, seed=horizon)
    spec = PerturbationSpec(absolute=0.25)
    target = 5
    rep = temporal_importance(model, ep, target, horizon, spec=spec)
    single = action_importance(model, ep[target].values, ep[target].action, spec=spec, boundary=ep[target - 1].values, step=target)
    for tau in range(target - horizon + 1, target + 1):
        assert rep.value("s", tau) == pytest.approx(single.value("s"), abs=1e-9)
        assert rep.value("w", tau) == pytest.approx(single.value("w"), abs=1e-9)
        if tau < target:
            assert rep.value("a", tau) == 0.0
    assert ("a", target) not in rep.as_dict()


def crop_truth_episode():
    from causal_xrl.envs import crop

    ds = collect("crop", wrap_analytic_policy("crop"), 2, 10, seed=4)
    sk = crop.skeleton()
    return fit(sk, ds, {"*": "linear", **crop.regressors()}), ds.episode(1)


def test_horizon_one_is_single_step_bit_exact():
    model, ep = crop_truth_episode()
    for t in (0, 3, 9):
        rep = temporal_importance(model, ep, t, 1)
        single = action_importance(model, ep[t].values, ep[t].action, boundary=ep[t - 1].values if t else None, step=t)
        assert rep.as_dict() == single.as_dict()


def test_explain_step_rows():
    model, ep = crop_truth_episode()
    first = explain_step(model, ep, 0)
    assert {tau for _, tau in first.as_dict()} == {0}
    later = explain_step(model, ep, 4)
    keys = set(later.as_dict())
    assert {tau for _, tau in keys} == {3, 4}
    assert ("I", 3) in keys and ("I", 4) not in keys
    sal = explain_step(model, ep, 4, "saliency", policy=wrap_analytic_policy("crop"))
    assert set(sal.as_dict()) == keys
    assert sal.value("H", 3) is None and sal.value("P", 4) is None and sal.value("H", 4) is not None
    with pytest.raises(SegmentTooShort):
        explain_step(model, ep, 10)
    with pytest.raises(SegmentTooShort):
        temporal_importance(model, ep, 2, 4)


def test_blackjack_action_importance_mostly_zero(bj_model, bj_policy):
    ds = collect("blackjack", bj_policy, 50, seed=99)
    hand = [
        explain_step(bj_model, ep, t, "action", policy=bj_policy).value("hand", t)
        for ep in ds.episodes
        for t in range(len(ep))
    ]
    assert np.mean(np.array(hand) == 0.0) > 0.5
    assert set(hand) <= {0.0, 1.0}


# normalization, sweeps, serialization ----------------------------------------------


def _report(values, metric="action"):
    entries = tuple(ImportanceEntry(metric, f"f{i}", 0, 0.1, v) for i, v in enumerate(values))
    return ImportanceReport(metric, entries, 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=8).filter(lambda v: max(v) > 0), st.floats(1e-3, 1e3))
def test_normalize_scale_invariant(values, c):
    a = normalize(_report(values))
    b = normalize(_report([v * c for v in values]))
    assert max(e.normalized for e in a.entries) == 1.0
    for x, y in zip(a.entries, b.entries):
        assert x.normalized == pytest.approx(y.normalized, rel=1e-12, abs=1e-300)


def test_normalize_series_and_errors():
    out = normalize([_report([1.0, 2.0]), _report([4.0, 0.0])])
    assert [e.normalized for r in out for e in r.entries] == [0.25, 0.5, 1.0, 0.0]
    assert normalize(_report([3.5])).entries[0].normalized == 1.0
    with pytest.raises(AllZero):
        normalize(_report([0.0, 0.0]))


def test_delta_sweep_on_toy():
    p, state, a, _ = toy_case([0.5, -0.14, 0.65, 1.52, -0.23], 0.01)
    ctx = CounterfactualContext(toy.toy_model(p), [{**state, "A": a}], None)
    deltas = [0.01, 0.05, 0.1, 0.5]
    reps = delta_sweep(lambda s: context_importance(ctx, "action", s), [PerturbationSpec(absolute=d) for d in deltas])
    s1 = [r.value("S1") for r in reps]
    slope = np.polyfit(deltas, s1, 1)[0]
    assert abs(slope) == pytest.approx(abs(p.c2 * p.c12**2), rel=1e-9)
    assert [r.metadata["perturbation"]["absolute"] for r in reps] == deltas


def test_collision_nonzero_steps_grow_with_delta():
    cfg = collision.CollisionConfig()
    pol = wrap_analytic_policy("collision")
    ds = collect("collision", pol, 2, seed=0)
    model = fit(collision.skeleton(cfg), ds, {"*": "linear", **collision.regressors(cfg)})
    ep = ds.episode(0)
    counts = []
    for d in (0.005, 0.01, 0.03):
        spec = PerturbationSpec(fraction=d)
        counts.append(sum(explain_step(model, ep, t, "action", spec=spec, policy=pol).value("D", t) > 0 for t in range(len(ep))))
    assert counts[0] < counts[1] < counts[2]


def test_csv_and_json_round_trip():
    p, state, a, spec = toy_case([0.3, 0.1, -0.7, 0.9, 0.05], 0.037)
    rep = action_importance(toy.toy_model(p), state, a, spec=spec)
    sal = saliency_importance(wrap_analytic_policy("toy", params=p), state, spec, toy.skeleton())
    for r in (rep, normalize(rep), sal):
        assert ImportanceReport.from_csv(r.to_csv()).entries == r.entries
        back = ImportanceReport.from_json(r.to_json())
        assert back.entries == r.entries and back.normalized == r.normalized
    both = parse_reports(rep.to_csv() + sal.to_csv().split("\n", 1)[1])
    assert [r.metric for r in both] == ["action", "saliency"]
    assert "N/A" in sal.to_csv() and math.isfinite(rep.value("S1"))
