from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_xrl.data import TrajectoryDataset
from causal_xrl.envs import appendix_c, blackjack, collect, collision, crop, get_environment, toy
from causal_xrl.errors import ActionAfterDone, InvalidConfig, OutOfRange, UnknownEnvironment
from causal_xrl.policies import wrap_analytic_policy


class Scripted:
    """Stand-in generator returning queued values."""

    def __init__(self, uniforms=(), ints=()):
        self.u = list(uniforms)
        self.i = list(ints)

    def uniform(self, low=0.0, high=1.0):
        return low + (high - low) * self.u.pop(0)

    def integers(self, low, high=None):
        return self.i.pop(0)


# crop ---------------------------------------------------------------------


def test_crop_zero_humidity():
    nxt = crop.crop_step({"P": 0.3, "H": 0.0, "C": 0.2, "D": 0.4}, 0.1, Scripted([0.0, 0.4, 0.0]))
    assert nxt["H"] == 0.0


def test_crop_maximum_growth():
    h, i = 0.5, 0.5
    d = np.sqrt(0.4 * h + 0.6 * i)
    assert crop.growth(h, i, d) == pytest.approx(0.07, abs=1e-15)
    # H' = 0.7 P' with H = 0, so choose P' to hit the optimum exactly
    p = 0.5 / 0.7
    nxt = crop.crop_step({"P": 0.0, "H": 0.0, "C": 0.1, "D": 0.0}, 0.5, Scripted([p, d, 0.0]))
    assert nxt["C"] == pytest.approx(0.17, abs=1e-12)


def test_crop_step_against_hand_evaluation():
    state = {"P": 0.5, "H": 0.5, "C": 0.5, "D": 0.5}
    nxt = crop.crop_step(state, 0.5, np.random.default_rng(42))
    p, d, noise = np.random.default_rng(42).uniform(size=3)
    h = 0.3 * 0.5 + 0.7 * p
    c = 0.5 + 0.07 * (1 - (0.4 * h + 0.6 * 0.5 - d * d) ** 2) + 0.03 * noise
    assert nxt == {"P": p, "H": h, "C": min(1.0, c), "D": d}


def test_crop_out_of_range():
    with pytest.raises(OutOfRange):
        crop.crop_step({"P": 0.5, "H": 1.5, "C": 0.5, "D": 0.5}, 0.5, np.random.default_rng(0))
    with pytest.raises(OutOfRange):
        crop.crop_step({"P": 0.5, "H": 0.5, "C": 0.5, "D": 0.5}, -0.1, np.random.default_rng(0))


def test_crop_policy_examples():
    assert crop.crop_policy({"H": 0.12, "C": 0.44, "D": 0.70}) == pytest.approx(0.67, abs=0.01)
    assert crop.crop_policy({"H": 0.0, "C": 0.3, "D": 0.0}) == 0.0
    h, d = 0.2, 0.7
    assert crop.crop_policy({"H": h, "C": 0.5, "D": d}) == pytest.approx((d * d - 0.4 * h) / 0.6, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**31))
def test_crop_weight_nondecreasing(h, c, d, i, seed):
    nxt = crop.crop_step({"P": 0.0, "H": h, "C": c, "D": d}, i, np.random.default_rng(seed))
    if (0.4 * nxt["H"] + 0.6 * i - nxt["D"] ** 2) ** 2 <= 1:
        assert nxt["C"] >= c


# collision ----------------------------------------------------------------


def test_collision_rest():
    cfg = collision.CollisionConfig()
    s = {"V": 0.0, "X": 3.0, "D": cfg.x_goal - 3.0}
    assert collision.collision_step(s, 0.0, cfg) == s


def test_collision_kinematics():
    cfg = collision.CollisionConfig(e_max=2.0, dt=0.1)
    nxt = collision.collision_step({"V": 1.0, "X": 0.0, "D": cfg.x_goal}, 2.0, cfg)
    assert nxt["V"] == pytest.approx(1.2, abs=1e-15)
    assert nxt["X"] == pytest.approx(0.11, abs=1e-15)
    assert nxt["D"] == cfg.x_goal - nxt["X"]


def test_collision_limits():
    cfg = collision.CollisionConfig()
    with pytest.raises(OutOfRange):
        collision.collision_step({"V": 0.0, "X": 0.0, "D": 100.0}, 1.5, cfg)


def test_bang_bang_switch():
    assert collision.bang_bang_policy(50.0, 10.0, 1.0) == -1.0
    assert collision.bang_bang_policy(1e6, 10.0, 1.0) == 1.0
    ds = np.linspace(40, 60, 2001)
    acts = [collision.bang_bang_policy(d, 10.0, 1.0) for d in ds]
    switch = [d for d, a, b in zip(ds[1:], acts, acts[1:]) if a != b]
    assert switch and abs(switch[0] - 50.0) < 0.011
    with pytest.raises(OutOfRange):
        collision.bang_bang_policy(-1.0, 10.0, 1.0)


def test_collision_episode_triangle_profile():
    cfg = collision.CollisionConfig()
    ep = collect("collision", wrap_analytic_policy("collision"), 1, seed=0).episodes[0]
    v = np.array([r.values["V"] for r in ep] + [ep[-1].next_values["V"]])
    peak = int(v.argmax())
    assert np.all(np.diff(v[: peak + 1]) > 0) and np.all(np.diff(v[peak:]) < 0)
    assert v[-1] <= cfg.dt * cfg.e_max
    for r in ep:
        assert r.values["D"] + r.values["X"] == cfg.x_goal
    # the switch lands where the stopping distance is reached
    first_brake = next(r for r in ep if r.action < 0)
    assert first_brake.values["D"] == cfg.stopping_distance


# blackjack ----------------------------------------------------------------


def test_blackjack_stick_dealer_busts():
    s = blackjack.BlackjackState(21, True, 10, 6)  # player soft 21 shown as hand 21
    assert s.hand == 21
    _, reward, done = blackjack.blackjack_step(s, blackjack.STICK, Scripted(ints=[6]))
    assert done and reward == 1.0


def test_blackjack_draw_bust():
    s = blackjack.BlackjackState(20, False, 7, 10)
    nxt, reward, done = blackjack.blackjack_step(s, blackjack.DRAW, Scripted(ints=[5]))
    assert nxt.hand == 25 and reward == -1.0 and done


def test_blackjack_action_after_done():
    s = blackjack.BlackjackState(20, False, 7, 10, done=True)
    with pytest.raises(ActionAfterDone):
        blackjack.blackjack_step(s, blackjack.DRAW, np.random.default_rng(0))


def test_usable_ace_bookkeeping():
    s = blackjack.BlackjackState(2, True, 5, 5)  # A + A
    assert (s.hand, s.usable_ace) == (12, True)
    nxt, _, _ = blackjack.blackjack_step(s, blackjack.DRAW, Scripted(ints=[13]))  # face card
    assert (nxt.hand, nxt.usable_ace) == (12, False)


def test_card_distribution():
    rng = np.random.default_rng(0)
    cards = np.array([blackjack.draw_card(rng) for _ in range(26_000)])
    assert cards.min() == 1 and cards.max() == 10
    assert np.mean(cards == 10) == pytest.approx(4 / 13, abs=0.01)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_hard_sum_increases_on_draw_and_episodes_end(seed):
    rng = np.random.default_rng(seed)
    s = blackjack.blackjack_reset(rng)
    for _ in range(22):
        nxt, _, done = blackjack.blackjack_step(s, blackjack.DRAW, rng)
        assert nxt.player_hard > s.player_hard
        if done:
            return
        s = nxt
    pytest.fail("drawing never ended the episode")


def test_blackjack_two_seed_return_agreement(bj_policy):
    def mean_return(seed):
        ds = collect("blackjack", bj_policy, 100_000, seed=seed)
        return np.mean([ep[-1].reward for ep in ds.episodes])

    assert abs(mean_return(10) - mean_return(11)) <= 0.02


# toy and two-feature systems ----------------------------------------------


def test_toy_generate_reference_values():
    state, a = toy.toy_generate(toy.ToyParams())
    assert state["S1"] == 0.5 and state["Vp"] == 1.52
    assert round(state["S2"], 2) == 0.86 and round(state["S3"], 2) == -0.87
    assert a == pytest.approx(-3.8192, abs=1e-12)


def test_toy_zero_system():
    state, a = toy.toy_generate(toy.ToyParams(0, 0, 0, 0, 0, 0, 0, 0, 0, 0))
    assert all(v == 0 for v in state.values()) and a == 0


def test_toy_table_examples():
    p = toy.ToyParams()
    state, _ = toy.toy_generate(p)
    table = toy.toy_analytic_importance(p, state, p.u2, 0.01)
    assert table["S1"] == pytest.approx((5.96, 1.0), abs=1e-12)
    assert table["Vp"][1] is None
    q = toy.ToyParams(c12=0.0)
    s0, _ = toy.toy_generate(q)
    assert toy.toy_analytic_importance(q, s0, q.u2, 0.3)["S1"] == (abs(q.c1), abs(q.c1))


def test_appendix_c_reward_and_policy():
    _, q, pi = appendix_c.appendixC_env()
    assert q({"S1": 0.5, "S2": 0.0}, 1.0) == 0.5
    assert pi({"S1": -0.3, "S2": 0.4}) == -1.0


# collection ---------------------------------------------------------------


def test_collect_sizes_and_provenance():
    ds = collect("crop", wrap_analytic_policy("crop"), 1000, 10, seed=7)
    assert len(ds) == 10_000
    assert ds.provenance == {"env": "crop", "policy": "crop-suboptimal", "seed": 7, "episodes": 1000, "horizon": 10}
    one = collect("crop", wrap_analytic_policy("crop"), 1, 1, seed=0)
    assert len(one) == 1


def test_collect_deterministic_and_round_trip():
    a = collect("crop", wrap_analytic_policy("crop"), 20, 10, seed=3)
    b = collect("crop", wrap_analytic_policy("crop"), 20, 10, seed=3)
    assert a.dumps() == b.dumps()
    again = TrajectoryDataset.loads(a.dumps())
    assert again.dumps() == a.dumps()
    assert [r.values for r in again.records()] == [r.values for r in a.records()]


def test_records_chain_and_carry_all_variables():
    ds = collect("crop", wrap_analytic_policy("crop"), 5, 10, seed=1)
    names = set(crop.skeleton().names)
    for ep in ds.episodes:
        for r, nxt in zip(ep, ep[1:]):
            assert set(r.values) == names
            assert r.next_values == {k: nxt.values[k] for k in r.next_values}


def test_collect_errors():
    with pytest.raises(InvalidConfig):
        collect("crop", wrap_analytic_policy("crop"), 0, 10, seed=0)
    with pytest.raises(UnknownEnvironment):
        get_environment("lunar")
