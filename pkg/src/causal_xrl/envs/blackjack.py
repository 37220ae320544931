"""Infinite-deck Blackjack with the observable state [hand, ace, dealer].

Actions are coded stick = 0, draw = 1. ``hand`` counts a usable ace as 11.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..data import StepRecord
from ..errors import ActionAfterDone
from ..graph import CausalSkeleton, Edge, EdgeClass, Kind, Role, Variable
from ..scm import AnalyticRegressor, register_analytic

ENV_ID = "blackjack"
FEATURES = ("hand", "ace", "dealer")
STICK, DRAW = 0, 1
# expected card value with aces counted as 1 and 10 weighted 4/13
MEAN_CARD = 85.0 / 13.0


def skeleton() -> CausalSkeleton:
    variables = (
        Variable("hand", Role.STATE, Kind.INTEGER, (2.0, 31.0)),
        Variable("ace", Role.STATE, Kind.BOOLEAN),
        Variable("dealer", Role.STATE, Kind.INTEGER, (1.0, 10.0)),
        Variable("action", Role.ACTION, Kind.BOOLEAN),
    )
    edges = (
        Edge("hand", "action", EdgeClass.POLICY),
        Edge("ace", "action", EdgeClass.POLICY),
        Edge("dealer", "action", EdgeClass.POLICY),
        Edge("hand", "hand", EdgeClass.TRANSITION),
        Edge("ace", "hand", EdgeClass.TRANSITION),
        Edge("action", "hand", EdgeClass.TRANSITION),
        Edge("ace", "ace", EdgeClass.TRANSITION),
        Edge("action", "ace", EdgeClass.TRANSITION),
        Edge("dealer", "dealer", EdgeClass.TRANSITION),
    )
    return CausalSkeleton(variables, edges)


def draw_card(rng) -> int:
    return min(int(rng.integers(1, 14)), 10)


def _score(hard: int, has_ace: bool) -> tuple[int, bool]:
    usable = has_ace and hard + 10 <= 21
    return (hard + 10 if usable else hard), usable


@dataclass(frozen=True)
class BlackjackState:
    player_hard: int  # aces counted as 1
    player_has_ace: bool
    dealer_card: int
    dealer_hidden: int
    done: bool = False

    @property
    def hand(self) -> int:
        return _score(self.player_hard, self.player_has_ace)[0]

    @property
    def usable_ace(self) -> bool:
        return _score(self.player_hard, self.player_has_ace)[1]

    def observation(self) -> dict[str, float]:
        return {"hand": float(self.hand), "ace": float(self.usable_ace), "dealer": float(self.dealer_card)}


def blackjack_reset(rng) -> BlackjackState:
    c1, c2 = draw_card(rng), draw_card(rng)
    d1, d2 = draw_card(rng), draw_card(rng)
    return BlackjackState(c1 + c2, 1 in (c1, c2), d1, d2)


def dealer_play(card: int, hidden: int, rng) -> int:
    hard = card + hidden
    has_ace = 1 in (card, hidden)
    total, _ = _score(hard, has_ace)
    while total < 17:
        c = draw_card(rng)
        hard += c
        has_ace = has_ace or c == 1
        total, _ = _score(hard, has_ace)
    return total


def blackjack_step(state: BlackjackState, action: int, rng) -> tuple[BlackjackState, float, bool]:
    if state.done:
        raise ActionAfterDone("episode already finished")
    if action == DRAW:
        c = draw_card(rng)
        nxt = replace(state, player_hard=state.player_hard + c, player_has_ace=state.player_has_ace or c == 1)
        if nxt.hand > 21:
            return replace(nxt, done=True), -1.0, True
        return nxt, 0.0, False
    if action != STICK:
        raise ValueError(f"unknown action {action!r}")
    dealer = dealer_play(state.dealer_card, state.dealer_hidden, rng)
    player = state.hand
    if dealer > 21 or player > dealer:
        reward = 1.0
    elif player == dealer:
        reward = 0.0
    else:
        reward = -1.0
    return replace(state, done=True), reward, True


def run_episode(policy, rng, horizon: int | None, episode: int) -> list[StepRecord]:
    state = blackjack_reset(rng)
    out: list[StepRecord] = []
    t = 0
    while True:
        obs = state.observation()
        a = int(round(policy(obs)))
        nxt, reward, done = blackjack_step(state, a, rng)
        out.append(StepRecord(episode, t, {**obs, "action": float(a)}, float(a), reward, done, nxt.observation()))
        if done:
            return out
        state = nxt
        t += 1


# analytic mechanisms ----------------------------------------------------------
# hand: the residual is the drawn card's contribution when the previous action
# was draw; a counterfactual stick removes one average card.


@register_analytic("blackjack.hand")
def _hand(_params):
    return lambda x: x["hand_prev"] + (x["action_prev"] - DRAW) * MEAN_CARD


@register_analytic("blackjack.carry")
def _carry(p):
    name = p["input"]
    return lambda x: x[name]


@register_analytic("blackjack.greedy")
def _greedy(p):
    from ..policies import QTable, blackjack_policy

    return blackjack_policy(QTable.from_dict(p["qtable"])).act


def regressors(qtable) -> dict:
    return {
        "hand": AnalyticRegressor("blackjack.hand"),
        "ace": AnalyticRegressor("blackjack.carry", {"input": "ace_prev"}),
        "dealer": AnalyticRegressor("blackjack.carry", {"input": "dealer_prev"}),
        "action": AnalyticRegressor("blackjack.greedy", {"qtable": qtable.to_dict()}),
    }
