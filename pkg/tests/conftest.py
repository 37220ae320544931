from __future__ import annotations

import pytest

from causal_xrl.envs import blackjack, collect
from causal_xrl.policies import blackjack_policy, mc_control_train
from causal_xrl.scm import fit


@pytest.fixture(scope="session")
def qtable():
    return mc_control_train(50_000, seed=0)


@pytest.fixture(scope="session")
def bj_policy(qtable):
    return blackjack_policy(qtable)


@pytest.fixture(scope="session")
def bj_model(qtable, bj_policy):
    data = collect("blackjack", bj_policy, 2000, seed=1)
    return fit(blackjack.skeleton(), data, blackjack.regressors(qtable))
