import json

import numpy as np
import pytest

from convexhedge.market import load_claim, load_market

# one-period trinomial: S0 = 1, terminal prices (2, 1, 0.5), uniform reference
# measure, digital-call-style claim paying 1 on the up leaf
T1_MARKET = {
    "assets": 1,
    "nodes": [
        {"id": 0, "parent": None, "time": 0, "prices": [1.0]},
        {"id": 1, "parent": 0, "time": 1, "prices": [2.0]},
        {"id": 2, "parent": 0, "time": 1, "prices": [1.0]},
        {"id": 3, "parent": 0, "time": 1, "prices": [0.5]},
    ],
    "terminal_probabilities": {"1": 1.0 / 3.0, "2": 1.0 / 3.0, "3": 1.0 / 3.0},
}

T1_CLAIM = {"payoff": {"1": 1.0, "2": 0.0, "3": 0.0}}


@pytest.fixture
def t1_market_text():
    return json.dumps(T1_MARKET)


@pytest.fixture
def t1_claim_text():
    return json.dumps(T1_CLAIM)


@pytest.fixture
def t1(t1_market_text, t1_claim_text):
    tree, p = load_market(t1_market_text)
    claim = load_claim(t1_claim_text, tree)
    return {"tree": tree, "p": p, "claim": claim, "budget": 1.0 / 6.0,
            "superhedge_price": 1.0 / 3.0}
