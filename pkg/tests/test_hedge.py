import numpy as np
import pytest

import gen
from convexhedge.errors import SolverError
from convexhedge.hedge import (Strategy, solve_dynamic, superhedge,
                               terminal_values, verify_success_ratio)
from convexhedge.market import Claim
from convexhedge.martingale import enumerate_vertices
from convexhedge.risk import AVaR, Entropic, ScenarioPenalty


def expected_loss(p):
    return ScenarioPenalty(densities=np.ones((1, p.shape[0])),
                           penalties=np.zeros(1), reference=p)


def self_financing_residual(strategy, tree):
    worst = 0.0
    for a in np.flatnonzero(tree.times < tree.horizon):
        for c in tree.children[int(a)]:
            move = tree.prices[c] - tree.prices[int(a)]
            got = strategy.values[c] - strategy.values[int(a)] \
                - float(strategy.holdings[int(a)] @ move)
            worst = max(worst, abs(got))
    return worst


class TestSuperhedge:
    def test_t1_digital(self, t1):
        strat = superhedge(t1["tree"], t1["claim"].payoff)
        # [DERIVED] hand LP: cost 1/3 with 2/3 of the asset
        assert strat.initial_capital == pytest.approx(1.0 / 3.0, abs=1e-9)
        assert strat.holdings[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-9)
        np.testing.assert_allclose(terminal_values(strat, t1["tree"]),
                                   [1.0, 1.0 / 3.0, 0.0], atol=1e-9)

    def test_zero_payoff(self, t1):
        strat = superhedge(t1["tree"], np.zeros(3))
        assert strat.initial_capital == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(strat.holdings, 0.0, atol=1e-10)

    def test_cash_payoff(self, t1):
        strat = superhedge(t1["tree"], np.full(3, 0.7))
        assert strat.initial_capital == pytest.approx(0.7, abs=1e-9)
        np.testing.assert_allclose(strat.holdings, 0.0, atol=1e-9)
        np.testing.assert_allclose(strat.values, 0.7, atol=1e-9)

    def test_negative_payoff_rejected(self, t1):
        with pytest.raises(SolverError, match="nonnegative"):
            superhedge(t1["tree"], np.array([1.0, -0.1, 0.0]))

    def test_wrong_length_rejected(self, t1):
        with pytest.raises(SolverError, match="leaves"):
            superhedge(t1["tree"], np.ones(4))

    def test_random_payoffs_match_vertex_price(self):
        # cost = max vertex expectation, admissibility, self-financing
        for seed in range(300, 312):
            inst = gen.make_instance(seed)
            rng = np.random.RandomState(seed)
            payoff = inst.claim.payoff * rng.uniform(0.0, 1.0,
                                                     inst.claim.payoff.shape)
            strat = superhedge(inst.tree, payoff, polytope=inst.polytope)
            want = float(np.max(inst.polytope.vertices @ payoff))
            assert strat.initial_capital == pytest.approx(
                want, abs=1e-7 * max(1.0, want))
            assert self_financing_residual(strat, inst.tree) <= 1e-8
            assert np.min(strat.values) >= -1e-9
            v_term = terminal_values(strat, inst.tree)
            assert np.all(v_term >= payoff - 1e-8)

    def test_value_process_is_vertex_supermartingale(self):
        for seed in range(312, 320):
            inst = gen.make_instance(seed)
            strat = superhedge(inst.tree, inst.claim.payoff,
                               polytope=inst.polytope)
            v_term = terminal_values(strat, inst.tree)
            prices = inst.polytope.vertices @ v_term
            assert np.all(prices <= strat.initial_capital + 1e-8)


class TestDynamic:
    def test_t1_expected_shortfall(self, t1):
        rm = expected_loss(t1["p"].probabilities)
        res = solve_dynamic(t1["tree"], t1["p"], t1["claim"], t1["budget"],
                            rm)
        # [DERIVED] modified claim (1/2, 0, 0), hedge 1/6 + 1/3 asset
        np.testing.assert_allclose(res.modified_claim, [0.5, 0.0, 0.0],
                                   atol=1e-9)
        assert res.strategy.initial_capital == pytest.approx(t1["budget"],
                                                             abs=1e-12)
        assert res.strategy.holdings[0, 0] == pytest.approx(1.0 / 3.0,
                                                            abs=1e-8)
        np.testing.assert_allclose(terminal_values(res.strategy, t1["tree"]),
                                   [0.5, 1.0 / 6.0, 0.0], atol=1e-8)
        assert res.dynamic_risk == pytest.approx(1.0 / 6.0, abs=1e-9)
        assert res.dynamic_risk == pytest.approx(res.static.value, abs=1e-9)

    def test_t1_avar(self, t1):
        res = solve_dynamic(t1["tree"], t1["p"], t1["claim"], t1["budget"],
                            AVaR(0.5))
        assert res.dynamic_risk == pytest.approx(1.0 / 3.0, abs=1e-8)

    def test_t1_entropic(self, t1):
        res = solve_dynamic(t1["tree"], t1["p"], t1["claim"], t1["budget"],
                            Entropic(1.0))
        want = np.log((np.exp(0.5) + 2.0) / 3.0)
        assert res.dynamic_risk == pytest.approx(want, abs=1e-7)

    def test_rich_budget_hedges_fully(self, t1):
        rm = expected_loss(t1["p"].probabilities)
        res = solve_dynamic(t1["tree"], t1["p"], t1["claim"], 0.4, rm)
        assert res.dynamic_risk == pytest.approx(0.0, abs=1e-12)
        v_term = terminal_values(res.strategy, t1["tree"])
        assert np.all(v_term >= t1["claim"].payoff - 1e-9)
        assert res.strategy.initial_capital == pytest.approx(0.4, abs=1e-12)

    def test_zero_claim_zero_strategy(self, t1):
        rm = expected_loss(t1["p"].probabilities)
        zero = Claim(payoff=np.zeros(3))
        res = solve_dynamic(t1["tree"], t1["p"], zero, 0.2, rm)
        assert res.dynamic_risk == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(res.strategy.holdings, 0.0, atol=1e-10)
        # the budget sits in cash at every node
        np.testing.assert_allclose(res.strategy.values, 0.2, atol=1e-9)

    def test_surplus_held_in_cash(self, t1):
        rm = expected_loss(t1["p"].probabilities)
        res = solve_dynamic(t1["tree"], t1["p"], t1["claim"], 0.4, rm)
        # superhedging the full claim costs 1/3; the extra 0.4 - 1/3
        # appears at every node
        surplus = 0.4 - 1.0 / 3.0
        assert res.strategy.values[0] == pytest.approx(0.4, abs=1e-9)
        np.testing.assert_allclose(
            terminal_values(res.strategy, t1["tree"]),
            np.array([1.0, 1.0 / 3.0, 0.0]) + surplus, atol=1e-8)


class TestSuccessRatio:
    def test_t1_ratio_is_optimal(self, t1):
        rm = expected_loss(t1["p"].probabilities)
        poly = enumerate_vertices(t1["tree"])
        res = solve_dynamic(t1["tree"], t1["p"], t1["claim"], t1["budget"],
                            rm, polytope=poly)
        rep = verify_success_ratio(res, t1["tree"], t1["p"], poly, rm)
        assert rep.ok
        assert rep.risk == pytest.approx(1.0 / 6.0, abs=1e-9)
        np.testing.assert_allclose(rep.ratio, [0.5, 1.0, 1.0], atol=1e-8)

    def test_rich_budget_ratio_is_one(self, t1):
        rm = expected_loss(t1["p"].probabilities)
        poly = enumerate_vertices(t1["tree"])
        res = solve_dynamic(t1["tree"], t1["p"], t1["claim"], 0.4, rm,
                            polytope=poly)
        rep = verify_success_ratio(res, t1["tree"], t1["p"], poly, rm)
        assert rep.ok
        assert rep.risk == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(rep.ratio, 1.0, atol=1e-9)


class TestPipelineSweep:
    def test_dynamic_equals_static_across_instances(self):
        checked = 0
        two_period = 0
        for seed in range(330, 350):
            inst = gen.make_instance(seed)
            rng = np.random.RandomState(seed + 11)
            if inst.tree.horizon > 1:
                two_period += 1
            for _, rm in gen.risk_suite(rng, inst.p.probabilities):
                res = solve_dynamic(inst.tree, inst.p, inst.claim,
                                    inst.budget, rm, polytope=inst.polytope)
                scale = max(1.0, abs(res.static.value))
                assert abs(res.dynamic_risk - res.static.value) \
                    <= 1e-6 * scale
                assert self_financing_residual(res.strategy,
                                               inst.tree) <= 1e-8
                assert np.min(res.strategy.values) >= -1e-9
                v_term = terminal_values(res.strategy, inst.tree)
                prices = inst.polytope.vertices @ v_term
                assert np.all(prices <= res.strategy.initial_capital + 1e-8)
                rep = verify_success_ratio(res, inst.tree, inst.p,
                                           inst.polytope, rm)
                assert rep.ok, (seed, rep.residual)
                checked += 1
        assert checked >= 50
        assert two_period >= 3
