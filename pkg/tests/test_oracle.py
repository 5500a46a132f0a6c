import numpy as np
import pytest

from convexhedge.errors import MarketError
from convexhedge.market import Claim, TerminalMeasure, build_tree
from convexhedge.martingale import (build_constraints, contains,
                                    enumerate_vertices)
from convexhedge.oracle import (grid_oracle_static, inner_value_lp,
                                polytope_sampler, weak_duality_sweep)
from convexhedge.risk import AVaR, Entropic, ScenarioPenalty, evaluate

# risk evaluations in the oracle are an independent implementation; these
# tests pin them against risk.evaluate and against hand values


def expected_loss(p):
    return ScenarioPenalty(densities=np.ones((1, p.shape[0])),
                           penalties=np.zeros(1), reference=p)


def _one_period(prices, s0=1.0):
    nodes = [(0, None, 0, [s0])]
    for i, s in enumerate(prices):
        nodes.append((i + 1, 0, 1, [s]))
    return build_tree(1, nodes)


class TestGridOracleT1:
    def test_bracket_contains_hand_value(self, t1):
        rm = expected_loss(t1["p"].probabilities)
        poly = enumerate_vertices(t1["tree"])
        res = grid_oracle_static(t1["tree"], t1["p"], poly, t1["claim"],
                                 t1["budget"], rm, grid=100)
        # [DERIVED] phi_1 = 1/2 lies on the grid, so the value is exact
        assert res.value == pytest.approx(1.0 / 6.0, abs=1e-12)
        assert res.lower <= 1.0 / 6.0 <= res.value + 1e-12
        assert res.lipschitz == 1.0
        assert res.n_effective == 1
        assert res.test[0] == pytest.approx(0.5, abs=1e-12)

    def test_budget_above_superhedge_price_gives_zero(self, t1):
        rm = expected_loss(t1["p"].probabilities)
        poly = enumerate_vertices(t1["tree"])
        res = grid_oracle_static(t1["tree"], t1["p"], poly, t1["claim"],
                                 0.4, rm, grid=50)
        assert res.value == 0.0
        np.testing.assert_allclose(res.test, 1.0)

    def test_zero_claim_is_free(self, t1):
        rm = expected_loss(t1["p"].probabilities)
        poly = enumerate_vertices(t1["tree"])
        res = grid_oracle_static(t1["tree"], t1["p"], poly,
                                 Claim(payoff=np.zeros(3)), 0.1, rm, grid=50)
        assert res.value == 0.0
        assert res.n_effective == 0

    def test_too_many_effective_leaves(self):
        tree = _one_period([2.0, 1.5, 1.0, 0.8, 0.5])
        p = TerminalMeasure(probabilities=np.ones(5) / 5.0)
        poly = enumerate_vertices(tree)
        rm = expected_loss(p.probabilities)
        with pytest.raises(MarketError, match="at most 4"):
            grid_oracle_static(tree, p, poly, Claim(payoff=np.ones(5)),
                               0.1, rm, grid=10)

    def test_coarse_grid_rejected(self, t1):
        rm = expected_loss(t1["p"].probabilities)
        poly = enumerate_vertices(t1["tree"])
        with pytest.raises(MarketError, match="at least 10"):
            grid_oracle_static(t1["tree"], t1["p"], poly, t1["claim"],
                               t1["budget"], rm, grid=5)


def _rms(p):
    return [expected_loss(p), AVaR(0.35), AVaR(1.0), Entropic(0.9),
            ScenarioPenalty(
                densities=np.vstack([np.ones(p.shape[0]),
                                     np.eye(p.shape[0])[1] / p[1]]),
                penalties=np.array([0.0, 0.05]), reference=p)]


class TestRowEvaluations:
    def test_rows_match_pointwise_evaluation(self, t1):
        # drive the oracle through instances whose full grid can also be
        # scored one row at a time with risk.evaluate
        rng = np.random.RandomState(17)
        poly = enumerate_vertices(t1["tree"])
        p = t1["p"]
        for rm in _rms(p.probabilities):
            h = np.round(rng.rand(3) * 2.0, 3)
            h[rng.randint(3)] = 0.0
            claim = Claim(payoff=h)
            budget = float(rng.uniform(0.05, 0.3))
            g = 24
            res = grid_oracle_static(t1["tree"], p, poly, claim, budget, rm,
                                     grid=g)
            eff = np.flatnonzero(h > 0.0)
            best = np.inf
            axes = [np.linspace(0.0, 1.0, g + 1)] * eff.size
            for combo in np.stack(np.meshgrid(*axes, indexing="ij"),
                                  axis=-1).reshape(-1, eff.size):
                phi = np.ones(3)
                phi[eff] = combo
                if np.all(poly.vertices @ (phi * h) <= budget + 1e-12):
                    val = evaluate(rm, (phi - 1.0) * h, p.probabilities).value
                    best = min(best, val)
            assert res.value == pytest.approx(best, abs=1e-10)

    def test_bracket_validity_on_refinement(self, t1):
        # doubling the grid can only lower the oracle value, and the coarse
        # bracket must contain the finer value
        poly = enumerate_vertices(t1["tree"])
        p = t1["p"]
        claim = Claim(payoff=np.array([1.3, 0.4, 0.0]))
        for rm in _rms(p.probabilities):
            coarse = grid_oracle_static(t1["tree"], p, poly, claim, 0.12, rm,
                                        grid=40)
            fine = grid_oracle_static(t1["tree"], p, poly, claim, 0.12, rm,
                                      grid=80)
            assert fine.value <= coarse.value + 1e-12
            assert coarse.lower - 1e-12 <= fine.value <= coarse.value + 1e-12


class TestWeakDuality:
    def test_t1_sweep_clean(self, t1):
        poly = enumerate_vertices(t1["tree"])
        report = weak_duality_sweep(t1["p"], poly, t1["claim"], t1["budget"],
                                    samples=1000, seed=1)
        assert report.ok
        # [DERIVED] inner value max E^P[phi H] s.t. phi_1/3 <= 1/6 is 1/6
        assert report.inner_value == pytest.approx(1.0 / 6.0, abs=1e-10)
        # y = 0 sample gives E^P[H] = 1/3, an upper bound
        assert report.min_objective >= report.inner_value - 1e-9
        assert report.min_objective <= 1.0 / 3.0 + 1e-12

    def test_random_markets_clean(self, t1):
        rng = np.random.RandomState(9)
        poly = enumerate_vertices(t1["tree"])
        for _ in range(10):
            q = rng.dirichlet(np.ones(3))
            h = rng.rand(3) * 2.0
            report = weak_duality_sweep(TerminalMeasure(probabilities=q),
                                        poly, Claim(payoff=h),
                                        float(rng.uniform(0.05, 0.5)),
                                        samples=200, seed=int(rng.randint(1 << 30)))
            assert report.ok, report.max_violation


class TestSampler:
    def test_t1_samples_lie_in_polytope(self, t1):
        poly = enumerate_vertices(t1["tree"])
        res = polytope_sampler(poly.constraints, samples=100, seed=4)
        assert res.feasible
        assert res.measures
        for m in res.measures:
            assert contains(poly, m, tol=1e-7)

    def test_constant_price_tree_covers_simplex_corners(self):
        tree = _one_period([1.0, 1.0, 1.0])
        res = polytope_sampler(build_constraints(tree), samples=60, seed=2)
        assert res.feasible
        got = {tuple(np.round(m.probabilities, 6)) for m in res.measures}
        corners = {(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)}
        assert corners <= got

    def test_arbitrage_market_reported_infeasible(self):
        tree = _one_period([1.2, 1.1])
        res = polytope_sampler(build_constraints(tree), samples=5, seed=3)
        assert not res.feasible
        assert res.measures == ()

    def test_inner_lp_matches_direct_argument(self, t1):
        poly = enumerate_vertices(t1["tree"])
        val, phi = inner_value_lp(t1["p"], poly, t1["claim"], t1["budget"])
        assert val == pytest.approx(1.0 / 6.0, abs=1e-10)
        assert phi[0] == pytest.approx(0.5, abs=1e-9)
