import numpy as np
import pytest

import gen
from convexhedge.errors import MarketError
from convexhedge.market import Claim, RandomizedTest
from convexhedge.martingale import enumerate_vertices
from convexhedge.oracle import grid_oracle_static
from convexhedge.risk import AVaR, Entropic, ScenarioPenalty, evaluate, penalty
from convexhedge.static import feasible, solve_static


def expected_loss(p):
    return ScenarioPenalty(densities=np.ones((1, p.shape[0])),
                           penalties=np.zeros(1), reference=p)


@pytest.fixture
def t1poly(t1):
    return enumerate_vertices(t1["tree"])


class TestFeasible:
    def test_zero_test_always_feasible(self, t1, t1poly):
        phi = RandomizedTest(values=np.zeros(3))
        assert feasible(phi, t1poly, t1["claim"], 0.01)

    def test_full_test_needs_superhedge_budget(self, t1, t1poly):
        phi = RandomizedTest(values=np.ones(3))
        assert feasible(phi, t1poly, t1["claim"], 1.0 / 3.0)
        assert not feasible(phi, t1poly, t1["claim"], 1.0 / 3.0 - 1e-5)

    def test_half_test_on_money_leaf(self, t1, t1poly):
        phi = RandomizedTest(values=np.array([0.5, 0.3, 0.9]))
        assert feasible(phi, t1poly, t1["claim"], t1["budget"])

    def test_dimension_mismatch(self, t1, t1poly):
        with pytest.raises(MarketError):
            feasible(RandomizedTest(values=np.zeros(4)), t1poly,
                     t1["claim"], 0.1)


class TestT1:
    def test_expected_shortfall_solution(self, t1, t1poly):
        rm = expected_loss(t1["p"].probabilities)
        sol = solve_static(t1["tree"], t1["p"], t1poly, t1["claim"],
                           t1["budget"], rm)
        # [DERIVED] minimize (1/3)(1-phi_1) s.t. phi_1/3 <= 1/6
        assert sol.value == pytest.approx(1.0 / 6.0, abs=1e-9)
        assert sol.test.values[0] == pytest.approx(0.5, abs=1e-9)
        assert sol.solver_path == "lp"
        assert not sol.short_circuit
        # worst-case measure is P itself; budget multiplier sits on the
        # vertex (1/3, 0, 2/3), which sorts second in the canonical order
        np.testing.assert_allclose(sol.measure.probabilities,
                                   t1["p"].probabilities, atol=1e-9)
        np.testing.assert_allclose(sol.multipliers, [0.0, 1.0], atol=1e-8)
        np.testing.assert_array_equal(sol.active_budget_vertices, [1])

    def test_avar_solution(self, t1, t1poly):
        sol = solve_static(t1["tree"], t1["p"], t1poly, t1["claim"],
                           t1["budget"], AVaR(0.5))
        # [DERIVED] AVaR_0.5((1-phi_1, 0, 0)) = (2/3)(1-phi_1), phi_1 <= 1/2
        assert sol.value == pytest.approx(1.0 / 3.0, abs=1e-9)
        assert sol.test.values[0] == pytest.approx(0.5, abs=1e-9)

    def test_entropic_solution(self, t1, t1poly):
        sol = solve_static(t1["tree"], t1["p"], t1poly, t1["claim"],
                           t1["budget"], Entropic(1.0))
        # [DERIVED] risk is decreasing in phi_1, so phi_1 = 1/2 binds;
        # value = log((exp(1/2) + 2)/3)
        want = np.log((np.exp(0.5) + 2.0) / 3.0)
        assert sol.value == pytest.approx(want, abs=1e-7)
        assert sol.test.values[0] == pytest.approx(0.5, abs=1e-5)
        assert sol.solver_path == "cutting_plane"
        assert sol.lower_bound <= sol.value + 1e-12

    def test_budget_above_superhedge_short_circuits(self, t1, t1poly):
        rm = expected_loss(t1["p"].probabilities)
        sol = solve_static(t1["tree"], t1["p"], t1poly, t1["claim"], 0.4, rm)
        assert sol.value == 0.0
        assert sol.short_circuit
        np.testing.assert_array_equal(sol.test.values, np.ones(3))
        np.testing.assert_array_equal(sol.multipliers, np.zeros(2))

    def test_zero_claim_is_free(self, t1, t1poly):
        rm = expected_loss(t1["p"].probabilities)
        sol = solve_static(t1["tree"], t1["p"], t1poly,
                           Claim(payoff=np.zeros(3)), 0.05, rm)
        assert sol.value == 0.0
        assert sol.short_circuit

    def test_nonpositive_budget_rejected(self, t1, t1poly):
        rm = expected_loss(t1["p"].probabilities)
        with pytest.raises(MarketError, match="budget"):
            solve_static(t1["tree"], t1["p"], t1poly, t1["claim"], 0.0, rm)

    def test_entropic_has_no_lp_path(self, t1, t1poly):
        with pytest.raises(MarketError, match="no LP path"):
            solve_static(t1["tree"], t1["p"], t1poly, t1["claim"],
                         t1["budget"], Entropic(1.0), method="lp")


class TestProperties:
    def test_budget_monotonicity(self):
        for seed in range(60, 72):
            inst = gen.make_instance(seed)
            rng = np.random.RandomState(seed + 1)
            for _, rm in gen.risk_suite(rng, inst.p.probabilities):
                lo = float(0.3 * inst.budget)
                sols = [solve_static(inst.tree, inst.p, inst.polytope,
                                     inst.claim, b, rm)
                        for b in (lo, inst.budget, 2.0 * inst.budget)]
                assert sols[1].value <= sols[0].value + 1e-8
                assert sols[2].value <= sols[1].value + 1e-8

    def test_value_bounds(self):
        for seed in range(72, 84):
            inst = gen.make_instance(seed)
            rng = np.random.RandomState(seed + 2)
            for _, rm in gen.risk_suite(rng, inst.p.probabilities):
                sol = solve_static(inst.tree, inst.p, inst.polytope,
                                   inst.claim, inst.budget, rm)
                full_risk = evaluate(rm, -inst.claim.payoff,
                                     inst.p.probabilities).value
                assert -1e-9 <= sol.value <= full_risk + 1e-9
                assert feasible(sol.test, inst.polytope, inst.claim,
                                inst.budget)

    def test_coherent_scaling(self):
        # AVaR and plain expected shortfall are positively homogeneous
        for seed in range(84, 90):
            inst = gen.make_instance(seed)
            p = inst.p.probabilities
            for rm in (expected_loss(p), AVaR(0.45)):
                sol = solve_static(inst.tree, inst.p, inst.polytope,
                                   inst.claim, inst.budget, rm)
                c = 3.7
                scaled = Claim(payoff=inst.claim.payoff * c)
                sol_c = solve_static(inst.tree, inst.p, inst.polytope,
                                     scaled, inst.budget * c, rm)
                assert sol_c.value == pytest.approx(c * sol.value,
                                                    abs=1e-8 * c)
                # the unscaled optimum stays feasible and optimal after scaling
                assert feasible(sol.test, inst.polytope, scaled,
                                inst.budget * c + 1e-12)
                risk_at = evaluate(rm, (sol.test.values - 1.0) * scaled.payoff,
                                   p).value
                assert risk_at <= sol_c.value + 1e-8 * c

    def test_lp_and_cutting_plane_agree(self):
        for seed in range(90, 98):
            inst = gen.make_instance(seed)
            rng = np.random.RandomState(seed + 3)
            name, rm = gen.risk_suite(rng, inst.p.probabilities)[0]
            assert name == "scenario"
            a = solve_static(inst.tree, inst.p, inst.polytope, inst.claim,
                             inst.budget, rm, method="lp")
            b = solve_static(inst.tree, inst.p, inst.polytope, inst.claim,
                             inst.budget, rm, method="cutting_plane")
            assert abs(a.value - b.value) <= 1e-6 * max(1.0, abs(a.value))

    def test_dual_data_is_sane(self):
        for seed in range(98, 106):
            inst = gen.make_instance(seed)
            rng = np.random.RandomState(seed + 4)
            for name, rm in gen.risk_suite(rng, inst.p.probabilities):
                sol = solve_static(inst.tree, inst.p, inst.polytope,
                                   inst.claim, inst.budget, rm)
                q = sol.measure.probabilities
                assert q.min() >= -1e-12
                assert float(q.sum()) == pytest.approx(1.0, abs=1e-9)
                assert np.isfinite(penalty(rm, sol.measure,
                                           inst.p.probabilities))
                if sol.multipliers is not None:
                    assert sol.multipliers.min() >= 0.0


class TestOracleAgreement:
    def test_solver_inside_oracle_bracket(self):
        checked = 0
        for seed in range(110, 140):
            inst = gen.make_instance(seed)
            if not inst.oracle_eligible:
                continue
            rng = np.random.RandomState(seed + 5)
            for name, rm in gen.risk_suite(rng, inst.p.probabilities):
                sol = solve_static(inst.tree, inst.p, inst.polytope,
                                   inst.claim, inst.budget, rm)
                res = grid_oracle_static(inst.tree, inst.p, inst.polytope,
                                         inst.claim, inst.budget, rm, grid=60)
                slack = res.lipschitz / res.grid + 1e-8
                tol = 1e-8 if name != "entropic" else 1e-5
                assert sol.value <= res.value + tol
                assert res.value <= sol.value + slack + tol
                checked += 1
        assert checked >= 9
