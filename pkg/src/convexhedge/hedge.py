"""Superhedging strategies and the dynamic form of the partial hedge.

superhedge() prices a terminal payoff by the cheapest self-financing
nonnegative value process dominating it at the horizon, and cross-checks
the cost against the vertex-maximum price on every call. solve_dynamic()
chains certification and superhedging: hedge the modified claim phi*H,
hold the leftover budget in cash, and confirm that the risk of the
terminal shortfall reproduces the static optimum.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CertificationError, SolverError
from .lp import DEFAULT_TOLERANCES, make_lp, solve_lp
from .market import Claim, success_ratio
from .martingale import enumerate_vertices, superhedging_price
from .risk import evaluate
from .saddle import certify
from .static import feasible


@dataclass(frozen=True)
class Strategy:
    """Self-financing trading strategy on the tree. values and holdings
    are indexed by tree position; holding rows at terminal nodes are
    zero, the position held over the last period lives at the parent."""

    initial_capital: float
    values: np.ndarray        # V at each node
    holdings: np.ndarray      # (nodes, assets)


@dataclass(frozen=True)
class HedgeResult:
    static: object
    certificate: object
    np_test: object
    claim: Claim
    modified_claim: np.ndarray
    strategy: Strategy
    dynamic_risk: float


@dataclass(frozen=True)
class SuccessRatioReport:
    ratio: np.ndarray
    risk: float
    residual: float
    feasible: bool

    @property
    def ok(self):
        return self.feasible and self.residual <= 1e-6


def terminal_values(strategy, tree):
    """Leaf values of the value process in canonical leaf order."""
    return strategy.values[tree.leaf_positions].copy()


def _self_financing_system(tree):
    """Variable layout and flow constraints shared by the strategy LPs:
    one value per node, one holdings block per non-terminal node, and a
    V_c - V_a - xi_a.(S_c - S_a) == 0 row per tree edge."""
    n_nodes = tree.node_ids.shape[0]
    d = tree.prices.shape[1]
    root = int(np.flatnonzero(tree.parent == -1)[0])
    nonterm = np.flatnonzero(tree.times < tree.horizon)
    col = {int(a): n_nodes + i * d for i, a in enumerate(nonterm)}
    n_vars = n_nodes + nonterm.shape[0] * d
    rows = []
    for a in nonterm:
        for c in tree.children[int(a)]:
            coeff = np.zeros(n_vars)
            coeff[c] = 1.0
            coeff[int(a)] = -1.0
            move = tree.prices[c] - tree.prices[int(a)]
            coeff[col[int(a)]:col[int(a)] + d] = -move
            rows.append((coeff, "==", 0.0))
    return n_nodes, d, root, nonterm, n_vars, rows


def superhedge(tree, payoff, tols=DEFAULT_TOLERANCES, polytope=None):
    """Cheapest dominating strategy: min V_root over self-financing
    processes with V >= 0 everywhere and V >= payoff at the leaves."""
    payoff = np.asarray(payoff, dtype=float)
    if np.any(payoff < 0) or not np.all(np.isfinite(payoff)):
        raise SolverError("superhedge payoff must be finite and nonnegative")
    if payoff.shape != (tree.leaf_positions.shape[0],):
        raise SolverError(
            f"payoff has {payoff.shape[0]} entries for "
            f"{tree.leaf_positions.shape[0]} leaves")
    n_nodes, d, root, nonterm, n_vars, rows = _self_financing_system(tree)
    lower = np.concatenate([np.zeros(n_nodes),
                            np.full(nonterm.shape[0] * d, -np.inf)])
    lower[tree.leaf_positions] = payoff
    c_obj = np.zeros(n_vars)
    c_obj[root] = 1.0
    sol = solve_lp(make_lp(c_obj, rows=rows, lower=lower), tols)
    if sol.status != "optimal":
        raise SolverError(f"superhedge LP {sol.status}")

    values = sol.x[:n_nodes].copy()
    holdings = np.zeros((n_nodes, d))
    for i, a in enumerate(nonterm):
        holdings[int(a)] = sol.x[n_nodes + i * d:n_nodes + (i + 1) * d]
    cost = float(values[root])

    poly = polytope if polytope is not None else enumerate_vertices(tree)
    dual_price = superhedging_price(poly, Claim(payoff=payoff))
    if abs(cost - dual_price) > 1e-7 * max(1.0, abs(dual_price)):
        raise SolverError(
            f"superhedge cost {cost:.12g} disagrees with the vertex-maximum "
            f"price {dual_price:.12g}")
    return Strategy(initial_capital=cost, values=values, holdings=holdings)


def find_arbitrage(tree, tols=DEFAULT_TOLERANCES):
    """Self-financing strategy from zero capital whose terminal value is
    nonnegative and positive somewhere, or None when no such strategy
    exists. The feasible set is a cone capped by sum(V_T) <= 1, so the
    LP optimum is 0 exactly when the market is arbitrage-free."""
    n_nodes, d, root, nonterm, n_vars, rows = _self_financing_system(tree)
    e_root = np.zeros(n_vars)
    e_root[root] = 1.0
    rows.append((e_root, "==", 0.0))
    gains = np.zeros(n_vars)
    gains[tree.leaf_positions] = 1.0
    rows.append((gains, "<=", 1.0))
    lower = np.full(n_vars, -np.inf)
    lower[tree.leaf_positions] = 0.0
    sol = solve_lp(make_lp(gains, rows=rows, lower=lower, sense="max"), tols)
    if sol.status != "optimal":
        raise SolverError(f"arbitrage search LP {sol.status}")
    if sol.objective <= 1e-7:
        return None
    x = sol.x / sol.objective       # normalize to unit terminal gain
    values = x[:n_nodes].copy()
    holdings = np.zeros((n_nodes, d))
    for i, a in enumerate(nonterm):
        holdings[int(a)] = x[n_nodes + i * d:n_nodes + (i + 1) * d]
    return Strategy(initial_capital=0.0, values=values, holdings=holdings)


def shift_capital(strategy, tree, extra):
    """Same trades with `extra` more cash at every node."""
    return Strategy(initial_capital=strategy.initial_capital + extra,
                    values=strategy.values + extra,
                    holdings=strategy.holdings)


def solve_dynamic(tree, p, claim, budget, rm, tols=DEFAULT_TOLERANCES,
                  polytope=None, eq_tol=None, gap_tol=None):
    """Full pipeline: certify the static optimum, superhedge the modified
    claim, park the surplus in cash, and check that the risk of the
    terminal shortfall equals the static value."""
    poly = polytope if polytope is not None else enumerate_vertices(tree)
    certified = certify(tree, p, poly, claim, budget, rm, tols,
                        eq_tol=eq_tol, gap_tol=gap_tol)
    phi = certified.np_test.test.values
    modified = phi * claim.payoff
    raw = superhedge(tree, modified, tols, polytope=poly)
    if raw.initial_capital > budget + 1e-8 * max(1.0, budget):
        raise CertificationError(
            f"modified claim costs {raw.initial_capital:.12g}, above the "
            f"budget {budget:.12g}")
    strategy = shift_capital(raw, tree, budget - raw.initial_capital)
    v_term = terminal_values(strategy, tree)
    shortfall = np.maximum(claim.payoff - v_term, 0.0)
    dynamic_risk = evaluate(rm, -shortfall, p.probabilities).value
    value = certified.static.value
    if abs(dynamic_risk - value) > 1e-6 * max(1.0, abs(value)):
        raise CertificationError(
            f"dynamic risk {dynamic_risk:.12g} misses the static value "
            f"{value:.12g}; terminal values {v_term}, modified claim "
            f"{modified}")
    return HedgeResult(static=certified.static,
                       certificate=certified.certificate,
                       np_test=certified.np_test, claim=claim,
                       modified_claim=modified, strategy=strategy,
                       dynamic_risk=float(dynamic_risk))


def verify_success_ratio(result, tree, p, polytope, rm,
                         tols=DEFAULT_TOLERANCES):
    """The success ratio of the hedge is itself an optimal test: budget
    feasible, with risk equal to the static value."""
    v_term = terminal_values(result.strategy, tree)
    ratio = success_ratio(v_term, result.claim)
    ok_budget = feasible(ratio, polytope, result.claim,
                         result.strategy.initial_capital)
    risk = evaluate(rm, (ratio.values - 1.0) * result.claim.payoff,
                    p.probabilities).value
    residual = abs(risk - result.static.value)
    return SuccessRatioReport(ratio=ratio.values, risk=float(risk),
                              residual=float(residual),
                              feasible=bool(ok_budget))
