"""Static partial-hedging problem: minimize the risk of the shortfall
(phi - 1)H over budget-constrained randomized tests phi.

Polyhedral risk measures go through a single epigraph LP whose row duals
hand back both the worst-case measure and the budget multipliers; the
entropic measure goes through cutting planes on the exact subgradient.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArbitrageError, MarketError, SolverError
from .lp import DEFAULT_TOLERANCES, kelley_minimize, make_lp, solve_lp
from .market import RandomizedTest, TerminalMeasure
from .martingale import superhedging_price
from .risk import AVaR, Entropic, ScenarioPenalty, evaluate


@dataclass(frozen=True)
class StaticSolution:
    """Optimal test with the dual data needed to certify it later.

    measure is the worst-case terminal measure read off the solver
    (scenario mixture or epigraph-row duals, softmax for entropic);
    multipliers are the budget-row duals per polytope vertex, None on the
    cutting-plane path where the LP duals do not exist.
    """

    test: RandomizedTest
    value: float
    active_budget_vertices: np.ndarray
    solver_path: str
    short_circuit: bool
    measure: TerminalMeasure
    multipliers: np.ndarray
    lower_bound: float
    iterations: int


def feasible(test, polytope, claim, budget):
    """Budget feasibility: every martingale vertex prices phi*H within
    budget, and phi is a proper test."""
    phi = test.values
    h = claim.payoff
    if phi.shape != h.shape:
        raise MarketError("test and claim dimensions differ")
    if polytope.vertices.shape[0] == 0:
        raise ArbitrageError("martingale polytope is empty")
    if np.any(phi < -1e-12) or np.any(phi > 1.0 + 1e-12):
        return False
    worst = float(np.max(polytope.vertices @ (phi * h)))
    return worst <= budget + 1e-9


def solve_static(tree, p, polytope, claim, budget, rm,
                 tols=DEFAULT_TOLERANCES, method=None):
    """Minimize rho((phi - 1)H) subject to the budget constraint.

    method overrides the solver path: "lp" (polyhedral rms only) or
    "cutting_plane" (any rm). budget >= superhedging price short-circuits
    to phi == 1 with value exactly 0.
    """
    if budget <= 0.0:
        raise MarketError("budget must be positive")
    verts = polytope.vertices
    if verts.shape[0] == 0:
        raise ArbitrageError("martingale polytope is empty")
    h = claim.payoff
    pr = p.probabilities
    n = h.shape[0]
    if verts.shape[1] != n or pr.shape[0] != n:
        raise MarketError("leaf dimensions differ")

    path = method
    if path is None:
        path = "cutting_plane" if isinstance(rm, Entropic) else "lp"
    if path == "lp" and isinstance(rm, Entropic):
        raise MarketError("entropic risk has no LP path; use cutting_plane")
    if path not in ("lp", "cutting_plane"):
        raise MarketError(f"unknown solver path {path!r}")

    g = verts * h
    u0 = superhedging_price(polytope, claim)
    if budget >= u0:
        ev = evaluate(rm, np.zeros(n), pr)
        phi = np.ones(n)
        return StaticSolution(
            test=RandomizedTest(values=phi), value=0.0,
            active_budget_vertices=_active(g, phi, budget),
            solver_path=path, short_circuit=True,
            measure=_as_measure(ev.maximizer * pr),
            multipliers=np.zeros(verts.shape[0]),
            lower_bound=0.0, iterations=0)

    if path == "lp":
        if isinstance(rm, ScenarioPenalty):
            sol = _solve_scenario_lp(rm, g, h, pr, budget, tols)
        elif isinstance(rm, AVaR):
            sol = _solve_avar_lp(rm, g, h, pr, budget, tols)
        else:
            raise MarketError(f"unknown risk measure {type(rm).__name__}")
    else:
        sol = _solve_cutting_plane(rm, g, h, pr, budget, tols)

    phi, value, measure, mult, lower, iters = sol
    phi = np.clip(phi, 0.0, 1.0)
    test = RandomizedTest(values=phi)
    if not feasible(test, polytope, claim, budget):
        raise SolverError("solver returned a budget-infeasible test")
    return StaticSolution(
        test=test, value=value,
        active_budget_vertices=_active(g, phi, budget),
        solver_path=path, short_circuit=False, measure=measure,
        multipliers=mult, lower_bound=lower, iterations=iters)


def _active(g, phi, budget):
    return np.flatnonzero(np.abs(g @ phi - budget) <= 1e-7 * max(1.0, budget))


def _as_measure(q):
    q = np.clip(q, 0.0, None)
    s = float(q.sum())
    if abs(s - 1.0) > 1e-6:
        raise SolverError(f"dual measure sums to {s:.9g}, not 1")
    return TerminalMeasure(probabilities=q / s)


def _solve_scenario_lp(rm, g, h, pr, budget, tols):
    # epigraph variable t after the n test variables
    kk = rm.densities.shape[0]
    kv = g.shape[0]
    n = h.shape[0]
    m = rm.densities * pr * h
    b = m.sum(axis=1) - rm.penalties
    rows = []
    for i in range(kk):
        rows.append((np.append(m[i], 1.0), ">=", float(b[i])))
    for k in range(kv):
        rows.append((np.append(g[k], 0.0), "<=", budget))
    c = np.zeros(n + 1)
    c[n] = 1.0
    lower = np.append(np.zeros(n), -np.inf)
    upper = np.append(np.ones(n), np.inf)
    sol = solve_lp(make_lp(c, rows=rows, lower=lower, upper=upper), tols)
    if sol.status != "optimal":
        raise SolverError(f"static LP {sol.status}")
    weights = np.clip(sol.duals[:kk], 0.0, None)
    mult = np.clip(-sol.duals[kk:], 0.0, None)
    measure = _as_measure(weights @ (rm.densities * pr))
    return (sol.x[:n], float(sol.objective), measure, mult,
            float(sol.objective), sol.pivots)


def _solve_avar_lp(rm, g, h, pr, budget, tols):
    # variables [phi, s, u]; row per leaf: u_w + s + H_w phi_w >= H_w
    kv = g.shape[0]
    n = h.shape[0]
    rows = []
    for w in range(n):
        coeff = np.zeros(2 * n + 1)
        coeff[w] = h[w]
        coeff[n] = 1.0
        coeff[n + 1 + w] = 1.0
        rows.append((coeff, ">=", float(h[w])))
    for k in range(kv):
        rows.append((np.append(g[k], np.zeros(n + 1)), "<=", budget))
    c = np.concatenate([np.zeros(n), [1.0], pr / rm.beta])
    lower = np.concatenate([np.zeros(n), [-np.inf], np.zeros(n)])
    upper = np.concatenate([np.ones(n), [np.inf], np.full(n, np.inf)])
    sol = solve_lp(make_lp(c, rows=rows, lower=lower, upper=upper), tols)
    if sol.status != "optimal":
        raise SolverError(f"static LP {sol.status}")
    measure = _as_measure(np.clip(sol.duals[:n], 0.0, None))
    mult = np.clip(-sol.duals[n:], 0.0, None)
    return (sol.x[:n], float(sol.objective), measure, mult,
            float(sol.objective), sol.pivots)


def _solve_cutting_plane(rm, g, h, pr, budget, tols):
    n = h.shape[0]
    kv = g.shape[0]

    def objective(phi):
        ev = evaluate(rm, (phi - 1.0) * h, pr)
        return ev.value, -(h * ev.maximizer * pr)

    region = make_lp(np.zeros(n),
                     rows=[(g[k], "<=", budget) for k in range(kv)],
                     lower=0.0, upper=1.0)
    res = kelley_minimize(objective, region, tols,
                          tol=min(tols.kelley, 1e-8), max_iterations=800)
    if not res.converged:
        raise SolverError(
            f"cutting planes stalled at gap {res.value - res.lower_bound:.3e}")
    phi = np.clip(res.x, 0.0, 1.0)
    ev = evaluate(rm, (phi - 1.0) * h, pr)
    measure = _as_measure(ev.maximizer * pr)
    return phi, float(res.value), measure, None, float(res.lower_bound), \
        res.iterations
