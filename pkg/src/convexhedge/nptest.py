"""Inner problem of the hedging dual and the 0-1 test construction.

For a fixed terminal measure Q the inner problem maximizes E^Q[phi H]
over budget-feasible randomized tests. Its dual runs over nonnegative
weights y on the polytope vertices. The optimal test is 1 where the
weighted likelihood ratio H Z_Q exceeds the level H Z_lambda, 0 where it
falls below, and calibrated on the equality set so that every vertex
carrying weight prices phi H exactly at the budget.

Convention: the test is 1 on {H = 0} and the equality set only contains
leaves with positive payoff; the test value is payoff-irrelevant there.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArbitrageError, CalibrationError, SolverError
from .lp import DEFAULT_TOLERANCES, make_lp, solve_lp
from .market import RandomizedTest


@dataclass(frozen=True)
class InnerDualSolution:
    """Vertex weights y with the dual value and the level density
    Z_lambda = sum_k y_k Z^(k)."""

    weights: np.ndarray
    value: float
    level: np.ndarray


@dataclass(frozen=True)
class NPTest:
    """0-1 test with delta calibration on the equality set (leaf
    positions in canonical order)."""

    test: RandomizedTest
    delta: np.ndarray
    equality_set: np.ndarray


@dataclass(frozen=True)
class GapReport:
    primal_value: float
    dual_value: float
    gap: float
    ok: bool
    test: RandomizedTest
    dual: InnerDualSolution


@dataclass(frozen=True)
class NPDiagnostics:
    """The three complementary-slackness residuals; all vanish at a
    saddle. budget_complementarity can go negative when the test
    overshoots the budget on a weighted vertex."""

    above_not_full: float
    below_not_zero: float
    budget_complementarity: float
    tol: float

    @property
    def ok(self):
        return (abs(self.above_not_full) <= self.tol
                and abs(self.below_not_zero) <= self.tol
                and abs(self.budget_complementarity) <= self.tol)


def _check(polytope, claim, budget):
    if polytope.vertices.shape[0] == 0:
        raise ArbitrageError("martingale polytope is empty")
    if budget <= 0.0:
        raise SolverError("budget must be positive")
    if polytope.vertices.shape[1] != claim.payoff.shape[0]:
        raise SolverError("leaf dimensions differ")


def inner_primal(measure, polytope, claim, budget, tols=DEFAULT_TOLERANCES):
    """max E^Q[phi H] over tests with vertex prices of phi H within
    budget. Returns the maximizing test and the value."""
    _check(polytope, claim, budget)
    h = claim.payoff
    g = polytope.vertices * h
    rows = [(g[k], "<=", budget) for k in range(g.shape[0])]
    sol = solve_lp(make_lp(measure.probabilities * h, rows=rows,
                           lower=0.0, upper=1.0, sense="max"), tols)
    if sol.status != "optimal":
        raise SolverError(f"inner primal LP {sol.status}")
    phi = np.clip(sol.x, 0.0, 1.0)
    phi[h == 0.0] = 1.0
    return RandomizedTest(values=phi), float(sol.objective)


def inner_dual(measure, p, polytope, claim, budget, tols=DEFAULT_TOLERANCES):
    """min E^P[(H Z_Q - H Z_lambda)^+] + budget * sum(y) over y >= 0,
    solved as an LP in measure units."""
    _check(polytope, claim, budget)
    h = claim.payoff
    n = h.shape[0]
    g = polytope.vertices * h
    kv = g.shape[0]
    qh = measure.probabilities * h
    rows = []
    for w in range(n):
        coeff = np.zeros(n + kv)
        coeff[w] = 1.0
        coeff[n:] = g[:, w]
        rows.append((coeff, ">=", float(qh[w])))
    c = np.concatenate([np.ones(n), np.full(kv, budget)])
    sol = solve_lp(make_lp(c, rows=rows, lower=0.0), tols)
    if sol.status != "optimal":
        raise SolverError(f"inner dual LP {sol.status}")
    y = np.clip(sol.x[n:], 0.0, None)
    return dual_from_weights(y, measure, p, polytope, claim, budget,
                             expect=float(sol.objective))


def dual_from_weights(y, measure, p, polytope, claim, budget, expect=None):
    """Package weights as an InnerDualSolution, computing the dual value
    from its defining formula. expect cross-checks an LP objective."""
    h = claim.payoff
    level_measure = y @ polytope.vertices
    value = float(np.maximum(measure.probabilities * h - level_measure * h,
                             0.0).sum()) + budget * float(y.sum())
    if expect is not None and abs(value - expect) > 1e-8 * max(1.0, abs(value)):
        raise SolverError(
            f"dual value {value:.12g} disagrees with LP objective {expect:.12g}")
    return InnerDualSolution(weights=y, value=value,
                             level=level_measure / p.probabilities)


def strong_duality_check(measure, p, polytope, claim, budget,
                         tols=DEFAULT_TOLERANCES):
    """Solve both inner problems and compare values at 1e-7 relative."""
    test, primal = inner_primal(measure, polytope, claim, budget, tols)
    dual = inner_dual(measure, p, polytope, claim, budget, tols)
    gap = abs(primal - dual.value)
    ok = gap <= 1e-7 * max(1.0, abs(primal))
    if not ok:
        raise SolverError(
            f"inner duality gap {gap:.3e}: primal {primal:.12g}, "
            f"dual {dual.value:.12g}")
    return GapReport(primal_value=primal, dual_value=dual.value, gap=gap,
                     ok=ok, test=test, dual=dual)


def default_eq_tol(measure, p, dual, claim):
    h = claim.payoff
    zq = measure.probabilities / p.probabilities
    scale = float(np.max(h * np.maximum(zq, dual.level)))
    return 1e-7 * scale if scale > 0.0 else 1e-7


def construct_test(measure, p, dual, polytope, claim, budget, eq_tol=None,
                   tols=DEFAULT_TOLERANCES):
    """Build the 0-1 test from the dual weights and calibrate delta on the
    equality set: vertices carrying weight must price phi H exactly at the
    budget, the others within it, and E^Q[phi H] is maximized."""
    _check(polytope, claim, budget)
    if eq_tol is None:
        eq_tol = default_eq_tol(measure, p, dual, claim)
    h = claim.payoff
    n = h.shape[0]
    y = dual.weights
    g = polytope.vertices * h
    nu = h * (measure.probabilities / p.probabilities - dual.level)

    pos = h > 0.0
    up = pos & (nu > eq_tol)
    down = pos & (nu < -eq_tol)
    eq = np.flatnonzero(pos & ~up & ~down)

    phi = np.ones(n)
    phi[down] = 0.0
    phi[eq] = 0.0
    active = np.flatnonzero(y > 1e-9)
    active_set = set(active.tolist())
    fixed = g @ phi                       # vertex prices with delta = 0
    den = g[:, eq]
    row_tol = 1e-8 * max(1.0, budget)

    if eq.size == 0:
        bad = [k for k in active if abs(fixed[k] - budget) > row_tol]
        over = np.flatnonzero(fixed > budget + 1e-9)
        if bad or over.size:
            raise CalibrationError(
                f"empty equality set cannot be calibrated: active vertices "
                f"{bad} off budget, overshooting vertices {over.tolist()}, "
                f"eq_tol {eq_tol:.3e}")
        delta = np.zeros(n)
        return NPTest(test=RandomizedTest(values=phi), delta=delta,
                      equality_set=eq)

    # per-leaf calibration LP: maximize E^Q[phi H] over delta
    qh_eq = (measure.probabilities * h)[eq]
    rows = []
    for k in range(g.shape[0]):
        rel = "==" if k in active_set else "<="
        rows.append((den[k], rel, float(budget - fixed[k])))
    sol = solve_lp(make_lp(qh_eq, rows=rows, lower=0.0, upper=1.0,
                           sense="max"), tols)
    if sol.status != "optimal":
        worst = max((abs(fixed[k] - budget) for k in active), default=0.0)
        raise CalibrationError(
            f"delta calibration LP {sol.status}; eq_tol {eq_tol:.3e}, "
            f"{active.size} active vertices, worst budget residual {worst:.3e}"
            " (eq_tol too small or dual weights not optimal)")
    delta_eq = np.clip(sol.x, 0.0, 1.0)
    lp_obj = float(sol.objective)

    # prefer a constant delta when it scores the same
    cands = []
    lo, hi = 0.0, 1.0
    for k in range(g.shape[0]):
        d = float(den[k].sum())
        r = budget - fixed[k]
        if k in active_set:
            if d > 1e-12:
                cands.append(r / d)
        elif d > 1e-12:
            hi = min(hi, r / d)
    if cands:
        c = float(np.median(cands))
    else:
        c = hi
    c = min(max(c, lo), 1.0)
    if c <= hi + 1e-12:
        ok = True
        for k in range(g.shape[0]):
            v = fixed[k] + c * float(den[k].sum())
            if k in active_set:
                ok = ok and abs(v - budget) <= row_tol
            else:
                ok = ok and v <= budget + 1e-9
        if ok and abs(c * float(qh_eq.sum()) - lp_obj) <= 1e-9 * max(1.0, abs(lp_obj)):
            delta_eq = np.full(eq.size, c)

    phi[eq] = delta_eq
    delta = np.zeros(n)
    delta[eq] = delta_eq
    return NPTest(test=RandomizedTest(values=np.clip(phi, 0.0, 1.0)),
                  delta=delta, equality_set=eq)


def verify_np(np_test, measure, dual, polytope, claim, budget, tol=1e-7):
    """Complementary-slackness residuals of a candidate saddle; all three
    vanish when (phi, y) is optimal. Report only, never raises."""
    h = claim.payoff
    phi = np_test.test.values
    g = polytope.vertices * h
    nu = h * measure.probabilities - (dual.weights @ polytope.vertices) * h
    r1 = float(((1.0 - phi) * np.maximum(nu, 0.0)).sum())
    r2 = float((phi * np.maximum(-nu, 0.0)).sum())
    r3 = float(dual.weights @ (budget - g @ phi))
    return NPDiagnostics(above_not_full=r1, below_not_zero=r2,
                         budget_complementarity=r3, tol=tol)
