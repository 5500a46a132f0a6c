"""In-house linear programming: dense two-phase tableau simplex with dual
extraction, plus a Kelley cutting-plane driver for convex minimization over
LP-feasible sets.

Every optimal solve is self-checking: primal feasibility, dual feasibility,
complementary slackness, and the primal-dual objective gap are verified
against the tolerances in SolverTolerances before the solution is returned.

Dual convention. For sense "min": duals y satisfy y_i >= 0 on ">=" rows,
y_i <= 0 on "<=" rows, free on "==" rows; reduced costs rc = c - A^T y obey
rc_j >= 0 when only the lower bound of x_j is finite, rc_j <= 0 when only the
upper is, and the dual objective is
    y.b + sum_j [ max(rc_j, 0) l_j + min(rc_j, 0) u_j ].
For sense "max" every multiplier is negated, so y_i >= 0 on "<=" rows (the
shadow-price convention) and rc = c - A^T y leans the other way.
"""

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernel
from .errors import SolverError

_RELATIONS = ("<=", ">=", "==")


@dataclass(frozen=True)
class SolverTolerances:
    """Central numerical tolerances; reports echo these."""

    feasibility: float = 1e-9
    duality_gap: float = 1e-8
    complementary: float = 1e-8
    pivot: float = 1e-10
    kelley: float = 1e-6
    max_pivots: int = 1_000_000


DEFAULT_TOLERANCES = SolverTolerances()


@dataclass(frozen=True)
class LinearProgram:
    """min or max c.x subject to A x (<=, >=, ==) b and lower <= x <= upper."""

    c: np.ndarray
    A: np.ndarray
    relations: tuple
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sense: str = "min"

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        n = self.c.shape[0]
        m = self.b.shape[0]
        if self.A.shape != (m, n):
            raise ValueError(f"A has shape {self.A.shape}, expected {(m, n)}")
        if len(self.relations) != m:
            raise ValueError("one relation per row required")
        for r in self.relations:
            if r not in _RELATIONS:
                raise ValueError(f"unknown relation {r!r}")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds must match variable count")
        if not np.all(np.isfinite(self.c)):
            raise ValueError("objective must be finite")
        if not np.all(np.isfinite(self.A)) or not np.all(np.isfinite(self.b)):
            raise ValueError("constraint data must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n_vars(self):
        return self.c.shape[0]

    @property
    def n_rows(self):
        return self.b.shape[0]


def make_lp(c, rows=(), lower=0.0, upper=np.inf, sense="min"):
    """Convenience constructor. rows is an iterable of (coeffs, relation, rhs);
    scalar bounds broadcast over all variables."""
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    rows = list(rows)
    if rows:
        A = np.array([np.asarray(r[0], dtype=float) for r in rows])
        relations = tuple(r[1] for r in rows)
        b = np.array([float(r[2]) for r in rows])
    else:
        A = np.zeros((0, n))
        relations = ()
        b = np.zeros(0)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (n,)).copy()
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy()
    return LinearProgram(c=c, A=A, relations=relations, b=b,
                         lower=lower, upper=upper, sense=sense)


@dataclass(frozen=True)
class LPSolution:
    """status is one of optimal, infeasible, unbounded, stalled. x, objective,
    duals (one per row), and reduced_costs (one per variable) are populated
    only when optimal. residuals holds the verified certificate residuals."""

    status: str
    x: np.ndarray = None
    objective: float = None
    duals: np.ndarray = None
    reduced_costs: np.ndarray = None
    pivots: int = 0
    residuals: dict = field(default_factory=dict)


def _pivot_once(T, basis, ii, jj):
    # same elimination arithmetic as the kernels
    piv = T[ii, jj]
    T[ii, :] /= piv
    colv = T[:, jj].copy()
    colv[ii] = 0.0
    T -= np.outer(colv, T[ii, :])
    T[:, jj] = 0.0
    T[ii, jj] = 1.0
    basis[ii] = jj


def solve_lp(lp, tols=DEFAULT_TOLERANCES):
    """Two-phase simplex. Returns an LPSolution; raises SolverError if an
    optimal basis fails its own certificate check or the arithmetic breaks."""
    n = lp.n_vars
    m = lp.n_rows
    minimize = lp.sense == "min"
    c_min = lp.c.astype(float).copy() if minimize else -lp.c.astype(float)

    # standard form: all variables >= 0, finite uppers become extra rows
    A_work = lp.A.astype(float)
    b_work = lp.b.astype(float).copy()
    const = 0.0
    cols = []
    costs = []
    transforms = []
    upper_rows = []
    for j in range(n):
        lo, up = lp.lower[j], lp.upper[j]
        if np.isinf(lo) and np.isinf(up):
            transforms.append(("split", len(cols), len(cols) + 1))
            cols.append(A_work[:, j].copy())
            costs.append(c_min[j])
            cols.append(-A_work[:, j])
            costs.append(-c_min[j])
        elif np.isinf(lo):
            # reflect around the finite upper bound
            b_work -= A_work[:, j] * up
            const += c_min[j] * up
            transforms.append(("reflect", len(cols), up))
            cols.append(-A_work[:, j])
            costs.append(-c_min[j])
        else:
            if lo != 0.0:
                b_work -= A_work[:, j] * lo
                const += c_min[j] * lo
            transforms.append(("shift", len(cols), lo))
            if np.isfinite(up):
                upper_rows.append((len(cols), up - lo))
            cols.append(A_work[:, j].copy())
            costs.append(c_min[j])
    n_s = len(cols)
    c_std = np.array(costs)

    m_tot = m + len(upper_rows)
    rows_A = np.zeros((m_tot, n_s))
    if n_s:
        rows_A[:m, :] = np.column_stack(cols)
    b_std = np.zeros(m_tot)
    b_std[:m] = b_work
    rels = list(lp.relations)
    for k, (cj, ub) in enumerate(upper_rows):
        rows_A[m + k, cj] = 1.0
        b_std[m + k] = ub
        rels.append("<=")

    signs = np.ones(m_tot)
    for i in range(m_tot):
        if b_std[i] < 0.0:
            signs[i] = -1.0
            rows_A[i, :] = -rows_A[i, :]
            b_std[i] = -b_std[i]
            if rels[i] == "<=":
                rels[i] = ">="
            elif rels[i] == ">=":
                rels[i] = "<="

    # column layout: structurals, then slack/surplus, then artificials
    slack_of = [-1] * m_tot
    art_of = [-1] * m_tot
    col_idx = n_s
    for i, rel in enumerate(rels):
        if rel in ("<=", ">="):
            slack_of[i] = col_idx
            col_idx += 1
    art_start = col_idx
    for i, rel in enumerate(rels):
        if rel in (">=", "=="):
            art_of[i] = col_idx
            col_idx += 1
    n_total = col_idx

    T = np.zeros((m_tot + 1, n_total + 1))
    T[:m_tot, :n_s] = rows_A
    for i, rel in enumerate(rels):
        if rel == "<=":
            T[i, slack_of[i]] = 1.0
        elif rel == ">=":
            T[i, slack_of[i]] = -1.0
        if art_of[i] >= 0:
            T[i, art_of[i]] = 1.0
    T[:m_tot, n_total] = b_std

    basis = np.empty(m_tot, dtype=np.int64)
    for i, rel in enumerate(rels):
        basis[i] = slack_of[i] if rel == "<=" else art_of[i]

    piv1 = 0
    drop_rows = []
    art_rows = [i for i in range(m_tot) if art_of[i] >= 0]
    if art_rows:
        # phase 1: minimize the artificial total
        T[m_tot, :] = -T[art_rows, :].sum(axis=0)
        for i in art_rows:
            T[m_tot, art_of[i]] += 1.0
        allowed = np.ones(n_total, dtype=np.uint8)
        status, piv1 = kernel.run_kernel(T, basis, allowed, tols.max_pivots,
                                         tols.pivot, 100 + 10 * m_tot)
        if status == 2:
            return LPSolution(status="stalled", pivots=piv1)
        if status == 1:
            raise SolverError("phase-1 objective reported unbounded; tableau corrupt")
        feas_scale = 1.0 + float(np.abs(b_std).sum())
        if -T[m_tot, n_total] > tols.feasibility * feas_scale:
            return LPSolution(status="infeasible", pivots=piv1)
        # pivot surviving artificials out; rows that offer no pivot are
        # redundant (all-zero) and safe to delete only if their value is zero
        for i in range(m_tot):
            if basis[i] >= art_start:
                row = np.abs(T[i, :art_start])
                jstar = int(np.argmax(row))
                if row[jstar] > 1e-9:
                    _pivot_once(T, basis, i, jstar)
                elif T[i, n_total] > tols.feasibility * (1.0 + b_std[i]):
                    return LPSolution(status="infeasible", pivots=piv1)
                else:
                    drop_rows.append(i)
        if drop_rows:
            keep = [i for i in range(m_tot) if i not in drop_rows]
            T = np.ascontiguousarray(np.vstack([T[keep, :], T[-1:, :]]))
            basis = basis[keep].copy()
    m_cur = m_tot - len(drop_rows)

    # phase 2
    c2 = np.zeros(n_total + 1)
    c2[:n_s] = c_std
    T[m_cur, :] = c2 - c2[basis] @ T[:m_cur, :]
    allowed = np.ones(n_total, dtype=np.uint8)
    allowed[art_start:] = 0
    status, piv2 = kernel.run_kernel(T, basis, allowed,
                                     max(tols.max_pivots - piv1, 1),
                                     tols.pivot, 100 + 10 * max(m_cur, 1))
    pivots = piv1 + piv2
    if status == 2:
        return LPSolution(status="stalled", pivots=pivots)
    if status == 1:
        return LPSolution(status="unbounded", pivots=pivots)

    x_std = np.zeros(n_total)
    x_std[basis] = T[:m_cur, n_total]
    x = np.empty(n)
    for j, tr in enumerate(transforms):
        kind = tr[0]
        if kind == "shift":
            x[j] = tr[2] + x_std[tr[1]]
        elif kind == "reflect":
            x[j] = tr[2] - x_std[tr[1]]
        else:
            x[j] = x_std[tr[1]] - x_std[tr[2]]

    objective = float(lp.c @ x)
    obj_min = objective if minimize else -objective
    obj_tableau = -T[m_cur, n_total] + const
    if abs(obj_tableau - obj_min) > 1e-7 * max(1.0, abs(obj_min)):
        raise SolverError(
            f"objective mismatch: tableau {obj_tableau:.12g} vs recomputed {obj_min:.12g}")

    # duals read off the unit column planted in each row; deleted redundant
    # rows keep a live multiplier too, since surviving tableau rows are
    # combinations of all original rows
    y_std = np.zeros(m_tot)
    for i in range(m_tot):
        unit_col = art_of[i] if art_of[i] >= 0 else slack_of[i]
        y_std[i] = -T[m_cur, unit_col]
    y_min = signs[:m] * y_std[:m]
    y = y_min if minimize else -y_min
    rc = lp.c - (lp.A.T @ y if m else np.zeros(n))

    residuals = _verify_certificate(lp, x, y, rc, objective, tols)
    return LPSolution(status="optimal", x=x, objective=objective, duals=y,
                      reduced_costs=rc, pivots=pivots, residuals=residuals)


def _verify_certificate(lp, x, y, rc, objective, tols):
    """Check the primal-dual pair in min convention; raise SolverError on
    violation. Returns the verified residual magnitudes (all relative)."""
    minimize = lp.sense == "min"
    y_min = y if minimize else -y
    rc_min = rc if minimize else -rc
    obj_min = objective if minimize else -objective
    ax = lp.A @ x if lp.n_rows else np.zeros(0)
    primal = dual = comp = 0.0
    for i in range(lp.n_rows):
        scale = 1.0 + abs(lp.b[i]) + abs(ax[i])
        slack = lp.b[i] - ax[i]
        rel = lp.relations[i]
        if rel == "<=":
            primal = max(primal, -slack / scale)
            dual = max(dual, y_min[i] / (1.0 + abs(y_min[i])))
        elif rel == ">=":
            primal = max(primal, slack / scale)
            dual = max(dual, -y_min[i] / (1.0 + abs(y_min[i])))
        else:
            primal = max(primal, abs(slack) / scale)
        if rel != "==":
            comp = max(comp, abs(y_min[i] * slack) / ((1.0 + abs(y_min[i])) * scale))
    bound_term = 0.0
    for j in range(lp.n_vars):
        lo, up = lp.lower[j], lp.upper[j]
        bscale = 1.0 + abs(x[j]) \
            + (abs(lo) if np.isfinite(lo) else 0.0) \
            + (abs(up) if np.isfinite(up) else 0.0)
        if np.isfinite(lo):
            primal = max(primal, (lo - x[j]) / bscale)
        if np.isfinite(up):
            primal = max(primal, (x[j] - up) / bscale)
        r = rc_min[j]
        rscale = 1.0 + abs(r)
        pos = max(r, 0.0)
        neg = min(r, 0.0)
        if np.isfinite(lo):
            comp = max(comp, pos * (x[j] - lo) / (rscale * bscale))
            bound_term += pos * lo
        else:
            dual = max(dual, pos / rscale)
        if np.isfinite(up):
            comp = max(comp, -neg * (up - x[j]) / (rscale * bscale))
            bound_term += neg * up
        else:
            dual = max(dual, -neg / rscale)
    dual_obj_min = float(y_min @ lp.b) + bound_term if lp.n_rows else bound_term
    gap = abs(obj_min - dual_obj_min) / max(1.0, abs(obj_min))
    res = {"primal": float(primal), "dual": float(dual),
           "complementary": float(comp), "gap": float(gap)}
    if primal > tols.feasibility or dual > tols.feasibility \
            or comp > tols.complementary or gap > tols.duality_gap:
        raise SolverError(f"optimality certificate failed: {res}")
    return res


@dataclass(frozen=True)
class KelleyResult:
    x: np.ndarray
    value: float
    lower_bound: float
    iterations: int
    converged: bool


def kelley_minimize(objective, feasible, tols=DEFAULT_TOLERANCES, tol=None,
                    max_iterations=500, x0=None):
    """Minimize a convex function over the feasible set of an LP by cutting
    planes. objective(x) must return (value, subgradient). feasible is a
    LinearProgram whose rows and bounds define the region (its c and sense
    are ignored); the region must be bounded or the master LP goes unbounded.

    Lower bounds from the master are monotone (asserted); convergence is
    declared when best_value - lower_bound <= tol * max(1, |best_value|).
    """
    if tol is None:
        tol = tols.kelley
    n = feasible.n_vars
    base_rows = [(feasible.A[i], feasible.relations[i], feasible.b[i])
                 for i in range(feasible.n_rows)]
    if x0 is None:
        seed = solve_lp(make_lp(np.zeros(n), rows=base_rows,
                                lower=feasible.lower, upper=feasible.upper), tols)
        if seed.status != "optimal":
            raise SolverError(f"no feasible starting point: {seed.status}")
        x0 = seed.x
    cuts = []
    best_val = np.inf
    best_x = np.asarray(x0, dtype=float).copy()
    xk = best_x
    lb_prev = -np.inf
    lb = -np.inf
    for it in range(1, max_iterations + 1):
        val, grad = objective(xk)
        if val < best_val:
            best_val = val
            best_x = xk.copy()
        # cut: t >= f(x_k) + g.(x - x_k)
        cuts.append((np.asarray(grad, dtype=float).copy(), float(grad @ xk - val)))
        rows = [(np.append(a, 0.0), rel, rhs) for a, rel, rhs in base_rows]
        for g, rhs in cuts:
            rows.append((np.append(g, -1.0), "<=", rhs))
        master = make_lp(np.append(np.zeros(n), 1.0), rows=rows,
                         lower=np.append(feasible.lower, -np.inf),
                         upper=np.append(feasible.upper, np.inf))
        sol = solve_lp(master, tols)
        if sol.status != "optimal":
            raise SolverError(f"Kelley master LP {sol.status} at iteration {it}")
        lb = sol.objective
        if lb < lb_prev - 1e-9 * max(1.0, abs(lb_prev)):
            raise SolverError(
                f"Kelley lower bound not monotone: {lb_prev:.12g} -> {lb:.12g}")
        lb_prev = lb
        if best_val - lb <= tol * max(1.0, abs(best_val)):
            return KelleyResult(x=best_x, value=best_val, lower_bound=lb,
                                iterations=it, converged=True)
        xk = sol.x[:n]
    return KelleyResult(x=best_x, value=best_val, lower_bound=lb,
                        iterations=max_iterations, converged=False)
