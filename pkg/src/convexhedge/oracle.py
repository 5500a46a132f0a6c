"""Brute-force reference computations used to cross-check the solvers.

The grid oracle does exhaustive search over a discretized test space and
reports a bracket that must contain the true optimum. Risk values are
computed here with vectorized formulas written independently of risk.py,
so a solver bug cannot silently agree with its own oracle.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArbitrageError, MarketError, SolverError
from .lp import DEFAULT_TOLERANCES, make_lp, solve_lp
from .market import TerminalMeasure
from .risk import AVaR, Entropic, ScenarioPenalty

_CHUNK = 1 << 18


@dataclass(frozen=True)
class GridOracleResult:
    """Bracket [lower, value] containing the true static optimum."""

    value: float
    lower: float
    lipschitz: float
    grid: int
    test: np.ndarray
    n_effective: int


def grid_oracle_static(tree, p, polytope, claim, budget, rm, grid=200):
    """Exhaustive minimum of the shortfall risk over tests on a uniform grid.

    Only leaves with positive payoff are searched; the test is 1 elsewhere,
    which changes nothing. Rounding the true minimizer down to the grid stays
    budget-feasible, so value - lipschitz/grid <= true optimum <= value.
    """
    if grid < 10:
        raise MarketError(f"grid must be at least 10, got {grid}")
    if budget <= 0.0:
        raise MarketError("budget must be positive")
    h = claim.payoff
    pr = p.probabilities
    n = h.shape[0]
    eff = np.flatnonzero(h > 0.0)
    k = eff.size
    if k == 0:
        return GridOracleResult(value=0.0, lower=0.0, lipschitz=0.0,
                                grid=grid, test=np.ones(n), n_effective=0)
    if k > 4:
        raise MarketError(
            f"grid oracle supports at most 4 leaves with positive payoff, got {k}")
    verts = polytope.vertices
    if verts.shape[0] == 0:
        raise ArbitrageError("martingale polytope is empty")

    h_eff = h[eff]
    p_eff = pr[eff]
    p_rest = float(1.0 - p_eff.sum())
    lipschitz = float(h_eff.max())
    rows = _prune_rows(verts[:, eff] * h_eff)

    best = np.inf
    best_phi = None
    g = grid
    total = (g + 1) ** k
    for start in range(0, total, _CHUNK):
        phi = _phi_block(start, min(start + _CHUNK, total), g, k)
        feas = np.all(phi @ rows.T <= budget + 1e-12, axis=1)
        if not feas.any():
            continue
        phi = phi[feas]
        vals = _risk_rows(rm, (1.0 - phi) * h_eff, eff, p_eff, p_rest)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best = float(vals[i])
            best_phi = phi[i]
    if best_phi is None:
        raise SolverError("no feasible grid point, yet the zero test is feasible")
    full = np.ones(n)
    full[eff] = best_phi
    return GridOracleResult(value=best, lower=best - lipschitz / g,
                            lipschitz=lipschitz, grid=g, test=full,
                            n_effective=k)


def _phi_block(start, stop, g, k):
    idx = np.arange(start, stop, dtype=np.int64)
    cols = []
    for _ in range(k):
        cols.append((idx % (g + 1)).astype(float) / g)
        idx //= g + 1
    return np.stack(cols[::-1], axis=1)


def _prune_rows(w):
    """Drop duplicate and componentwise-dominated budget rows."""
    w = np.unique(w, axis=0)
    keep = []
    for i in range(w.shape[0]):
        dominated = False
        for j in range(w.shape[0]):
            if j != i and np.all(w[j] >= w[i]) and np.any(w[j] > w[i]):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return w[keep]


def _risk_rows(rm, loss_eff, eff, p_eff, p_rest):
    """Shortfall risk per grid row. loss_eff holds (1-phi)*H on the
    effective leaves; the loss is 0 everywhere else."""
    if isinstance(rm, ScenarioPenalty):
        m = rm.densities[:, eff] * p_eff
        return np.max(loss_eff @ m.T - rm.penalties, axis=1)
    if isinstance(rm, AVaR):
        beta = rm.beta
        atoms = np.concatenate([loss_eff, np.zeros((loss_eff.shape[0], 1))], axis=1)
        probs = np.broadcast_to(np.append(p_eff, p_rest), atoms.shape)
        order = np.argsort(-atoms, axis=1, kind="stable")
        a = np.take_along_axis(atoms, order, axis=1)
        w = np.take_along_axis(probs, order, axis=1)
        cp = np.cumsum(w, axis=1)
        alloc = np.clip(np.minimum(cp, beta) - (cp - w), 0.0, None)
        return (a * alloc).sum(axis=1) / beta
    if isinstance(rm, Entropic):
        gm = rm.gamma
        e = gm * loss_eff
        m = e.max(axis=1)
        s = (p_eff * np.exp(e - m[:, None])).sum(axis=1) + p_rest * np.exp(-m)
        return (m + np.log(s)) / gm
    raise MarketError(f"unknown risk measure {type(rm).__name__}")


def inner_value_lp(measure, polytope, claim, budget, tols=DEFAULT_TOLERANCES):
    """max E^Q[phi H] over budget-feasible tests, solved directly."""
    h = claim.payoff
    q = measure.probabilities
    rows = [(v * h, "<=", budget) for v in polytope.vertices]
    sol = solve_lp(make_lp(q * h, rows=rows, lower=0.0, upper=1.0, sense="max"),
                   tols)
    if sol.status != "optimal":
        raise SolverError(f"inner value LP {sol.status}")
    return float(sol.objective), sol.x


@dataclass(frozen=True)
class WeakDualityReport:
    samples: int
    violations: int
    max_violation: float
    min_objective: float
    inner_value: float

    @property
    def ok(self):
        return self.violations == 0


def weak_duality_sweep(measure, polytope, claim, budget, samples=1000, seed=0):
    """Every nonnegative multiplier vector gives an upper bound on the inner
    value max E^Q[phi H]; sample many and check none dips below it."""
    h = claim.payoff
    verts = polytope.vertices
    kv = verts.shape[0]
    target = measure.probabilities * h            # H dQ in measure units
    g = verts * h                                 # H dq^(k) per vertex
    inner, _ = inner_value_lp(measure, polytope, claim, budget)

    rng = np.random.RandomState(seed)
    worst = 0.0
    violations = 0
    min_obj = np.inf
    for t in range(samples):
        if t == 0:
            y = np.zeros(kv)
        else:
            y = rng.exponential(scale=rng.choice([0.2, 1.0, 5.0]), size=kv)
            y[rng.rand(kv) < 0.3] = 0.0
        obj = float(np.maximum(target - y @ g, 0.0).sum()) + budget * float(y.sum())
        min_obj = min(min_obj, obj)
        gap = inner - obj
        worst = max(worst, gap)
        if gap > 1e-9:
            violations += 1
    return WeakDualityReport(samples=samples, violations=violations,
                             max_violation=float(worst),
                             min_objective=float(min_obj),
                             inner_value=inner)


@dataclass(frozen=True)
class SamplerResult:
    measures: tuple
    feasible: bool


def polytope_sampler(constraints, samples=100, seed=0, tols=DEFAULT_TOLERANCES):
    """Martingale measures found by maximizing random objectives; each is a
    vertex (or face point) of the polytope. Reports infeasibility instead of
    raising so arbitrage markets can be probed."""
    a = constraints.matrix
    n = a.shape[1]
    rng = np.random.RandomState(seed)
    rows = [(a[i], "==", 0.0) for i in range(a.shape[0])]
    rows.append((np.ones(n), "==", 1.0))
    seen = {}
    for _ in range(samples):
        c = rng.randn(n)
        sol = solve_lp(make_lp(c, rows=rows, sense="max"), tols)
        if sol.status == "infeasible":
            return SamplerResult(measures=(), feasible=False)
        if sol.status != "optimal":
            raise SolverError(f"sampler LP {sol.status}")
        q = np.clip(sol.x, 0.0, None)
        q /= q.sum()
        seen[tuple(np.round(q, 9))] = q
    measures = tuple(TerminalMeasure(probabilities=q) for q in seen.values())
    return SamplerResult(measures=measures, feasible=True)
