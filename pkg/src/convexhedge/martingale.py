"""Martingale measures of a finite market tree.

The set of martingale measures is the polytope {q >= 0, sum q = 1, A q = 0}
over terminal measures, where A has one row per (interior node, asset) pair:
the entry for leaf w is the one-step price increment along w's path at that
node. Vertices are enumerated as basic feasible solutions; the superhedging
price of a claim is the largest vertex expectation.
"""

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .errors import ArbitrageError, MarketError, SolverError
from .lp import DEFAULT_TOLERANCES, make_lp, solve_lp
from .market import TerminalMeasure

MAX_LEAVES = 24
_MAX_BASES = 5_000_000


@dataclass(frozen=True)
class MartingaleConstraints:
    """Rows of the martingale system A q = 0. Rows ordered by (time, node id,
    asset). Zero rows (constant price step) are retained and flagged."""

    matrix: np.ndarray        # (rows, leaves)
    row_nodes: np.ndarray     # node id per row
    row_assets: np.ndarray    # asset index per row
    zero_rows: tuple          # indices of all-zero rows


def build_constraints(tree):
    n = tree.n_leaves
    interior = [k for k in range(len(tree.node_ids)) if tree.times[k] < tree.horizon]
    interior.sort(key=lambda k: (int(tree.times[k]), int(tree.node_ids[k])))
    d = tree.n_assets
    rows = np.zeros((len(interior) * d, n))
    row_nodes = np.empty(len(interior) * d, dtype=np.int64)
    row_assets = np.empty(len(interior) * d, dtype=np.int64)
    # child on the path through each interior node, per leaf
    for li, leaf_pos in enumerate(tree.leaf_positions):
        path = tree.path_to_leaf(leaf_pos)
        for a, b in zip(path[:-1], path[1:]):
            try:
                r = interior.index(a)
            except ValueError:
                raise MarketError(f"node {int(tree.node_ids[a])} not interior") from None
            step = tree.prices[b] - tree.prices[a]
            for j in range(d):
                rows[r * d + j, li] = step[j]
    for r, k in enumerate(interior):
        for j in range(d):
            row_nodes[r * d + j] = tree.node_ids[k]
            row_assets[r * d + j] = j
    zero = tuple(int(i) for i in range(rows.shape[0])
                 if np.all(rows[i] == 0.0))
    return MartingaleConstraints(matrix=rows, row_nodes=row_nodes,
                                 row_assets=row_assets, zero_rows=zero)


def check_no_arbitrage(tree, tols=DEFAULT_TOLERANCES):
    """Maximize the smallest probability over the martingale polytope.
    Returns (True, witness) when a strictly positive martingale measure
    exists, (False, None) otherwise. Numerical LP failure raises SolverError
    so it is never confused with an arbitrage verdict."""
    cons = build_constraints(tree)
    n = tree.n_leaves
    m = cons.matrix.shape[0]
    rows = []
    for i in range(m):
        rows.append((np.append(cons.matrix[i], 0.0), "==", 0.0))
    rows.append((np.append(np.ones(n), 0.0), "==", 1.0))
    for w in range(n):
        coeffs = np.zeros(n + 1)
        coeffs[w] = 1.0
        coeffs[n] = -1.0
        rows.append((coeffs, ">=", 0.0))
    lp = make_lp(np.append(np.zeros(n), 1.0), rows=rows,
                 lower=0.0, upper=np.append(np.full(n, np.inf), 1.0),
                 sense="max")
    sol = solve_lp(lp, tols)
    if sol.status == "infeasible":
        return False, None
    if sol.status != "optimal":
        raise SolverError(f"no-arbitrage LP {sol.status}")
    if sol.objective <= 1e-10:
        return False, None
    q = np.maximum(sol.x[:n], 0.0)
    q /= q.sum()
    return True, TerminalMeasure(probabilities=q)


@dataclass(frozen=True)
class MartingalePolytope:
    """All vertices of the martingale measure polytope, in ascending
    lexicographic order over the canonical leaf order."""

    vertices: np.ndarray       # (V, leaves); V may be 0
    constraints: MartingaleConstraints

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    def densities(self, reference):
        """dq/dP per vertex as rows; the reference measure must be strictly
        positive."""
        p = reference.probabilities
        if np.any(p <= 0):
            raise MarketError("reference measure must be strictly positive")
        return self.vertices / p[None, :]


def enumerate_vertices(tree, max_leaves=MAX_LEAVES, tols=DEFAULT_TOLERANCES):
    """Enumerate the extreme points of the martingale polytope as basic
    feasible solutions. Raises when the leaf count or basis count exceeds the
    enumeration budget."""
    n = tree.n_leaves
    if n > max_leaves:
        raise SolverError(
            f"{n} leaves exceeds the enumeration cap {max_leaves}")
    cons = build_constraints(tree)
    E = np.vstack([cons.matrix, np.ones((1, n))])
    b = np.zeros(E.shape[0])
    b[-1] = 1.0

    pivot_rows = _independent_rows(E, b)
    E_r = E[pivot_rows]
    b_r = b[pivot_rows]
    r = len(pivot_rows)
    n_bases = comb(n, r)
    if n_bases > _MAX_BASES:
        raise SolverError(
            f"vertex enumeration needs {n_bases} bases; reduce the leaf count")

    cand = []
    subsets = np.array(list(combinations(range(n), r)), dtype=np.int64)
    chunk = max(1, 200_000 // max(r * r, 1))
    for start in range(0, subsets.shape[0], chunk):
        S = subsets[start:start + chunk]
        M = np.ascontiguousarray(E_r[:, S].transpose(1, 0, 2))   # (batch, r, r)
        dets = np.linalg.det(M)
        ok = np.abs(dets) > 1e-12
        if not ok.any():
            continue
        rhs = np.repeat(b_r[None, :, None], int(ok.sum()), axis=0)
        sols = np.linalg.solve(M[ok], rhs)[:, :, 0]
        for row_idx, x in zip(S[ok], sols):
            if np.any(x < -1e-9):
                continue
            q = np.zeros(n)
            q[row_idx] = x
            if np.max(np.abs(E @ q - b)) > 1e-9:
                continue
            if np.any(q < -1e-12):
                continue
            q = np.maximum(q, 0.0)
            s = q.sum()
            if abs(s - 1.0) > 1e-9:
                continue
            q /= s
            cand.append(q)

    unique = []
    for q in sorted(cand, key=lambda v: tuple(v)):
        if unique and np.max(np.abs(q - unique[-1])) <= 1e-9:
            continue
        unique.append(q)
    vertices = np.array(unique) if unique else np.zeros((0, n))
    return MartingalePolytope(vertices=vertices, constraints=cons)


def _independent_rows(E, b):
    """Indices of a maximal independent row set of E, by Gaussian elimination
    with partial pivoting on the augmented system. Raises ArbitrageError when
    the affine system is inconsistent."""
    work = np.hstack([E, b[:, None]]).astype(float)
    m, ncols = E.shape
    pivots = []
    row_ids = list(range(m))
    col = 0
    while col < ncols and len(pivots) < m:
        sub = np.abs(work[len(pivots):, col])
        imax = int(np.argmax(sub)) + len(pivots)
        if np.abs(work[imax, col]) <= 1e-11:
            col += 1
            continue
        work[[len(pivots), imax]] = work[[imax, len(pivots)]]
        row_ids[len(pivots)], row_ids[imax] = row_ids[imax], row_ids[len(pivots)]
        prow = work[len(pivots)] / work[len(pivots), col]
        for i in range(len(pivots) + 1, m):
            work[i] -= work[i, col] * prow
        pivots.append(len(pivots))
        col += 1
    rank = len(pivots)
    # any leftover row must now be all zero including the rhs
    for i in range(rank, m):
        if np.abs(work[i, -1]) > 1e-9 and np.max(np.abs(work[i, :-1])) <= 1e-11:
            raise ArbitrageError("martingale system is inconsistent")
    return [row_ids[i] for i in range(rank)]


def superhedging_price(polytope, claim):
    """U0 = max over vertices of E^q[H]."""
    if polytope.n_vertices == 0:
        raise ArbitrageError("martingale polytope is empty")
    return float(np.max(polytope.vertices @ claim.payoff))


def contains(polytope, measure, tol=1e-8, tols=DEFAULT_TOLERANCES):
    """Whether the measure is a convex combination of the vertices, up to an
    L1 residual of tol."""
    if polytope.n_vertices == 0:
        return False
    V = polytope.vertices
    n = V.shape[1]
    q = measure.probabilities
    k = V.shape[0]
    # minimize the L1 mismatch of the mixture
    c = np.concatenate([np.zeros(k), np.ones(2 * n)])
    rows = []
    for w in range(n):
        coeffs = np.concatenate([V[:, w], np.zeros(2 * n)])
        coeffs[k + w] = 1.0
        coeffs[k + n + w] = -1.0
        rows.append((coeffs, "==", q[w]))
    rows.append((np.concatenate([np.ones(k), np.zeros(2 * n)]), "==", 1.0))
    sol = solve_lp(make_lp(c, rows=rows), tols)
    if sol.status != "optimal":
        return False
    return sol.objective <= tol
