"""Pure-numpy simplex pivot kernel.

Fallback for the compiled kernel in _simplex_core.pyx. The two must follow
identical pivot rules and identical elimination arithmetic so that both
backends trace the same pivot sequence on the same tableau; tests compare
them directly.
"""

import numpy as np

STATUS_OPTIMAL = 0
STATUS_UNBOUNDED = 1
STATUS_PIVOT_LIMIT = 2


def run_kernel(T, basis, allowed, max_pivots, tol, bland_after):
    """Pivot the tableau T in place until optimal, unbounded, or pivot limit.

    T is (m+1, ncols+1): rows 0..m-1 hold constraints with the rhs in the last
    column, row m holds reduced costs with minus the objective value in the
    last cell. basis is the int64 basic column index per constraint row,
    updated in place. allowed is a uint8 mask of columns permitted to enter.

    Entering rule: most negative reduced cost, first index on ties; after
    bland_after consecutive degenerate pivots it switches permanently to
    Bland's least-index rule, which cannot cycle. Leaving rule: minimum
    ratio, ties broken by the smallest basic column index.

    Returns (status, pivot_count).
    """
    m = T.shape[0] - 1
    ncols = T.shape[1] - 1
    allowed_mask = allowed.astype(bool)
    pivots = 0
    degenerate_run = 0
    bland = False
    inf = np.inf
    while True:
        obj = T[m, :ncols]
        jj = -1
        if bland:
            for j in range(ncols):
                if allowed_mask[j] and obj[j] < -tol:
                    jj = j
                    break
        else:
            red = np.where(allowed_mask, obj, inf)
            j = int(np.argmin(red))
            if red[j] < -tol:
                jj = j
        if jj < 0:
            return STATUS_OPTIMAL, pivots

        col = T[:m, jj]
        pos = col > tol
        if not pos.any():
            return STATUS_UNBOUNDED, pivots
        ratios = np.where(pos, T[:m, ncols] / np.where(pos, col, 1.0), inf)
        rmin = ratios.min()
        cand = np.flatnonzero(ratios == rmin)
        ii = int(cand[np.argmin(basis[cand])])

        if rmin <= 0.0:
            degenerate_run += 1
            if degenerate_run >= bland_after:
                bland = True
        else:
            degenerate_run = 0

        piv = T[ii, jj]
        T[ii, :] /= piv
        colv = T[:, jj].copy()
        colv[ii] = 0.0
        T -= np.outer(colv, T[ii, :])
        T[:, jj] = 0.0
        T[ii, jj] = 1.0
        basis[ii] = jj
        pivots += 1
        if pivots >= max_pivots:
            return STATUS_PIVOT_LIMIT, pivots
