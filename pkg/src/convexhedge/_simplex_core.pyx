# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled simplex pivot kernel.

Must stay semantically identical to _simplex_py.run_kernel: same entering and
leaving rules, same elimination arithmetic, so both backends trace the same
pivot sequence. Keep edits mirrored.
"""

import numpy as np

cimport numpy as cnp

STATUS_OPTIMAL = 0
STATUS_UNBOUNDED = 1
STATUS_PIVOT_LIMIT = 2


def run_kernel(double[:, ::1] T, long long[::1] basis, unsigned char[::1] allowed,
               long long max_pivots, double tol, long long bland_after):
    """See _simplex_py.run_kernel; identical contract."""
    cdef Py_ssize_t m = T.shape[0] - 1
    cdef Py_ssize_t ncols = T.shape[1] - 1
    cdef Py_ssize_t i, j, k, l, jj, ii
    cdef long long pivots = 0
    cdef long long degenerate_run = 0
    cdef bint bland = 0
    cdef double best, v, r, best_r, piv, f
    cdef long long bi
    cdef double INF = np.inf

    while True:
        jj = -1
        if bland:
            for j in range(ncols):
                if allowed[j] and T[m, j] < -tol:
                    jj = j
                    break
        else:
            best = -tol
            for j in range(ncols):
                if allowed[j] and T[m, j] < best:
                    best = T[m, j]
                    jj = j
        if jj < 0:
            return STATUS_OPTIMAL, pivots

        best_r = INF
        ii = -1
        bi = 0
        for i in range(m):
            v = T[i, jj]
            if v > tol:
                r = T[i, ncols] / v
                if r < best_r:
                    best_r = r
                    ii = i
                    bi = basis[i]
                elif r == best_r and basis[i] < bi:
                    ii = i
                    bi = basis[i]
        if ii < 0:
            return STATUS_UNBOUNDED, pivots

        if best_r <= 0.0:
            degenerate_run += 1
            if degenerate_run >= bland_after:
                bland = 1
        else:
            degenerate_run = 0

        piv = T[ii, jj]
        for l in range(ncols + 1):
            T[ii, l] /= piv
        for k in range(m + 1):
            if k == ii:
                continue
            f = T[k, jj]
            if f != 0.0:
                for l in range(ncols + 1):
                    T[k, l] -= f * T[ii, l]
        for k in range(m + 1):
            T[k, jj] = 0.0
        T[ii, jj] = 1.0
        basis[ii] = jj
        pivots += 1
        if pivots >= max_pivots:
            return STATUS_PIVOT_LIMIT, pivots
