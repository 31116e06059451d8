# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel: posterior non-inferiority mass on a fixed 2-D grid.

Given precomputed log tables for a (p1, delta) grid, accumulates the
normalized posterior mass of the cells with delta below the margin for one
simulated trial outcome (y1, y2).  This is the inner loop of the assurance
simulation; a NumPy twin lives in ``_nimass_py``.
"""

from libc.math cimport exp, INFINITY

# Contributions more than _LOG_FLOOR below the peak underflow double
# precision once exponentiated and are skipped.
cdef double _LOG_FLOOR = -45.0


def ni_mass(double[::1] row, double[::1] col,
            double[:, ::1] l2, double[:, ::1] l2c,
            double y2, double ny2, Py_ssize_t cut):
    """Return (ni_fraction, max_log_weight) for one (y1, y2) outcome.

    row  : per-p1 terms (log prior + arm-1 log likelihood), length n1
    col  : per-delta log prior terms, length n2
    l2   : log p2 over the grid, shape (n1, n2)
    l2c  : log(1 - p2) over the grid, shape (n1, n2)
    y2   : arm-2 event count
    ny2  : n_per_arm - y2
    cut  : number of leading delta columns with delta < margin
    """
    cdef Py_ssize_t n1 = row.shape[0]
    cdef Py_ssize_t n2 = col.shape[0]
    cdef Py_ssize_t i, j
    cdef double mx = -INFINITY
    cdef double lw, w, ri
    cdef double tot = 0.0, ni = 0.0

    for i in range(n1):
        ri = row[i]
        for j in range(n2):
            lw = ri + col[j] + y2 * l2[i, j] + ny2 * l2c[i, j]
            if lw > mx:
                mx = lw
    if mx == -INFINITY:
        return 0.0, mx

    for i in range(n1):
        ri = row[i] - mx
        for j in range(n2):
            lw = ri + col[j] + y2 * l2[i, j] + ny2 * l2c[i, j]
            if lw > _LOG_FLOOR:
                w = exp(lw)
                tot += w
                if j < cut:
                    ni += w
    return ni / tot, mx
