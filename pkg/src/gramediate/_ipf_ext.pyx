# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled iterative proportional fitting kernel."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def ipf(const double[::1] observed, const cnp.int64_t[:, ::1] margin_index,
        const cnp.int64_t[::1] margin_sizes, double tol, long max_iter):
    cdef Py_ssize_t n_gen = margin_index.shape[0]
    cdef Py_ssize_t n_cells = observed.shape[0]
    cdef Py_ssize_t offset, g, c, k
    cdef Py_ssize_t total_margin = 0
    cdef long it = 0
    cdef double delta, diff, v, mdelta
    cdef bint converged = False

    for g in range(n_gen):
        total_margin += margin_sizes[g]
    obs_m = np.zeros(total_margin, dtype=np.float64)
    fit_m = np.zeros(total_margin, dtype=np.float64)
    fitted_arr = np.ones(n_cells, dtype=np.float64)
    previous_arr = np.empty(n_cells, dtype=np.float64)
    cdef double[::1] om = obs_m
    cdef double[::1] fm = fit_m
    cdef double[::1] fitted = fitted_arr
    cdef double[::1] previous = previous_arr

    offset = 0
    for g in range(n_gen):
        for c in range(n_cells):
            om[offset + margin_index[g, c]] += observed[c]
        offset += margin_sizes[g]

    with nogil:
        while it < max_iter:
            for c in range(n_cells):
                previous[c] = fitted[c]
            offset = 0
            mdelta = 0.0
            for g in range(n_gen):
                for k in range(margin_sizes[g]):
                    fm[offset + k] = 0.0
                for c in range(n_cells):
                    fm[offset + margin_index[g, c]] += fitted[c]
                for k in range(margin_sizes[g]):
                    v = fm[offset + k]
                    diff = fabs(om[offset + k] - v)
                    if diff > mdelta:
                        mdelta = diff
                    if v > 0.0:
                        fm[offset + k] = om[offset + k] / v
                    else:
                        fm[offset + k] = 0.0
                for c in range(n_cells):
                    fitted[c] *= fm[offset + margin_index[g, c]]
                offset += margin_sizes[g]
            it += 1
            delta = 0.0
            for c in range(n_cells):
                diff = fabs(fitted[c] - previous[c])
                if diff > delta:
                    delta = diff
            if delta < tol and mdelta < tol:
                converged = True
                break
    return fitted_arr, it, converged
