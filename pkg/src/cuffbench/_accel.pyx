# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels mirroring cuffbench.kernels (numpy reference)."""

from libc.math cimport sqrt, M_PI

import numpy as np

cimport numpy as cnp

cnp.import_array()

MIN_CLEARANCE_M = 1e-6


def unit_potentials(source_xyz_m, source_weights, points_xyz_m, double sigma_s_per_m):
    if sigma_s_per_m <= 0:
        raise ValueError("conductivity must be positive")
    cdef double[:, ::1] src = np.ascontiguousarray(np.atleast_2d(source_xyz_m), dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(source_weights, dtype=np.float64)
    cdef double[:, ::1] pts = np.ascontiguousarray(np.atleast_2d(points_xyz_m), dtype=np.float64)
    if src.shape[0] != w.shape[0]:
        raise ValueError("one weight per source required")

    cdef Py_ssize_t n_pts = pts.shape[0]
    cdef Py_ssize_t n_src = src.shape[0]
    out_arr = np.empty(n_pts, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double scale = 1.0 / (4.0 * M_PI * sigma_s_per_m)
    cdef double clearance = MIN_CLEARANCE_M
    cdef Py_ssize_t i, c
    cdef double dx, dy, dz, r, acc
    cdef bint too_close = False

    with nogil:
        for i in range(n_pts):
            acc = 0.0
            for c in range(n_src):
                dx = pts[i, 0] - src[c, 0]
                dy = pts[i, 1] - src[c, 1]
                dz = pts[i, 2] - src[c, 2]
                r = sqrt(dx * dx + dy * dy + dz * dz)
                if r < clearance:
                    too_close = True
                acc += w[c] / r
            out[i] = acc * scale
    if too_close:
        raise ValueError("field point within 1 um of a contact source")
    return out_arr


def recruitment_counts(driving_v_per_a, thresholds_v, muscle_weights, amplitudes_a):
    cdef double[::1] d = np.ascontiguousarray(driving_v_per_a, dtype=np.float64)
    cdef double[::1] th = np.ascontiguousarray(thresholds_v, dtype=np.float64)
    cdef double[:, ::1] w = np.ascontiguousarray(np.atleast_2d(muscle_weights), dtype=np.float64)
    cdef double[::1] amps = np.ascontiguousarray(amplitudes_a, dtype=np.float64)
    if d.shape[0] != th.shape[0] or w.shape[0] != d.shape[0]:
        raise ValueError("driving, thresholds and muscle weights disagree on fiber count")

    cdef Py_ssize_t n_fib = d.shape[0]
    cdef Py_ssize_t n_amp = amps.shape[0]
    cdef Py_ssize_t n_mus = w.shape[1]
    out_arr = np.zeros((n_amp, n_mus), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t f, i, j

    with nogil:
        for i in range(n_amp):
            for f in range(n_fib):
                if d[f] * amps[i] >= th[f]:
                    for j in range(n_mus):
                        out[i, j] += w[f, j]
    return out_arr
