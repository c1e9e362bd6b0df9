# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Mirrors kslab._kernels_py function for function."""

import numpy as np

from libc.math cimport exp, log1p, sqrt, fabs


def chemotactic_flux(const double[::1] n, const double[:, ::1] grad_c, u,
                     double k_f, double alpha):
    """Pointwise n*(F(|grad c|^2) grad c + u); returns (flux, max drift speed)."""
    cdef Py_ssize_t dim = grad_c.shape[0]
    cdef Py_ssize_t m = grad_c.shape[1]
    cdef Py_ssize_t i, j
    cdef double xi, weight, speed, drift_max = 0.0
    cdef double half_alpha = 0.5 * alpha
    cdef double[:, ::1] uv
    cdef bint has_u = u is not None
    out = np.empty((dim, m), dtype=np.float64)
    cdef double[:, ::1] flux = out
    if has_u:
        uv = u
    for i in range(m):
        xi = 0.0
        for j in range(dim):
            xi += grad_c[j, i] * grad_c[j, i]
        weight = k_f * exp(-half_alpha * log1p(xi))
        speed = weight * sqrt(xi)
        if speed > drift_max:
            drift_max = speed
        for j in range(dim):
            if has_u:
                flux[j, i] = n[i] * (weight * grad_c[j, i] + uv[j, i])
            else:
                flux[j, i] = n[i] * weight * grad_c[j, i]
    return out, drift_max


cdef inline double _minmod(double a, double b) nogil:
    if a * b <= 0.0:
        return 0.0
    if fabs(a) < fabs(b):
        return a
    return b


def radial_face_flux(const double[::1] n, const double[::1] w, bint muscl):
    """Upwind advective flux w*n_face on the interior faces of a 1D cell row."""
    cdef Py_ssize_t m = n.shape[0]
    cdef Py_ssize_t i
    cdef double left, right
    out = np.empty(m - 1, dtype=np.float64)
    cdef double[::1] flux = out
    slopes_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] slopes = slopes_arr
    if muscl:
        for i in range(1, m - 1):
            slopes[i] = _minmod(n[i] - n[i - 1], n[i + 1] - n[i])
    for i in range(m - 1):
        if w[i] >= 0.0:
            left = n[i] + 0.5 * slopes[i]
            flux[i] = w[i] * left
        else:
            right = n[i + 1] - 0.5 * slopes[i + 1]
            flux[i] = w[i] * right
    return out


def thomas(const double[::1] lower, const double[::1] diag,
           const double[::1] upper, const double[::1] rhs):
    """Tridiagonal solve without pivoting (diagonally dominant systems)."""
    cdef Py_ssize_t m = diag.shape[0]
    cdef Py_ssize_t i
    cdef double denom
    cp_arr = np.empty(m, dtype=np.float64)
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] cp = cp_arr
    cdef double[::1] x = out
    denom = diag[0]
    cp[0] = upper[0] / denom if m > 1 else 0.0
    x[0] = rhs[0] / denom
    for i in range(1, m):
        denom = diag[i] - lower[i - 1] * cp[i - 1]
        if i < m - 1:
            cp[i] = upper[i] / denom
        x[i] = (rhs[i] - lower[i - 1] * x[i - 1]) / denom
    for i in range(m - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return out
