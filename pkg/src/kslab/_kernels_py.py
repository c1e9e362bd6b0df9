"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np
from scipy.linalg import solve_banded


def chemotactic_flux(n, grad_c, u, k_f, alpha):
    xi = np.einsum("i...,i...->...", grad_c, grad_c)
    weight = k_f * (1.0 + xi) ** (-0.5 * alpha)
    drift_max = float(np.max(weight * np.sqrt(xi))) if xi.size else 0.0
    drift = weight * grad_c
    if u is not None:
        drift = drift + u
    return n * drift, drift_max


def radial_face_flux(n, w, muscl):
    slopes = np.zeros_like(n)
    if muscl and n.size > 2:
        a = n[1:-1] - n[:-2]
        b = n[2:] - n[1:-1]
        slopes[1:-1] = np.where(a * b <= 0.0, 0.0, np.where(np.abs(a) < np.abs(b), a, b))
    left = n[:-1] + 0.5 * slopes[:-1]
    right = n[1:] - 0.5 * slopes[1:]
    return w * np.where(w >= 0.0, left, right)


def thomas(lower, diag, upper, rhs):
    m = diag.shape[0]
    banded = np.zeros((3, m))
    banded[0, 1:] = upper
    banded[1] = diag
    banded[2, :-1] = lower
    return solve_banded((1, 1), banded, rhs, check_finite=False)
