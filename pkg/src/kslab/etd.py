"""Second-order exponential time differencing (ETD2RK, Cox & Matthews 2002).

For ``u' = L u + N(u, t)`` with diagonal ``L``::

    a       = e^{Lh} u_n + h φ1(Lh) N(u_n, t_n)
    u_{n+1} = a + h φ2(Lh) (N(a, t_n + h) - N(u_n, t_n))

The linear part is integrated exactly, so constant modes and
time-independent forcing are reproduced to rounding.
"""

import numpy as np

_SERIES_CUTOFF = 1e-2


def phi1(z):
    """(e^z - 1)/z, equal to 1 at z = 0."""
    z = np.asarray(z, dtype=np.float64)
    out = np.ones_like(z)
    nz = z != 0.0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


def phi2(z):
    """(e^z - 1 - z)/z^2, equal to 1/2 at z = 0."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    small = np.abs(z) < _SERIES_CUTOFF
    zs = z[small]
    out[small] = 0.5 + zs * (1.0 / 6.0 + zs * (1.0 / 24.0 + zs * (1.0 / 120.0 + zs / 720.0)))
    zl = z[~small]
    out[~small] = (np.expm1(zl) - zl) / (zl * zl)
    return out


class ETD2Coefficients:
    """Cached ``e^{Lh}``, ``h φ1(Lh)`` and ``h φ2(Lh)`` for one diagonal ``L``."""

    def __init__(self, linear, dt):
        self.dt = float(dt)
        z = np.asarray(linear, dtype=np.float64) * self.dt
        self.exp = np.exp(z)
        self.phi1 = self.dt * phi1(z)
        self.phi2 = self.dt * phi2(z)

    def predictor(self, u, n0):
        return self.exp * u + self.phi1 * n0

    def corrector(self, a, n0, n1):
        return a + self.phi2 * (n1 - n0)
