"""Auxiliary linear transport/Stokes system and conditional-estimate probes.

The system integrated here is::

    z_t + v·∇z = Δz - z + f
    v_t = Δv + ∇Q + f∇Φ,   ∇·v = 0

on a periodic box, with the pressure ``Q`` removed by Leray projection.
A probe sweeps a family of forcings ``f`` of fixed mass whose ``L^p`` norm
grows with an amplitude parameter, records running suprema of several
response norms, and fits log-log slopes against ``M_p = 1 + sup ‖f‖_p``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import io
from .errors import CFLViolation, ContractViolation, NumericalAbort, ParameterError, StructuralError
from .etd import ETD2Coefficients
from .spectral import (
    TWO_PI,
    Grid,
    ScalarField,
    SpectralOperator,
    VectorField,
    is_solenoidal,
    lp_norm_array,
    norm,
    w1inf_array,
)

log = logging.getLogger(__name__)

MOVING_GAUSSIAN = "MovingGaussian"
STATIC_GAUSSIAN = "StaticGaussian"
SINGLE_MODE = "SingleMode"
FAMILIES = (MOVING_GAUSSIAN, STATIC_GAUSSIAN, SINGLE_MODE)


def periodic_potential(grid, g=1.0):
    """Φ = g sin(2π x_d / L) L / 2π along the last axis, so that sup|∇Φ| = g."""
    x = grid.coordinates[-1]
    length = grid.length[-1]
    return ScalarField(grid, g * np.sin(TWO_PI * x / length) * length / TWO_PI)


def _periodic_gaussian_1d(x, center, width, length, images=2):
    d = np.mod(x - center + 0.5 * length, length) - 0.5 * length
    out = np.zeros_like(x)
    for j in range(-images, images + 1):
        out += np.exp(-0.5 * ((d + j * length) / width) ** 2)
    return out


@dataclass(frozen=True)
class ForcingSpec:
    """A nonnegative forcing family with fixed total mass.

    For the Gaussian families the bump width is ``width * amplitude**(-1/dim)``,
    so the peak grows linearly with ``amplitude`` while ``∫f = mass`` stays
    fixed and ``‖f‖_p`` grows like ``amplitude**(1 - 1/p)``. ``SingleMode``
    is ``mass/V (1 + a/(1+a) cos(k·(x - speed t)))``. Amplitude 0 means
    ``f ≡ 0``.
    """

    family: str = MOVING_GAUSSIAN
    amplitude: float = 1.0
    width: float = 1.0
    speed: tuple = (1.0, 0.5, 0.25)
    mass: float = 1.0
    center: tuple = (math.pi, math.pi, math.pi)
    mode: tuple = (1, 0, 0)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown forcing family {self.family!r}; expected one of {FAMILIES}")
        if self.amplitude < 0 or not math.isfinite(self.amplitude):
            raise ParameterError("forcing amplitude must be a nonnegative real")
        if not self.width > 0:
            raise ParameterError("forcing width must be positive")
        if not self.mass > 0:
            raise ParameterError("forcing mass bound must be positive")
        object.__setattr__(self, "speed", tuple(float(s) for s in self.speed))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "mode", tuple(int(k) for k in self.mode))

    @property
    def lp_profile(self):
        if self.family == SINGLE_MODE:
            return "constant in time; L^p norm bounded by 2*mass/V**(1-1/p) for all amplitudes"
        if self.family == MOVING_GAUSSIAN:
            return "constant in time (rigid translation); grows like amplitude**(1-1/p)"
        return "constant in time; grows like amplitude**(1-1/p)"

    def with_amplitude(self, amplitude):
        return replace(self, amplitude=float(amplitude))

    def effective_width(self, dim):
        return self.width * self.amplitude ** (-1.0 / dim)

    def evaluate(self, grid, t):
        """Forcing values on ``grid`` at time ``t``; integrates to ``mass`` exactly."""
        if self.amplitude == 0.0:
            return np.zeros(grid.shape)
        dim = grid.dim
        speed = np.resize(np.asarray(self.speed), dim)
        center = np.resize(np.asarray(self.center), dim)
        if self.family == STATIC_GAUSSIAN:
            speed = np.zeros(dim)
        if self.family == SINGLE_MODE:
            mode = np.resize(np.asarray(self.mode), dim)
            phase = sum(
                TWO_PI * mode[i] / grid.length[i] * (grid.coordinates[i] - speed[i] * t) for i in range(dim)
            )
            depth = self.amplitude / (1.0 + self.amplitude)
            profile = 1.0 + depth * np.cos(phase)
        else:
            w = self.effective_width(dim)
            profile = np.ones(grid.shape)
            for i in range(dim):
                profile = profile * _periodic_gaussian_1d(
                    grid.coordinates[i], center[i] + speed[i] * t, w, grid.length[i]
                )
        return profile * (self.mass / (np.sum(profile) * grid.cell_volume))


PROBES = ("gradient", "fluid_power", "signal_lq", "fluid_lr", "signal_power")

# response column recorded for each probe
PROBE_RESPONSE = {
    "gradient": "z_w1inf",
    "fluid_power": "v_theta_norm",
    "signal_lq": "z_q_norm",
    "fluid_lr": "v_r_norm",
    "signal_power": "n_beta",
}


def estimate_violations(p, q, r, theta, beta, eta, theta_init, probes=PROBES):
    """Yield ``(field, reason)`` for every violated exponent condition."""
    if not p >= 2:
        yield "p", f"requires p >= 2 (got {p})"
    if not q >= 2:
        yield "q", f"requires q >= 2 (got {q})"
    if not r > 3:
        yield "r", f"requires r > 3 (got {r})"
    if not 0.75 < theta_init < 1:
        yield "theta_init", f"requires 3/4 < theta_init < 1 (got {theta_init})"
    if not 0.25 < theta <= theta_init:
        yield "theta", f"requires 1/4 < theta <= theta_init = {theta_init} (got {theta})"
    if not 0.5 < beta < 1:
        yield "beta", f"requires 1/2 < beta < 1 (got {beta})"
    if not eta > 0:
        yield "eta", f"requires eta > 0 (got {eta})"
    if "signal_power" in probes:
        if not q * (2 * beta - 1) > 3:
            yield "q", f"signal_power probe requires q(2*beta-1) > 3 (got {q * (2 * beta - 1):.6g})"
        if not 2 * p * (1 - beta) >= 3:
            yield "beta", f"signal_power probe requires 2p(1-beta) >= 3 (got {2 * p * (1 - beta):.6g})"
    if "gradient" in probes and not p > 3:
        yield "p", f"gradient probe requires p > 3 (got {p})"


@dataclass(frozen=True)
class EstimateSpec:
    """Exponents selecting which conditional estimates are probed.

    ``probes`` is a subset of :data:`PROBES`. The admissibility conditions
    that only some estimates need are checked only when those probes are
    selected.
    """

    p: float = 4.0
    q: float = 16.0
    r: float = 6.0
    theta: float = 0.8
    beta: float = 0.6
    eta: float = 0.05
    theta_init: float = 0.9
    probes: tuple = PROBES

    def __post_init__(self):
        probes = tuple(self.probes)
        for name in probes:
            if name not in PROBES:
                raise ParameterError(f"unknown probe {name!r}; expected a subset of {PROBES}")
        object.__setattr__(self, "probes", probes)
        for key, value in self.violations():
            raise ParameterError(f"{key}: {value}")

    def violations(self):
        """Yield ``(field, reason)`` for every violated condition."""
        return estimate_violations(self.p, self.q, self.r, self.theta, self.beta, self.eta, self.theta_init, self.probes)

    def ceiling(self, probe):
        """Largest exponent of ``M_p`` the corresponding bound allows."""
        p, q, r = self.p, self.q, self.r
        lead = p / (p - 1.0)
        if probe == "gradient":
            return lead * (2.0 / 3.0 + self.eta)
        if probe == "fluid_power":
            return lead * ((4.0 * self.theta - 1.0) / 6.0 + self.eta)
        if probe == "signal_lq":
            return lead * (q - 1.0) / (3.0 * q)
        if probe == "fluid_lr":
            return lead * ((r - 3.0) / (3.0 * r) + self.eta)
        if probe == "signal_power":
            return lead * ((2.0 * q * self.beta + q - 1.0) / (3.0 * q) + self.eta)
        raise ParameterError(f"unknown probe {probe!r}")


@dataclass(frozen=True, eq=False)
class InitBounds:
    """Initial data with the bound ``K`` they satisfy.

    Checked at construction: ``z0 >= 0``, ``‖z0‖_{W^{1,∞}} <= K`` and
    ``‖A^ϑ v0‖_{L^2} <= K`` with ``v0`` zero-mean and solenoidal.
    """

    K: float
    z0: ScalarField
    v0: VectorField
    theta_init: float = 0.9

    def __post_init__(self):
        if not 0.75 < self.theta_init < 1:
            raise ParameterError(f"theta_init must lie in (3/4, 1), got {self.theta_init}")
        if self.z0.grid != self.v0.grid:
            raise StructuralError("z0 and v0 live on different grids")
        if np.min(self.z0.values) < 0:
            raise ContractViolation("z0 must be nonnegative")
        if not is_solenoidal(self.v0):
            raise ContractViolation("v0 must be zero-mean and solenoidal")
        zk = norm(self.z0, "W1inf")
        vk = self.v0_power_norm()
        if zk > self.K or vk > self.K:
            raise ContractViolation(
                f"initial data exceed K={self.K}: ‖z0‖_W1inf={zk:.6g}, ‖A^theta_init v0‖={vk:.6g}"
            )

    def v0_power_norm(self):
        grid = self.v0.grid
        mult = SpectralOperator.stokes_power(self.theta_init).multiplier(grid)
        out = grid.inverse(mult * grid.project_hat(grid.forward(self.v0.components)))
        return lp_norm_array(np.sqrt(np.sum(out**2, axis=0)), 2.0, grid.cell_volume)

    @classmethod
    def default(cls, grid, theta_init=0.9):
        """z0 = 0.5 + 0.25 cos(2π x_1/L_1), v0 = 0, K = 1."""
        x = grid.coordinates[0]
        z0 = ScalarField(grid, 0.5 + 0.25 * np.cos(TWO_PI * x / grid.length[0]))
        return cls(1.0, z0, VectorField.zeros(grid), theta_init)


class LinearStepper:
    """ETD2RK stepper for the linear system in spectral variables.

    ``L`` is ``-(|k|^2+1)`` for z and ``-|k|^2`` for v. The explicit part is
    ``f - v·∇z`` for z (product dealiased) and ``P(f∇Φ)`` for v.
    """

    def __init__(self, grid, phi, cfl=0.5):
        self.grid = grid
        self.cfl = float(cfl)
        self.grad_phi = grid.gradient_array(phi.values if isinstance(phi, ScalarField) else phi)
        self.h_min = min(grid.spacing)
        self._coeffs = {}
        self.steps = 0

    def coefficients(self, dt):
        c = self._coeffs.get(dt)
        if c is None:
            if len(self._coeffs) > 8:
                self._coeffs.clear()
            k2 = self.grid.k2
            c = (ETD2Coefficients(-(k2 + 1.0), dt), ETD2Coefficients(-k2, dt))
            self._coeffs[dt] = c
        return c

    def max_dt(self, v_hat):
        vmax = float(np.max(np.sqrt(np.sum(self.grid.inverse(v_hat) ** 2, axis=0))))
        return math.inf if vmax == 0.0 else self.cfl * self.h_min / vmax

    def explicit(self, z_hat, v_hat, f):
        grid = self.grid
        v = grid.inverse(v_hat)
        grad_z = grid.inverse(grid.grad_hat(z_hat))
        adv = np.sum(v * grad_z, axis=0)
        nz = grid.forward(f) - grid.dealias(grid.forward(adv))
        nv = grid.project_hat(grid.dealias(grid.forward(f * self.grad_phi)))
        return nz, nv, v

    def step(self, z_hat, v_hat, f_now, f_next, dt):
        grid = self.grid
        nz0, nv0, v = self.explicit(z_hat, v_hat, f_now)
        vmax = float(np.max(np.sqrt(np.sum(v**2, axis=0))))
        if vmax > 0 and dt > self.cfl * self.h_min / vmax:
            raise CFLViolation(dt, self.cfl * self.h_min / vmax)
        cz, cv = self.coefficients(dt)
        az = cz.predictor(z_hat, nz0)
        av = cv.predictor(v_hat, nv0)
        nz1, nv1, _ = self.explicit(az, av, f_next)
        z_new = cz.corrector(az, nz0, nz1)
        v_new = cv.corrector(av, nv0, nv1)
        self.steps += 1
        if not (np.all(np.isfinite(z_new)) and np.all(np.isfinite(v_new))):
            raise NumericalAbort(self.steps)
        # keep v exactly on the solenoidal zero-mean subspace
        return z_new, grid.project_hat(v_new)


def step_linear(z, v, f_now, phi, dt, f_next=None, cfl=0.5):
    """One ETD2RK step of the linear system; returns the new ``(z, v)``.

    ``f_next`` is the forcing at ``t + dt``; without it the forcing is
    frozen over the step, which is exact for time-independent ``f``.
    """
    grid = z.grid
    for fld in (v, f_now, phi) + ((f_next,) if f_next is not None else ()):
        if fld.grid != grid:
            raise StructuralError("all inputs to step_linear must share one grid")
    if dt <= 0:
        raise ParameterError("dt must be positive")
    if not is_solenoidal(v):
        raise ContractViolation("v must be zero-mean and solenoidal")
    stepper = LinearStepper(grid, phi, cfl)
    fn = f_now.values
    fx = fn if f_next is None else f_next.values
    z_hat, v_hat = stepper.step(grid.forward(z.values), grid.forward(v.components), fn, fx, dt)
    return ScalarField(grid, grid.inverse(z_hat)), VectorField(grid, grid.inverse(v_hat))


# diagnostics -------------------------------------------------------------------

SERIES_COLUMNS = (
    "t",
    "f_p_norm",
    "M_p",
    "N_qbeta",
    "n_beta",
    "v_theta_norm",
    "v_r_norm",
    "z_q_norm",
    "z_w1inf",
    "zhat_w1inf",
    "z_min",
)


@dataclass
class DiagnosticSeries:
    """Time-indexed diagnostics of one linear run.

    ``M_p`` and ``N_qbeta`` are ``1 +`` running suprema over the recorded
    times, so both are nondecreasing and at least 1. ``n_beta`` is the
    un-accumulated ``‖B^β(z - e^{-tB} z0)‖_q``.
    """

    times: list = field(default_factory=list)
    f_p_norm: list = field(default_factory=list)
    M_p: list = field(default_factory=list)
    N_qbeta: list = field(default_factory=list)
    n_beta: list = field(default_factory=list)
    v_theta_norm: list = field(default_factory=list)
    v_r_norm: list = field(default_factory=list)
    z_q_norm: list = field(default_factory=list)
    z_w1inf: list = field(default_factory=list)
    zhat_w1inf: list = field(default_factory=list)
    z_min: list = field(default_factory=list)

    def column(self, name):
        return np.asarray(self.times if name == "t" else getattr(self, name), dtype=np.float64)

    def rows(self):
        cols = [self.column(c) for c in SERIES_COLUMNS]
        return [tuple(float(c[i]) for c in cols) for i in range(len(self.times))]

    def sup(self, name):
        return float(np.max(self.column(name)))

    def __len__(self):
        return len(self.times)


class DiagnosticRecorder:
    """Streams (t, z, v, f) samples into a :class:`DiagnosticSeries`."""

    def __init__(self, grid, spec, init):
        self.grid = grid
        self.spec = spec
        self.z0_hat = grid.forward(init.z0.values)
        self.heat_power = SpectralOperator.heat_power(spec.beta).multiplier(grid)
        self.stokes_power = SpectralOperator.stokes_power(spec.theta).multiplier(grid)
        self.series = DiagnosticSeries()
        self._sup_f = 0.0
        self._sup_n = 0.0

    def push(self, t, z_hat, v_hat, f):
        grid, spec, s = self.grid, self.spec, self.series
        if s.times and t < s.times[-1]:
            raise ContractViolation("diagnostic history must be time-ordered")
        dv = grid.cell_volume
        z = grid.inverse(z_hat)
        v = grid.inverse(v_hat)
        diff_hat = z_hat - np.exp(-t * (grid.k2 + 1.0)) * self.z0_hat
        f_p = lp_norm_array(f, spec.p, dv)
        n_beta = lp_norm_array(grid.inverse(self.heat_power * diff_hat), spec.q, dv)
        self._sup_f = max(self._sup_f, f_p)
        self._sup_n = max(self._sup_n, n_beta)
        v_theta = grid.inverse(self.stokes_power * v_hat)
        s.times.append(float(t))
        s.f_p_norm.append(f_p)
        s.M_p.append(1.0 + self._sup_f)
        s.N_qbeta.append(1.0 + self._sup_n)
        s.n_beta.append(n_beta)
        s.v_theta_norm.append(lp_norm_array(np.sqrt(np.sum(v_theta**2, axis=0)), 2.0, dv))
        s.v_r_norm.append(lp_norm_array(np.sqrt(np.sum(v**2, axis=0)), spec.r, dv))
        s.z_q_norm.append(lp_norm_array(z, spec.q, dv))
        s.z_w1inf.append(w1inf_array(grid, z))
        s.zhat_w1inf.append(w1inf_array(grid, grid.inverse(diff_hat)))
        s.z_min.append(float(np.min(z)))


def record_diagnostics(history, spec, init):
    """Diagnostics for a history of ``(t, z, v, f)`` tuples of fields."""
    history = list(history)
    if not history:
        raise ContractViolation("history must be nonempty")
    grid = init.z0.grid
    rec = DiagnosticRecorder(grid, spec, init)
    for t, z, v, f in history:
        fv = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=np.float64)
        rec.push(t, grid.forward(z.values), grid.forward(v.components), fv)
    return rec.series


def run_linear(grid, forcing, spec, init, T, dt, g=1.0, output_every=10, cfl=0.5):
    """Integrate from ``(z0, v0)`` to time ``T`` with fixed ``dt``.

    Diagnostics are recorded at t=0, every ``output_every`` steps and at T.
    """
    phi = periodic_potential(grid, g)
    stepper = LinearStepper(grid, phi, cfl)
    rec = DiagnosticRecorder(grid, spec, init)
    z_hat = grid.forward(init.z0.values)
    v_hat = grid.project_hat(grid.forward(init.v0.components))
    nsteps = int(math.ceil(T / dt - 1e-9)) if T > 0 else 0
    f_now = forcing.evaluate(grid, 0.0)
    rec.push(0.0, z_hat, v_hat, f_now)
    t = 0.0
    for k in range(1, nsteps + 1):
        h = min(dt, T - t)
        t_next = T if k == nsteps else k * dt
        f_next = forcing.evaluate(grid, t_next)
        z_hat, v_hat = stepper.step(z_hat, v_hat, f_now, f_next, h)
        t, f_now = t_next, f_next
        if k % output_every == 0 or k == nsteps:
            rec.push(t, z_hat, v_hat, f_now)
    return rec.series


# exponent fitting -----------------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2: float

    def __iter__(self):
        return iter((self.slope, self.intercept, self.r2))


def fit_scaling_exponent(sweep):
    """Least-squares slope of log(response) against log(M_p).

    ``sweep`` is a sequence of ``(M_p_sup, response_sup)`` pairs. At least
    four positive pairs are needed, spanning at least one decade of M_p;
    fewer than two decades is accepted with a warning.
    """
    pts = np.asarray(list(sweep), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 4 or pts.shape[1] != 2:
        raise ParameterError("need at least 4 (M_p, response) pairs")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ParameterError("all sweep values must be positive and finite")
    x, y = np.log10(pts[:, 0]), np.log10(pts[:, 1])
    spread = float(np.ptp(x))
    if spread < 1.0:
        raise ParameterError(f"M_p spans only {spread:.3g} decades; at least 1 is required")
    if spread < 2.0:
        log.warning("M_p spans %.3g decades; 2 or more are recommended", spread)
    res = stats.linregress(x, y)
    return ScalingFit(float(res.slope), float(res.intercept), float(res.rvalue**2))


# probe sweeps -------------------------------------------------------------------------


@dataclass
class AmplitudeRun:
    amplitude: float
    series: DiagnosticSeries | None
    error: str = ""

    @property
    def ok(self):
        return self.series is not None


@dataclass
class ProbeFit:
    probe: str
    response: str
    ceiling: float
    fit: ScalingFit | None
    tolerance: float = 0.1
    error: str = ""

    @property
    def margin(self):
        return math.nan if self.fit is None else self.ceiling + self.tolerance - self.fit.slope

    @property
    def passed(self):
        return self.fit is not None and self.margin >= 0.0


@dataclass
class ProbeReport:
    spec: EstimateSpec
    forcing: ForcingSpec
    runs: list
    fits: dict

    def sweep_points(self, response):
        pts = []
        for run in self.runs:
            if run.ok and run.amplitude > 0:
                pts.append((run.series.sup("M_p"), run.series.sup(response)))
        return pts

    def baseline(self, response):
        for run in self.runs:
            if run.ok and run.amplitude == 0:
                return run.series.sup(response)
        return None

    def write_series_csv(self, path):
        cols = ("amplitude",) + SERIES_COLUMNS
        rows = []
        for run in self.runs:
            if run.ok:
                rows.extend((run.amplitude,) + row for row in run.series.rows())
        return io.write_csv(path, "kslab-probe-series", cols, rows)

    def write_summary_csv(self, path):
        cols = ("probe", "response", "slope", "intercept", "r2", "ceiling", "tolerance", "margin", "passed", "note")
        rows = []
        for name, pf in self.fits.items():
            f = pf.fit
            rows.append(
                (
                    name,
                    pf.response,
                    math.nan if f is None else f.slope,
                    math.nan if f is None else f.intercept,
                    math.nan if f is None else f.r2,
                    pf.ceiling,
                    pf.tolerance,
                    pf.margin,
                    pf.passed,
                    pf.error,
                )
            )
        return io.write_csv(path, "kslab-probe-summary", cols, rows)


def _run_amplitude(args):
    grid, forcing, spec, init, T, dt, g, output_every, cfl = args
    try:
        series = run_linear(grid, forcing, spec, init, T, dt, g, output_every, cfl)
    except (NumericalAbort, CFLViolation) as exc:
        return AmplitudeRun(forcing.amplitude, None, str(exc))
    return AmplitudeRun(forcing.amplitude, series)


def probe_estimate(
    spec,
    forcing,
    amplitudes,
    T,
    dt,
    grid=None,
    init=None,
    g=1.0,
    output_every=10,
    cfl=0.5,
    tolerance=0.1,
    threads=1,
):
    """Run one linear simulation per amplitude and fit every selected probe.

    Amplitude 0 is run as the forcing-free baseline and left out of the
    fits. A failed run (non-finite values or CFL violation) is recorded and
    the fit proceeds on the survivors when at least four remain.
    """
    amplitudes = [float(a) for a in amplitudes]
    if any(b <= a for a, b in zip(amplitudes, amplitudes[1:])):
        raise ParameterError("amplitudes must be strictly increasing")
    grid = grid or Grid.cube(3, 32)
    init = init or InitBounds.default(grid, spec.theta_init)
    jobs = [(grid, forcing.with_amplitude(a), spec, init, T, dt, g, output_every, cfl) for a in amplitudes]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(_run_amplitude, jobs))
    else:
        runs = [_run_amplitude(j) for j in jobs]
    report = ProbeReport(spec, forcing, runs, {})
    for probe in spec.probes:
        response = PROBE_RESPONSE[probe]
        pf = ProbeFit(probe, response, spec.ceiling(probe), None, tolerance)
        try:
            pf.fit = fit_scaling_exponent(report.sweep_points(response))
        except ParameterError as exc:
            pf.error = str(exc)
        report.fits[probe] = pf
    return report
