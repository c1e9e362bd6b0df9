"""Flux-limited Keller-Segel-Stokes simulator on a periodic box.

Unknowns are the cell density n, the signal c and the fluid velocity u::

    n_t = ∇·(∇n - n F(|∇c|^2) ∇c - n u)
    c_t = Δc - c + n - u·∇c
    u_t = Δu + ∇P + n∇Φ,   ∇·u = 0

with ``F(ξ) = K_F (1+ξ)^(-α/2)``. Time stepping is ETD2RK on the coupled
system; the transport term for n is a spectral divergence, so the mean of n
(its mass) is untouched by the explicit part and only rounding can move it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import io, kernels
from .blowup import BLOWUP, BlowupCriterion, BlowupVerdict, detect_blowup, suspected_at
from .errors import CFLViolation, ContractViolation, NumericalAbort, ParameterError, StructuralError
from .etd import ETD2Coefficients
from .linear import EstimateSpec, periodic_potential
from .spectral import Grid, ScalarField, SpectralOperator, VectorField, lp_norm_array, w1inf_array

POSITIVITY_UNDERSHOOT = "PositivityUndershoot"
BLOWUP_SUSPECTED = BLOWUP
CFL_COLLAPSE = "CFLCollapse"
NUMERICAL_ABORT = "NumericalAbort"

# min n below -UNDERSHOOT_TOL * sup n raises a PositivityUndershoot event
UNDERSHOOT_TOL = 1e-6


@dataclass(frozen=True)
class FluxLimiter:
    """Prototype limiter ``F(ξ) = K_F (1+ξ)^(-α/2)``.

    ``k_F`` is an optional lower constant for experiments that need
    ``F(ξ) >= k_F (1+ξ)^(-α/2)``; the prototype meets it for any
    ``k_F <= K_F``.
    """

    K_F: float = 1.0
    alpha: float = 0.8
    k_F: float | None = None

    def __post_init__(self):
        if not (self.K_F > 0 and math.isfinite(self.K_F)):
            raise ParameterError(f"K_F must be positive, got {self.K_F}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if self.k_F is not None and not 0 < self.k_F <= self.K_F:
            raise ParameterError(f"k_F must lie in (0, K_F], got {self.k_F}")

    def __call__(self, xi):
        xi_arr = np.asarray(xi, dtype=np.float64)
        if np.any(xi_arr < 0):
            raise ParameterError("limiter argument must be nonnegative")
        out = self.K_F * (1.0 + xi_arr) ** (-0.5 * self.alpha)
        return float(out) if out.ndim == 0 else out

    def upper_bound(self, xi):
        return self.K_F * (np.asarray(xi, dtype=np.float64) + 1.0) ** (-0.5 * self.alpha)

    def lower_bound(self, xi):
        k = self.K_F if self.k_F is None else self.k_F
        return k * (np.asarray(xi, dtype=np.float64) + 1.0) ** (-0.5 * self.alpha)


def flux_limiter_eval(limiter, xi):
    return limiter(xi)


def gaussian_blob(grid, mass, width, center=None, background=0.0):
    """Periodised Gaussian with total mass ``mass`` on top of a constant ``background``."""
    from .linear import _periodic_gaussian_1d

    center = center if center is not None else tuple(0.5 * x for x in grid.length)
    profile = np.ones(grid.shape)
    for i in range(grid.dim):
        profile = profile * _periodic_gaussian_1d(grid.coordinates[i], center[i], width, grid.length[i])
    profile *= mass / (np.sum(profile) * grid.cell_volume)
    return ScalarField(grid, profile + background)


@dataclass(frozen=True, eq=False)
class KSSParams:
    """Limiter, potential and initial data; ``u0`` is projected on construction."""

    limiter: FluxLimiter
    phi: ScalarField
    n0: ScalarField
    c0: ScalarField
    u0: VectorField
    fluid: bool = True

    def __post_init__(self):
        grid = self.n0.grid
        for fld in (self.phi, self.c0, self.u0):
            if fld.grid != grid:
                raise StructuralError("all KSS fields must share one grid")
        if np.min(self.n0.values) < 0:
            raise ContractViolation("n0 must be nonnegative")
        if np.min(self.c0.values) < 0:
            raise ContractViolation("c0 must be nonnegative")
        u = grid.inverse(grid.project_hat(grid.forward(self.u0.components)))
        object.__setattr__(self, "u0", VectorField(grid, u))

    @property
    def grid(self):
        return self.n0.grid

    @classmethod
    def blob(cls, grid, alpha=0.8, K_F=1.0, g=1.0, mass=None, width=0.6, background=0.0, fluid=True):
        """Gaussian blob of cells, signal at the same profile, fluid at rest."""
        mass = 0.05 * grid.volume if mass is None else mass
        n0 = gaussian_blob(grid, mass, width, background=background)
        return cls(FluxLimiter(K_F, alpha), periodic_potential(grid, g), n0, n0, VectorField.zeros(grid), fluid)


@dataclass(frozen=True, eq=False)
class KSSState:
    t: float
    n: ScalarField
    c: ScalarField
    u: VectorField

    @property
    def grid(self):
        return self.n.grid

    def mass(self):
        return self.n.integral()


class KSSStepper:
    """ETD2RK for the coupled (n, c, u) system in spectral variables.

    Each explicit evaluation visits the equations in the order c, n, u and
    reads only the state passed in, so cross terms use the stage's starting
    values.
    """

    def __init__(self, params, cfl=0.5):
        self.params = params
        self.grid = params.grid
        self.cfl = float(cfl)
        self.limiter = params.limiter
        self.grad_phi = self.grid.gradient_array(params.phi.values)
        self.h_min = min(self.grid.spacing)
        self._coeffs = {}
        self.steps = 0
        self.last_speed = 0.0

    def coefficients(self, dt):
        c = self._coeffs.get(dt)
        if c is None:
            if len(self._coeffs) > 8:
                self._coeffs.clear()
            k2 = self.grid.k2
            heat = ETD2Coefficients(-k2, dt)
            c = (heat, ETD2Coefficients(-(k2 + 1.0), dt), heat)
            self._coeffs[dt] = c
        return c

    def explicit(self, n_hat, c_hat, u_hat):
        """Explicit right-hand sides and the transport speed max|u| + max|F∇c|."""
        grid = self.grid
        dim = grid.dim
        npts = int(np.prod(grid.shape))
        n = grid.inverse(n_hat)
        grad_c = grid.inverse(grid.grad_hat(c_hat))
        fluid = self.params.fluid
        u = grid.inverse(u_hat) if fluid else None

        # c: source n minus advection u·∇c
        nc = n_hat.copy()
        if fluid:
            nc -= grid.dealias(grid.forward(np.sum(u * grad_c, axis=0)))

        # n: minus divergence of n F(|∇c|^2) ∇c + n u
        flux, drift_max = kernels.chemotactic_flux(
            np.ascontiguousarray(n).reshape(npts),
            np.ascontiguousarray(grad_c).reshape(dim, npts),
            None if u is None else np.ascontiguousarray(u).reshape(dim, npts),
            self.limiter.K_F,
            self.limiter.alpha,
        )
        flux = flux.reshape((dim,) + grid.shape)
        nn = -grid.div_hat(grid.dealias(grid.forward(flux)))

        # u: projected buoyancy n∇Φ
        if fluid:
            nu = grid.project_hat(grid.dealias(grid.forward(n * self.grad_phi)))
            umax = float(np.max(np.sqrt(np.sum(u * u, axis=0))))
        else:
            nu = np.zeros_like(u_hat)
            umax = 0.0
        return nn, nc, nu, umax + drift_max

    def max_dt(self, speed):
        return math.inf if speed == 0.0 else self.cfl * self.h_min / speed

    def step(self, n_hat, c_hat, u_hat, dt):
        e0 = self.explicit(n_hat, c_hat, u_hat)
        speed = e0[3]
        self.last_speed = speed
        if dt > self.max_dt(speed):
            raise CFLViolation(dt, self.max_dt(speed))
        cn, cc, cu = self.coefficients(dt)
        a = (cn.predictor(n_hat, e0[0]), cc.predictor(c_hat, e0[1]), cu.predictor(u_hat, e0[2]))
        e1 = self.explicit(*a)
        n_new = cn.corrector(a[0], e0[0], e1[0])
        c_new = cc.corrector(a[1], e0[1], e1[1])
        u_new = cu.corrector(a[2], e0[2], e1[2])
        self.steps += 1
        if not all(np.all(np.isfinite(x)) for x in (n_new, c_new, u_new)):
            raise NumericalAbort(self.steps)
        if self.params.fluid:
            u_new = self.grid.project_hat(u_new)
        return n_new, c_new, u_new


def _to_hat(state):
    g = state.grid
    return g.forward(state.n.values), g.forward(state.c.values), g.forward(state.u.components)


def _from_hat(grid, t, n_hat, c_hat, u_hat):
    return KSSState(
        t,
        ScalarField(grid, grid.inverse(n_hat)),
        ScalarField(grid, grid.inverse(c_hat)),
        VectorField(grid, grid.inverse(u_hat)),
    )


def step_kss(state, params, dt, cfl=0.5):
    """Advance ``state`` by one ETD2RK step of length ``dt``.

    Raises ``CFLViolation`` (with a suggested step) when ``dt`` exceeds
    ``cfl * h / (max|u| + max|F(|∇c|^2)∇c|)``.
    """
    if dt <= 0:
        raise ParameterError("dt must be positive")
    if state.grid != params.grid:
        raise StructuralError("state and params live on different grids")
    stepper = KSSStepper(params, cfl)
    out = stepper.step(*_to_hat(state), dt)
    return _from_hat(state.grid, state.t + dt, *out)


# L^p testing inequality --------------------------------------------------------------


@dataclass
class InequalityResidual:
    """RHS - LHS of the L^p testing inequality at interior trajectory times."""

    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def residual(self):
        return self.rhs - self.lhs

    def violation_fraction(self, slack=0.05):
        """Fraction of samples with residual below ``-slack * |rhs|``."""
        if self.times.size == 0:
            return 0.0
        bad = self.residual < -slack * np.abs(self.rhs)
        return float(np.mean(bad))


def lp_integrals(grid, n, c, p, limiter):
    """Return ``(∫n^p, ∫|∇n^{p/2}|^2, ∫n^p |∇c|^{2-2α})`` for one snapshot.

    ``α`` is capped at 1: a limiter bounded with exponent ``α >= 1`` is also
    bounded with exponent 1, where the weight ``|∇c|^0`` is 1.
    """
    dv = grid.cell_volume
    npos = np.maximum(n, 0.0)
    power = float(np.sum(npos**p) * dv)
    g = grid.gradient_array(npos ** (0.5 * p))
    dissipation = float(np.sum(g * g) * dv)
    grad_c = grid.gradient_array(c)
    expo = 2.0 - 2.0 * min(limiter.alpha, 1.0)
    weight = np.sqrt(np.sum(grad_c * grad_c, axis=0)) ** expo
    return power, dissipation, float(np.sum(npos**p * weight) * dv)


def check_lp_inequality(trajectory, p, limiter):
    """Residual of ``d/dt ∫n^p + 2(p-1)/p ∫|∇n^{p/2}|^2 <= p(p-1)K_F^2/2 ∫n^p|∇c|^{2-2α}``.

    ``trajectory`` is a time-ordered sequence of :class:`KSSState` (at
    least three); the time derivative uses centred differences, so the first
    and last states only serve as stencil points. The proof that derives
    this inequality also uses ``κ = (3p-1)/(3(p-1))`` for its ODE
    comparison, which plays no role here.
    """
    if p < 2:
        raise ParameterError(f"p must be >= 2, got {p}")
    states = list(trajectory)
    if len(states) < 3:
        raise ContractViolation("need at least three consecutive states")
    grid = states[0].grid
    vals = [lp_integrals(grid, s.n.values, s.c.values, p, limiter) for s in states]
    t = np.array([s.t for s in states])
    if np.any(np.diff(t) <= 0):
        raise ContractViolation("trajectory must be strictly time-ordered")
    power = np.array([v[0] for v in vals])
    coeff = p * (p - 1) * limiter.K_F**2 / 2.0
    times, lhs, rhs = [], [], []
    for i in range(1, len(states) - 1):
        ddt = (power[i + 1] - power[i - 1]) / (t[i + 1] - t[i - 1])
        times.append(t[i])
        lhs.append(ddt + 2.0 * (p - 1) / p * vals[i][1])
        rhs.append(coeff * vals[i][2])
    return InequalityResidual(np.array(times), np.array(lhs), np.array(rhs))


# full runs ---------------------------------------------------------------------

SIM_COLUMNS = (
    "t",
    "dt",
    "mass",
    "min_n",
    "n_inf",
    "n_p",
    "c_w1inf",
    "u_theta_norm",
    "u_inf",
    "u_rel_div",
    "boundedness_sum",
    "lp_lhs",
    "lp_rhs",
    "lp_residual",
)


@dataclass
class SimSeries:
    """Per-output-time diagnostics of a simulation run."""

    columns: dict = field(default_factory=lambda: {c: [] for c in SIM_COLUMNS})

    def append(self, **row):
        for c in SIM_COLUMNS:
            self.columns[c].append(float(row.get(c, math.nan)))

    def __getattr__(self, name):
        if name == "times":
            name = "t"
        cols = self.__dict__.get("columns")
        if cols is not None and name in cols:
            return np.asarray(cols[name], dtype=np.float64)
        raise AttributeError(name)

    def set_last(self, name, value):
        self.columns[name][-1] = float(value)

    def __len__(self):
        return len(self.columns["t"])

    def rows(self):
        return [tuple(self.columns[c][i] for c in SIM_COLUMNS) for i in range(len(self))]


@dataclass
class Event:
    time: float
    kind: str
    detail: str = ""


@dataclass
class RunReport:
    series: SimSeries
    events: list
    final_state: KSSState
    final_state_ref: str | None = None
    verdict: object = None

    @property
    def completed(self):
        return not any(e.kind in (BLOWUP_SUSPECTED, CFL_COLLAPSE, NUMERICAL_ABORT) for e in self.events)

    def write_csv(self, path):
        return io.write_csv(path, "kslab-simulation", SIM_COLUMNS, self.series.rows())

    def write_events_csv(self, path):
        return io.write_csv(path, "kslab-events", ("t", "kind", "detail"), [(e.time, e.kind, e.detail) for e in self.events])


def write_checkpoint(path, state):
    return io.write_checkpoint(path, state.t, state.n.values, state.c.values, state.u.components)


def read_checkpoint(path, length=2.0 * math.pi):
    t, n, c, u = io.read_checkpoint(path)
    grid = Grid(n.ndim, n.shape, length)
    return KSSState(t, ScalarField(grid, n), ScalarField(grid, c), VectorField(grid, u))


def initial_state(params):
    return KSSState(0.0, params.n0, params.c0, params.u0 if params.fluid else VectorField.zeros(params.grid))


class _Recorder:
    def __init__(self, grid, params, monitor):
        self.grid = grid
        self.params = params
        self.monitor = monitor
        self.stokes = SpectralOperator.stokes_power(monitor.theta).multiplier(grid)
        self.stokes_init = SpectralOperator.stokes_power(monitor.theta_init).multiplier(grid)
        self.series = SimSeries()

    def record(self, t, dt, n_hat, c_hat, u_hat):
        grid = self.grid
        dv = grid.cell_volume
        n = grid.inverse(n_hat)
        c = grid.inverse(c_hat)
        u = grid.inverse(u_hat)
        umag = np.sqrt(np.sum(u * u, axis=0))
        u_theta = grid.inverse(self.stokes * u_hat)
        u_init = grid.inverse(self.stokes_init * u_hat)
        n_inf = float(np.max(np.abs(n)))
        c_w1 = w1inf_array(grid, c)
        self.series.append(
            t=t,
            dt=dt,
            mass=float(np.sum(n) * dv),
            min_n=float(np.min(n)),
            n_inf=n_inf,
            n_p=lp_norm_array(n, self.monitor.p, dv),
            c_w1inf=c_w1,
            u_theta_norm=lp_norm_array(np.sqrt(np.sum(u_theta**2, axis=0)), 2.0, dv),
            u_inf=float(np.max(umag)),
            u_rel_div=grid.relative_divergence(u),
            boundedness_sum=n_inf + c_w1 + lp_norm_array(np.sqrt(np.sum(u_init**2, axis=0)), 2.0, dv),
        )
        return n, c


def _finish_residual(series, pending, after, p, limiter):
    idx, (t0, v0), (t1, v1) = pending
    t2, v2 = after
    ddt = (v2[0] - v0[0]) / (t2 - t0)
    lhs = ddt + 2.0 * (p - 1) / p * v1[1]
    rhs = p * (p - 1) * limiter.K_F**2 / 2.0 * v1[2]
    series.columns["lp_lhs"][idx] = float(lhs)
    series.columns["lp_rhs"][idx] = float(rhs)
    series.columns["lp_residual"][idx] = float(rhs - lhs)


def run_simulation(
    params,
    T,
    dt,
    monitor=None,
    output_every=10,
    cfl=0.5,
    adaptive=True,
    dt_floor=None,
    criterion=None,
    checkpoint=None,
):
    """Advance to time ``T`` or until a blow-up flag, CFL collapse or abort.

    At t=0, every ``output_every`` steps and at the end the run records mass,
    min n, sup n, ‖n‖_p, ‖c‖_{W^{1,∞}}, ‖A^θ u‖_{L^2} and the residual of the
    L^p testing inequality (p taken from ``monitor``). With ``adaptive`` the
    step is halved on a CFL refusal and grown by 1.1 (capped at ``dt``) while
    the transport CFL number stays below half the limit.
    """
    monitor = monitor or EstimateSpec(probes=())
    grid = params.grid
    dt_floor = 1e-9 * T if dt_floor is None else dt_floor
    criterion = criterion or BlowupCriterion(10.0, dt_floor)
    stepper = KSSStepper(params, cfl)
    rec = _Recorder(grid, params, monitor)
    events = []
    state0 = initial_state(params)
    n_hat, c_hat, u_hat = _to_hat(state0)
    t = 0.0
    step = 0
    dt_cur = float(dt)
    p = monitor.p
    limiter = params.limiter

    def snapshot(t_, n_hat_, c_hat_):
        return (t_, lp_integrals(grid, grid.inverse(n_hat_), grid.inverse(c_hat_), p, limiter))

    before = snapshot(t, n_hat, c_hat)
    pending = None  # (row index, snapshot one step before the row, snapshot at the row)
    rec.record(t, dt_cur, n_hat, c_hat, u_hat)
    undershoot = False
    tol_t = 1e-12 * max(T, 1.0)

    while t < T - tol_t:
        h = min(dt_cur, T - t)
        try:
            n_hat_new, c_hat_new, u_hat_new = stepper.step(n_hat, c_hat, u_hat, h)
        except CFLViolation as exc:
            if not adaptive:
                events.append(Event(t, CFL_COLLAPSE, str(exc)))
                break
            dt_cur = 0.5 * dt_cur
            if dt_cur < dt_floor:
                events.append(Event(t, CFL_COLLAPSE, f"dt {dt_cur:.3g} fell below floor {dt_floor:.3g}"))
                break
            continue
        except NumericalAbort as exc:
            events.append(Event(t, NUMERICAL_ABORT, str(exc)))
            break
        n_hat, c_hat, u_hat = n_hat_new, c_hat_new, u_hat_new
        t = T if T - (t + h) <= tol_t else t + h
        step += 1
        if adaptive and stepper.last_speed * dt_cur < 0.5 * cfl * stepper.h_min:
            dt_cur = min(float(dt), 1.1 * dt_cur)

        current = None
        if pending is not None:
            current = snapshot(t, n_hat, c_hat)
            _finish_residual(rec.series, pending, current, p, limiter)
            pending = None

        if step % output_every == 0 or t >= T - tol_t:
            rec.record(t, h, n_hat, c_hat, u_hat)
            current = current or snapshot(t, n_hat, c_hat)
            if before is not None:
                pending = (len(rec.series) - 1, before, current)
            s = rec.series
            n_inf = s.columns["n_inf"][-1]
            min_n = s.columns["min_n"][-1]
            bad = min_n < -UNDERSHOOT_TOL * n_inf
            if bad and not undershoot:
                events.append(Event(t, POSITIVITY_UNDERSHOOT, f"min n = {min_n:.3g}, sup n = {n_inf:.3g}"))
            undershoot = bad
            reason = suspected_at(s.times, s.n_inf, len(s) - 1, criterion, s.dt)
            if reason:
                events.append(Event(t, BLOWUP_SUSPECTED, reason))
                break

        next_is_output = (step + 1) % output_every == 0 or t + dt_cur >= T - tol_t
        before = (current or snapshot(t, n_hat, c_hat)) if next_is_output else None

    final = _from_hat(grid, t, n_hat, c_hat, u_hat)
    verdict = detect_blowup(rec.series, criterion)
    if any(e.kind == CFL_COLLAPSE for e in events) and not verdict.suspected:
        verdict = BlowupVerdict(BLOWUP, t, len(rec.series) - 1, "adaptive time step collapsed")
    ref = None
    if checkpoint is not None:
        ref = str(write_checkpoint(checkpoint, final))
    return RunReport(rec.series, events, final, ref, verdict)
