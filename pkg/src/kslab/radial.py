"""Radially symmetric finite-volume solver for the fluid-free parabolic-elliptic system.

    n_t = Δn - ∇·(n F(|∇c|^2) ∇c),    0 = Δc - c + n

in a ball of radius R with no-flux conditions. Cells are spherical shells of
equal thickness; the r=0 face has zero area, which is the discrete form of
the symmetry conditions n_r(0) = c_r(0) = 0. The density update is
conservative (telescoping face fluxes), with upwinded transport and
implicit diffusion.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import io, kernels
from .blowup import BLOWUP, INCONCLUSIVE, NO_BLOWUP, BlowupCriterion, BlowupVerdict, suspected_at
from .errors import CFLViolation, KSLabError, NumericalAbort, ParameterError

# outflow CFL limit that keeps MUSCL-upwinded cells nonnegative
RADIAL_CFL = 0.5


def _sphere_area(dim):
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


@dataclass(frozen=True)
class RadialGrid:
    R: float
    cells: int
    dim: int = 3

    def __post_init__(self):
        if not self.R > 0:
            raise ParameterError("ball radius must be positive")
        if self.cells < 2:
            raise ParameterError("need at least two cells")
        if self.dim < 2:
            raise ParameterError("dimension must be at least 2")

    @cached_property
    def dr(self):
        return self.R / self.cells

    @cached_property
    def r_faces(self):
        return np.linspace(0.0, self.R, self.cells + 1)

    @cached_property
    def r_centers(self):
        f = self.r_faces
        return 0.5 * (f[:-1] + f[1:])

    @cached_property
    def shell_volumes(self):
        f = self.r_faces
        return _sphere_area(self.dim) / self.dim * (f[1:] ** self.dim - f[:-1] ** self.dim)

    @cached_property
    def face_areas(self):
        """Areas of the interior faces r_1 .. r_{cells-1}."""
        return _sphere_area(self.dim) * self.r_faces[1:-1] ** (self.dim - 1)

    @cached_property
    def _conductance(self):
        # volume-integrated Laplacian couples neighbours with weight A/dr
        return self.face_areas / self.dr

    def laplacian_tridiagonal(self):
        """(lower, diag, upper) of the volume-scaled FV Laplacian, so (Lap c)_i ~ Δc(r_i)."""
        g = self._conductance
        v = self.shell_volumes
        diag = np.zeros(self.cells)
        diag[:-1] -= g
        diag[1:] -= g
        return g / v[1:], diag / v, g / v[:-1]

    def mass(self, n):
        return float(np.dot(self.shell_volumes, n))

    def gradient_at_faces(self, c):
        return np.diff(c) / self.dr


@dataclass(frozen=True, eq=False)
class RadialState:
    t: float
    n: np.ndarray
    c: np.ndarray


def _helmholtz_system(grid, shift=1.0, scale=1.0):
    """Tridiagonal of ``shift·I - scale·Lap``."""
    lo, d, up = grid.laplacian_tridiagonal()
    return -scale * lo, shift - scale * d, -scale * up


def solve_c_radial(grid, n):
    """Solve ``-Δc + c = n`` with zero flux at r=0 and r=R."""
    n = np.asarray(n, dtype=np.float64)
    if n.shape != (grid.cells,) or not np.all(np.isfinite(n)):
        raise ParameterError("n must be a finite array with one value per cell")
    lo, d, up = _helmholtz_system(grid)
    c = kernels.thomas(lo, d, up, n)
    if not np.all(np.isfinite(c)):
        raise KSLabError("tridiagonal solve for c failed; the -Δ+1 system cannot be singular")
    return c


def apply_helmholtz(grid, c):
    """``(-Δ + 1) c`` with the same stencil as :func:`solve_c_radial`."""
    lo, d, up = _helmholtz_system(grid)
    out = d * c
    out[1:] += lo * c[:-1]
    out[:-1] += up * c[1:]
    return out


def drift_velocity(grid, c, limiter):
    cr = grid.gradient_at_faces(c)
    return limiter(cr * cr) * cr


def max_stable_dt(grid, w, cfl=RADIAL_CFL):
    """Largest dt whose total outflow per cell stays below ``cfl`` of its content."""
    a = grid.face_areas
    out = np.zeros(grid.cells)
    out[:-1] += a * np.maximum(w, 0.0)
    out[1:] += a * np.maximum(-w, 0.0)
    rate = float(np.max(out / grid.shell_volumes))
    return math.inf if rate == 0.0 else cfl / rate


def step_radial(grid, state, limiter, dt, muscl=True, cfl=RADIAL_CFL):
    """One step: explicit upwinded chemotactic flux, implicit diffusion.

    ``c`` is recomputed from the new density at the end, so the returned
    state is consistent with the elliptic constraint.
    """
    if dt <= 0:
        raise ParameterError("dt must be positive")
    n, c = state.n, state.c
    w = drift_velocity(grid, c, limiter)
    bound = max_stable_dt(grid, w, cfl)
    if dt > bound:
        raise CFLViolation(dt, bound)
    adv = grid.face_areas * kernels.radial_face_flux(n, w, muscl)
    div = np.zeros(grid.cells)
    div[:-1] += adv
    div[1:] -= adv
    rhs = n - dt * div / grid.shell_volumes
    lo, d, up = _helmholtz_system(grid, 1.0, dt)
    n_new = kernels.thomas(lo, d, up, rhs)
    if not np.all(np.isfinite(n_new)):
        raise NumericalAbort(0, "non-finite density in radial step")
    return RadialState(state.t + dt, n_new, solve_c_radial(grid, n_new))


def initial_bump(grid, mass, concentration):
    """Gaussian ``exp(-concentration (r/R)^2)`` scaled to total mass ``mass``."""
    if not mass > 0 or not concentration > 0:
        raise ParameterError("mass and concentration must be positive")
    profile = np.exp(-concentration * (grid.r_centers / grid.R) ** 2)
    return profile * (mass / grid.mass(profile))


RADIAL_COLUMNS = ("t", "dt", "mass", "min_n", "n_inf", "c_w1inf")


@dataclass
class RadialSeries:
    t: list = field(default_factory=list)
    dt: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    min_n: list = field(default_factory=list)
    n_inf: list = field(default_factory=list)
    c_w1inf: list = field(default_factory=list)

    @property
    def times(self):
        return self.t

    def append(self, grid, state, dt):
        self.t.append(float(state.t))
        self.dt.append(float(dt))
        self.mass.append(grid.mass(state.n))
        self.min_n.append(float(np.min(state.n)))
        self.n_inf.append(float(np.max(np.abs(state.n))))
        cr = np.abs(grid.gradient_at_faces(state.c))
        self.c_w1inf.append(max(float(np.max(np.abs(state.c))), float(np.max(cr)) if cr.size else 0.0))

    def rows(self):
        return list(zip(self.t, self.dt, self.mass, self.min_n, self.n_inf, self.c_w1inf))


@dataclass
class RadialRun:
    alpha: float
    series: RadialSeries
    verdict: BlowupVerdict
    final_state: RadialState
    steps: int

    @property
    def max_n_inf(self):
        return max(self.series.n_inf)

    def write_csv(self, path):
        return io.write_csv(path, "kslab-radial-series", RADIAL_COLUMNS, self.series.rows())


def run_radial(
    grid,
    limiter,
    n0,
    T,
    dt_max=1e-3,
    output_every=10,
    criterion=None,
    muscl=True,
    cfl=RADIAL_CFL,
    max_steps=2_000_000,
):
    """Adaptive-step run to time ``T``, stopping at the first blow-up flag.

    The step is halved on CFL refusal and grown by 1.1 (up to ``dt_max``)
    while it sits below half the stability bound.
    """
    criterion = criterion or BlowupCriterion(10.0, 1e-10)
    n0 = np.asarray(n0, dtype=np.float64)
    state = RadialState(0.0, n0.copy(), solve_c_radial(grid, n0))
    series = RadialSeries()
    dt = float(dt_max)
    series.append(grid, state, dt)
    verdict = BlowupVerdict(NO_BLOWUP)
    step = 0
    tol_t = 1e-12 * max(T, 1.0)
    while state.t < T - tol_t:
        if step >= max_steps:
            verdict = BlowupVerdict(INCONCLUSIVE, state.t, len(series.t) - 1, "step budget exhausted")
            break
        h = min(dt, T - state.t)
        try:
            new = step_radial(grid, state, limiter, h, muscl, cfl)
        except CFLViolation:
            dt *= 0.5
            if criterion.dt_floor > 0 and dt < criterion.dt_floor:
                series.append(grid, state, dt)
                verdict = BlowupVerdict(BLOWUP, state.t, len(series.t) - 1, "time step below floor")
                break
            continue
        if T - new.t <= tol_t:
            new = RadialState(T, new.n, new.c)
        state = new
        step += 1
        w = drift_velocity(grid, state.c, limiter)
        if dt < 0.5 * max_stable_dt(grid, w, cfl):
            dt = min(dt_max, 1.1 * dt)
        if step % output_every == 0 or state.t >= T - tol_t:
            series.append(grid, state, h)
            reason = suspected_at(series.t, series.n_inf, len(series.t) - 1, criterion, series.dt)
            if reason:
                verdict = BlowupVerdict(BLOWUP, state.t, len(series.t) - 1, reason)
                break
    return RadialRun(limiter.alpha, series, verdict, state, step)


@dataclass(frozen=True)
class DichotomyConfig:
    """Shared setup of an α sweep: ball, resolution, data and horizon."""

    mass: float = 40.0
    concentration: float = 80.0
    T: float = 5.0
    R: float = 1.0
    cells: int = 200
    K_F: float = 1.0
    dt_max: float = 1e-3
    output_every: int = 10
    growth_factor: float = 10.0
    dt_floor: float = 1e-10


DICHOTOMY_COLUMNS = ("alpha", "verdict", "max_n_inf", "initial_n_inf", "flag_time", "final_time", "steps", "reason")


def _run_alpha(args):
    from .kss import FluxLimiter

    alpha, cfg = args
    grid = RadialGrid(cfg.R, cfg.cells)
    try:
        n0 = initial_bump(grid, cfg.mass, cfg.concentration)
        crit = BlowupCriterion(cfg.growth_factor, cfg.dt_floor)
        return run_radial(grid, FluxLimiter(cfg.K_F, alpha), n0, cfg.T, cfg.dt_max, cfg.output_every, crit)
    except KSLabError as exc:
        return exc


@dataclass
class DichotomyRow:
    alpha: float
    verdict: str
    max_n_inf: float
    initial_n_inf: float
    flag_time: float
    final_time: float
    steps: int
    reason: str = ""

    def as_tuple(self):
        return (self.alpha, self.verdict, self.max_n_inf, self.initial_n_inf, self.flag_time, self.final_time, self.steps, self.reason)


def dichotomy_experiment(alphas, config=None, threads=1, **overrides):
    """Run every α with identical data; one :class:`DichotomyRow` per α."""
    cfg = config or DichotomyConfig()
    if overrides:
        cfg = DichotomyConfig(**{**cfg.__dict__, **overrides})
    alphas = [float(a) for a in alphas]
    for a in alphas:
        if not 0 < a <= 1:
            raise ParameterError(f"alpha must lie in (0, 1], got {a}")
    jobs = [(a, cfg) for a in alphas]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_alpha, jobs))
    else:
        results = [_run_alpha(j) for j in jobs]
    rows = []
    for a, res in zip(alphas, results):
        if isinstance(res, Exception):
            rows.append(DichotomyRow(a, INCONCLUSIVE, math.nan, math.nan, math.nan, math.nan, 0, str(res)))
            continue
        v = res.verdict
        rows.append(
            DichotomyRow(
                a,
                v.kind,
                res.max_n_inf,
                res.series.n_inf[0],
                v.time if v.kind == BLOWUP else math.nan,
                res.final_state.t,
                res.steps,
                v.reason,
            )
        )
    return rows


def write_dichotomy_csv(path, rows):
    return io.write_csv(path, "kslab-dichotomy", DICHOTOMY_COLUMNS, [r.as_tuple() for r in rows])


def calibrate_concentration(alpha=0.3, config=None, lo=1.0, hi=400.0, iterations=12):
    """Bisect the concentration at which the α run first gets flagged before ``config.T``.

    Returns ``(lo, hi)``: ``lo`` is not flagged, ``hi`` is. Raises
    ``ParameterError`` when the bracket does not straddle the threshold.
    """
    cfg = config or DichotomyConfig()

    def flagged(conc):
        res = _run_alpha((alpha, DichotomyConfig(**{**cfg.__dict__, "concentration": conc})))
        return not isinstance(res, Exception) and res.verdict.kind == BLOWUP

    if flagged(lo) or not flagged(hi):
        raise ParameterError(f"concentration bracket [{lo}, {hi}] does not straddle the blow-up threshold")
    for _ in range(iterations):
        mid = math.sqrt(lo * hi)
        if flagged(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi
