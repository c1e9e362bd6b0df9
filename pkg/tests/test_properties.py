"""Randomised invariants checked with hypothesis."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kslab.blowup import BlowupCriterion, detect_blowup_arrays
from kslab.config import dump_config, parse_config
from kslab.kss import FluxLimiter
from kslab.radial import RadialGrid, RadialState, solve_c_radial, step_radial
from kslab.spectral import Grid, SpectralOperator, VectorField, apply_operator, project_solenoidal

GRID = Grid.cube(3, 8)
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 8, 8, 8), elements=finite))
def test_projection_is_idempotent_and_solenoidal(w):
    pw = project_solenoidal(VectorField(GRID, w))
    scale = max(np.max(np.abs(pw.components)), 1e-300)
    assert np.max(np.abs(project_solenoidal(pw).components - pw.components)) <= 1e-12 * scale + 1e-300
    assert GRID.relative_divergence(pw.components) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.integers(0, 2**32 - 1))
def test_semigroup_property(s, t, seed):
    w = project_solenoidal(VectorField(GRID, np.random.default_rng(seed).standard_normal((3, 8, 8, 8))))
    two = apply_operator(apply_operator(w, SpectralOperator.stokes_semigroup(s)), SpectralOperator.stokes_semigroup(t))
    one = apply_operator(w, SpectralOperator.stokes_semigroup(s + t))
    assert np.allclose(two.components, one.components, rtol=1e-11, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 24, elements=st.floats(0.0, 1e4)))
def test_radial_c_solve_maximum_principle(n):
    grid = RadialGrid(1.0, 24)
    c = solve_c_radial(grid, n)
    assert np.min(c) >= -1e-12
    assert np.min(n) - 1e-10 * (1 + np.max(n)) <= np.min(c)
    assert np.max(c) <= np.max(n) + 1e-10 * (1 + np.max(n))


@settings(max_examples=25, deadline=None)
@given(
    arrays(np.float64, 30, elements=st.floats(0.0, 50.0)),
    st.floats(0.1, 1.0),
    st.floats(1e-6, 1e-4),
)
def test_radial_step_conserves_mass_and_sign(n, alpha, dt):
    grid = RadialGrid(1.0, 30)
    state = RadialState(0.0, n, solve_c_radial(grid, n))
    try:
        new = step_radial(grid, state, FluxLimiter(1.0, alpha), dt)
    except Exception as exc:  # a CFL refusal is a valid outcome
        assert type(exc).__name__ == "CFLViolation"
        return
    m0 = grid.mass(n)
    assert abs(grid.mass(new.n) - m0) <= 1e-12 * max(m0, 1e-300) + 1e-300
    assert np.min(new.n) >= -1e-12 * max(np.max(n), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 10.0), st.floats(0.01, 2.0))
def test_limiter_between_bounds(xi, alpha):
    F = FluxLimiter(1.0, alpha, k_F=0.5)
    assert F.lower_bound(xi) <= F(xi) <= F.upper_bound(xi)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.01, 1.0),
    st.floats(1e-3, 1.0),
    st.sampled_from(["simulate", "radial", "sweep-alpha"]),
    st.integers(2, 40).map(lambda k: 2 * k),
)
def test_config_round_trip(alpha, dt, mode, points):
    text = f"mode = {mode}\n[params]\nalpha = {alpha!r}\n[numerics]\ndt = {dt!r}\n[grid]\npoints = {points}\n"
    cfg = parse_config(text)
    assert parse_config(dump_config(cfg)) == cfg
    assert cfg.params.alpha == alpha


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 20, elements=st.floats(0.5, 5.0)))
def test_bounded_series_never_flagged(values):
    t = np.linspace(0.0, 1.0, 20)
    assert not detect_blowup_arrays(t, values, BlowupCriterion(10.0)).suspected
