"""Acceptance criteria, one test each, reported as a PASS/FAIL line per criterion."""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from kslab import cli, io
from kslab.config import shipped_config, shipped_config_path
from kslab.kss import FluxLimiter, KSSParams, initial_state, run_simulation, step_kss
from kslab.radial import RadialGrid, RadialState, initial_bump, solve_c_radial, step_radial
from kslab.spectral import Grid, ScalarField, SpectralOperator, VectorField, apply_operator, project_solenoidal

from test_kss import _kss_order
from test_linear import smooth_problem, temporal_order
from test_radial import radial_spatial_order
from test_spectral import oracle_multiplier, oracle_projection, rel


def test_criterion_1_operators_match_dense_oracle(acceptance_report):
    grid = Grid.cube(3, 8)
    rng = np.random.default_rng(1)
    w = rng.standard_normal((3,) + grid.shape)
    s = rng.standard_normal(grid.shape)
    scalar_cases = [(SpectralOperator.heat_power(0.5), lambda k2: (k2 + 1.0) ** 0.5)]
    scalar_cases += [(SpectralOperator.heat_semigroup(t), lambda k2, t=t: math.exp(-t * (k2 + 1.0))) for t in (0.01, 0.1)]
    stokes_cases = [(SpectralOperator.stokes_power(0.75), lambda k2: k2**0.75)]
    stokes_cases += [(SpectralOperator.stokes_semigroup(t), lambda k2, t=t: math.exp(-t * k2)) for t in (0.01, 0.1)]
    start = time.perf_counter()
    projected = project_solenoidal(VectorField(grid, w))
    scalar_out = [apply_operator(ScalarField(grid, s), op).values for op, _ in scalar_cases]
    stokes_out = [apply_operator(projected, op).components for op, _ in stokes_cases]
    elapsed = time.perf_counter() - start
    pw_oracle = oracle_projection(grid, w)
    errors = [rel(projected.components, pw_oracle)]
    errors += [rel(out, oracle_multiplier(grid, s, sym)) for out, (_, sym) in zip(scalar_out, scalar_cases)]
    errors += [rel(out, oracle_multiplier(grid, pw_oracle, sym)) for out, (_, sym) in zip(stokes_out, stokes_cases)]
    worst = max(errors)
    passed = worst <= 1e-10 and elapsed < 1.0
    acceptance_report(1, "spectral operators vs dense oracle", passed, f"max rel err {worst:.2e}, {elapsed:.3f}s")
    assert passed


def test_criterion_2_exact_linear_solutions(acceptance_report):
    from kslab.linear import step_linear

    grid = Grid.cube(3, 8)
    zero = ScalarField(grid, np.zeros(grid.shape))
    z, v = ScalarField(grid, np.full(grid.shape, 2.0)), VectorField.zeros(grid)
    t = 0.0
    for _ in range(10):
        z, v = step_linear(z, v, zero, zero, 0.1)
        t += 0.1
    decay_err = float(np.max(np.abs(z.values - 2.0 * math.exp(-t))))

    x, y, _ = grid.coordinates
    f = ScalarField(grid, 1.0 + np.cos(x))
    phi = ScalarField(grid, np.sin(y))
    target = project_solenoidal(VectorField(grid, f.values * np.stack([0 * x, np.cos(y), 0 * x]))).components
    z, v = ScalarField(grid, np.zeros(grid.shape)), VectorField.zeros(grid)
    t, dt = 0.0, 0.05
    for _ in range(8):
        z, v = step_linear(z, v, f, phi, dt)
        t += dt
    expected = (1.0 - math.exp(-2.0 * t)) / 2.0 * target
    stokes_err = float(np.max(np.abs(v.components - expected)) / np.max(np.abs(expected)))
    passed = decay_err <= 1e-12 and stokes_err <= 1e-8
    acceptance_report(2, "exact decay and single-mode response", passed, f"decay {decay_err:.1e}, Stokes rel {stokes_err:.1e}")
    assert passed


def test_criterion_3_mass_conservation(acceptance_report):
    drifts = {}
    for dim, n, dt in ((2, 64, 1e-3), (3, 32, 1e-3)):
        grid = Grid.cube(dim, n)
        params = KSSParams.blob(grid, alpha=0.8, mass=0.05 * grid.volume, width=0.8)
        state = initial_state(params)
        m0 = state.mass()
        for _ in range(1000):
            state = step_kss(state, params, dt)
        drifts[f"{dim}d"] = abs(state.mass() - m0) / m0
    grid = RadialGrid(1.0, 200)
    n0 = initial_bump(grid, 40.0, 20.0)
    state = RadialState(0.0, n0, solve_c_radial(grid, n0))
    limiter = FluxLimiter(1.0, 0.8)
    m0 = grid.mass(n0)
    for _ in range(1000):
        state = step_radial(grid, state, limiter, 1e-5)
    drifts["radial"] = abs(grid.mass(state.n) - m0) / m0
    passed = drifts["2d"] <= 1e-8 and drifts["3d"] <= 1e-8 and drifts["radial"] <= 1e-12
    detail = ", ".join(f"{k} {v:.1e}" for k, v in drifts.items())
    acceptance_report(3, "mass drift over 1000 steps", passed, detail)
    assert passed


@pytest.mark.slow
def test_criterion_4_convergence_orders(acceptance_report):
    grid = Grid.cube(2, 16)
    linear = min(temporal_order(grid, *smooth_problem(grid)))
    x, y = grid.coordinates
    n0 = ScalarField(grid, 1.0 + 0.3 * np.cos(x) * np.sin(y))
    c0 = ScalarField(grid, 1.0 + 0.2 * np.sin(x))
    from kslab.linear import periodic_potential

    params = KSSParams(FluxLimiter(1.0, 0.8), periodic_potential(grid, 1.0), n0, c0, VectorField.zeros(grid))
    coupled = min(_kss_order(grid, params))
    radial = min(radial_spatial_order())
    passed = min(linear, coupled, radial) >= 1.9
    detail = f"linear {linear:.2f}, coupled {coupled:.2f}, radial space {radial:.2f}"
    acceptance_report(4, "observed orders of accuracy", passed, detail)
    assert passed


@pytest.mark.slow
def test_criterion_5_lp_inequality(acceptance_report):
    cfg = shipped_config("simulate")
    num = cfg.numerics
    report = run_simulation(
        cli.kss_params(cfg), num.T, num.dt, cfg.estimate_spec(), num.output_every, num.cfl, num.adaptive
    )
    res, rhs = report.series.lp_residual, report.series.lp_rhs
    ok = np.isfinite(res)
    good = res[ok] >= -0.05 * np.abs(rhs[ok])
    frac = float(np.mean(good))
    passed = report.completed and ok.sum() > 0 and frac >= 0.99
    acceptance_report(5, "L^p testing inequality along a run", passed, f"{good.sum()}/{ok.sum()} samples within 5%")
    assert passed


@pytest.mark.slow
def test_criterion_6_linear_scaling(acceptance_report, tmp_path):
    out = tmp_path / "probe"
    code = cli.main(["probe-linear", "--config", str(shipped_config_path("probe")), "--out", str(out)])
    fits = json.loads((out / "manifest.json").read_text())["fits"]
    _, cols, rows = io.read_csv(out / "probe_series.csv")
    amp, mp = cols.index("amplitude"), cols.index("M_p")
    sup = {}
    for r in rows:
        a = float(r[amp])
        sup[a] = max(sup.get(a, 0.0), float(r[mp]))
    decades = math.log10(max(sup.values()) / min(sup.values()))
    wanted = ("gradient", "fluid_power", "signal_lq", "fluid_lr")
    passed = code == cli.EXIT_OK and decades >= 2.0 and all(fits[k]["passed"] for k in wanted)
    detail = f"{decades:.2f} decades; " + ", ".join(
        f"{k} {fits[k]['slope']:.3f}<={fits[k]['ceiling'] + 0.1:.3f}" for k in wanted
    )
    acceptance_report(6, "linear response scaling exponents", passed, detail)
    assert passed


@pytest.mark.slow
def test_criterion_7_alpha_dichotomy(acceptance_report, tmp_path):
    out = tmp_path / "sweep"
    cli.main(["sweep-alpha", "--config", str(shipped_config_path("dichotomy")), "--out", str(out)])
    _, cols, rows = io.read_csv(out / "dichotomy.csv")
    table = {float(r[0]): dict(zip(cols, r)) for r in rows}
    low, high = table[0.3], table[0.8]
    low_ok = low["verdict"] == "BlowupSuspected" and float(low["flag_time"]) < 5.0
    growth = float(high["max_n_inf"]) / float(high["initial_n_inf"])
    high_ok = high["verdict"] == "NoBlowup" and float(high["final_time"]) >= 10.0 - 1e-9 and growth <= 10.0
    passed = low_ok and high_ok
    detail = f"alpha 0.3 flagged at t={float(low['flag_time']):.3g}; alpha 0.8 reached t={float(high['final_time']):.3g}, growth {growth:.2f}"
    acceptance_report(7, "radial alpha dichotomy", passed, detail)
    assert passed


def test_criterion_8_constant_potential_decouples_fluid(acceptance_report):
    grid = Grid.cube(2, 32)
    runs = [
        run_simulation(KSSParams.blob(grid, alpha=0.8, g=0.0, mass=10.0, fluid=fluid), 0.5, 1e-3, output_every=5)
        for fluid in (True, False)
    ]
    u_max = float(np.max(runs[0].series.u_inf))
    diff = float(np.max(np.abs(runs[0].series.n_inf - runs[1].series.n_inf)))
    passed = u_max <= 1e-12 and diff <= 1e-10
    acceptance_report(8, "constant potential leaves fluid at rest", passed, f"sup|u| {u_max:.1e}, n_inf diff {diff:.1e}")
    assert passed


def test_criterion_9_verify_subcommand(acceptance_report, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "kslab.cli", "verify", "--out", str(tmp_path / "verify")], capture_output=True, text=True
    )
    passed = proc.returncode == 0
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    acceptance_report(9, "verify subcommand exits 0", passed, f"exit {proc.returncode}: {last}")
    assert passed
