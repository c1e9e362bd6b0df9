"""Invariant suite behind ``kslab verify``.

Each check returns a :class:`CheckResult`; a check that raises is reported
as failed with the exception text, so one broken module cannot hide the rest.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral import Grid, ScalarField, SpectralOperator, VectorField, apply_operator, norm, project_solenoidal

SEED = 20240601


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_vector(grid, rng):
    return VectorField(grid, rng.standard_normal((grid.dim,) + grid.shape))


def check_projection():
    rng = np.random.default_rng(SEED)
    worst_idem = worst_div = worst_grad = 0.0
    for dim, n in ((2, 16), (3, 8), (3, 16)):
        grid = Grid.cube(dim, n)
        w = _random_vector(grid, rng)
        pw = project_solenoidal(w)
        ppw = project_solenoidal(pw)
        scale = np.max(np.abs(pw.components))
        worst_idem = max(worst_idem, float(np.max(np.abs(ppw.components - pw.components)) / scale))
        worst_div = max(worst_div, grid.relative_divergence(pw.components))
        phi = ScalarField(grid, rng.standard_normal(grid.shape))
        g = VectorField(grid, grid.gradient_array(phi.values))
        pg = project_solenoidal(g)
        worst_grad = max(worst_grad, float(np.max(np.abs(pg.components)) / np.max(np.abs(g.components))))
    ok = worst_idem <= 1e-12 and worst_div <= 1e-10 and worst_grad <= 1e-12
    return ok, f"idempotence {worst_idem:.2e}, divergence {worst_div:.2e}, gradient residue {worst_grad:.2e}"


def check_operator_composition():
    rng = np.random.default_rng(SEED + 1)
    grid = Grid.cube(3, 8)
    f = ScalarField(grid, rng.standard_normal(grid.shape))
    w = project_solenoidal(_random_vector(grid, rng))
    worst = 0.0
    exps = (0.25, 0.5, 1.0)
    for a in exps:
        for b in exps:
            pairs = (
                (SpectralOperator.heat_power, f, lambda x: x.values),
                (SpectralOperator.stokes_power, w, lambda x: x.components),
                (SpectralOperator.heat_semigroup, f, lambda x: x.values),
                (SpectralOperator.stokes_semigroup, w, lambda x: x.components),
            )
            for make, field, arr in pairs:
                lhs = arr(apply_operator(apply_operator(field, make(a)), make(b)))
                rhs = arr(apply_operator(field, make(a + b)))
                worst = max(worst, float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300)))
    return worst <= 1e-11, f"max relative error {worst:.2e} over 36 compositions"


def check_norm_identities():
    grid = Grid.cube(3, 16)
    vol = grid.volume
    x = grid.coordinates[0]
    errs = []
    one = ScalarField(grid, np.ones(grid.shape))
    errs.append(abs(norm(one, 2.0) - math.sqrt(vol)) / math.sqrt(vol))
    errs.append(abs(norm(one, 4.0) - vol**0.25) / vol**0.25)
    s = ScalarField(grid, np.sin(x))
    errs.append(abs(norm(s, "inf") - np.max(np.abs(np.sin(x)))))
    errs.append(abs(norm(s, 2.0) - math.sqrt(vol / 2.0)) / math.sqrt(vol / 2.0))
    errs.append(abs(norm(ScalarField(grid, np.sin(2.0 * x)), "W1inf") - 2.0) / 2.0)
    worst = max(errs)
    return worst <= 1e-12, f"max relative error {worst:.2e}"


def check_exact_linear_decay():
    from .linear import step_linear

    grid = Grid.cube(3, 8)
    z = ScalarField(grid, np.full(grid.shape, 1.7))
    v = VectorField.zeros(grid)
    f = ScalarField(grid, np.zeros(grid.shape))
    phi = ScalarField(grid, np.zeros(grid.shape))
    t, dt = 0.0, 0.05
    for _ in range(20):
        z, v = step_linear(z, v, f, phi, dt)
        t += dt
    err = float(np.max(np.abs(z.values - 1.7 * math.exp(-t)))) / (1.7 * math.exp(-t))
    return err <= 1e-12, f"relative error {err:.2e} at t={t:g}"


def check_radial_c_solve():
    from .radial import RadialGrid, solve_c_radial

    rng = np.random.default_rng(SEED + 2)
    grid = RadialGrid(1.0, 64)
    worst_low = worst_high = 0.0
    min_c = math.inf
    for _ in range(20):
        n = rng.random(grid.cells) ** 3 * rng.uniform(0.1, 100.0)
        c = solve_c_radial(grid, n)
        min_c = min(min_c, float(np.min(c)))
        worst_low = max(worst_low, float(np.min(n) - np.min(c)))
        worst_high = max(worst_high, float(np.max(c) - np.max(n)))
    ok = min_c >= 0.0 and worst_low <= 1e-10 and worst_high <= 1e-10
    return ok, f"min c {min_c:.3g}, bound overshoot {max(worst_low, worst_high):.2e}"


def check_radial_mass():
    from .kss import FluxLimiter
    from .radial import RadialGrid, RadialState, initial_bump, solve_c_radial, step_radial

    grid = RadialGrid(1.0, 100)
    n = initial_bump(grid, 10.0, 20.0)
    state = RadialState(0.0, n, solve_c_radial(grid, n))
    m0 = grid.mass(n)
    limiter = FluxLimiter(1.0, 0.8)
    for _ in range(50):
        state = step_radial(grid, state, limiter, 1e-4)
    drift = abs(grid.mass(state.n) - m0) / m0
    return drift <= 1e-12 and float(np.min(state.n)) >= 0.0, f"relative drift {drift:.2e} over 50 steps"


def check_kss_mass():
    from .kss import KSSParams, initial_state, step_kss

    grid = Grid.cube(2, 32)
    params = KSSParams.blob(grid, alpha=0.8, mass=5.0)
    state = initial_state(params)
    m0 = state.mass()
    for _ in range(100):
        state = step_kss(state, params, 1e-3)
    drift = abs(state.mass() - m0) / m0
    return drift <= 1e-8, f"relative drift {drift:.2e} over 100 steps"


def check_config_round_trip():
    from .config import dump_config, parse_config

    texts = (
        "mode = simulate\n[params]\nalpha = 0.8\n",
        "[run]\nmode = radial\n[radial]\ncells = 64\nconcentration = 12.5\n[sweep]\nalphas = 0.3, 0.8\n",
        "[estimate]\nq = 2\nprobes = gradient, fluid_lr\n[grid]\ndim = 3\npoints = 16\n",
    )
    for text in texts:
        cfg = parse_config(text)
        canon = dump_config(cfg)
        if parse_config(canon) != cfg or dump_config(parse_config(canon)) != canon:
            return False, f"round trip changed the config parsed from {text!r}"
    return True, f"{len(texts)} configs reproduce exactly"


def check_determinism():
    from .cli import run
    from .config import parse_config

    cfg = parse_config(
        "mode = simulate\n[grid]\npoints = 16\n[numerics]\nT = 0.05\ndt = 0.005\noutput_every = 2\n[output]\nformats = csv\n"
    )
    outputs = []
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            out = Path(tmp) / f"run{k}"
            code = run(cfg, out)
            if code != 0:
                return False, f"simulate exited with {code}"
            outputs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
            outputs[-1]["config.ini"] = (out / "config.ini").read_bytes()
    same = outputs[0] == outputs[1]
    return same, f"{len(outputs[0])} files byte-identical" if same else "outputs differ between identical runs"


def check_blowup_flag():
    from .blowup import BlowupCriterion, detect_blowup_arrays

    t = np.linspace(0.0, 0.99, 100)
    hit = detect_blowup_arrays(t, 1.0 / (1.0 - t), BlowupCriterion(10.0))
    miss = detect_blowup_arrays(t, np.ones_like(t), BlowupCriterion(10.0))
    ok = hit.suspected and not miss.suspected
    return ok, f"1/(T-t) flagged at t={hit.time:.3g}; constant series {miss.kind}"


def check_kernel_backends():
    from . import _kernels_py, kernels

    rng = np.random.default_rng(SEED + 3)
    n = rng.random(500)
    grad = rng.standard_normal((3, 500))
    a, da = kernels.chemotactic_flux(n, grad, None, 1.0, 0.7)
    b, db = _kernels_py.chemotactic_flux(n, grad, None, 1.0, 0.7)
    err = float(np.max(np.abs(a - b)))
    return err <= 1e-13 and abs(da - db) <= 1e-13, f"{kernels.BACKEND} vs python flux difference {err:.1e}"


CHECKS = (
    ("projection idempotence", check_projection),
    ("operator composition", check_operator_composition),
    ("norm identities", check_norm_identities),
    ("exact linear decay", check_exact_linear_decay),
    ("radial c-solve positivity", check_radial_c_solve),
    ("radial mass conservation", check_radial_mass),
    ("periodic mass conservation", check_kss_mass),
    ("blow-up flag", check_blowup_flag),
    ("kernel backends agree", check_kernel_backends),
    ("config round-trip", check_config_round_trip),
    ("determinism", check_determinism),
)


def run_suite(checks=CHECKS):
    results = []
    for name, fn in checks:
        try:
            passed, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail))
    return results


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  result  detail", f"{'-' * width}  ------  ------"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'pass' if r.passed else 'FAIL':6}  {r.detail}")
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)
