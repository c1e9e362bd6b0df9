import os
import subprocess
import sys

import numpy as np
import pytest

from kslab import _kernels_py, kernels

try:
    from kslab import _kernels as compiled
except ImportError:
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def backend_of(env_value):
    env = dict(os.environ, KSLAB_PURE_PYTHON=env_value)
    proc = subprocess.run(
        [sys.executable, "-c", "import kslab; print(kslab.BACKEND)"], capture_output=True, text=True, env=env
    )
    return proc.stdout.strip()


def test_environment_forces_python_backend():
    assert backend_of("1") == "python"
    assert backend_of("0") == ("compiled" if compiled is not None else "python")


@pytest.mark.parametrize("impl", [_kernels_py, compiled], ids=["python", "compiled"])
class TestKernelContracts:
    def test_flux_matches_formula(self, impl, rng):
        if impl is None:
            pytest.skip("compiled extension not built")
        n = rng.random(100)
        g = rng.standard_normal((3, 100))
        u = rng.standard_normal((3, 100))
        flux, drift = impl.chemotactic_flux(n, g, u, 2.0, 0.6)
        xi = np.sum(g * g, axis=0)
        weight = 2.0 * (1 + xi) ** -0.3
        assert np.allclose(flux, n * (weight * g + u), rtol=1e-14, atol=1e-14)
        assert drift == pytest.approx(np.max(weight * np.sqrt(xi)), rel=1e-14)

    def test_upwind_first_order(self, impl):
        if impl is None:
            pytest.skip("compiled extension not built")
        n = np.array([1.0, 2.0, 4.0, 3.0])
        w = np.array([1.0, -1.0, 0.5])
        flux = impl.radial_face_flux(n, w, False)
        assert np.allclose(flux, [1.0, -4.0, 2.0])

    def test_minmod_limits_at_extrema(self, impl):
        if impl is None:
            pytest.skip("compiled extension not built")
        n = np.array([0.0, 1.0, 0.0, 1.0, 2.0, 3.0])
        w = np.ones(5)
        flux = impl.radial_face_flux(n, w, True)
        # slope is zero at the local extrema (cells 1, 2) and 1 inside the ramp (cell 3, 4)
        assert np.allclose(flux, [0.0, 1.0, 0.0, 1.5, 2.5])

    def test_thomas_against_dense(self, impl, rng):
        if impl is None:
            pytest.skip("compiled extension not built")
        m = 40
        lower, upper = rng.random(m - 1), rng.random(m - 1)
        diag = 3.0 + rng.random(m)
        rhs = rng.standard_normal(m)
        dense = np.diag(diag) + np.diag(lower, -1) + np.diag(upper, 1)
        assert np.allclose(impl.thomas(lower, diag, upper, rhs), np.linalg.solve(dense, rhs), rtol=1e-12, atol=1e-13)


@needs_compiled
def test_backends_agree_on_random_input(rng):
    for dim in (2, 3):
        n = rng.random(1000)
        g = rng.standard_normal((dim, 1000)) * 5
        for u in (None, rng.standard_normal((dim, 1000))):
            a, da = compiled.chemotactic_flux(n, g, u, 1.3, 0.45)
            b, db = _kernels_py.chemotactic_flux(n, g, u, 1.3, 0.45)
            assert np.max(np.abs(a - b)) <= 1e-13 * np.max(np.abs(b))
            assert da == pytest.approx(db, rel=1e-14)
    n = rng.random(300)
    w = rng.standard_normal(299)
    for muscl in (True, False):
        assert np.allclose(compiled.radial_face_flux(n, w, muscl), _kernels_py.radial_face_flux(n, w, muscl), atol=1e-15)


@needs_compiled
def test_full_simulation_identical_across_backends():
    code = (
        "from kslab.kss import KSSParams, run_simulation; from kslab.spectral import Grid;"
        "r = run_simulation(KSSParams.blob(Grid.cube(2, 16), mass=5.0), 0.05, 0.005, output_every=2);"
        "print(repr(float(r.series.n_inf[-1])), repr(float(r.series.mass[-1])))"
    )
    outs = []
    for flag in ("1", "0"):
        env = dict(os.environ, KSLAB_PURE_PYTHON=flag)
        outs.append(subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env).stdout.split())
    a, b = (np.array([float(x) for x in o]) for o in outs)
    assert np.allclose(a, b, rtol=1e-12)


def test_selected_backend_is_exposed():
    assert kernels.BACKEND in ("compiled", "python")
