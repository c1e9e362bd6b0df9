import itertools
import math

import numpy as np
import pytest

from kslab.errors import ContractViolation, ParameterError, StructuralError
from kslab.spectral import (
    Grid,
    NormSpec,
    OperatorKind,
    ScalarField,
    SpectralOperator,
    VectorField,
    apply_operator,
    divergence,
    gradient,
    is_solenoidal,
    norm,
    project_solenoidal,
)


def full_wavevectors(grid):
    """Wavevector of every entry of a full (complex) FFT, Nyquist kept signed."""
    ks = [np.fft.fftfreq(p, 1.0 / p) * 2 * math.pi / L for p, L in zip(grid.points, grid.length)]
    return np.stack(np.meshgrid(*ks, indexing="ij"))


def oracle_projection(grid, w):
    """Mode-by-mode I - k k^T/|k|^2 on the full FFT, Nyquist derivative entries zeroed."""
    w_hat = np.fft.fftn(w, axes=grid.axes)
    k = full_wavevectors(grid)
    for axis, p in enumerate(grid.points):
        k[axis][np.isclose(np.abs(k[axis]), math.pi * p / grid.length[axis])] = 0.0
    out = np.zeros_like(w_hat)
    for idx in itertools.product(*(range(p) for p in grid.points)):
        if not any(idx):
            continue
        kv = k[(slice(None),) + idx]
        wv = w_hat[(slice(None),) + idx]
        k2 = kv @ kv
        proj = np.eye(grid.dim) - (np.outer(kv, kv) / k2 if k2 > 0 else 0.0)
        out[(slice(None),) + idx] = proj @ wv
    return np.fft.ifftn(out, axes=grid.axes).real


def oracle_multiplier(grid, values, symbol):
    hat = np.fft.fftn(values, axes=grid.axes)
    k = full_wavevectors(grid)
    out = np.zeros_like(hat)
    for idx in itertools.product(*(range(p) for p in grid.points)):
        k2 = float(np.sum(k[(slice(None),) + idx] ** 2))
        out[(Ellipsis,) + idx] = symbol(k2) * hat[(Ellipsis,) + idx]
    return np.fft.ifftn(out, axes=grid.axes).real


def rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def test_grid_validation():
    with pytest.raises(ParameterError):
        Grid.cube(4, 8)
    with pytest.raises(ParameterError):
        Grid.cube(3, 7)
    with pytest.raises(ParameterError):
        Grid.cube(2, 2)
    with pytest.raises(ParameterError):
        Grid(2, 8, -1.0)
    g = Grid(2, (8, 16), (1.0, 2.0))
    assert g.spacing == (0.125, 0.125)
    assert g.spectral_shape == (8, 9)
    assert g.volume == pytest.approx(2.0)


def test_field_shape_and_finiteness(grid3):
    with pytest.raises(StructuralError):
        ScalarField(grid3, np.zeros((8, 8)))
    with pytest.raises(StructuralError):
        VectorField(grid3, np.zeros((2, 8, 8, 8)))
    bad = np.zeros(grid3.shape)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ContractViolation):
        ScalarField(grid3, bad)


@pytest.mark.parametrize("dim,n", [(2, 16), (3, 8), (3, 32), (3, 64), (2, 64)])
def test_fft_round_trip(dim, n, rng):
    grid = Grid.cube(dim, n)
    x = rng.standard_normal(grid.shape)
    assert rel(grid.inverse(grid.forward(x)), x) <= 1e-12


def test_projection_matches_dense_oracle(grid3, rng):
    w = rng.standard_normal((3,) + grid3.shape)
    ours = project_solenoidal(VectorField(grid3, w)).components
    assert rel(ours, oracle_projection(grid3, w)) <= 1e-10


def test_projection_properties(grid3, rng):
    w = VectorField(grid3, rng.standard_normal((3,) + grid3.shape))
    pw = project_solenoidal(w)
    assert grid3.relative_divergence(pw.components) <= 1e-10
    assert rel(project_solenoidal(pw).components, pw.components) <= 1e-12
    assert np.allclose(pw.components.mean(axis=(1, 2, 3)), 0.0, atol=1e-14)
    assert is_solenoidal(pw)
    assert not is_solenoidal(w)


def test_projection_removes_gradients(grid3, rng):
    phi = ScalarField(grid3, rng.standard_normal(grid3.shape))
    pg = project_solenoidal(gradient(phi))
    assert np.max(np.abs(pg.components)) <= 1e-12 * np.max(np.abs(gradient(phi).components))


def test_projection_keeps_solenoidal_field(grid3):
    x, y, z = grid3.coordinates
    w = VectorField.from_components(grid3, [np.sin(y), np.cos(z), np.sin(x)])
    assert rel(project_solenoidal(w).components, w.components) <= 1e-13


@pytest.mark.parametrize(
    "op,symbol",
    [
        (SpectralOperator.heat_power(0.5), lambda k2: (k2 + 1.0) ** 0.5),
        (SpectralOperator.heat_semigroup(0.01), lambda k2: math.exp(-0.01 * (k2 + 1.0))),
        (SpectralOperator.heat_semigroup(0.1), lambda k2: math.exp(-0.1 * (k2 + 1.0))),
        (SpectralOperator.inverse_helmholtz_shift(), lambda k2: 1.0 / (k2 + 1.0)),
    ],
)
def test_scalar_operators_match_oracle(op, symbol, grid3, rng):
    f = rng.standard_normal(grid3.shape)
    ours = apply_operator(ScalarField(grid3, f), op).values
    assert rel(ours, oracle_multiplier(grid3, f, symbol)) <= 1e-10


@pytest.mark.parametrize(
    "op,symbol",
    [
        (SpectralOperator.stokes_power(0.75), lambda k2: k2**0.75),
        (SpectralOperator.stokes_semigroup(0.01), lambda k2: math.exp(-0.01 * k2)),
        (SpectralOperator.stokes_semigroup(0.1), lambda k2: math.exp(-0.1 * k2)),
    ],
)
def test_stokes_operators_match_oracle(op, symbol, grid3, rng):
    w = project_solenoidal(VectorField(grid3, rng.standard_normal((3,) + grid3.shape)))
    ours = apply_operator(w, op).components
    assert rel(ours, oracle_multiplier(grid3, w.components, symbol)) <= 1e-10


def test_stokes_operator_contracts(grid3, rng):
    with pytest.raises(ContractViolation):
        apply_operator(ScalarField(grid3, rng.standard_normal(grid3.shape)), SpectralOperator.stokes_power(0.5))
    with pytest.raises(ContractViolation):
        apply_operator(VectorField(grid3, rng.standard_normal((3,) + grid3.shape)), SpectralOperator.stokes_semigroup(1.0))


def test_operator_parameter_validation():
    with pytest.raises(ParameterError):
        SpectralOperator.heat_semigroup(-1.0)
    with pytest.raises(ParameterError):
        SpectralOperator.stokes_power(-0.5)
    assert SpectralOperator.heat_power(0.3).kind is OperatorKind.HEAT_POWER


def test_zero_exponent_is_identity(grid3, rng):
    f = ScalarField(grid3, rng.standard_normal(grid3.shape))
    assert rel(apply_operator(f, SpectralOperator.heat_power(0.0)).values, f.values) <= 1e-14
    assert rel(apply_operator(f, SpectralOperator.heat_semigroup(0.0)).values, f.values) <= 1e-14


@pytest.mark.parametrize("a,b", list(itertools.product([0.25, 0.5, 1.0], repeat=2)))
def test_operator_composition(a, b, grid3, rng):
    f = ScalarField(grid3, rng.standard_normal(grid3.shape))
    w = project_solenoidal(VectorField(grid3, rng.standard_normal((3,) + grid3.shape)))
    for make, field in (
        (SpectralOperator.heat_power, f),
        (SpectralOperator.heat_semigroup, f),
        (SpectralOperator.stokes_power, w),
        (SpectralOperator.stokes_semigroup, w),
    ):
        two = apply_operator(apply_operator(field, make(a)), make(b))
        one = apply_operator(field, make(a + b))
        x = two.values if isinstance(two, ScalarField) else two.components
        y = one.values if isinstance(one, ScalarField) else one.components
        assert rel(x, y) <= 1e-11


def test_heat_semigroup_of_constant(grid3):
    f = ScalarField(grid3, np.full(grid3.shape, 3.0))
    for t in (0.01, 0.1, 1.0):
        out = apply_operator(f, SpectralOperator.heat_semigroup(t)).values
        assert np.max(np.abs(out - 3.0 * math.exp(-t))) <= 1e-12


def test_power_of_semigroup_decay_rate():
    """sup_k |k|^{2θ} e^{-t|k|^2} ~ t^{-θ}: the fitted log-log slope is within 10%."""
    grid = Grid.cube(3, 64)
    theta = 0.75
    k2 = grid.k2[grid.k2 > 0]
    ts = np.geomspace(0.01, 0.1, 6)
    sups = [np.max(k2**theta * np.exp(-t * k2)) for t in ts]
    slope = np.polyfit(np.log(ts), np.log(sups), 1)[0]
    assert abs(slope + theta) <= 0.1 * theta


def test_gradient_is_spectrally_exact(grid3):
    x, y, z = grid3.coordinates
    g = gradient(ScalarField(grid3, np.sin(x) * np.cos(2 * y))).components
    assert np.max(np.abs(g[0] - np.cos(x) * np.cos(2 * y))) <= 1e-13
    assert np.max(np.abs(g[1] + 2 * np.sin(x) * np.sin(2 * y))) <= 1e-13
    assert np.max(np.abs(g[2])) <= 1e-13


def test_gradient_beats_fourth_order_differences():
    errors = {}
    for n in (16, 32):
        grid = Grid.cube(2, n)
        x, y = grid.coordinates
        u = np.exp(np.sin(x)) * np.cos(y)
        exact = np.cos(x) * np.exp(np.sin(x)) * np.cos(y)
        h = grid.spacing[0]
        fd = (-np.roll(u, -2, 0) + 8 * np.roll(u, -1, 0) - 8 * np.roll(u, 1, 0) + np.roll(u, 2, 0)) / (12 * h)
        spec = gradient(ScalarField(grid, u)).components[0]
        errors[n] = (np.max(np.abs(spec - exact)), np.max(np.abs(fd - exact)))
    assert math.log2(errors[16][1] / errors[32][1]) == pytest.approx(4.0, abs=0.3)
    for spec_err, fd_err in errors.values():
        assert spec_err < fd_err
    assert errors[32][0] <= 1e-10


def test_divergence_of_gradient_is_laplacian(grid3):
    x, y, z = grid3.coordinates
    phi = ScalarField(grid3, np.cos(x) + np.sin(2 * z))
    lap = divergence(gradient(phi)).values
    assert np.max(np.abs(lap + np.cos(x) + 4 * np.sin(2 * z))) <= 1e-12


def test_dealias_mask_two_thirds():
    grid = Grid.cube(2, 12)
    kept = np.abs(grid.mode_index[0][grid.dealias_mask])
    assert kept.max() == 3
    assert grid.dealias_mask[0, 0]


class TestNorms:
    def test_constant(self, grid3):
        one = ScalarField(grid3, np.ones(grid3.shape))
        vol = grid3.volume
        assert norm(one, 2.0) == pytest.approx(math.sqrt(vol), rel=1e-14)
        assert norm(one, 1.0) == pytest.approx(vol, rel=1e-14)
        assert norm(one, 6.0) == pytest.approx(vol ** (1 / 6), rel=1e-14)
        assert norm(one, "inf") == 1.0

    def test_sine(self):
        grid = Grid.cube(3, 16)
        s = ScalarField(grid, np.sin(grid.coordinates[0]))
        assert norm(s, 2.0) == pytest.approx(math.sqrt(grid.volume / 2), rel=1e-13)
        assert norm(s, NormSpec("W1inf")) == pytest.approx(1.0, rel=1e-13)

    def test_w1inf_vector(self, grid3):
        x = grid3.coordinates[0]
        w = VectorField.from_components(grid3, [np.zeros_like(x), 0.5 * np.sin(3 * x), np.zeros_like(x)])
        assert norm(w, "W1inf") == pytest.approx(1.5, rel=1e-13)

    def test_large_exponent_does_not_overflow(self, grid3):
        f = ScalarField(grid3, np.full(grid3.shape, 1e3))
        assert math.isfinite(norm(f, 200.0))

    def test_invalid_spec(self):
        with pytest.raises(ParameterError):
            NormSpec(0.5)
        with pytest.raises(ParameterError):
            NormSpec("H1")
