"""Fields on a periodic box and the Fourier-multiplier operators acting on them.

All transforms are real-to-complex (``numpy.fft.rfftn``) over the trailing
``dim`` axes, so a vector field is stored as an array of shape
``(dim, *points)`` and its spectrum as ``(dim, *spectral_shape)``.

Two wavevectors are kept per grid. ``wavevector`` holds the true
frequencies and feeds every Laplacian-type multiplier (``|k|^2``).
``derivative_wavevector`` has the Nyquist entry of each axis set to zero;
it is used for first derivatives, divergence and the Leray projection so
that all three agree exactly on the discrete level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import ContractViolation, ParameterError, StructuralError

TWO_PI = 2.0 * math.pi

# relative spectral divergence above which a field is not treated as solenoidal
SOLENOIDAL_TOL = 1e-8


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``prod_i [0, length_i)``."""

    dim: int
    points: tuple
    length: tuple

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ParameterError(f"dim must be 2 or 3, got {self.dim}")
        points = tuple(int(p) for p in np.broadcast_to(self.points, (self.dim,)))
        length = tuple(float(x) for x in np.broadcast_to(self.length, (self.dim,)))
        for p in points:
            if p < 4 or p % 2:
                raise ParameterError(f"points per axis must be even and >= 4, got {p}")
        for x in length:
            if not x > 0 or not math.isfinite(x):
                raise ParameterError(f"box length must be positive, got {x}")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "length", length)

    @classmethod
    def cube(cls, dim, n, length=TWO_PI):
        return cls(dim, (n,) * dim, (length,) * dim)

    @property
    def shape(self):
        return self.points

    @cached_property
    def spacing(self):
        return tuple(x / p for x, p in zip(self.length, self.points))

    @cached_property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @cached_property
    def volume(self):
        return float(np.prod(self.length))

    @cached_property
    def spectral_shape(self):
        return self.points[:-1] + (self.points[-1] // 2 + 1,)

    @cached_property
    def axes(self):
        return tuple(range(-self.dim, 0))

    @cached_property
    def coordinates(self):
        """Tuple of ``dim`` arrays with the physical coordinates (ij indexing)."""
        ticks = [np.arange(p) * h for p, h in zip(self.points, self.spacing)]
        return tuple(np.meshgrid(*ticks, indexing="ij"))

    def _mode_indices(self):
        idx = []
        for axis, p in enumerate(self.points):
            if axis == self.dim - 1:
                m = np.arange(p // 2 + 1)
            else:
                m = np.fft.fftfreq(p, 1.0 / p)
            idx.append(m)
        return idx

    @cached_property
    def mode_index(self):
        """Integer mode numbers per axis, broadcast to ``spectral_shape``."""
        idx = self._mode_indices()
        return np.stack(np.meshgrid(*idx, indexing="ij"))

    @cached_property
    def wavevector(self):
        scale = np.array([TWO_PI / x for x in self.length]).reshape((self.dim,) + (1,) * self.dim)
        return self.mode_index * scale

    @cached_property
    def derivative_wavevector(self):
        k = self.wavevector.copy()
        for axis, p in enumerate(self.points):
            nyquist = np.abs(self.mode_index[axis]) == p // 2
            k[axis][nyquist] = 0.0
        return k

    @cached_property
    def k2(self):
        return np.sum(self.wavevector**2, axis=0)

    @cached_property
    def dealias_mask(self):
        mask = np.ones(self.spectral_shape, dtype=bool)
        for axis, p in enumerate(self.points):
            mask &= np.abs(self.mode_index[axis]) < p / 3.0
        return mask

    @cached_property
    def _projector_parts(self):
        kd = self.derivative_wavevector
        kd2 = np.sum(kd**2, axis=0)
        inv = np.zeros_like(kd2)
        np.divide(1.0, kd2, out=inv, where=kd2 > 0)
        return kd, inv

    # transforms -----------------------------------------------------------

    def forward(self, values):
        return np.fft.rfftn(values, axes=self.axes)

    def inverse(self, spectrum):
        return np.fft.irfftn(spectrum, s=self.points, axes=self.axes)

    # array-level spectral calculus ----------------------------------------

    def grad_hat(self, scalar_hat):
        return 1j * self.derivative_wavevector * scalar_hat

    def div_hat(self, vector_hat):
        return 1j * np.sum(self.derivative_wavevector * vector_hat, axis=0)

    def project_hat(self, vector_hat):
        """Leray projection of a spectral vector field; the mean mode is removed."""
        kd, inv = self._projector_parts
        kdotw = np.sum(kd * vector_hat, axis=0)
        out = vector_hat - kd * (kdotw * inv)
        out[(slice(None),) + (0,) * self.dim] = 0.0
        return out

    def dealias(self, spectrum):
        return spectrum * self.dealias_mask

    def gradient_array(self, values):
        return self.inverse(self.grad_hat(self.forward(values)))

    def relative_divergence(self, vector_values):
        """max|div w| / (max|k| * max|w|) computed spectrally; 0 for a zero field."""
        w_hat = self.forward(vector_values)
        div = self.inverse(self.div_hat(w_hat))
        scale = float(np.max(np.abs(vector_values))) * math.sqrt(float(np.max(self.k2)))
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(div))) / scale

    def __repr__(self):
        return f"Grid(dim={self.dim}, points={self.points}, length={self.length})"


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise ContractViolation(f"{what} contains non-finite entries")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise StructuralError(f"scalar shape {values.shape} does not match grid {self.grid.shape}")
        _check_finite(values, "scalar field")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid, func):
        return cls(grid, func(*grid.coordinates))

    def integral(self):
        return float(np.sum(self.values) * self.grid.cell_volume)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    components: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=np.float64)
        if comps.shape != (self.grid.dim,) + self.grid.shape:
            raise StructuralError(
                f"vector shape {comps.shape} does not match grid {(self.grid.dim,) + self.grid.shape}"
            )
        _check_finite(comps, "vector field")
        object.__setattr__(self, "components", comps)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.dim,) + grid.shape))

    @classmethod
    def from_components(cls, grid, components):
        comps = list(components)
        if len(comps) != grid.dim:
            raise StructuralError(f"expected {grid.dim} components, got {len(comps)}")
        arrays = [np.asarray(c, dtype=np.float64) for c in comps]
        for a in arrays:
            if a.shape != grid.shape:
                raise StructuralError(f"component shape {a.shape} does not match grid {grid.shape}")
        return cls(grid, np.stack(arrays))

    def magnitude(self):
        return np.sqrt(np.sum(self.components**2, axis=0))


# operators ------------------------------------------------------------------


class OperatorKind(str, Enum):
    HEAT_POWER = "HeatPower"
    HEAT_SEMIGROUP = "HeatSemigroup"
    STOKES_POWER = "StokesPower"
    STOKES_SEMIGROUP = "StokesSemigroup"
    INVERSE_HELMHOLTZ_SHIFT = "InverseHelmholtzShift"


@dataclass(frozen=True)
class SpectralOperator:
    """Diagonal Fourier multiplier built from ``B = -Δ + 1`` or the Stokes operator ``A``.

    ``HeatPower(β)`` is ``B^β``, ``HeatSemigroup(t)`` is ``exp(-tB)``,
    ``StokesPower(θ)`` is ``A^θ`` and ``StokesSemigroup(t)`` is ``exp(-tA)``;
    on the torus ``A`` acts as ``|k|^2`` on zero-mean solenoidal modes.
    """

    kind: OperatorKind
    parameter: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", OperatorKind(self.kind))
        p = float(self.parameter)
        if not (p >= 0.0 and math.isfinite(p)):
            raise ParameterError(f"operator parameter must be a nonnegative real, got {self.parameter}")
        object.__setattr__(self, "parameter", p)

    @classmethod
    def heat_power(cls, beta):
        return cls(OperatorKind.HEAT_POWER, beta)

    @classmethod
    def heat_semigroup(cls, t):
        return cls(OperatorKind.HEAT_SEMIGROUP, t)

    @classmethod
    def stokes_power(cls, theta):
        return cls(OperatorKind.STOKES_POWER, theta)

    @classmethod
    def stokes_semigroup(cls, t):
        return cls(OperatorKind.STOKES_SEMIGROUP, t)

    @classmethod
    def inverse_helmholtz_shift(cls):
        return cls(OperatorKind.INVERSE_HELMHOLTZ_SHIFT, 0.0)

    @property
    def is_stokes(self):
        return self.kind in (OperatorKind.STOKES_POWER, OperatorKind.STOKES_SEMIGROUP)

    def multiplier(self, grid):
        k2 = grid.k2
        a = self.parameter
        if self.kind is OperatorKind.HEAT_POWER:
            return (k2 + 1.0) ** a
        if self.kind is OperatorKind.HEAT_SEMIGROUP:
            return np.exp(-a * (k2 + 1.0))
        if self.kind is OperatorKind.INVERSE_HELMHOLTZ_SHIFT:
            return 1.0 / (k2 + 1.0)
        if self.kind is OperatorKind.STOKES_POWER:
            m = np.zeros_like(k2)
            # mean mode is the kernel of A; it is zero on admissible input anyway
            np.power(k2, a, out=m, where=k2 > 0)
            return m
        return np.exp(-a * k2)


def project_solenoidal(w):
    """Helmholtz-Leray projection onto zero-mean divergence-free fields."""
    if not isinstance(w, VectorField):
        raise StructuralError("project_solenoidal expects a VectorField")
    grid = w.grid
    out = grid.inverse(grid.project_hat(grid.forward(w.components)))
    return VectorField(grid, out)


def is_solenoidal(w, tol=SOLENOIDAL_TOL):
    grid = w.grid
    scale = float(np.max(np.abs(w.components)))
    if scale == 0.0:
        return True
    means = np.abs(np.mean(w.components, axis=tuple(range(1, grid.dim + 1))))
    return grid.relative_divergence(w.components) <= tol and float(np.max(means)) <= tol * scale


def apply_operator(phi, op):
    """Apply a Fourier multiplier to a scalar or vector field.

    Stokes kinds require zero-mean solenoidal vector input and raise
    ``ContractViolation`` otherwise.
    """
    grid = phi.grid
    mult = op.multiplier(grid)
    if isinstance(phi, ScalarField):
        if op.is_stokes:
            raise ContractViolation(f"{op.kind.value} acts on solenoidal vector fields, not scalars")
        return ScalarField(grid, grid.inverse(mult * grid.forward(phi.values)))
    if isinstance(phi, VectorField):
        if op.is_stokes and not is_solenoidal(phi):
            raise ContractViolation(
                f"{op.kind.value} requires a zero-mean solenoidal field; apply project_solenoidal first"
            )
        return VectorField(grid, grid.inverse(mult * grid.forward(phi.components)))
    raise StructuralError(f"cannot apply an operator to {type(phi).__name__}")


def gradient(phi):
    """Exact derivative of the trigonometric interpolant of ``phi``."""
    if not isinstance(phi, ScalarField):
        raise StructuralError("gradient expects a ScalarField")
    return VectorField(phi.grid, phi.grid.gradient_array(phi.values))


def divergence(w):
    grid = w.grid
    return ScalarField(grid, grid.inverse(grid.div_hat(grid.forward(w.components))))


# norms ------------------------------------------------------------------------

W1INF = "W1inf"


@dataclass(frozen=True)
class NormSpec:
    """Either a Lebesgue exponent in ``[1, inf]`` or the symbol ``"W1inf"``."""

    exponent: object

    def __post_init__(self):
        e = self.exponent
        if isinstance(e, str):
            if e.lower() in ("inf", "infinity"):
                object.__setattr__(self, "exponent", math.inf)
                return
            if e != W1INF:
                raise ParameterError(f"unknown norm symbol {e!r}")
            return
        e = float(e)
        if math.isnan(e) or e < 1.0:
            raise ParameterError(f"norm exponent must be >= 1, got {e}")
        object.__setattr__(self, "exponent", e)

    @property
    def is_w1inf(self):
        return self.exponent == W1INF


def lp_norm_array(values, p, cell_volume):
    """L^p norm of a pointwise magnitude array by the rectangle rule."""
    a = np.abs(values)
    if p == math.inf:
        return float(np.max(a))
    if p == 1.0:
        return float(np.sum(a) * cell_volume)
    if p == 2.0:
        return math.sqrt(float(np.sum(a * a)) * cell_volume)
    peak = float(np.max(a))
    if peak == 0.0:
        return 0.0
    # scaled to avoid overflow for large p
    return peak * float(np.sum((a / peak) ** p) * cell_volume) ** (1.0 / p)


def w1inf_array(grid, values):
    """max(sup|phi|, sup|grad phi|) for a scalar array or a vector array."""
    if values.ndim == grid.dim:
        g = grid.gradient_array(values)
        return max(float(np.max(np.abs(values))), float(np.max(np.sqrt(np.sum(g**2, axis=0)))))
    mag = np.sqrt(np.sum(values**2, axis=0))
    jac2 = np.zeros(grid.shape)
    for comp in values:
        jac2 += np.sum(grid.gradient_array(comp) ** 2, axis=0)
    return max(float(np.max(mag)), float(np.max(np.sqrt(jac2))))


def norm(phi, spec):
    """``‖phi‖`` in L^p, L^inf or W^{1,inf}; vectors use the Euclidean magnitude."""
    if not isinstance(spec, NormSpec):
        spec = NormSpec(spec)
    grid = phi.grid
    if isinstance(phi, ScalarField):
        values = phi.values
        mag = values
    elif isinstance(phi, VectorField):
        values = phi.components
        mag = phi.magnitude()
    else:
        raise StructuralError(f"cannot take the norm of {type(phi).__name__}")
    if spec.is_w1inf:
        return w1inf_array(grid, values)
    return lp_norm_array(mag, spec.exponent, grid.cell_volume)
