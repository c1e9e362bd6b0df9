"""Numerical laboratory for the flux-limited Keller-Segel-Stokes system."""

from .blowup import BlowupCriterion, BlowupVerdict, detect_blowup
from .errors import (
    CFLViolation,
    ConfigError,
    ContractViolation,
    KSLabError,
    NumericalAbort,
    ParameterError,
    StructuralError,
)
from .kernels import BACKEND
from .spectral import (
    Grid,
    NormSpec,
    ScalarField,
    SpectralOperator,
    VectorField,
    apply_operator,
    gradient,
    norm,
    project_solenoidal,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BlowupCriterion",
    "BlowupVerdict",
    "CFLViolation",
    "ConfigError",
    "ContractViolation",
    "Grid",
    "KSLabError",
    "NormSpec",
    "NumericalAbort",
    "ParameterError",
    "ScalarField",
    "SpectralOperator",
    "StructuralError",
    "VectorField",
    "apply_operator",
    "detect_blowup",
    "gradient",
    "norm",
    "project_solenoidal",
]
