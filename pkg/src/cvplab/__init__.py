"""cvplab: a numerical laboratory for causal variational principles on
finite discrete measures of self-adjoint matrices.

The package computes the causal Lagrangian and its time-integrated static
form, total-mass surface layer integrals, conservation laws for jets,
linearized-gravity solves, and the explicit Schwarzschild-correspondence
integrals, all at desk scale.
"""

__version__ = "0.1.0"

from .kernel import (
    KernelSpec,
    OperatorPoint,
    SpectralData,
    causal_lagrangian,
    eigen_product,
    kappa_lagrangian,
    spectral_weight_sq,
    validate_point,
)
from .static import (
    QuadratureSpec,
    StaticGroup,
    StaticKernel,
    orbit_point,
    static_boundedness,
    static_kappa_lagrangian,
    static_lagrangian,
)
from .measure import (
    CorrelationData,
    DiscreteMeasure,
    Exhaustion,
    StaticSystem,
    correlations,
    ell,
    ell_kappa,
    el_residual,
    frak_t,
    load_system,
    pushforward,
    save_system,
)

__all__ = [
    "KernelSpec",
    "OperatorPoint",
    "SpectralData",
    "causal_lagrangian",
    "eigen_product",
    "kappa_lagrangian",
    "spectral_weight_sq",
    "validate_point",
    "QuadratureSpec",
    "StaticGroup",
    "StaticKernel",
    "orbit_point",
    "static_boundedness",
    "static_kappa_lagrangian",
    "static_lagrangian",
    "CorrelationData",
    "DiscreteMeasure",
    "Exhaustion",
    "StaticSystem",
    "correlations",
    "ell",
    "ell_kappa",
    "el_residual",
    "frak_t",
    "load_system",
    "pushforward",
    "save_system",
]
