"""Commuting first integrals for geodesically equivalent metric pairs.

Given two Riemannian metrics on a coordinate chart that share all
unparametrised geodesics, the quotient construction turns the pair into a
full family of conserved quantities in involution for the geodesic flow.
This package evaluates that family, the companion polynomial factory built
from the trajectorial rescaling map, and the numerical checks (conservation,
involution, independence, coincidence of geodesics) on symbolic metric input.
"""

from .dsl import (
    DomainError,
    DslError,
    DslSyntaxError,
    Expression,
    UnknownIdentifierError,
    parse,
)
from .geometry import (
    Chart,
    ChartDomainError,
    EnergyDriftError,
    GeodesicOptions,
    IntegrationError,
    MetricField,
    PhasePoint,
    Trajectory,
    arc_length,
    arclength_reparam,
    christoffel,
    curve_distance,
    geodesic_coincidence,
    integrate_geodesic,
    integrate_geodesics_batch,
    symmetric_curve_distance,
)
from .matops import NotPositiveDefiniteError
from .hamilton import (
    PhaseFunction,
    conservation_drift,
    hamiltonian,
    legendre,
    legendre_inverse,
    poisson_bracket,
)
from .integrals import (
    CharCoeffs,
    EigenProfile,
    MetricPair,
    char_coeffs,
    eigen_profile,
    g_operator,
    independence_rank,
    integral_Ik,
    integral_family,
    integral_phase_function,
    integrals_at,
    involution_matrix,
    painleve_I0,
    s_matrix,
    transfer_killing,
)
from .factory import (
    FactoryIntegrals,
    PolyCoeffs,
    a_scalar,
    coeffs_from_closed_form,
    delta_poly,
    factory_integrals,
    horner_divide,
    pfaffian,
)
from .levicivita import (
    LCPair,
    LCSpec,
    build_pair,
    elementary_symmetric,
    lcspec_from_json,
    phi_from_rho,
)
from .catalog import (
    EllipsoidSpec,
    ambient_pullbacks,
    battery,
    constraint_residual,
    demo_pair,
    ellipsoid_pair,
    elliptic_to_cartesian,
    euclidean_pair,
    falsification_pair,
    resolve_pair,
    sphere_pair,
)

__version__ = "0.1.0"

__all__ = [
    "CharCoeffs",
    "Chart",
    "ChartDomainError",
    "DomainError",
    "DslError",
    "DslSyntaxError",
    "EigenProfile",
    "EllipsoidSpec",
    "EnergyDriftError",
    "Expression",
    "FactoryIntegrals",
    "GeodesicOptions",
    "IntegrationError",
    "LCPair",
    "LCSpec",
    "MetricField",
    "MetricPair",
    "NotPositiveDefiniteError",
    "PhaseFunction",
    "PhasePoint",
    "PolyCoeffs",
    "Trajectory",
    "UnknownIdentifierError",
    "a_scalar",
    "ambient_pullbacks",
    "arc_length",
    "arclength_reparam",
    "battery",
    "build_pair",
    "char_coeffs",
    "christoffel",
    "coeffs_from_closed_form",
    "conservation_drift",
    "constraint_residual",
    "curve_distance",
    "delta_poly",
    "demo_pair",
    "eigen_profile",
    "elementary_symmetric",
    "ellipsoid_pair",
    "elliptic_to_cartesian",
    "euclidean_pair",
    "factory_integrals",
    "falsification_pair",
    "g_operator",
    "geodesic_coincidence",
    "hamiltonian",
    "horner_divide",
    "independence_rank",
    "integral_Ik",
    "integral_family",
    "integral_phase_function",
    "integrals_at",
    "integrate_geodesic",
    "integrate_geodesics_batch",
    "involution_matrix",
    "lcspec_from_json",
    "legendre",
    "legendre_inverse",
    "painleve_I0",
    "parse",
    "pfaffian",
    "phi_from_rho",
    "poisson_bracket",
    "resolve_pair",
    "s_matrix",
    "sphere_pair",
    "symmetric_curve_distance",
    "transfer_killing",
]
