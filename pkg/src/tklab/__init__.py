"""Plurisubharmonic functions on complex tori, Ricci curvature and the
convexity of torus-orbit volumes, in log coordinates ``w = x + iy``."""

from .funcspace import (
    Box,
    DomainError,
    InvariantPotential,
    LaurentPolynomial,
    PeriodicScalarField,
    QuadratureRule,
    ScalarField,
    catalog,
    direct_sum,
    field_catalog,
    make_builtin_potential,
    make_periodic_field,
    torus_quadrature,
)
from .kahler import NotKahlerError, classify_ricci, metric_at, ricci_form, ricci_general
from .orbitvol import (
    boundary_decay,
    consistency_theorem,
    find_critical_orbit,
    j_volume,
    j_volume_general,
    log_j_volume,
    moment_map,
    orbit_profile,
)
from .psh import (
    check_convexity,
    hadamard_max,
    is_psh,
    levi_form,
    monotone_in_radius,
    torus_average,
)
from .verify import verify_battery

__version__ = "0.1.0"
