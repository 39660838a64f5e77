"""Stationary measures of random walks on the flag manifolds of SL2(R) and SL2(C).

The package assembles the Markov operator of a finitely supported measure in
a harmonic basis of the flag manifold (the circle P^1 or the sphere S^2),
solves for the stationary density, measures its Littlewood-Paley decay, and
cross-checks everything against Monte Carlo walks.
"""

from .group import Backend, GroupElement, cartan_project, iwasawa_decompose
from .harmonics import BASIS_ORDER_VERSION, FlagPoint, FunctionCoefficients
from .measures import MeasureFamilySpec, SupportMeasure, build_measure
from .transfer import (
    assemble_adjoint,
    assemble_markov,
    lp_spectrum,
    restricted_gap_estimate,
    stationary_density,
)
from .walk import WalkConfig, simulate_walk

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "GroupElement",
    "cartan_project",
    "iwasawa_decompose",
    "BASIS_ORDER_VERSION",
    "FlagPoint",
    "FunctionCoefficients",
    "MeasureFamilySpec",
    "SupportMeasure",
    "build_measure",
    "assemble_markov",
    "assemble_adjoint",
    "stationary_density",
    "lp_spectrum",
    "restricted_gap_estimate",
    "WalkConfig",
    "simulate_walk",
]
