"""Exact geometric primitives for the supported embedded manifolds."""
from .base import (
    Manifold,
    ManifoldPoint,
    TangentVector,
    ensure_same_manifold,
    wrap_angle,
)
from .curvature import CurvatureBundle, build_bundle
from .plane import AffinePlane
from .quadrature import (
    QuadratureGrid,
    gauss_legendre,
    monte_carlo_grid,
    quadrature_grid,
)
from .sphere import Sphere
from .torus import FlatTorus

__all__ = [
    "AffinePlane",
    "CurvatureBundle",
    "FlatTorus",
    "Manifold",
    "ManifoldPoint",
    "QuadratureGrid",
    "Sphere",
    "TangentVector",
    "build_bundle",
    "ensure_same_manifold",
    "gauss_legendre",
    "monte_carlo_grid",
    "quadrature_grid",
    "wrap_angle",
]
