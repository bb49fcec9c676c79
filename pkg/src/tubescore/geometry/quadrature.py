"""Deterministic quadrature grids over the supported manifolds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import UnsupportedManifold
from .base import Manifold, ManifoldPoint, _readonly

MIN_RESOLUTION = 8


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes and weights for integrals of the form sum_j w_j f(y_j).

    For compact manifolds the weights sum to the volume; for affine planes the
    grid covers a finite box and the weights sum to the box volume instead.
    ``stochastic`` flags Monte Carlo node sets (the fallback where no
    deterministic rule is provided).
    """

    manifold: Manifold
    node_coords: np.ndarray
    weights: np.ndarray
    resolution: int
    stochastic: bool = False

    def __post_init__(self):
        nodes = _readonly(self.node_coords)
        weights = _readonly(self.weights)
        if nodes.ndim != 2 or nodes.shape[1] != self.manifold.ambient_dim:
            raise ValueError("node array has the wrong shape")
        if weights.shape != (nodes.shape[0],):
            raise ValueError("weights do not match nodes")
        object.__setattr__(self, "node_coords", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def weight_sum(self) -> float:
        return float(self.weights.sum())

    def node(self, i: int) -> ManifoldPoint:
        return self.manifold.point(self.node_coords[i])

    def points(self):
        return self.manifold.iter_points(self.node_coords)

    def integrate(self, values: np.ndarray) -> float:
        values = np.asarray(values, dtype=float)
        return float(self.weights @ values)


def check_resolution(resolution: int) -> int:
    resolution = int(resolution)
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be >= {MIN_RESOLUTION}, got {resolution}")
    return resolution


def quadrature_grid(manifold: Manifold, resolution: int, **kwargs) -> QuadratureGrid:
    """Deterministic grid for ``manifold`` at the given per-axis resolution."""
    return manifold.grid(resolution, **kwargs)


def monte_carlo_grid(manifold: Manifold, n: int, rng: np.random.Generator) -> QuadratureGrid:
    """Uniform Monte Carlo node set with equal weights Vol(M)/n.

    Fallback for manifolds whose deterministic grids are not provided (for
    example spheres of dimension above three); flagged ``stochastic``.
    """
    if not math.isfinite(manifold.volume):
        raise UnsupportedManifold("Monte Carlo grids need a finite volume")
    coords = manifold.random_coords(rng, n)
    w = np.full(n, manifold.volume / n)
    return QuadratureGrid(manifold, coords, w, resolution=0, stochastic=True)


def gauss_legendre(n: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights transplanted to [lo, hi]."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w
