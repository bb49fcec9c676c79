"""Unit spheres S^d embedded in R^{d+1}, d in {1, 2, 3, 4}."""
from __future__ import annotations

import math

import numpy as np

from ..errors import UnsupportedManifold
from .base import Manifold, gram_schmidt_complement
from .quadrature import QuadratureGrid, check_resolution, gauss_legendre

_SPHERE_VOLUMES = {1: 2.0 * math.pi, 2: 4.0 * math.pi, 3: 2.0 * math.pi**2,
                   4: 8.0 * math.pi**2 / 3.0}

# Even standard-normal moments E[W^j] = (j-1)!! for j = 0, 2, 4.
_EVEN_MOMENTS = {0: 1.0, 2: 1.0, 4: 3.0}

_CUT_TOL = 1e-12


class Sphere(Manifold):
    """Round unit sphere of intrinsic dimension ``dim``.

    Outward unit normal nu(z) = z; the Weingarten map in that direction is
    -Id, so the mean curvature vector is -d*z and the tube Jacobian at signed
    outward offset u is (1 + u)^d.
    """

    def __init__(self, dim: int):
        if dim not in (1, 2, 3, 4):
            raise UnsupportedManifold(f"Sphere(dim) supports dim in 1..4, got {dim}")
        self._dim = int(dim)

    # ---- identity / scalars ------------------------------------------

    @property
    def name(self) -> str:
        return f"Sphere({self._dim})"

    def key(self) -> tuple:
        return ("sphere", self._dim)

    @property
    def ambient_dim(self) -> int:
        return self._dim + 1

    @property
    def intrinsic_dim(self) -> int:
        return self._dim

    @property
    def reach(self) -> float:
        return 1.0

    @property
    def injectivity_radius(self) -> float:
        return math.pi

    @property
    def volume(self) -> float:
        return _SPHERE_VOLUMES[self._dim]

    # ---- kernels -------------------------------------------------------

    def constraint_residual_batch(self, x: np.ndarray) -> np.ndarray:
        return np.abs(np.linalg.norm(x, axis=1) - 1.0)

    def project_batch(self, x: np.ndarray):
        norms = np.linalg.norm(x, axis=1)
        dist = np.abs(norms - 1.0)
        in_tube = dist < self.tube_radius
        safe = np.where(norms > 1e-15, norms, 1.0)
        proj = x / safe[:, None]
        # Degenerate rows (near the center) get a placeholder pole.
        bad = norms <= 1e-15
        if np.any(bad):
            proj = proj.copy()
            proj[bad] = 0.0
            proj[bad, 0] = 1.0
            in_tube = in_tube & ~bad
        return proj, dist, in_tube

    def tangent_project_batch(self, z: np.ndarray, w: np.ndarray) -> np.ndarray:
        dots = np.sum(w * z, axis=1, keepdims=True)
        return w - dots * z

    def exp_batch(self, z: np.ndarray, v: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(v, axis=1, keepdims=True)
        small = r < 1e-12
        safe = np.where(small, 1.0, r)
        out = np.cos(r) * z + np.where(small, 1.0 - r**2 / 6.0, np.sin(safe) / safe) * v
        return out / np.linalg.norm(out, axis=1, keepdims=True)

    def log_batch(self, z: np.ndarray, y: np.ndarray):
        c = np.clip(np.sum(z * y, axis=1), -1.0, 1.0)
        ok = c > -1.0 + _CUT_TOL
        theta = np.arccos(c)
        rest = y - c[:, None] * z
        s = np.linalg.norm(rest, axis=1)
        small = theta < 1e-9
        factor = np.where(small, 1.0, theta / np.where(s > 0, s, 1.0))
        return factor[:, None] * rest, ok

    def transport_to_batch(self, p: np.ndarray, v: np.ndarray, z: np.ndarray):
        c = p @ z
        ok = c > -1.0 + _CUT_TOL
        w = z[None, :] - c[:, None] * p
        s = np.linalg.norm(w, axis=1)
        aligned = s < 1e-12
        safe = np.where(aligned, 1.0, s)
        u = w / safe[:, None]
        a = np.sum(v * u, axis=1)
        theta = np.arccos(np.clip(c, -1.0, 1.0))
        out = v + a[:, None] * ((np.cos(theta) - 1.0)[:, None] * u
                                - np.sin(theta)[:, None] * p)
        out = np.where(aligned[:, None], v, out)
        # Re-orthogonalize against z to keep validation exact.
        out = out - (out @ z)[:, None] * z[None, :]
        return out, ok

    def distance_to_batch(self, p: np.ndarray, z: np.ndarray) -> np.ndarray:
        return np.arccos(np.clip(p @ z, -1.0, 1.0))

    def tangent_basis(self, z: np.ndarray) -> np.ndarray:
        return gram_schmidt_complement(z[None, :], self._dim, self.ambient_dim)

    def normal_basis(self, z: np.ndarray) -> np.ndarray:
        return z[None, :].copy()

    def second_fundamental(self, z: np.ndarray) -> np.ndarray:
        # II(u, v) = -<u, v> z for the outward normal frame [z].
        return -np.eye(self._dim)[None, :, :]

    def ricci_matrix(self, z: np.ndarray) -> np.ndarray:
        return (self._dim - 1.0) * np.eye(self._dim)

    def split_chords(self, z: np.ndarray, y: np.ndarray):
        c = y @ z
        tang_sq = np.clip(1.0 - c * c, 0.0, None)
        m = (c - 1.0)[:, None]
        tvec = y - c[:, None] * z[None, :]
        return tang_sq, m, tvec

    def fiber_from_coeffs(self, m: np.ndarray, sigma: float) -> np.ndarray:
        a = 1.0 + m[:, 0]
        d = self._dim
        out = np.zeros_like(a)
        for j in range(0, d + 1, 2):
            out += math.comb(d, j) * _EVEN_MOMENTS[j] * sigma**j * a ** (d - j)
        return out

    def random_coords(self, rng: np.random.Generator, n: int) -> np.ndarray:
        x = rng.standard_normal((n, self.ambient_dim))
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    # ---- quadrature ------------------------------------------------------

    def grid(self, resolution: int, **kwargs) -> QuadratureGrid:
        if kwargs:
            raise TypeError(f"unexpected grid options: {sorted(kwargs)}")
        n = check_resolution(resolution)
        if self._dim == 1:
            theta = 2.0 * math.pi * np.arange(n) / n
            nodes = np.column_stack([np.cos(theta), np.sin(theta)])
            weights = np.full(n, 2.0 * math.pi / n)
        elif self._dim == 2:
            nodes, weights = _sphere2_grid(n)
        elif self._dim == 3:
            chi, wchi = gauss_legendre(n, 0.0, math.pi)
            sub_nodes, sub_w = _sphere2_grid(n)
            s, c = np.sin(chi), np.cos(chi)
            nodes = np.concatenate(
                [np.repeat(c, sub_nodes.shape[0])[:, None],
                 np.einsum("i,jk->ijk", s, sub_nodes).reshape(-1, 3)],
                axis=1,
            )
            weights = np.outer(wchi * s**2, sub_w).ravel()
        else:
            raise UnsupportedManifold(
                "no deterministic grid for Sphere(4); use monte_carlo_grid"
            )
        nodes = nodes / np.linalg.norm(nodes, axis=1, keepdims=True)
        return QuadratureGrid(self, nodes, weights, resolution=n)


def _sphere2_grid(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre x uniform product rule on S^2: n x 2n nodes."""
    t, wt = gauss_legendre(n, -1.0, 1.0)
    nphi = 2 * n
    phi = 2.0 * math.pi * np.arange(nphi) / nphi
    rho = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    nodes = np.empty((n, nphi, 3))
    nodes[:, :, 0] = rho[:, None] * np.cos(phi)[None, :]
    nodes[:, :, 1] = rho[:, None] * np.sin(phi)[None, :]
    nodes[:, :, 2] = t[:, None]
    weights = np.repeat(wt * (2.0 * math.pi / nphi), nphi)
    return nodes.reshape(-1, 3), weights
