"""Affine d-planes in R^D: the curvature-free reference geometry."""
from __future__ import annotations

import math

import numpy as np

from .base import Manifold, gram_schmidt_complement
from .quadrature import QuadratureGrid, check_resolution, gauss_legendre


class AffinePlane(Manifold):
    """Affine subspace basepoint + span(frame) with the induced flat metric.

    ``frame`` holds orthonormal rows spanning the tangent space.  The reach
    and injectivity radius are infinite, so projection never fails and the
    exponential map is plain addition.
    """

    def __init__(self, basepoint, frame):
        basepoint = np.asarray(basepoint, dtype=float)
        frame = np.asarray(frame, dtype=float)
        if frame.ndim != 2 or basepoint.ndim != 1 or frame.shape[1] != basepoint.shape[0]:
            raise ValueError("frame must be (d, D) and basepoint (D,)")
        if frame.shape[0] >= frame.shape[1]:
            raise ValueError("need d < D")
        gram = frame @ frame.T
        if not np.allclose(gram, np.eye(frame.shape[0]), atol=1e-12):
            raise ValueError("frame rows must be orthonormal")
        self._p0 = basepoint
        self._frame = frame

    @classmethod
    def axis_aligned(cls, d: int, ambient: int) -> "AffinePlane":
        if not 1 <= d < ambient:
            raise ValueError("need 1 <= d < D")
        return cls(np.zeros(ambient), np.eye(ambient)[:d])

    # ---- identity / scalars ------------------------------------------

    @property
    def name(self) -> str:
        return f"AffinePlane({self.intrinsic_dim},{self.ambient_dim})"

    def key(self) -> tuple:
        return ("affine_plane", self._p0.tobytes(), self._frame.tobytes())

    @property
    def ambient_dim(self) -> int:
        return self._p0.shape[0]

    @property
    def intrinsic_dim(self) -> int:
        return self._frame.shape[0]

    @property
    def reach(self) -> float:
        return math.inf

    @property
    def injectivity_radius(self) -> float:
        return math.inf

    @property
    def volume(self) -> float:
        return math.inf

    @property
    def basepoint(self) -> np.ndarray:
        return self._p0.copy()

    @property
    def frame(self) -> np.ndarray:
        return self._frame.copy()

    # ---- chart helpers --------------------------------------------------

    def chart(self, x: np.ndarray) -> np.ndarray:
        """In-plane coordinates of ambient rows."""
        return (x - self._p0) @ self._frame.T

    def embed(self, c: np.ndarray) -> np.ndarray:
        """Ambient coordinates of chart rows."""
        return self._p0 + np.asarray(c, dtype=float) @ self._frame

    def embed_tangent(self, c: np.ndarray) -> np.ndarray:
        return np.asarray(c, dtype=float) @ self._frame

    # ---- kernels -------------------------------------------------------

    def _project_raw(self, x: np.ndarray) -> np.ndarray:
        rel = x - self._p0
        return self._p0 + (rel @ self._frame.T) @ self._frame

    def constraint_residual_batch(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(x - self._project_raw(x), axis=-1)

    def project_batch(self, x: np.ndarray):
        proj = self._project_raw(x)
        dist = np.linalg.norm(x - proj, axis=-1)
        return proj, dist, np.ones(x.shape[0], dtype=bool)

    def tangent_project_batch(self, z: np.ndarray, w: np.ndarray) -> np.ndarray:
        return (w @ self._frame.T) @ self._frame

    def exp_batch(self, z: np.ndarray, v: np.ndarray) -> np.ndarray:
        return z + v

    def log_batch(self, z: np.ndarray, y: np.ndarray):
        return y - z, np.ones(z.shape[0] if z.ndim > 1 else y.shape[0], dtype=bool)

    def transport_to_batch(self, p: np.ndarray, v: np.ndarray, z: np.ndarray):
        return v.copy(), np.ones(p.shape[0], dtype=bool)

    def distance_to_batch(self, p: np.ndarray, z: np.ndarray) -> np.ndarray:
        return np.linalg.norm(p - z[None, :], axis=-1)

    def tangent_basis(self, z: np.ndarray) -> np.ndarray:
        return self._frame.copy()

    def normal_basis(self, z: np.ndarray) -> np.ndarray:
        return gram_schmidt_complement(self._frame, self.codim, self.ambient_dim)

    def second_fundamental(self, z: np.ndarray) -> np.ndarray:
        d = self.intrinsic_dim
        return np.zeros((self.codim, d, d))

    def ricci_matrix(self, z: np.ndarray) -> np.ndarray:
        d = self.intrinsic_dim
        return np.zeros((d, d))

    def split_chords(self, z: np.ndarray, y: np.ndarray):
        tvec = self.tangent_project_batch(None, y - z[None, :])
        tang_sq = np.sum(tvec * tvec, axis=-1)
        m = np.zeros((y.shape[0], self.codim))
        return tang_sq, m, tvec

    def fiber_from_coeffs(self, m: np.ndarray, sigma: float) -> np.ndarray:
        return np.ones(m.shape[0])

    def random_coords(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.embed(rng.standard_normal((n, self.intrinsic_dim)))

    def grid(self, resolution: int, half_width: float = 8.0, center=None) -> QuadratureGrid:
        """Gauss-Legendre product rule on a chart box of the given half width."""
        n = check_resolution(resolution)
        d = self.intrinsic_dim
        if center is None:
            center = np.zeros(d)
        center = np.asarray(center, dtype=float)
        x, w = gauss_legendre(n, -half_width, half_width)
        axes = np.meshgrid(*([x] * d), indexing="ij")
        coords = np.stack([a.ravel() for a in axes], axis=-1) + center
        weights = np.ones(n**d)
        for wa in np.meshgrid(*([w] * d), indexing="ij"):
            weights *= wa.ravel()
        return QuadratureGrid(self, self.embed(coords), weights, resolution=n)
