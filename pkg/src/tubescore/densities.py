"""Latent density models on the supported manifolds.

Every model exposes the normalized log density, the Riemannian score
grad_M log q, the Laplace-Beltrami term Delta_M log q, and the second-order
drift correction

    b_q = (1/2) grad_M [ Delta_M log q + ||grad_M log q||^2 ],

all as closed forms, plus a deterministic sampler driven by an explicit
numpy Generator.
"""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import i0e

from .errors import ManifoldMismatch, UnsupportedManifold
from .geometry import (
    AffinePlane,
    FlatTorus,
    ManifoldPoint,
    Sphere,
    TangentVector,
    ensure_same_manifold,
)
from .geometry.quadrature import gauss_legendre
from .rng import derive_rng, shard_sizes

_LOWER_SPHERE_VOLUMES = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi, 4: 2.0 * math.pi**2}
_TABLE_SIZE = 8193


class DensityModel(abc.ABC):
    """A probability density with respect to the Riemannian volume measure."""

    def __init__(self, manifold):
        self._manifold = manifold

    @property
    def manifold(self):
        return self._manifold

    @property
    @abc.abstractmethod
    def name(self) -> str: ...

    @abc.abstractmethod
    def params(self) -> dict: ...

    # ---- pointwise API -------------------------------------------------

    def log_density(self, z: ManifoldPoint) -> float:
        self._check(z)
        return float(self.log_density_batch(z.coords[None])[0])

    def score(self, z: ManifoldPoint) -> TangentVector:
        self._check(z)
        return TangentVector(z, self.score_batch(z.coords[None])[0])

    @abc.abstractmethod
    def laplacian_log_density(self, z: ManifoldPoint) -> float: ...

    @abc.abstractmethod
    def tweedie_term(self, z: ManifoldPoint) -> TangentVector:
        """The closed-form drift correction b_q at ``z``."""

    # ---- batch API -------------------------------------------------------

    @abc.abstractmethod
    def log_density_batch(self, coords: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def score_batch(self, coords: np.ndarray) -> np.ndarray: ...

    # ---- sampling ----------------------------------------------------------

    @abc.abstractmethod
    def sample_coords(self, n: int, rng: np.random.Generator) -> np.ndarray: ...

    def sample_latent(self, n: int, seed: int) -> list[ManifoldPoint]:
        coords = self.sample_coords_seeded(n, seed)
        return [self._manifold.point(row) for row in coords]

    def sample_coords_seeded(self, n: int, seed: int, label: str = "densities.sample") -> np.ndarray:
        """Sharded deterministic sampling: fixed blocks, one derived stream each."""
        blocks = []
        for i, size in enumerate(shard_sizes(n)):
            blocks.append(self.sample_coords(size, derive_rng(seed, label, i)))
        if not blocks:
            return np.empty((0, self._manifold.ambient_dim))
        return np.concatenate(blocks, axis=0)

    def _check(self, z: ManifoldPoint) -> None:
        ensure_same_manifold(self._manifold, z.manifold)


# ---------------------------------------------------------------------------
# von Mises-Fisher on S^d


class SphereTMarginal:
    """Distribution of t = <mu, Z> for a vMF(kappa) latent on S^d.

    The density is proportional to exp(kappa t) (1 - t^2)^{(d-2)/2}; all
    numerics run in the colatitude angle chi = arccos(t), where the density
    exp(kappa cos chi) sin^{d-1}(chi) is smooth for every d >= 1.
    """

    def __init__(self, dim: int, kappa: float, table_size: int = _TABLE_SIZE):
        self.dim = int(dim)
        self.kappa = float(kappa)
        chi = np.linspace(0.0, math.pi, table_size)
        weight = np.exp(self.kappa * (np.cos(chi) - 1.0)) * np.sin(chi) ** (self.dim - 1)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (weight[1:] + weight[:-1]) * np.diff(chi))])
        self._chi = chi
        self._chi_cdf = cdf / cdf[-1]
        nodes, w = gauss_legendre(512, 0.0, math.pi)
        dens = np.exp(self.kappa * (np.cos(nodes) - 1.0)) * np.sin(nodes) ** (self.dim - 1)
        self._norm = float(w @ dens)
        self._nodes, self._node_w, self._node_dens = nodes, w, dens

    def sample_chi(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self._chi_cdf, self._chi)

    def cdf(self, t: np.ndarray) -> np.ndarray:
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        chi = np.arccos(t)
        return 1.0 - np.interp(chi, self._chi, self._chi_cdf)

    def moment(self, fn) -> float:
        vals = fn(np.cos(self._nodes))
        return float(self._node_w @ (vals * self._node_dens)) / self._norm

    def mean(self) -> float:
        return self.moment(lambda t: t)

    def log_sphere_normalizer(self) -> float:
        """log integral of exp(kappa <mu, z>) over S^d."""
        return math.log(_LOWER_SPHERE_VOLUMES[self.dim] * self._norm) + self.kappa


class VonMisesFisher(DensityModel):
    """vMF density q(z) proportional to exp(kappa <mu, z>) on a unit sphere."""

    def __init__(self, manifold: Sphere, mu, kappa: float):
        if not isinstance(manifold, Sphere):
            raise ManifoldMismatch("VonMisesFisher lives on spheres")
        super().__init__(manifold)
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (manifold.ambient_dim,):
            raise ValueError("mu must be an ambient unit vector")
        if abs(np.linalg.norm(mu) - 1.0) > 1e-10:
            raise ValueError("mu must have unit norm")
        if kappa < 0:
            raise ValueError("kappa must be non-negative")
        self.mu = mu
        self.kappa = float(kappa)
        self._marginal = SphereTMarginal(manifold.intrinsic_dim, self.kappa)
        self._log_norm = self._marginal.log_sphere_normalizer()

    @property
    def name(self) -> str:
        return "vmf"

    def params(self) -> dict:
        return {"kappa": self.kappa, "mu": self.mu.tolist()}

    def t_marginal(self) -> SphereTMarginal:
        return self._marginal

    def log_density_batch(self, coords: np.ndarray) -> np.ndarray:
        return self.kappa * (coords @ self.mu) - self._log_norm

    def score_batch(self, coords: np.ndarray) -> np.ndarray:
        t = coords @ self.mu
        return self.kappa * (self.mu[None, :] - t[:, None] * coords)

    def laplacian_log_density(self, z: ManifoldPoint) -> float:
        # <mu, z> restricted to S^d is a first spherical harmonic:
        # Delta_M <mu, z> = -d <mu, z>.
        self._check(z)
        d = self._manifold.intrinsic_dim
        return -self.kappa * d * float(z.coords @ self.mu)

    def tweedie_term(self, z: ManifoldPoint) -> TangentVector:
        self._check(z)
        d = self._manifold.intrinsic_dim
        t = float(z.coords @ self.mu)
        tang = self.mu - t * z.coords
        coeff = 0.5 * (-self.kappa * d - 2.0 * self.kappa**2 * t)
        return TangentVector(z, coeff * tang)

    def sample_coords(self, n: int, rng: np.random.Generator) -> np.ndarray:
        chi = self._marginal.sample_chi(rng.random(n))
        t = np.cos(chi)
        s = np.sin(chi)
        D = self._manifold.ambient_dim
        if self._manifold.intrinsic_dim == 1:
            perp = np.array([-self.mu[1], self.mu[0]])
            signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
            out = t[:, None] * self.mu[None, :] + (s * signs)[:, None] * perp[None, :]
        else:
            w = rng.standard_normal((n, D))
            w -= (w @ self.mu)[:, None] * self.mu[None, :]
            w /= np.linalg.norm(w, axis=1, keepdims=True)
            out = t[:, None] * self.mu[None, :] + s[:, None] * w
        return out / np.linalg.norm(out, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# product von Mises on the flat torus


class ProductVonMises(DensityModel):
    """Independent von Mises angles: q proportional to
    exp(k1 cos(a - p1) + k2 cos(b - p2)) on S^1(R1) x S^1(R2)."""

    def __init__(self, manifold: FlatTorus, kappas, phases=(0.0, 0.0)):
        if not isinstance(manifold, FlatTorus):
            raise ManifoldMismatch("ProductVonMises lives on flat tori")
        super().__init__(manifold)
        self.kappas = tuple(float(k) for k in np.broadcast_to(np.asarray(kappas, float), (2,)))
        self.phases = tuple(float(p) for p in np.broadcast_to(np.asarray(phases, float), (2,)))
        if min(self.kappas) < 0:
            raise ValueError("kappas must be non-negative")
        r1, r2 = manifold.radii
        # log I0 computed from the scaled Bessel function for large-kappa safety
        self._log_norm = (
            math.log(4.0 * math.pi**2 * r1 * r2)
            + math.log(i0e(self.kappas[0])) + self.kappas[0]
            + math.log(i0e(self.kappas[1])) + self.kappas[1]
        )

    @property
    def name(self) -> str:
        return "product_vonmises"

    def params(self) -> dict:
        return {"kappas": list(self.kappas), "phases": list(self.phases)}

    def _deltas(self, coords: np.ndarray) -> np.ndarray:
        theta = self._manifold.angles(coords)
        return theta - np.asarray(self.phases)

    def log_density_batch(self, coords: np.ndarray) -> np.ndarray:
        delta = self._deltas(coords)
        k1, k2 = self.kappas
        return k1 * np.cos(delta[..., 0]) + k2 * np.cos(delta[..., 1]) - self._log_norm

    def score_batch(self, coords: np.ndarray) -> np.ndarray:
        delta = self._deltas(coords)
        r1, r2 = self._manifold.radii
        k1, k2 = self.kappas
        e, _ = self._manifold._frame_vectors(coords)
        a1 = -k1 * np.sin(delta[..., 0]) / r1
        a2 = -k2 * np.sin(delta[..., 1]) / r2
        return a1[..., None] * FlatTorus._pad(e[..., 0, :], 0) \
            + a2[..., None] * FlatTorus._pad(e[..., 1, :], 1)

    def laplacian_log_density(self, z: ManifoldPoint) -> float:
        self._check(z)
        delta = self._deltas(z.coords[None])[0]
        r1, r2 = self._manifold.radii
        k1, k2 = self.kappas
        return float(-k1 * math.cos(delta[0]) / r1**2 - k2 * math.cos(delta[1]) / r2**2)

    def tweedie_term(self, z: ManifoldPoint) -> TangentVector:
        self._check(z)
        delta = self._deltas(z.coords[None])[0]
        r = self._manifold.radii
        e, _ = self._manifold._frame_vectors(z.coords)
        vec = np.zeros(4)
        for i in range(2):
            k = self.kappas[i]
            coeff = k * math.sin(delta[i]) * (1.0 + 2.0 * k * math.cos(delta[i])) / (2.0 * r[i] ** 3)
            vec += coeff * FlatTorus._pad(e[i], i)
        return TangentVector(z, vec)

    def sample_coords(self, n: int, rng: np.random.Generator) -> np.ndarray:
        a = rng.vonmises(self.phases[0], self.kappas[0], size=n) if self.kappas[0] > 0 \
            else rng.uniform(-math.pi, math.pi, size=n)
        b = rng.vonmises(self.phases[1], self.kappas[1], size=n) if self.kappas[1] > 0 \
            else rng.uniform(-math.pi, math.pi, size=n)
        return self._manifold.from_angles(np.stack([a, b], axis=-1))


# ---------------------------------------------------------------------------
# isotropic Gaussian on an affine plane


class IsotropicGaussian(DensityModel):
    """N(mean, tau^2 I) in the chart coordinates of an affine plane."""

    def __init__(self, manifold: AffinePlane, mean, tau: float):
        if not isinstance(manifold, AffinePlane):
            raise ManifoldMismatch("IsotropicGaussian lives on affine planes")
        super().__init__(manifold)
        mean = np.zeros(manifold.intrinsic_dim) + np.asarray(mean, dtype=float)
        if mean.shape != (manifold.intrinsic_dim,):
            raise ValueError("mean must be a chart vector")
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.mean = mean
        self.tau = float(tau)

    @property
    def name(self) -> str:
        return "gaussian"

    def params(self) -> dict:
        return {"mean": self.mean.tolist(), "tau": self.tau}

    def log_density_batch(self, coords: np.ndarray) -> np.ndarray:
        c = self._manifold.chart(coords) - self.mean
        d = self._manifold.intrinsic_dim
        return -0.5 * np.sum(c * c, axis=-1) / self.tau**2 \
            - 0.5 * d * math.log(2.0 * math.pi * self.tau**2)

    def score_batch(self, coords: np.ndarray) -> np.ndarray:
        c = self._manifold.chart(coords) - self.mean
        return self._manifold.embed_tangent(-c / self.tau**2)

    def laplacian_log_density(self, z: ManifoldPoint) -> float:
        self._check(z)
        return -self._manifold.intrinsic_dim / self.tau**2

    def tweedie_term(self, z: ManifoldPoint) -> TangentVector:
        self._check(z)
        c = self._manifold.chart(z.coords[None])[0] - self.mean
        return TangentVector(z, self._manifold.embed_tangent(c / self.tau**4))

    def sample_coords(self, n: int, rng: np.random.Generator) -> np.ndarray:
        c = self.mean + self.tau * rng.standard_normal((n, self._manifold.intrinsic_dim))
        return self._manifold.embed(c)


# ---------------------------------------------------------------------------
# uniform on a compact manifold


class Uniform(DensityModel):
    """The normalized volume measure (compact manifolds only)."""

    def __init__(self, manifold):
        if not math.isfinite(manifold.volume):
            raise UnsupportedManifold("Uniform requires a finite-volume manifold")
        super().__init__(manifold)
        self._log_vol = math.log(manifold.volume)

    @property
    def name(self) -> str:
        return "uniform"

    def params(self) -> dict:
        return {}

    def log_density_batch(self, coords: np.ndarray) -> np.ndarray:
        return np.full(coords.shape[0], -self._log_vol)

    def score_batch(self, coords: np.ndarray) -> np.ndarray:
        return np.zeros_like(coords)

    def laplacian_log_density(self, z: ManifoldPoint) -> float:
        self._check(z)
        return 0.0

    def tweedie_term(self, z: ManifoldPoint) -> TangentVector:
        self._check(z)
        return TangentVector(z, np.zeros(self._manifold.ambient_dim))

    def sample_coords(self, n: int, rng: np.random.Generator) -> np.ndarray:
        # random_coords is volume-uniform for spheres and flat tori
        return self._manifold.random_coords(rng, n)


@dataclass(frozen=True)
class _FD:
    """Geodesic finite-difference helpers (test oracles, not production paths)."""

    @staticmethod
    def gradient(fn, manifold, z: ManifoldPoint, step: float | None = None) -> np.ndarray:
        basis = manifold.tangent_basis(z.coords)
        if step is None:
            step = 1e-4
        out = np.zeros(manifold.ambient_dim)
        for e in basis:
            up = manifold.exp_map(z, manifold.tangent(z, step * e))
            dn = manifold.exp_map(z, manifold.tangent(z, -step * e))
            out += (fn(up) - fn(dn)) / (2.0 * step) * e
        return out

    @staticmethod
    def laplacian(fn, manifold, z: ManifoldPoint, step: float = 1e-3) -> float:
        basis = manifold.tangent_basis(z.coords)
        mid = fn(z)
        total = 0.0
        for e in basis:
            up = manifold.exp_map(z, manifold.tangent(z, step * e))
            dn = manifold.exp_map(z, manifold.tangent(z, -step * e))
            total += (fn(up) - 2.0 * mid + fn(dn)) / step**2
        return total


finite_difference = _FD()
