"""Deterministic quadrature oracle for the conditional tangent target.

Given a latent density q and noise level sigma, the conditional expectation
of the raw tangent target given the foot point z is

    r_sigma(z) = (1/sigma^2) E[ P_T(z)(Y - z) | pi(X) = z ],

where the latent posterior density over grid nodes y factorizes as

    w(y) propto q(y) * exp(-||P_T(z)(y-z)||^2 / (2 sigma^2))
               * fiber_factor(z, P_N(z)(y-z), sigma).

Node sums are restricted to the tube band ||P_N(z)(y-z)|| < tube_radius:
outside it the tangential chord norm can vanish again (cut locus), which
would inject spurious posterior mass that the tube conditioning excludes.

The module also hosts the sigma^2 expansion terms (score, Tweedie drift,
extrinsic curvature term), extraction of the dimensionless extrinsic
coefficient, and tangent-space quadrature checks of the posterior Stein
identity and moment bounds on spheres.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .densities import DensityModel
from .errors import (
    ConfigError,
    DegenerateScore,
    ManifoldMismatch,
    QuadratureNotConverged,
    UnsupportedManifold,
)
from .geometry import (
    AffinePlane,
    FlatTorus,
    ManifoldPoint,
    Sphere,
    TangentVector,
    ensure_same_manifold,
)
from .geometry.quadrature import QuadratureGrid, gauss_legendre

SIGMA_MIN = 0.01
SIGMA_MAX = 0.5
DEFAULT_REL_TOL = 1e-6
DEFAULT_MAX_NODES = 20_000_000
CAP_FACTOR = 12.0          # tangential Gaussian support cut, in units of sigma
GAUSS_RANGE = 14.0         # quadrature domain half width, in units of sigma
NODE_CHUNK = 2_000_000
QUERY_CHUNK = 128
_MASS_FLOOR = 1e-300


def check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not SIGMA_MIN <= sigma <= SIGMA_MAX:
        raise ConfigError(
            f"sigma={sigma:g} outside the supported range [{SIGMA_MIN}, {SIGMA_MAX}]")
    return sigma


def auto_resolution(manifold, sigma: float, spacing: float = 0.8) -> int:
    """Grid resolution placing nodes about ``spacing * sigma`` apart."""
    target = spacing * sigma
    if isinstance(manifold, Sphere):
        if manifold.intrinsic_dim == 1:
            n = math.ceil(2.0 * math.pi / target)
        else:
            n = math.ceil(math.pi / target)
    elif isinstance(manifold, AffinePlane):
        # the chart box scales with sigma, so the node count does not
        n = 64
    elif isinstance(manifold, FlatTorus):
        n = math.ceil(2.0 * math.pi * max(manifold.radii) / target)
    else:
        raise UnsupportedManifold(f"no quadrature rule for {manifold.name}")
    return max(8, n)


def grid_node_count(manifold, resolution: int) -> int:
    if isinstance(manifold, Sphere):
        d = manifold.intrinsic_dim
        return {1: resolution, 2: 2 * resolution**2, 3: 2 * resolution**3}.get(
            d, resolution**d)
    if isinstance(manifold, AffinePlane):
        return resolution**manifold.intrinsic_dim
    return resolution**manifold.intrinsic_dim


class RBOracle:
    """Batched quadrature evaluator for the conditional tangent target.

    Grids and per-node log densities are cached per resolution.  The first
    query batch settles the resolution by a doubling check at a few probe
    points; every later call reuses the settled grid.
    """

    def __init__(self, density: DensityModel, sigma: float, *,
                 resolution: int | None = None,
                 rel_tol: float = DEFAULT_REL_TOL,
                 max_nodes: int = DEFAULT_MAX_NODES,
                 check_convergence: bool = True):
        self.density = density
        self.manifold = density.manifold
        self.sigma = check_sigma(sigma)
        self.resolution = int(resolution) if resolution is not None \
            else auto_resolution(self.manifold, self.sigma)
        self.rel_tol = rel_tol
        self.max_nodes = max_nodes
        self.check_convergence = check_convergence
        self._cache: dict[int, tuple[QuadratureGrid, np.ndarray]] = {}
        self._settled: int | None = None
        self.convergence_report: dict | None = None

    # ---- grid management -------------------------------------------------

    def _grid(self, res: int) -> tuple[QuadratureGrid, np.ndarray]:
        if res not in self._cache:
            if grid_node_count(self.manifold, res) > self.max_nodes:
                raise QuadratureNotConverged(
                    f"resolution {res} needs {grid_node_count(self.manifold, res)} nodes, "
                    f"cap is {self.max_nodes}")
            grid = self.manifold.grid(res)
            logwq = np.log(grid.weights) + self.density.log_density_batch(grid.node_coords)
            self._cache[res] = (grid, logwq)
        return self._cache[res]

    # ---- evaluation ------------------------------------------------------

    def target(self, z: ManifoldPoint) -> TangentVector:
        ensure_same_manifold(self.manifold, z.manifold)
        out = self.target_coords(z.coords[None])[0]
        return TangentVector(z, out)

    def target_coords(self, queries: np.ndarray) -> np.ndarray:
        """Conditional targets for query rows, as ambient tangent rows."""
        queries = np.asarray(queries, dtype=float)
        if queries.ndim != 2 or queries.shape[1] != self.manifold.ambient_dim:
            raise ValueError("queries must be (n, ambient_dim)")
        if queries.shape[0] == 0:
            return np.empty_like(queries)
        if self._settled is None:
            self._settle(queries)
        return self._eval(queries, self._settled)

    def _settle(self, queries: np.ndarray) -> None:
        if not self.check_convergence:
            self._settled = self.resolution
            self.convergence_report = {"resolution": self.resolution, "checked": False}
            return
        nq = queries.shape[0]
        probes = queries[np.unique(np.linspace(0, nq - 1, min(nq, 4)).astype(int))]
        res = self.resolution
        history = []
        while True:
            coarse = self._eval(probes, res)
            fine = self._eval(probes, 2 * res)
            scale = np.maximum(np.linalg.norm(coarse, axis=1),
                               np.linalg.norm(fine, axis=1))
            # the floor treats targets below 1e-6 as zero for the relative
            # check; rounding noise in the node sums sits orders below it
            rel = float(np.max(np.linalg.norm(fine - coarse, axis=1)
                               / np.maximum(scale, 1e-6)))
            history.append({"resolution": res, "rel_change": rel})
            if rel < self.rel_tol:
                self._settled = res
                # the doubled grid served only the check; drop its cache entry
                self._cache.pop(2 * res, None)
                self.convergence_report = {
                    "resolution": res, "checked": True, "rel_change": rel,
                    "history": history,
                }
                return
            res = 2 * res
            # next iteration compares res vs 2*res; the cap check inside
            # _grid raises QuadratureNotConverged when 2*res is infeasible

    def _eval(self, queries: np.ndarray, res: int) -> np.ndarray:
        # project out the normal-direction rounding of the node sums so the
        # convergence comparison sees exactly what callers receive
        return self.manifold.tangent_project_batch(queries, self._eval_raw(queries, res))

    def _eval_raw(self, queries: np.ndarray, res: int) -> np.ndarray:
        if isinstance(self.manifold, AffinePlane):
            return self._eval_plane(queries, res)
        grid, logwq = self._grid(res)
        if isinstance(self.manifold, Sphere):
            return self._eval_sphere(queries, grid, logwq)
        return self._eval_generic(queries, grid, logwq)

    def _assemble(self, num: np.ndarray, den: float) -> np.ndarray:
        if not den > _MASS_FLOOR:
            raise QuadratureNotConverged("no posterior mass at a query point")
        return num / (den * self.sigma**2)

    def _eval_sphere(self, queries: np.ndarray, grid: QuadratureGrid,
                     logwq: np.ndarray) -> np.ndarray:
        M = self.manifold
        nodes = grid.node_coords
        d = M.intrinsic_dim
        sig = self.sigma
        inv2s2 = 1.0 / (2.0 * sig**2)
        cap_sq = (CAP_FACTOR * sig) ** 2
        # tangential cut and tube band are both lower bounds on c = <y, z>
        c_min = max(1.0 - M.tube_radius,
                    math.sqrt(1.0 - cap_sq) if cap_sq < 1.0 else -1.0)
        out = np.empty_like(queries)
        for start in range(0, queries.shape[0], QUERY_CHUNK):
            zc = queries[start:start + QUERY_CHUNK]
            C = nodes @ zc.T
            for j in range(zc.shape[0]):
                c = C[:, j]
                idx = np.flatnonzero(c > c_min)
                cj = c[idx]
                fiber = M.fiber_from_coeffs((cj - 1.0)[:, None], sig)
                lg = logwq[idx] - (1.0 - cj * cj) * inv2s2 + np.log(fiber)
                lg -= lg.max()
                w = np.exp(lg)
                den = float(w.sum())
                num = w @ nodes[idx] - float(w @ cj) * zc[j]
                out[start + j] = self._assemble(num, den)
        return out

    def _eval_generic(self, queries: np.ndarray, grid: QuadratureGrid,
                      logwq: np.ndarray) -> np.ndarray:
        M = self.manifold
        sig = self.sigma
        inv2s2 = 1.0 / (2.0 * sig**2)
        cap_sq = (CAP_FACTOR * sig) ** 2
        band = M.tube_radius
        out = np.empty_like(queries)
        n_nodes = grid.n_nodes
        for j, z in enumerate(queries):
            best = -np.inf
            den = 0.0
            num = np.zeros(M.ambient_dim)
            for s in range(0, n_nodes, NODE_CHUNK):
                sl = slice(s, min(s + NODE_CHUNK, n_nodes))
                tang_sq, m, tvec = M.split_chords(z, grid.node_coords[sl])
                mask = (tang_sq < cap_sq) & (np.linalg.norm(m, axis=-1) < band)
                if not np.any(mask):
                    continue
                fiber = M.fiber_from_coeffs(m[mask], sig)
                lg = logwq[sl][mask] - tang_sq[mask] * inv2s2 + np.log(fiber)
                top = float(lg.max())
                if top > best:
                    rescale = math.exp(best - top) if best > -np.inf else 0.0
                    den *= rescale
                    num *= rescale
                    best = top
                w = np.exp(lg - best)
                den += float(w.sum())
                num += w @ tvec[mask]
            out[j] = self._assemble(num, den)
        return out

    def _eval_plane(self, queries: np.ndarray, res: int) -> np.ndarray:
        """Per-query local Gauss-Legendre box; the box tracks the query."""
        M = self.manifold
        sig = self.sigma
        inv2s2 = 1.0 / (2.0 * sig**2)
        out = np.empty_like(queries)
        half = GAUSS_RANGE * sig
        for j, z in enumerate(queries):
            grid = M.grid(res, half_width=half, center=M.chart(z[None])[0])
            nodes = grid.node_coords
            tvec = nodes - z[None, :]
            lg = (np.log(grid.weights)
                  + self.density.log_density_batch(nodes)
                  - np.sum(tvec * tvec, axis=-1) * inv2s2)
            lg -= lg.max()
            w = np.exp(lg)
            out[j] = self._assemble(w @ tvec, float(w.sum()))
        return out


def rb_target(z: ManifoldPoint, q: DensityModel, sigma: float,
              grid: QuadratureGrid | None = None, *,
              rel_tol: float = DEFAULT_REL_TOL,
              check_convergence: bool = True,
              max_nodes: int = DEFAULT_MAX_NODES) -> TangentVector:
    """Conditional tangent target at one point, with a convergence check.

    When ``grid`` is given its resolution seeds the evaluation; the doubling
    check still runs (so the result is certified converged) unless
    ``check_convergence`` is disabled.
    """
    ensure_same_manifold(q.manifold, z.manifold)
    resolution = grid.resolution if grid is not None else None
    oracle = RBOracle(q, sigma, resolution=resolution, rel_tol=rel_tol,
                      check_convergence=check_convergence, max_nodes=max_nodes)
    if grid is not None and not isinstance(q.manifold, AffinePlane):
        oracle._cache[grid.resolution] = (
            grid, np.log(grid.weights) + q.log_density_batch(grid.node_coords))
    return oracle.target(z)


# ---------------------------------------------------------------------------
# sigma^2 expansion


@dataclass(frozen=True)
class ExpansionTerms:
    """Closed-form pieces of the small-sigma expansion of the target."""

    score: TangentVector
    tweedie: TangentVector
    extrinsic: TangentVector
    predicted: TangentVector
    sigma: float


def extrinsic_term(z: ManifoldPoint, q: DensityModel) -> TangentVector:
    """Curvature correction (W_H/2 - Ric) applied to the score."""
    ensure_same_manifold(q.manifold, z.manifold)
    bundle = q.manifold.curvature_bundle(z)
    return TangentVector(z, bundle.apply_extrinsic(q.score(z).vec))


def predicted_expansion(z: ManifoldPoint, q: DensityModel, sigma: float) -> ExpansionTerms:
    score = q.score(z)
    tweedie = q.tweedie_term(z)
    extrinsic = extrinsic_term(z, q)
    predicted = TangentVector(
        z, score.vec + sigma**2 * (tweedie.vec + extrinsic.vec))
    return ExpansionTerms(score=score, tweedie=tweedie, extrinsic=extrinsic,
                          predicted=predicted, sigma=float(sigma))


class ExtrinsicFit(NamedTuple):
    """Scalar curvature coefficient plus the off-axis remainder."""

    alpha: float
    orthogonal: float
    sigma: float


def extract_extrinsic_coefficient(z: ManifoldPoint, q: DensityModel, sigma: float,
                                  grid: QuadratureGrid | None = None, *,
                                  oracle: RBOracle | None = None) -> ExtrinsicFit:
    """Project (target - score - sigma^2 tweedie) / sigma^2 onto the score.

    The scalar part recovers the dimensionless curvature coefficient on
    geometries where the extrinsic operator is a multiple of the identity;
    elsewhere the orthogonal remainder (same normalization) is diagnostic.
    """
    sigma = check_sigma(sigma)
    s = q.score(z).vec
    s_norm_sq = float(s @ s)
    if s_norm_sq < 1e-6:
        raise DegenerateScore(
            f"score norm {math.sqrt(s_norm_sq):.2e} below 1e-3; "
            "the coefficient direction is undefined")
    if oracle is not None:
        r = oracle.target(z).vec
    else:
        r = rb_target(z, q, sigma, grid).vec
    resid = r - s - sigma**2 * q.tweedie_term(z).vec
    alpha = float(resid @ s) / (sigma**2 * s_norm_sq)
    orth = resid - (float(resid @ s) / s_norm_sq) * s
    return ExtrinsicFit(alpha=alpha,
                        orthogonal=float(np.linalg.norm(orth)) / (sigma**2 * math.sqrt(s_norm_sq)),
                        sigma=sigma)


def score_second_moment(q: DensityModel, resolution: int = 160) -> float:
    """E_q ||grad_M log q||^2 by volume quadrature."""
    grid = q.manifold.grid(resolution)
    s = q.score_batch(grid.node_coords)
    vals = np.exp(q.log_density_batch(grid.node_coords)) * np.sum(s * s, axis=-1)
    return float(grid.integrate(vals))


# ---------------------------------------------------------------------------
# tangent-space posterior checks (spheres only)


class FiberPosterior:
    """Tangent-coordinate tabulation of the latent posterior at a foot point.

    Over v in T_z M (sphere of dimension d in {1, 2}), the posterior is
    proportional to a(v) * gaussian_sigma(v) with

        a(v) = q(Exp_z v) * (sin rho / rho)^{d-1}
               * exp((rho^2 - ||G(v)||^2) / (2 sigma^2)) * fiber(cos rho - 1),

    where rho = ||v|| and G(v) is the tangential chord.  All expectations
    are Gauss-Legendre sums (radial) times uniform angular sums; the radial
    domain stops at the tube band so the cut locus stays excluded, matching
    the node-sum convention of the target oracle.
    """

    def __init__(self, z: ManifoldPoint, q: DensityModel, sigma: float, *,
                 n_radial: int = 256, n_angular: int = 256, fd_step: float = 1e-4):
        M = q.manifold
        if not isinstance(M, Sphere) or M.intrinsic_dim > 2:
            raise UnsupportedManifold(
                "tangent-coordinate posterior checks support Sphere(1) and Sphere(2)")
        ensure_same_manifold(M, z.manifold)
        self.sigma = check_sigma(sigma)
        self.manifold = M
        self.density = q
        self.z = z
        self.fd_step = fd_step
        self.d = M.intrinsic_dim
        self.basis = M.tangent_basis(z.coords)
        rho_band = math.acos(max(1.0 - M.tube_radius, -1.0))
        rho_max = min(rho_band, GAUSS_RANGE * self.sigma)
        if self.d == 1:
            x, w = gauss_legendre(n_radial, -rho_max, rho_max)
            self.coords = x[:, None]
            self.base_w = w
        else:
            r, wr = gauss_legendre(n_radial, 0.0, rho_max)
            phi = 2.0 * math.pi * np.arange(n_angular) / n_angular
            rr, pp = np.meshgrid(r, phi, indexing="ij")
            self.coords = np.stack([(rr * np.cos(pp)).ravel(),
                                    (rr * np.sin(pp)).ravel()], axis=-1)
            self.base_w = (np.outer(wr * r, np.full(n_angular, 2.0 * math.pi / n_angular))
                           ).ravel()
        log_post = self._log_a(self.coords) + self._log_gaussian(self.coords)
        lw = np.log(self.base_w) + log_post
        lw -= lw.max()
        w = np.exp(lw)
        self.weights = w / w.sum()

    def _log_gaussian(self, coords: np.ndarray) -> np.ndarray:
        return -np.sum(coords * coords, axis=-1) / (2.0 * self.sigma**2)

    def _log_a(self, coords: np.ndarray) -> np.ndarray:
        M = self.manifold
        v_amb = coords @ self.basis
        rho = np.linalg.norm(coords, axis=-1)
        zc = np.broadcast_to(self.z.coords, v_amb.shape)
        F = M.exp_batch(zc, v_amb)
        g = (F - self.z.coords) @ self.basis.T
        m = (F @ self.z.coords - 1.0)[:, None]
        fiber = M.fiber_from_coeffs(m, self.sigma)
        log_jac = (self.d - 1) * np.log(np.sinc(rho / math.pi))
        rho_sq = rho * rho
        g_sq = np.sum(g * g, axis=-1)
        return (self.density.log_density_batch(F) + log_jac
                + (rho_sq - g_sq) / (2.0 * self.sigma**2) + np.log(fiber))

    def expectation(self, values: np.ndarray) -> np.ndarray:
        return self.weights @ values

    def stein_residual(self) -> float:
        """|| E[v]/sigma^2 - E[grad_v log a] || via central differences."""
        lhs = self.expectation(self.coords) / self.sigma**2
        h = self.fd_step
        grad = np.empty_like(self.coords)
        for i in range(self.d):
            e = np.zeros(self.d)
            e[i] = h
            grad[:, i] = (self._log_a(self.coords + e) - self._log_a(self.coords - e)) / (2.0 * h)
        rhs = self.expectation(grad)
        return float(np.linalg.norm(lhs - rhs))

    def moment(self, k: int) -> float:
        if not 1 <= int(k) <= 6:
            raise ValueError("moment order k must be in [1, 6]")
        rho = np.linalg.norm(self.coords, axis=-1)
        return float(self.expectation(rho ** k))

    def mean_v(self) -> np.ndarray:
        return self.expectation(self.coords)

    def chord_ratio(self) -> float:
        """||E[G(v) - v]|| / sigma^4: the chord remainder moment scale."""
        M = self.manifold
        v_amb = self.coords @ self.basis
        zc = np.broadcast_to(self.z.coords, v_amb.shape)
        F = M.exp_batch(zc, v_amb)
        g = (F - self.z.coords) @ self.basis.T
        return float(np.linalg.norm(self.expectation(g - self.coords))) / self.sigma**4


def stein_residual(z: ManifoldPoint, q: DensityModel, sigma: float, **kw) -> float:
    return FiberPosterior(z, q, sigma, **kw).stein_residual()


def posterior_moment(z: ManifoldPoint, q: DensityModel, sigma: float, k: int, **kw) -> float:
    return FiberPosterior(z, q, sigma, **kw).moment(k)


def chord_moment_ratio(z: ManifoldPoint, q: DensityModel, sigma: float, **kw) -> float:
    return FiberPosterior(z, q, sigma, **kw).chord_ratio()
