"""Quadrature oracle: flat closed forms, symmetry, expansion coefficients,
posterior identities, and convergence behavior."""
import math

import numpy as np
import pytest

from tubescore.densities import (
    IsotropicGaussian,
    ProductVonMises,
    Uniform,
    VonMisesFisher,
)
from tubescore.errors import (
    ConfigError,
    DegenerateScore,
    ManifoldMismatch,
    QuadratureNotConverged,
    UnsupportedManifold,
)
from tubescore.geometry import AffinePlane, FlatTorus, Sphere
from tubescore.oracle import (
    FiberPosterior,
    RBOracle,
    auto_resolution,
    chord_moment_ratio,
    extract_extrinsic_coefficient,
    extrinsic_term,
    posterior_moment,
    predicted_expansion,
    rb_target,
    score_second_moment,
    stein_residual,
)

PLANE = AffinePlane.axis_aligned(2, 4)
TAU = 0.9


def flat_density():
    return IsotropicGaussian(PLANE, [0.0, 0.0], TAU)


def sphere_vmf(d, kappa=2.0):
    mu = np.zeros(d + 1)
    mu[-1] = 1.0
    return VonMisesFisher(Sphere(d), mu, kappa)


def equator_point(d):
    zc = np.zeros(d + 1)
    zc[0] = 1.0
    return Sphere(d).point(zc)


class TestFlatOracle:
    def test_matches_closed_form_tweedie_score(self):
        q = flat_density()
        rng = np.random.default_rng(5)
        pts = PLANE.embed(TAU * rng.standard_normal((50, 2)))
        for sig in (0.05, 0.1, 0.2, 0.4):
            oracle = RBOracle(q, sig)
            got = oracle.target_coords(pts)
            expect = PLANE.embed_tangent(-PLANE.chart(pts) / (TAU**2 + sig**2))
            assert np.abs(got - expect).max() <= 1e-6
            assert oracle.convergence_report["checked"]

    def test_second_order_remainder_matches_closed_form(self):
        # r - s - sigma^2 b = -t sigma^4 / (tau^4 (tau^2 + sigma^2)) exactly
        q = flat_density()
        z = PLANE.point(PLANE.embed(np.array([[1.0, -0.4]]))[0])
        t_norm = np.linalg.norm(PLANE.chart(z.coords[None])[0])
        for sig in (0.1, 0.3):
            r = rb_target(z, q, sig).vec
            ex = predicted_expansion(z, q, sig)
            resid = np.linalg.norm(r - ex.score.vec - sig**2 * ex.tweedie.vec)
            closed = t_norm * sig**4 / (TAU**4 * (TAU**2 + sig**2))
            assert resid == pytest.approx(closed, rel=1e-6)

    def test_second_order_slope(self):
        q = flat_density()
        z = PLANE.point(PLANE.embed(np.array([[1.0, -0.4]]))[0])
        sigs = np.geomspace(0.05, 0.4, 7)
        vals = []
        for sig in sigs:
            r = rb_target(z, q, sig).vec
            ex = predicted_expansion(z, q, sig)
            vals.append(np.linalg.norm(r - ex.score.vec - sig**2 * ex.tweedie.vec))
        slope = np.polyfit(np.log(sigs), np.log(vals), 1)[0]
        assert slope >= 3.8


class TestSymmetry:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_uniform_sphere_target_vanishes(self, d):
        r = rb_target(equator_point(d), Uniform(Sphere(d)), 0.1).vec
        assert np.linalg.norm(r) <= 1e-8

    def test_uniform_torus_target_vanishes(self):
        T2 = FlatTorus(1.0, 1.0)
        z = T2.point(np.array([1.0, 0.0, 1.0, 0.0]))
        assert np.linalg.norm(rb_target(z, Uniform(T2), 0.1).vec) <= 1e-8


class TestExpansion:
    def test_leading_order_plateau(self):
        q = sphere_vmf(2)
        z = Sphere(2).point(np.array([math.sqrt(1 - 0.09), 0.0, 0.3]))
        ratios = []
        for sig in (0.1, 0.05, 0.025):
            r = rb_target(z, q, sig).vec
            ratios.append(np.linalg.norm(r - q.score(z).vec) / sig**2)
        assert max(ratios) / min(ratios) < 1.5

    def test_full_prediction_remainder_shrinks(self):
        q = sphere_vmf(2)
        z = Sphere(2).point(np.array([math.sqrt(1 - 0.09), 0.0, 0.3]))
        rems = []
        for sig in (0.1, 0.05):
            r = rb_target(z, q, sig).vec
            ex = predicted_expansion(z, q, sig)
            rems.append(np.linalg.norm(r - ex.predicted.vec) / sig**2)
        # the scaled remainder should drop markedly (roughly like sigma^2)
        assert rems[1] < 0.5 * rems[0]

    def test_terms_assemble_exactly(self):
        q = sphere_vmf(3)
        z = equator_point(3)
        ex = predicted_expansion(z, q, 0.07)
        assembled = ex.score.vec + 0.07**2 * (ex.tweedie.vec + ex.extrinsic.vec)
        assert np.array_equal(ex.predicted.vec, assembled)

    def test_uniform_expansion_is_zero(self):
        ex = predicted_expansion(equator_point(2), Uniform(Sphere(2)), 0.1)
        assert np.linalg.norm(ex.predicted.vec) == 0.0

    @pytest.mark.parametrize("d,coef", [(1, 0.5), (2, 0.0), (3, -0.5), (4, -1.0)])
    def test_sphere_extrinsic_term_is_scalar_multiple(self, d, coef):
        q = sphere_vmf(d)
        z = equator_point(d)
        g = extrinsic_term(z, q).vec
        assert np.allclose(g, coef * q.score(z).vec, atol=1e-12)

    def test_torus_extrinsic_term_operator(self):
        # (W_H/2 - Ric) = diag(1/(2 R1^2), 1/(2 R2^2)) in the angle frame
        T = FlatTorus(1.0, 2.0)
        q = ProductVonMises(T, (1.5, 0.7), (0.3, -0.5))
        z = T.point(T.from_angles(np.array([0.8, 1.9])))
        g = extrinsic_term(z, q).vec
        basis = T.tangent_basis(z.coords)
        s = q.score(z).vec
        expect = (basis[0] @ s) * 0.5 * basis[0] + (basis[1] @ s) * 0.125 * basis[1]
        assert np.allclose(g, expect, atol=1e-12)

    def test_extrinsic_forms_agree(self):
        rng = np.random.default_rng(17)
        for M, q in ((Sphere(3), sphere_vmf(3)),
                     (FlatTorus(1.0, 2.0),
                      ProductVonMises(FlatTorus(1.0, 2.0), (1.0, 2.0), (0.1, 0.2)))):
            for coords in M.random_coords(rng, 20):
                bundle = M.curvature_bundle(M.point(coords))
                a = bundle.extrinsic_operator()
                b = bundle.extrinsic_operator_shape_form()
                assert np.abs(a - b).max() <= 1e-10

    def test_plane_extrinsic_is_zero(self):
        q = flat_density()
        z = PLANE.point(PLANE.embed(np.array([[0.4, 0.2]]))[0])
        assert np.linalg.norm(extrinsic_term(z, q).vec) == 0.0


class TestCoefficientExtraction:
    @pytest.mark.parametrize("d,pred", [(1, 0.5), (3, -0.5)])
    def test_sphere_coefficients(self, d, pred):
        fit = extract_extrinsic_coefficient(equator_point(d), sphere_vmf(d), 0.05)
        assert abs(fit.alpha - pred) <= 0.01
        assert fit.orthogonal <= 1e-6

    def test_sphere2_coefficient_vanishes(self):
        fit = extract_extrinsic_coefficient(equator_point(2), sphere_vmf(2), 0.05)
        assert abs(fit.alpha) <= 0.01

    def test_torus_coefficient(self):
        T2 = FlatTorus(1.0, 1.0)
        q = ProductVonMises(T2, (1.5, 1.5), (0.0, 0.0))
        z = T2.point(T2.from_angles(np.array([0.9, -1.3])))
        fit = extract_extrinsic_coefficient(z, q, 0.05)
        assert abs(fit.alpha - 0.5) <= 0.01

    def test_convergence_trend_in_sigma(self):
        q = sphere_vmf(1)
        z = equator_point(1)
        devs = [abs(extract_extrinsic_coefficient(z, q, s).alpha - 0.5)
                for s in (0.05, 0.08)]
        assert devs[0] <= devs[1] + 0.05

    def test_degenerate_score_raises(self):
        q = sphere_vmf(2)
        pole = Sphere(2).point(np.array([0.0, 0.0, 1.0]))  # score vanishes at mu
        with pytest.raises(DegenerateScore):
            extract_extrinsic_coefficient(pole, q, 0.05)


class TestPosteriorSuite:
    def test_stein_residual_circle(self):
        assert stein_residual(equator_point(1), sphere_vmf(1), 0.1) <= 1e-5

    def test_stein_residual_sphere2(self):
        assert stein_residual(equator_point(2), sphere_vmf(2), 0.1) <= 1e-4

    def test_stein_uniform_symmetry(self):
        assert stein_residual(equator_point(1), Uniform(Sphere(1)), 0.1) <= 1e-8

    @pytest.mark.parametrize("d", [1, 2])
    def test_second_moment_near_gaussian(self, d):
        m2 = posterior_moment(equator_point(d), sphere_vmf(d), 0.025, 2)
        assert 0.8 * d <= m2 / 0.025**2 <= 1.2 * d

    def test_fourth_moment_plateau(self):
        vals = [posterior_moment(equator_point(2), sphere_vmf(2), s, 4) / s**4
                for s in (0.1, 0.05, 0.025)]
        assert max(vals) / min(vals) < 1.5
        # limiting Gaussian value d(d+2) = 8
        assert vals[-1] == pytest.approx(8.0, rel=0.05)

    def test_first_moment_half_normal_limit(self):
        m1 = posterior_moment(equator_point(1), Uniform(Sphere(1)), 0.025, 1)
        assert m1 / 0.025 == pytest.approx(math.sqrt(2.0 / math.pi), rel=0.01)
        # signed mean vanishes by symmetry
        post = FiberPosterior(equator_point(1), Uniform(Sphere(1)), 0.025)
        assert np.linalg.norm(post.mean_v()) <= 1e-10

    def test_chord_ratio_plateau(self):
        vals = [chord_moment_ratio(equator_point(2), sphere_vmf(2), s)
                for s in (0.1, 0.05, 0.025)]
        assert max(vals) / min(vals) < 1.5

    def test_chord_ratio_uniform_is_zero(self):
        assert chord_moment_ratio(equator_point(2), Uniform(Sphere(2)), 0.1) <= 1e-6

    def test_moment_order_validated(self):
        with pytest.raises(ValueError):
            posterior_moment(equator_point(1), sphere_vmf(1), 0.1, 7)

    def test_unsupported_manifolds_rejected(self):
        with pytest.raises(UnsupportedManifold):
            stein_residual(equator_point(3), sphere_vmf(3), 0.1)
        T2 = FlatTorus(1.0, 1.0)
        q = ProductVonMises(T2, (1.0, 1.0))
        with pytest.raises(UnsupportedManifold):
            FiberPosterior(T2.point(np.array([1.0, 0, 1.0, 0])), q, 0.1)


class TestOracleMechanics:
    def test_sigma_clamp(self):
        q = sphere_vmf(2)
        for bad in (0.005, 0.6, -0.1):
            with pytest.raises(ConfigError):
                RBOracle(q, bad)

    def test_resolution_cap_raises(self):
        q = sphere_vmf(3)
        oracle = RBOracle(q, 0.05, max_nodes=10_000)
        with pytest.raises(QuadratureNotConverged):
            oracle.target(equator_point(3))

    def test_explicit_grid_path(self):
        q = sphere_vmf(2)
        z = equator_point(2)
        grid = Sphere(2).grid(auto_resolution(Sphere(2), 0.1))
        a = rb_target(z, q, 0.1, grid).vec
        b = rb_target(z, q, 0.1).vec
        assert np.allclose(a, b, atol=1e-10)

    def test_manifold_mismatch(self):
        q = sphere_vmf(2)
        with pytest.raises(ManifoldMismatch):
            rb_target(equator_point(3), q, 0.1)

    def test_batch_matches_single(self):
        q = sphere_vmf(2)
        rng = np.random.default_rng(23)
        pts = Sphere(2).random_coords(rng, 6)
        oracle = RBOracle(q, 0.1)
        batch = oracle.target_coords(pts)
        for i, row in enumerate(pts):
            single = oracle.target(Sphere(2).point(row)).vec
            assert np.allclose(batch[i], single, atol=1e-12)

    def test_generic_and_sphere_paths_agree(self):
        # the torus path exercises _eval_generic; cross-check the sphere
        # fast path against it by evaluating through split_chords directly
        q = sphere_vmf(2)
        oracle = RBOracle(q, 0.1, check_convergence=False)
        pts = Sphere(2).random_coords(np.random.default_rng(3), 4)
        fast = oracle.target_coords(pts)
        grid, logwq = oracle._grid(oracle.resolution)
        slow = oracle._eval_generic(pts, grid, logwq)
        slow = Sphere(2).tangent_project_batch(pts, slow)
        assert np.allclose(fast, slow, atol=1e-10)

    def test_auto_resolution_scales(self):
        assert auto_resolution(Sphere(2), 0.02) > auto_resolution(Sphere(2), 0.2)
        assert auto_resolution(PLANE, 0.1) == 64

    def test_torus_vmf_target_matches_prediction(self):
        T2 = FlatTorus(1.0, 1.0)
        q = ProductVonMises(T2, (1.5, 1.5), (0.0, 0.0))
        z = T2.point(T2.from_angles(np.array([0.9, -1.3])))
        r = rb_target(z, q, 0.05).vec
        ex = predicted_expansion(z, q, 0.05)
        assert np.linalg.norm(r - ex.predicted.vec) <= 2e-5

    def test_score_second_moment_quadrature(self):
        # E_q kappa^2 (1 - t^2) for vMF via the 1-D marginal
        q = sphere_vmf(2)
        marg = q.t_marginal()
        expect = 4.0 * marg.moment(lambda t: 1.0 - t * t)
        assert score_second_moment(q) == pytest.approx(expect, rel=1e-10)
