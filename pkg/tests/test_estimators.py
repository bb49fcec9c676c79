"""Local averaging, risk Monte Carlo, sweeps, and the coarsening split."""
import numpy as np
import pytest

from tubescore.densities import IsotropicGaussian, Uniform, VonMisesFisher
from tubescore.errors import ConfigError, EmptyWindow, ManifoldMismatch
from tubescore.estimators import (
    Dataset,
    KernelSpec,
    coarsening_check,
    collect,
    equal_mass_bins,
    first_coordinate_bins,
    local_average,
    mse_sweep,
    optimal_bandwidth,
    oracle_field,
    probe_points,
    projected_risk,
    pythagorean_gap,
    score_field,
    variance_sweep,
    zero_field,
    _estimate_at_probes,
    _WidenCount,
)
from tubescore.geometry import AffinePlane, Sphere
from tubescore.oracle import RBOracle
from tubescore.targets import flat_reduction_residuals, corrupt

S2 = Sphere(2)
MU = np.array([0.0, 0.0, 1.0])


@pytest.fixture(scope="module")
def vmf2():
    return VonMisesFisher(S2, MU, 2.0)


@pytest.fixture(scope="module")
def data(vmf2):
    return collect(vmf2, 0.1, 20_000, 11)


@pytest.fixture(scope="module")
def oracle(vmf2):
    return RBOracle(vmf2, 0.1)


class TestDataset:
    def test_in_tube_filter_and_counts(self, vmf2):
        batch = corrupt(vmf2, 0.2, 5000, 3)
        ds = Dataset.from_batch(batch)
        assert len(ds) + ds.n_discarded == 5000
        assert ds.n_discarded == batch.n_outside
        assert ds.foot.shape == ds.targets.shape

    def test_collect_deterministic(self, vmf2):
        a = collect(vmf2, 0.1, 1000, 5)
        b = collect(vmf2, 0.1, 1000, 5)
        assert np.array_equal(a.foot, b.foot)
        assert np.array_equal(a.targets, b.targets)

    def test_plane_never_discards(self):
        plane = AffinePlane.axis_aligned(2, 4)
        q = IsotropicGaussian(plane, [0.0, 0.0], 1.0)
        ds = collect(q, 0.3, 2000, 7)
        assert ds.n_discarded == 0 and len(ds) == 2000


class TestKernel:
    def test_epanechnikov_values(self):
        k = KernelSpec(1.0)
        assert k.weights(np.array([0.0, 0.5, 1.0, 2.0])) == pytest.approx(
            [1.0, 0.75, 0.0, 0.0])

    def test_validation(self):
        with pytest.raises(ConfigError):
            KernelSpec(0.0)
        with pytest.raises(ConfigError):
            KernelSpec(1.0, shape="gaussian")

    def test_widened(self):
        assert KernelSpec(0.3).widened().bandwidth == pytest.approx(0.6)


class TestLocalAverage:
    def test_single_sample_at_probe(self, vmf2, data):
        z = S2.point(data.foot[0])
        one = Dataset(vmf2, 0.1, data.foot[:1], data.targets[:1], 0)
        est = local_average(one, z, KernelSpec(0.5))
        assert np.allclose(est.vec, data.targets[0], atol=1e-12)

    def test_permutation_invariance(self, data):
        z = S2.point(np.array([1.0, 0.0, 0.0]))
        order = np.random.default_rng(0).permutation(len(data))
        a = local_average(data, z, KernelSpec(0.4)).vec
        b = local_average(data.permuted(order), z, KernelSpec(0.4)).vec
        assert np.allclose(a, b, atol=1e-12)

    def test_estimate_is_tangent(self, data):
        z = S2.point(np.array([0.0, 1.0, 0.0]))
        est = local_average(data, z, KernelSpec(0.4))
        assert abs(est.vec @ z.coords) <= 1e-12

    def test_uniform_symmetry_shrinks(self):
        u = Uniform(S2)
        z = S2.point(np.array([1.0, 0.0, 0.0]))
        small = collect(u, 0.1, 500, 2)
        big = collect(u, 0.1, 50_000, 2)
        e_small = np.linalg.norm(local_average(small, z, KernelSpec(0.8)).vec)
        e_big = np.linalg.norm(local_average(big, z, KernelSpec(0.8)).vec)
        assert e_big < e_small

    def test_error_decreases_with_n(self, vmf2, oracle):
        z = S2.point(np.array([1.0, 0.0, 0.0]))
        r = oracle.target(z).vec
        errs = []
        for n in (1000, 10_000, 100_000):
            per_rep = []
            for rep in range(5):
                ds = collect(vmf2, 0.1, n, 100 + rep)
                h = optimal_bandwidth(2.8, 0.1, n, 2)
                per_rep.append(np.sum(
                    (local_average(ds, z, KernelSpec(h)).vec - r) ** 2))
            errs.append(np.mean(per_rep))
        assert errs[0] > errs[1] > errs[2]

    def test_empty_window(self, data):
        z = S2.point(-MU)  # antipode of the mode: sparse region
        with pytest.raises(EmptyWindow):
            local_average(data, z, KernelSpec(1e-4))

    def test_manifold_mismatch(self, data):
        z3 = Sphere(3).point(np.array([1.0, 0.0, 0.0, 0.0]))
        with pytest.raises(ManifoldMismatch):
            local_average(data, z3, KernelSpec(0.4))


class TestProjectedRisk:
    def test_exact_field_gives_zero(self, vmf2, data):
        sub = Dataset(vmf2, 0.1, data.foot[:50], data.targets[:50], 0)

        def h(foot):
            return sub.targets
        assert projected_risk(sub, h).mean == 0.0

    def test_flat_reduction_consistency(self):
        plane = AffinePlane.axis_aligned(2, 4)
        tau = 0.9
        q = IsotropicGaussian(plane, [0.0, 0.0], tau)
        sigma = 0.15
        batch = corrupt(q, sigma, 20_000, 19)
        ds = Dataset.from_batch(batch)

        def tweedie(foot):
            return q.score_batch(foot) * (tau**2 / (tau**2 + sigma**2))
        lhs, rhs = flat_reduction_residuals(batch, lambda x: tweedie(x))
        risk = projected_risk(ds, tweedie)
        assert risk.mean == pytest.approx(lhs.mean(), rel=1e-12)
        assert risk.mean == pytest.approx(rhs.mean(), rel=1e-12)

    def test_field_shape_validated(self, data):
        with pytest.raises(ConfigError):
            projected_risk(data, lambda foot: foot[:, :2])

    def test_pythagorean_within_se(self, data, oracle):
        for field in (zero_field, score_field(data.density, 2.0)):
            gap = pythagorean_gap(data, field, oracle)
            assert abs(gap.gap_mean) <= 3.0 * gap.gap_se

    def test_gap_matches_risk_bookkeeping(self, data, oracle):
        field = score_field(data.density, 2.0)
        gap = pythagorean_gap(data, field, oracle)
        risk_h = projected_risk(data, field).mean
        risk_r = projected_risk(data, oracle_field(oracle)).mean
        h_vals = field(data.foot)
        r_vals = oracle.target_coords(data.foot)
        cross = np.mean(np.sum((r_vals - h_vals) ** 2, axis=1))
        assert gap.gap_mean == pytest.approx(risk_h - risk_r - cross, abs=1e-9)

    def test_rb_minimality(self, data, oracle):
        rb = projected_risk(data, oracle_field(oracle))
        for field in (zero_field, score_field(data.density),
                      score_field(data.density, 2.0)):
            other = projected_risk(data, field)
            tol = 3.0 * np.hypot(rb.se, other.se)
            assert rb.mean <= other.mean + tol

    def test_bayes_floor(self, vmf2):
        sigma = 0.05
        ds = collect(vmf2, sigma, 20_000, 23)
        rb = projected_risk(ds, oracle_field(RBOracle(vmf2, sigma)))
        assert 0.9 <= rb.mean * sigma**2 / 2.0 <= 1.1


class TestVarianceSweep:
    def test_slope_and_columns(self, vmf2):
        res = variance_sweep(vmf2, [0.05, 0.1, 0.2], 5000, 3,
                             rb_subsample=500)
        assert -2.2 <= res.slope <= -1.8
        assert res.raw_second_moment.shape == (3,)
        # conditioned column stays order-1 while the raw one blows up
        assert res.rb_second_moment.max() < 3.0
        assert res.raw_second_moment[0] > 100.0
        assert np.all(res.discards >= 0)

    def test_deterministic(self, vmf2):
        a = variance_sweep(vmf2, [0.1, 0.2], 2000, 9, rb_subsample=200)
        b = variance_sweep(vmf2, [0.1, 0.2], 2000, 9, rb_subsample=200)
        assert np.array_equal(a.raw_second_moment, b.raw_second_moment)
        assert np.array_equal(a.rb_second_moment, b.rb_second_moment)

    def test_needs_two_sigmas(self, vmf2):
        with pytest.raises(ConfigError):
            variance_sweep(vmf2, [0.1], 100, 0)


class TestMSESweep:
    def test_rate_mode(self, vmf2):
        res = mse_sweep(vmf2, 0.1, [1000, 10_000], repetitions=4, seed=42)
        assert res.slope < 0
        assert np.isfinite(res.c) and res.c > 0
        assert np.all(res.h_used > 0)
        assert np.all(res.mse > 0)

    def test_fixed_and_callable_rules(self, vmf2):
        fixed = mse_sweep(vmf2, 0.1, [2000], h_rule=0.7, repetitions=3,
                          seed=1)
        assert fixed.h_used[0] == pytest.approx(0.7)
        called = mse_sweep(vmf2, 0.1, [2000], h_rule=lambda n: 0.7,
                           repetitions=3, seed=1)
        assert np.array_equal(fixed.mse, called.mse)

    def test_small_h_blows_up(self, vmf2):
        probes = probe_points(vmf2, 5, 4)
        wide = mse_sweep(vmf2, 0.1, [1000], h_rule=0.9, repetitions=4,
                         seed=5, probes=probes)
        narrow = mse_sweep(vmf2, 0.1, [1000], h_rule=0.225, repetitions=4,
                           seed=5, probes=probes)
        assert narrow.mse[0] > 2.0 * wide.mse[0]

    def test_deterministic(self, vmf2):
        a = mse_sweep(vmf2, 0.1, [1000], h_rule=0.5, repetitions=3, seed=8)
        b = mse_sweep(vmf2, 0.1, [1000], h_rule=0.5, repetitions=3, seed=8)
        assert np.array_equal(a.mse, b.mse)

    def test_validation(self, vmf2):
        with pytest.raises(ConfigError):
            mse_sweep(vmf2, 0.1, [], repetitions=3)
        with pytest.raises(ConfigError):
            mse_sweep(vmf2, 0.1, [100], repetitions=0)
        with pytest.raises(ConfigError):
            mse_sweep(vmf2, 0.1, [100], h_rule=-0.5, repetitions=2)

    def test_probe_points_strong_scores(self, vmf2):
        pts = probe_points(vmf2, 3, 8)
        norms = np.linalg.norm(vmf2.score_batch(pts), axis=1)
        assert norms.min() >= 1.0  # kappa=2 tops out at 2
        again = probe_points(vmf2, 3, 8)
        assert np.array_equal(pts, again)

    def test_widening_counted_then_raises(self, vmf2, data):
        # foot cluster at geodesic distance ~0.3 from the probe: h=0.2
        # misses, the doubled 0.4 reaches, so one widen event is recorded
        z = S2.point(np.array([1.0, 0.0, 0.0]))
        dists = S2.distance_to_batch(data.foot, z.coords)
        ring = (dists > 0.25) & (dists < 0.35)
        ds = Dataset(vmf2, 0.1, data.foot[ring], data.targets[ring], 0)
        widen = _WidenCount()
        out = _estimate_at_probes(ds, z.coords[None, :], 0.2, widen)
        assert widen.count == 1 and np.all(np.isfinite(out))
        with pytest.raises(EmptyWindow):
            _estimate_at_probes(ds, z.coords[None, :], 0.05, _WidenCount())


class TestCoarsening:
    def test_equal_mass_bins(self):
        rng = np.random.default_rng(0)
        vals = rng.standard_normal(10_000)
        edges = equal_mass_bins(vals, 8)
        assert edges.shape == (7,)
        assert np.all(np.diff(edges) > 0)
        counts = np.bincount(np.searchsorted(edges, vals), minlength=8)
        assert counts.min() > 1100 and counts.max() < 1400

    def test_identity_coarsening(self, data, oracle):
        res = coarsening_check(data, "identity", oracle=oracle)
        assert res.coarsening_term == 0.0
        assert abs(res.gap_mean) <= 3.0 * res.gap_se

    def test_constant_coarsening(self, vmf2, data, oracle):
        calib = collect(vmf2, 0.1, 20_000, 12)
        res = coarsening_check(data, "constant", oracle=oracle,
                               calibration=calib)
        assert res.coarsening_term > 0.0
        assert abs(res.gap_mean) <= 3.0 * res.gap_se

    def test_binned_coarsening(self, vmf2, data, oracle):
        calib = collect(vmf2, 0.1, 20_000, 12)
        stat = first_coordinate_bins(calib.foot, 8)
        res = coarsening_check(data, stat, oracle=oracle, calibration=calib)
        assert abs(res.gap_mean) <= 3.0 * res.gap_se
        # three terms plus the paired residual reproduce the total exactly
        assert res.total == pytest.approx(
            res.fiber_term + res.coarsening_term + res.approx_term
            + res.gap_mean, abs=1e-9)

    def test_validation(self, data, oracle):
        with pytest.raises(ConfigError):
            coarsening_check(data, "constant", oracle=oracle)
        with pytest.raises(ConfigError):
            coarsening_check(data, "nonsense", oracle=oracle)
        with pytest.raises(ConfigError):
            coarsening_check(data, lambda foot: np.zeros(len(foot)),
                             oracle=oracle)
