"""Experiment drivers behind the command-line harness.

Each driver runs one self-contained study at a reproducible seed and returns
plain dictionaries of Python scalars and lists, ready for serialization.
Nothing here prints or writes files; the CLI owns formatting.
"""
from __future__ import annotations

import numpy as np

from .densities import (
    DensityModel,
    IsotropicGaussian,
    ProductVonMises,
    Uniform,
    VonMisesFisher,
)
from .errors import ConfigError
from .estimators import (
    coarsening_check,
    collect,
    first_coordinate_bins,
    mse_sweep,
    optimal_bandwidth,
    oracle_field,
    probe_points,
    projected_risk,
    pythagorean_gap,
    score_field,
    variance_sweep,
    zero_field,
)
from .geometry import AffinePlane, FlatTorus, Sphere
from .langevin import (
    ChainConfig,
    DriftSpec,
    marginal_diagnostic,
    run_chains,
    two_sample_ks,
)
from .oracle import (
    FiberPosterior,
    RBOracle,
    extract_extrinsic_coefficient,
    extrinsic_term,
    predicted_expansion,
    rb_target,
    score_second_moment,
    stein_residual,
)
from .rng import derive_rng
from .targets import corrupt, flat_reduction_residuals

GEOMETRY_SUITE = (
    ("sphere1", lambda: Sphere(1)),
    ("sphere2", lambda: Sphere(2)),
    ("sphere3", lambda: Sphere(3)),
    ("sphere4", lambda: Sphere(4)),
    ("torus_1_1", lambda: FlatTorus(1.0, 1.0)),
    ("torus_1_2", lambda: FlatTorus(1.0, 2.0)),
    ("plane_2_4", lambda: AffinePlane.axis_aligned(2, 4)),
)


def _native_rows(rows):
    return [[v if isinstance(v, int) else float(v) for v in row]
            for row in rows]


def run_geometry_check(seed: int = 0, n_points: int = 100) -> dict:
    """Curvature-identity residuals at random points of every geometry."""
    rows = []
    for name, make in GEOMETRY_SUITE:
        M = make()
        rng = derive_rng(seed, f"experiments.geometry.{name}")
        pts = M.random_coords(rng, n_points)
        gauss = 0.0
        frame = 0.0
        closed = 0.0
        for coords in pts:
            bundle = M.curvature_bundle(M.point(coords))
            gauss = max(gauss, float(bundle.gauss_residual()))
            frame = max(frame, float(bundle.frame_residual()))
            if isinstance(M, Sphere):
                d = M.intrinsic_dim
                closed = max(
                    closed,
                    float(np.abs(bundle.weingarten_mean - d * np.eye(d)).max()),
                    float(np.abs(bundle.ricci - (d - 1) * np.eye(d)).max()),
                )
        row = {"manifold": name, "gauss_residual": gauss,
               "frame_residual": frame}
        if isinstance(M, Sphere):
            row["closed_form_residual"] = closed
        rows.append(row)
    return {
        "n_points": n_points,
        "seed": seed,
        "rows": rows,
        "max_gauss_residual": max(r["gauss_residual"] for r in rows),
        "max_frame_residual": max(r["frame_residual"] for r in rows),
        "max_closed_form_residual": max(
            r.get("closed_form_residual", 0.0) for r in rows),
    }


def flat_test_fields(plane: AffinePlane, tau: float, sigma: float):
    """Five ambient test fields covering the shapes the reduction must hit:
    zero, the Bayes-optimal field, and three generic nonlinearities."""
    return [
        ("zero", lambda p: np.zeros_like(p)),
        ("bayes", lambda p: plane.embed_tangent(
            -plane.chart(p) / (tau**2 + sigma**2))),
        ("sinusoid", lambda p: np.sin(p)),
        ("affine", lambda p: 2.0 * p + 1.0),
        ("mixed", lambda p: np.stack(
            [p[:, 1], -p[:, 0]]
            + [p[:, j] ** 2 for j in range(2, p.shape[1])], axis=-1)),
    ]


def run_flat_check(d: int = 2, ambient: int = 4, tau: float = 1.0,
                   sigma: float = 0.1, n: int = 100_000,
                   seed: int = 0) -> dict:
    """Exactness of the flat reduction plus the second-order remainder."""
    plane = AffinePlane.axis_aligned(d, ambient)
    q = IsotropicGaussian(plane, np.zeros(d), tau)
    batch = corrupt(q, sigma, n, seed)

    worst = 0.0
    per_field = []
    for name, h in flat_test_fields(plane, tau, sigma):
        lhs, rhs = flat_reduction_residuals(batch, h)
        rel = float(np.max(np.abs(lhs - rhs) / (1.0 + lhs)))
        per_field.append({"field": name, "max_rel_residual": rel})
        worst = max(worst, rel)

    # closed-form agreement of the quadrature target at seeded points
    rng = derive_rng(seed, "experiments.flat.points")
    pts = plane.embed(tau * rng.standard_normal((50, d)))
    oracle_err = 0.0
    for sig in (0.05, sigma, 0.4):
        got = RBOracle(q, sig).target_coords(pts)
        expect = plane.embed_tangent(-plane.chart(pts) / (tau**2 + sig**2))
        oracle_err = max(oracle_err, float(np.abs(got - expect).max()))

    # the remainder after the full second-order prediction decays ~ sigma^4
    probe_chart = 0.9 * (-1.0) ** np.arange(d)
    z = plane.point(plane.embed(probe_chart[None])[0])
    sigs = np.geomspace(0.05, 0.4, 7)
    rems = []
    for sig in sigs:
        r = rb_target(z, q, float(sig)).vec
        ex = predicted_expansion(z, q, float(sig))
        rems.append(float(np.linalg.norm(r - ex.predicted.vec)))
    slope = float(np.polyfit(np.log(sigs), np.log(rems), 1)[0])

    return {
        "d": d, "ambient": ambient, "tau": tau, "sigma": sigma, "n": n,
        "seed": seed,
        "fields": per_field,
        "max_rel_residual": worst,
        "oracle_closed_form_error": oracle_err,
        "second_order_slope": slope,
        "second_order_sigmas": [float(s) for s in sigs],
        "second_order_remainders": rems,
    }


def sphere_vmf(d: int, kappa: float) -> VonMisesFisher:
    """vMF on the unit d-sphere with the mean at the last coordinate axis."""
    mu = np.zeros(d + 1)
    mu[-1] = 1.0
    return VonMisesFisher(Sphere(d), mu, kappa)


def _oracle_kwargs(resolution=None, max_nodes=None) -> dict:
    kw = {}
    if resolution is not None:
        kw["resolution"] = int(resolution)
    if max_nodes is not None:
        kw["max_nodes"] = int(max_nodes)
    return kw


def run_variance_collapse(q: DensityModel, sigma_grid, n: int, seed: int,
                          rb_subsample: int = 20_000,
                          resolution: int | None = None,
                          max_nodes: int | None = None) -> dict:
    """Raw vs conditioned second moments across sigma, with the -2 slope."""
    res = variance_sweep(q, sigma_grid, n, seed, rb_subsample=rb_subsample,
                         oracle_kwargs=_oracle_kwargs(resolution, max_nodes))
    d = q.manifold.intrinsic_dim
    i0 = int(np.argmin(res.sigma))
    ssm = float(score_second_moment(q))
    return {
        "columns": list(res.columns),
        "rows": _native_rows(res.rows()),
        "slope": float(res.slope),
        "n": int(res.n),
        "rb_subsample": int(res.rb_subsample),
        "seed": seed,
        "smallest_sigma": float(res.sigma[i0]),
        "smallest_sigma_ratio": float(
            res.raw_second_moment[i0] * res.sigma[i0] ** 2 / d),
        "score_second_moment": ssm,
        "max_rb_deviation": float(
            np.abs(res.rb_second_moment - ssm).max() / ssm),
    }


def default_extrinsic_models(kappa: float = 2.0):
    """The standard comparison set: three spheres and the square torus."""
    return [
        ("sphere1", sphere_vmf(1, kappa)),
        ("sphere2", sphere_vmf(2, kappa)),
        ("sphere3", sphere_vmf(3, kappa)),
        ("torus_1_1", ProductVonMises(FlatTorus(1.0, 1.0), (1.5, 1.5),
                                      (0.0, 0.0))),
    ]


def default_extrinsic_probe(q: DensityModel):
    """A fixed evaluation point with a healthy score for each geometry."""
    M = q.manifold
    if isinstance(M, Sphere):
        zc = np.zeros(M.ambient_dim)
        zc[0] = 1.0  # on the equator relative to the mean axis e_D
        return M.point(zc)
    if isinstance(M, FlatTorus):
        return M.point(M.from_angles(np.array([0.9, -1.3])))
    if isinstance(M, AffinePlane):
        chart = 0.9 * (-1.0) ** np.arange(M.intrinsic_dim)
        return M.point(M.embed(chart[None])[0])
    raise ConfigError(f"no default probe for {type(M).__name__}")


def run_extrinsic_coef(models, sigmas, resolution: int | None = None,
                       max_nodes: int | None = None) -> dict:
    """Fitted curvature coefficients against the operator prediction.

    The prediction is the score-aligned component of the curvature
    correction, exact for any geometry in the comparison set.
    """
    kw = _oracle_kwargs(resolution, max_nodes)
    rows = []
    for name, q in models:
        z = default_extrinsic_probe(q)
        s = q.score(z).vec
        s_sq = float(s @ s)
        g = extrinsic_term(z, q).vec
        alpha_pred = float(g @ s) / s_sq
        for sig in sigmas:
            oracle = RBOracle(q, float(sig), **kw)
            fit = extract_extrinsic_coefficient(z, q, float(sig),
                                                oracle=oracle)
            rows.append({
                "manifold": name, "sigma": float(sig),
                "alpha_hat": float(fit.alpha), "alpha_pred": alpha_pred,
                "orth_residual": float(fit.orthogonal),
            })
    return {"columns": ["manifold", "sigma", "alpha_hat", "alpha_pred",
                        "orth_residual"],
            "rows": rows,
            "sigmas": [float(s) for s in sigmas]}


def run_stein_suite(sigma: float = 0.1, moment_sigma: float = 0.025,
                    kappa: float = 2.0, logmap_n: int = 100_000,
                    seed: int = 0) -> dict:
    """Posterior identities, moment windows, and both remainder plateaus."""
    q1 = sphere_vmf(1, kappa)
    q2 = sphere_vmf(2, kappa)
    z1 = Sphere(1).point(np.array([1.0, 0.0]))
    z2 = Sphere(2).point(np.array([1.0, 0.0, 0.0]))

    out = {
        "sigma": sigma,
        "moment_sigma": moment_sigma,
        "seed": seed,
        "stein_residual_sphere1": float(stein_residual(z1, q1, sigma)),
        "stein_residual_sphere2": float(stein_residual(z2, q2, sigma)),
        "stein_residual_uniform": float(
            stein_residual(z1, Uniform(Sphere(1)), sigma)),
    }

    moments = {}
    for d, q, z in ((1, q1, z1), (2, q2, z2)):
        post = FiberPosterior(z, q, moment_sigma)
        moments[f"sphere{d}"] = float(post.moment(2) / moment_sigma**2)
    out["second_moment_over_sigma2"] = moments

    plateau_sigmas = (0.1, 0.05, 0.025)
    chord = {}
    for d, q, z in ((1, q1, z1), (2, q2, z2)):
        chord[f"sphere{d}"] = [
            float(FiberPosterior(z, q, s).chord_ratio())
            for s in plateau_sigmas]
    out["chord_ratio_sigmas"] = list(plateau_sigmas)
    out["chord_ratios"] = chord
    out["chord_plateau_factor"] = float(max(
        max(v) / min(v) for v in chord.values()))

    # chord-vs-logmap targets differ by O(sigma) per sample, so the mean
    # squared gap divided by sigma^2 settles to a constant
    ratios = []
    for s in plateau_sigmas:
        batch = corrupt(q2, s, logmap_n, seed)
        raw = batch.raw_targets()
        logm, ok = batch.logmap_targets()
        keep = ok & batch.in_tube
        diff = np.sum((raw[keep] - logm[keep]) ** 2, axis=1)
        ratios.append(float(diff.mean()) / s**2)
    out["logmap_ratio_sigmas"] = list(plateau_sigmas)
    out["logmap_ratios"] = ratios
    out["logmap_plateau_factor"] = float(max(ratios) / min(ratios))
    return out


def _calibration_seed(seed: int) -> int:
    return int(derive_rng(seed, "experiments.calibration").integers(2**63))


def run_pythagorean(kappa: float = 2.0, sigma: float = 0.1, n: int = 100_000,
                    seed: int = 0, resolution: int | None = None,
                    max_nodes: int | None = None) -> dict:
    """Three-term decomposition and the risk-gap identity on the 2-sphere."""
    q = sphere_vmf(2, kappa)
    oracle = RBOracle(q, sigma, **_oracle_kwargs(resolution, max_nodes))
    data = collect(q, sigma, n, seed)
    calib = collect(q, sigma, n, _calibration_seed(seed))

    coarsenings = {}
    for name, stat in (("identity", "identity"), ("constant", "constant"),
                       ("bin8", first_coordinate_bins(calib.foot, 8))):
        res = coarsening_check(data, stat, oracle=oracle, calibration=calib)
        coarsenings[name] = {
            "fiber_term": float(res.fiber_term),
            "coarsening_term": float(res.coarsening_term),
            "approx_term": float(res.approx_term),
            "total": float(res.total),
            "gap_mean": float(res.gap_mean),
            "gap_se": float(res.gap_se),
            "gap_over_se": float(abs(res.gap_mean) / res.gap_se),
        }

    gaps = {}
    for name, field in (("zero", zero_field),
                        ("twice_score", score_field(q, 2.0))):
        gap = pythagorean_gap(data, field, oracle)
        gaps[name] = {"gap_mean": float(gap.gap_mean),
                      "gap_se": float(gap.gap_se),
                      "gap_over_se": float(gap.within)}

    rb_risk = projected_risk(data, oracle_field(oracle))
    return {
        "sigma": sigma, "n": n, "seed": seed,
        "coarsenings": coarsenings,
        "pythagorean": gaps,
        "rb_risk": float(rb_risk.mean),
        "rb_risk_se": float(rb_risk.se),
        "rb_risk_sigma2_over_d": float(
            rb_risk.mean * sigma**2 / q.manifold.intrinsic_dim),
    }


def run_finite_sample(kappa: float = 2.0, sigma: float = 0.1,
                      n_grid=(1000, 10_000, 100_000), repetitions: int = 20,
                      seed: int = 0) -> dict:
    """Bandwidth rate study in three modes sharing probes and datasets:
    the calibrated shrinking rule, a frozen bandwidth, and undersized
    bandwidths at the smallest sample size."""
    q = sphere_vmf(2, kappa)
    n_grid = sorted(int(v) for v in n_grid)
    d = q.manifold.intrinsic_dim
    probes = probe_points(q, seed, 8)

    rate = mse_sweep(q, sigma, n_grid, "optimal", repetitions, seed,
                     probes=probes)
    h_frozen = float(rate.h_used[0])
    fixed = mse_sweep(q, sigma, n_grid, h_frozen, repetitions, seed,
                      probes=probes)
    pilot = optimal_bandwidth(1.0, sigma, n_grid[0], d)
    small_hs = [pilot, 0.5 * pilot, 0.25 * pilot]
    small = [mse_sweep(q, sigma, n_grid[:1], h, repetitions, seed,
                       probes=probes) for h in small_hs]

    rows = []
    for res, mode in ((rate, "rate"), (fixed, "fixed")):
        for n_val, h, m, s in res.rows():
            rows.append({"mode": mode, "n": int(n_val), "h": float(h),
                         "mse": float(m), "se": float(s)})
    for res in small:
        n_val, h, m, s = next(iter(res.rows()))
        rows.append({"mode": "small_h", "n": int(n_val), "h": float(h),
                     "mse": float(m), "se": float(s)})

    small_mse = [float(r.mse[0]) for r in small]
    return {
        "sigma": sigma, "repetitions": repetitions, "seed": seed,
        "n_grid": [int(v) for v in n_grid],
        "columns": ["mode", "n", "h", "mse", "se"],
        "rows": rows,
        "rate_slope": float(rate.slope),
        "calibrated_c": float(rate.c),
        "widened": int(rate.widened + fixed.widened
                       + sum(r.widened for r in small)),
        "fixed_h": h_frozen,
        "fixed_plateau_ratio": float(fixed.mse[-1] / fixed.mse[-2]),
        "fixed_over_rate_at_largest_n": float(fixed.mse[-1] / rate.mse[-1]),
        "small_h_values": [float(h) for h in small_hs],
        "small_h_mse": small_mse,
        "small_h_blowup_ratio": float(small_mse[-1] / small_mse[0]),
    }


def run_langevin_suite(sigma: float = 0.3, kappa: float = 2.0,
                       step: float = 1e-3, seed: int = 0,
                       marginal_chains: int = 64,
                       marginal_steps: int = 20_000,
                       debias_chains: int = 512,
                       debias_steps: int = 30_000,
                       scaled_chains: int = 128,
                       scaled_steps: int = 20_000,
                       scale: float = 1.5) -> dict:
    """The three equilibrium studies: marginal fit on the 2-sphere,
    drift debiasing on the 3-sphere, and scaled-drift equivalence."""
    q2 = sphere_vmf(2, kappa)

    cfg = ChainConfig(step=step, n_steps=marginal_steps, seed=seed)
    samples = run_chains(q2, DriftSpec("intrinsic"), cfg, marginal_chains)
    diag = marginal_diagnostic(samples, q2)
    marginal = {
        "n_kept": int(diag.n), "ks": float(diag.ks),
        "mean_bias": float(diag.mean_bias),
        "mean_t": float(diag.mean_t),
        "target_mean": float(diag.target_mean),
        "n_chains": marginal_chains, "n_steps": marginal_steps,
    }

    q3 = sphere_vmf(3, kappa)
    alpha = 1.0 - 3.0 / 2.0
    cfg3 = ChainConfig(step=step, n_steps=debias_steps, seed=seed)
    raw = run_chains(q3, DriftSpec("raw_ambient", sigma, alpha), cfg3,
                     debias_chains)
    deb = run_chains(q3, DriftSpec("debiased", sigma, alpha), cfg3,
                     debias_chains)
    tm = float(q3.t_marginal().mean())
    t_raw = (raw @ q3.mu).mean(axis=1)
    t_deb = (deb @ q3.mu).mean(axis=1)
    # paired bootstrap over chains; both drifts share the chain noise, so
    # resampling the same chain indices cancels the common fluctuation
    rng = derive_rng(seed, "experiments.langevin.bootstrap")
    idx = rng.integers(0, t_raw.size, size=(4000, t_raw.size))
    diffs = (np.abs(t_deb[idx].mean(axis=1) - tm)
             - np.abs(t_raw[idx].mean(axis=1) - tm))
    lo, hi = np.quantile(diffs, [0.025, 0.975])
    debias = {
        "sigma": sigma,
        "raw_factor": float(1.0 + sigma**2 * alpha),
        "debiased_factor": float((1.0 + sigma**2 * alpha)
                                 * (1.0 - sigma**2 * alpha)),
        "target_mean": tm,
        "raw_bias": float(t_raw.mean() - tm),
        "debiased_bias": float(t_deb.mean() - tm),
        "abs_bias_difference": float(abs(t_deb.mean() - tm)
                                     - abs(t_raw.mean() - tm)),
        "bootstrap_ci": [float(lo), float(hi)],
        "n_chains": debias_chains, "n_steps": debias_steps,
    }

    q_scaled = sphere_vmf(2, scale * kappa)
    a = run_chains(q2, DriftSpec("intrinsic", scale=scale),
                   ChainConfig(step=step, n_steps=scaled_steps, seed=seed),
                   scaled_chains)
    b = run_chains(q_scaled, DriftSpec("intrinsic"),
                   ChainConfig(step=step, n_steps=scaled_steps, seed=seed + 1),
                   scaled_chains)
    scaled = {
        "scale": scale,
        "two_sample_ks": float(two_sample_ks(a @ q2.mu, b @ q2.mu)),
        "vs_analytic_ks": float(marginal_diagnostic(a, q_scaled).ks),
        "n_each": int(a.shape[0] * a.shape[1]),
        "n_chains": scaled_chains, "n_steps": scaled_steps,
    }

    return {"seed": seed, "step": step, "kappa": kappa,
            "marginal": marginal, "debias": debias, "scaled": scaled}
