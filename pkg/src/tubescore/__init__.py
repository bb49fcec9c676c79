"""Score targets, quadrature oracles and estimators on embedded manifolds."""

__version__ = "0.1.0"

from . import errors
from .geometry import (
    AffinePlane,
    CurvatureBundle,
    FlatTorus,
    Manifold,
    ManifoldPoint,
    QuadratureGrid,
    Sphere,
    TangentVector,
    monte_carlo_grid,
    quadrature_grid,
)
from .densities import (
    DensityModel,
    IsotropicGaussian,
    ProductVonMises,
    SphereTMarginal,
    Uniform,
    VonMisesFisher,
)
from .targets import (
    CorruptedBatch,
    corrupt,
    flat_ambient_field,
    flat_reduction_residuals,
    logmap_target,
    raw_tangent_target,
)
from .oracle import (
    FiberPosterior,
    RBOracle,
    chord_moment_ratio,
    extract_extrinsic_coefficient,
    extrinsic_term,
    posterior_moment,
    predicted_expansion,
    rb_target,
    score_second_moment,
    stein_residual,
)
from .estimators import (
    Dataset,
    KernelSpec,
    coarsening_check,
    collect,
    equal_mass_bins,
    first_coordinate_bins,
    local_average,
    mse_sweep,
    optimal_bandwidth,
    probe_points,
    projected_risk,
    pythagorean_gap,
    variance_sweep,
)
from .langevin import (
    ChainConfig,
    DriftSpec,
    bootstrap_mean_difference,
    marginal_diagnostic,
    run_chain,
    run_chains,
    two_sample_ks,
)

__all__ = [
    "AffinePlane",
    "ChainConfig",
    "CorruptedBatch",
    "CurvatureBundle",
    "Dataset",
    "DensityModel",
    "DriftSpec",
    "FiberPosterior",
    "FlatTorus",
    "IsotropicGaussian",
    "KernelSpec",
    "Manifold",
    "ManifoldPoint",
    "ProductVonMises",
    "QuadratureGrid",
    "RBOracle",
    "Sphere",
    "SphereTMarginal",
    "TangentVector",
    "Uniform",
    "VonMisesFisher",
    "__version__",
    "bootstrap_mean_difference",
    "chord_moment_ratio",
    "coarsening_check",
    "collect",
    "corrupt",
    "equal_mass_bins",
    "errors",
    "extract_extrinsic_coefficient",
    "extrinsic_term",
    "first_coordinate_bins",
    "flat_ambient_field",
    "flat_reduction_residuals",
    "local_average",
    "logmap_target",
    "marginal_diagnostic",
    "monte_carlo_grid",
    "mse_sweep",
    "optimal_bandwidth",
    "posterior_moment",
    "predicted_expansion",
    "probe_points",
    "projected_risk",
    "pythagorean_gap",
    "quadrature_grid",
    "raw_tangent_target",
    "rb_target",
    "run_chain",
    "run_chains",
    "score_second_moment",
    "stein_residual",
    "two_sample_ks",
    "variance_sweep",
]
