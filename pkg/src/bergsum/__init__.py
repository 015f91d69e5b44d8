"""Power sums of the Bergman density matrix on model Kahler geometries.

The package computes sigma_b(m, x) = sum_i lambda_i(x)^b for the pointwise
density matrix of an L^2-orthonormal section basis of L^m tensor E, exactly
or to configurable precision, extracts the large-m expansion coefficients
empirically, and compares them with their closed curvature forms.
"""

__version__ = "0.1.0"

from .asymptotics import (
    CoefficientPrediction,
    ConvergenceProbe,
    ExpansionFit,
    SigmaSeries,
    convergence_probe,
    fit_expansion,
    log_m_corollary_check,
    power_compose,
    predict_coefficients,
    remainder_order_check,
)
from .geometry import (
    CONVENTION_LEDGER,
    BundleMetric,
    ChartPoint,
    CurvatureReport,
    KahlerPotential,
    PROFILES,
    bundle_scalar_curvature,
    curvature_report,
    direct_sum,
    flat_model,
    fs_twist_bundle,
    fubini_study,
    laplacian_power_rho,
    metric_tensor,
    perturbed_fs,
    scalar_curvature,
    trivial_bundle,
    volume_density,
)
from .quadrature import Integrator, beta_exact, dirichlet_exact
from .report import RunReport, emit_tables
from .runner import run_scenario, run_suite
from .scenarios import Scenario, catalog, parse_config
from .sections import (
    DensityMatrix,
    GramMatrix,
    SectionBasis,
    SectionModel,
    build_basis,
    density_matrix,
    gram_matrix,
    newton_reduce,
    rank_profile,
    s_matrix,
    sigma_b,
    sigma_b_via_orthonormal,
    trace_identity_check,
)
