"""Spectral gaps and solution concavity on conformally deformed planar domains.

The package solves weighted Dirichlet eigenvalue problems -Delta u + V u =
lambda rho u on polygonal chart images of constant-curvature surfaces,
reconstructs Hessians of log u1 with respect to a chosen conformal
connection, and automates the horoconvex gap-bound pipeline and the
spherical-cap torsion power-concavity check.
"""

from .concavity import (
    BarrierState,
    ConcavityReport,
    LogHessianField,
    SweepResult,
    barrier_operator,
    barrier_path_closed_form,
    barrier_state_from_chart,
    check_thm41_condition,
    concavity_report,
    continuity_sweep,
    eq35_residual,
    interior_samples,
    log_hessian_field,
    power_hessian_field,
)
from .domains import (
    ConvexityCertificate,
    CurvatureProfile,
    Domain2D,
    circumradius,
    dekster_min_diameter,
    diameter,
    disk_domain,
    ellipse_domain,
    geodesic_curvature_profile,
    hyperbolic_ball,
    is_convex_wrt,
    is_horoconvex,
    rectangle_domain,
    spherical_cap,
    unit_square,
)
from .eigensolver import (
    EigenResult,
    GapResult,
    WeightedProblem,
    assemble_problem,
    drift_neumann_mu2,
    drift_neumann_spectrum,
    fundamental_gap,
    ratio_residual,
    rayleigh_lower_bound,
    solve_lowest,
    solve_problem,
)
from .errors import GeometryError, NumericalError, UsageError, VerificationError
from .fields import ScalarField, parse_expression, serialize_expression
from .geometry import (
    ConformalChart,
    LaplacianCoeffs,
    SymMatrix2,
    chart_hessian,
    chart_hessian_components,
    conformal_factor,
    conformal_hessian,
    conformal_laplacian_coeffs,
    correct_hessian_components,
    distance,
    geodesic_point,
    mobius_recenter,
    principal_curvature_transform,
    schrodinger_transform,
    sym_eigvals,
)
from .horoconvex import (
    D_MAX,
    GAP_COEFFICIENT,
    GAP_CONSTANT,
    R_STAR,
    HoroconvexConfig,
    PipelineReport,
    StageResult,
    admissible_radius,
    gap_lower_bound,
    mu_eigenvalues,
    normalized_mu,
    optimal_R,
    rho_hyper_to_sphere,
    rho_sphere_field,
    spherical_hessian_rho,
    step2_margin,
    thresholds,
    verify_pipeline,
)
from .mesh import TriMesh, assemble, triangulate
from .torsion import (
    TorsionSolution,
    cap_for_beta,
    center_value,
    circumradius_threshold,
    kennington_exponent,
    level_curve_curvature,
    level_set_components,
    power_concavity_check,
    recenter_to_pole,
    rho_beta_hessian_eigs,
    solve_torsion,
)

__version__ = "0.1.0"

__all__ = [
    "BarrierState", "ConcavityReport", "LogHessianField", "SweepResult",
    "barrier_operator", "barrier_path_closed_form", "barrier_state_from_chart",
    "check_thm41_condition", "concavity_report", "continuity_sweep",
    "eq35_residual", "interior_samples", "log_hessian_field",
    "power_hessian_field",
    "ConvexityCertificate", "CurvatureProfile", "Domain2D", "circumradius",
    "dekster_min_diameter", "diameter", "disk_domain", "ellipse_domain",
    "geodesic_curvature_profile", "hyperbolic_ball", "is_convex_wrt",
    "is_horoconvex", "rectangle_domain", "spherical_cap", "unit_square",
    "EigenResult", "GapResult", "WeightedProblem", "assemble_problem",
    "drift_neumann_mu2", "drift_neumann_spectrum", "fundamental_gap",
    "ratio_residual", "rayleigh_lower_bound", "solve_lowest", "solve_problem",
    "GeometryError", "NumericalError", "UsageError", "VerificationError",
    "ScalarField", "parse_expression", "serialize_expression",
    "ConformalChart", "LaplacianCoeffs", "SymMatrix2", "chart_hessian",
    "chart_hessian_components", "conformal_factor", "conformal_hessian",
    "conformal_laplacian_coeffs", "correct_hessian_components", "distance",
    "geodesic_point", "mobius_recenter", "principal_curvature_transform",
    "schrodinger_transform", "sym_eigvals",
    "D_MAX", "GAP_COEFFICIENT", "GAP_CONSTANT", "R_STAR", "HoroconvexConfig",
    "PipelineReport", "StageResult", "admissible_radius", "gap_lower_bound",
    "mu_eigenvalues", "normalized_mu", "optimal_R", "rho_hyper_to_sphere",
    "rho_sphere_field", "spherical_hessian_rho", "step2_margin", "thresholds",
    "verify_pipeline",
    "TriMesh", "assemble", "triangulate",
    "TorsionSolution", "cap_for_beta", "center_value", "circumradius_threshold",
    "kennington_exponent", "level_curve_curvature", "level_set_components",
    "power_concavity_check", "recenter_to_pole", "rho_beta_hessian_eigs",
    "solve_torsion",
    "__version__",
]
