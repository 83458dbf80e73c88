"""Certified nonparametric MLE for one-dimensional Gaussian location mixtures."""

from .certifier import (
    Certificate,
    DiagnosticEstimates,
    certify_global_max,
    certify_static_support,
    certify_support,
    certify_support_lower,
    certify_support_upper,
    certify_w1,
    diagnostics,
    hessian_lambda,
    off_support_gap,
)
from .em import EmSpectrum, EmTrace, em_jacobian_spectrum, em_solve, em_step
from .errors import *  # noqa: F401,F403
from .grid_solver import (
    Grid,
    GridWeights,
    build_grid,
    duality_gap,
    frank_wolfe,
    kkt_residuals,
    optimize_weights,
    round_small_atoms,
    weighted_duality_gap,
)
from .kernel import (
    Dataset,
    DProfile,
    d_derivative,
    derivative_bound,
    expected_d_identity,
    hermite,
    log_likelihood,
    make_dataset,
    mixture_density,
    sup_d_over_interval,
)
from .mixtures import (
    DiscreteMixture,
    SeparationStats,
    hausdorff_support_distance,
    make_mixture,
    merge_adjacent,
    param_distance,
    point_mass,
    separation_stats,
    w1_distance,
)
from .newton import NewtonTrace, ShubSmaleReport, gamma, gamma_jacobian, newton_solve, shub_smale_check
from .pipeline import (
    SolveConfig,
    SolveReport,
    certificate_to_json,
    genericity_harness,
    sample_clustered,
    sample_iid,
    solve_npmle,
    solve_static,
)
