"""Multivariate functional censored quantile regression with similarity-weighted
cross-cohort transfer, resampling confidence intervals, and a simulation lab."""

from .basis import SampledFunction, SplineBasis, eval_basis, inner_product, make_basis
from .cohort import Cohort, Subject, load_cohort, split_half, write_cohort
from .cqr import (
    CoefficientSurface,
    QuantileGrid,
    build_grid,
    design_matrix,
    empirical_loss,
    fit_sequential,
    predict_quantile,
    solve_step,
    transform_h,
)
from .exchange import export_estimator, import_estimator
from .simlab import ScenarioConfig, ScenarioResult, run_scenario, true_coefficients
from .resample import build_ci, draw_perturbations, perturbed_debias, replicate_surfaces
from .transfer import (
    DenseSurface,
    SimilarityReport,
    TransferConfig,
    TransferFit,
    aggregate_sources,
    debias_fit,
    hard_threshold_weight,
    loss_difference,
    pooled_fit,
    similarity_weight,
    transfer_estimate,
)

__version__ = "0.1.0"
