"""Adaptive pilot sampling for multi-fidelity Monte Carlo estimation.

Builds approximate control-variate estimators whose model-output covariance
is learned from pilot samples under a Bayesian posterior, and decides
adaptively when to stop spending budget on pilot rows and commit the
remainder to the final estimator.
"""

from .acv import (
    CostModel,
    CouplingStructure,
    EstimatorConfig,
    FAMILIES,
    SampleAllocation,
    coupling,
    coupling_from_sets,
    estimator_variance,
    evaluate_acv,
    min_family_budget,
    mlmc_allocation,
    optimal_variance,
    optimal_weights,
    optimize_allocation,
    unit_optimal_variance,
)
from .adaptive import (
    AdaptiveConfig,
    AdaptiveResult,
    IterationRecord,
    predictive_variance_samples,
    run_adaptive,
)
from .covinfer import (
    GammaGaussianPosterior,
    InferenceConfig,
    IWPosterior,
    PilotData,
    gamma_update,
    iw_update,
    posterior_point_estimate,
    posterior_sample,
    project_posterior,
    scatter_and_stats,
)
from .errors import (
    AdaptiveRunError,
    BayesPilotError,
    BudgetInfeasibleError,
    DegenerateCovarianceError,
    DimensionMismatchError,
    FixedPointDivergenceError,
    InferenceDegeneracyError,
    InsufficientDataError,
    SchemaError,
    SingularCouplingError,
    TableExhaustedError,
    TransformDomainError,
    TruncationError,
    UndefinedMomentError,
)
from .loss import (
    LossConfig,
    LossReport,
    calibrate_nmc,
    expected_loss,
    loss_single,
    projected_expected_loss,
)
from .matparam import (
    compose_cov,
    decompose_cov,
    fill_lower,
    gamma_forward,
    gamma_inverse,
    vecl,
)
from .models import (
    ModelEnsemble,
    TabularEnsemble,
    monomial_ensemble,
    monomial_oracle_cov,
    tabular_ensemble,
    write_table,
)
from .randmat import (
    InverseWishartParams,
    RngStream,
    iw_mean,
    iw_mode,
    sample_inverse_wishart,
    sample_mvn,
    sample_wishart,
)

__version__ = "0.1.0"
