"""cpcox: change-plane Cox model estimation via a smoothed partial likelihood.

The hazard is lambda(t) exp(Z'beta + U'gamma 1{V + X'psi >= 0}); the
indicator is smoothed with a kernel CDF at a vanishing bandwidth so the
likelihood is differentiable, and the regression block (beta, gamma)
gets asymptotically normal estimates with plug-in standard errors.
"""

from .errors import (
    AllStartsFailedError,
    ConfigError,
    CpcoxError,
    DataFormatError,
    DegenerateFitError,
    DimensionMismatchError,
    InvalidArgumentError,
    InvalidStartError,
    NoEventsError,
    SingularInformationError,
)
from .inference import (
    ConfidenceInterval,
    classification_error,
    confidence_interval,
    covariance_xi,
    normal_quantile,
    predict_subgroup,
)
from .likelihood import (
    RiskSetAggregates,
    breslow_cumulative_hazard,
    hessian_xi_psi,
    hessian_xi_xi,
    log_partial_likelihood,
    risk_set_aggregates,
    score_psi,
    score_xi,
    smoothed_log_partial_likelihood,
)
from .model import (
    Dataset,
    KernelSpec,
    Observation,
    ThetaParams,
    default_bandwidth,
    eta,
    eta_smoothed,
    kernel_cdf,
    kernel_pdf,
    subgroup_indicator,
)
from .optimizer import (
    FitOptions,
    FitResult,
    alternate_fit,
    maximize_psi_given_xi,
    maximize_xi_given_psi,
    multistart_fit,
)
from .simulation import (
    SimConfig,
    SimReport,
    generate_dataset,
    run_replication,
    run_study,
)

__version__ = "0.1.0"
