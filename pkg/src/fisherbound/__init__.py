"""Lower bounds on Fisher information from auxiliary-statistic moments."""

from .bounds import (
    BoundReport,
    TwoMomentResult,
    bound_curve,
    loss_chi,
    normalize_weights,
    simple_bound,
    strong_bound,
    two_moment_bound,
    weighted_bound,
)
from .calibrate import (
    BlackBoxSystem,
    LearnConfig,
    identity_system,
    learn_profile,
    load_profile,
    parse_profile,
    rapp_forward,
    rapp_system,
    save_profile,
)
from .errors import FisherBoundError
from .estimate import (
    ClosedFormSource,
    EstimationReport,
    ProfileSource,
    asymptotic_check,
    cmle_solve,
    compress,
    gmm_minimize,
    gmm_objective,
)
from .expfam import (
    ExpFamilyModel,
    LogNormal,
    MomentSet,
    ParametricGaussian,
    Weibull,
    fisher_identity,
    gaussian_location,
    lognormal_fisher,
    weibull_fisher,
)
from .profile import (
    MomentProfile,
    ProfilePoint,
    StatisticSpec,
    closed_form_point,
    closed_form_profile,
    parse_stats,
)

__version__ = "0.1.0"

__all__ = [
    "asymptotic_check",
    "BlackBoxSystem",
    "bound_curve",
    "BoundReport",
    "closed_form_point",
    "closed_form_profile",
    "ClosedFormSource",
    "cmle_solve",
    "compress",
    "EstimationReport",
    "ExpFamilyModel",
    "fisher_identity",
    "FisherBoundError",
    "gaussian_location",
    "gmm_minimize",
    "gmm_objective",
    "identity_system",
    "learn_profile",
    "LearnConfig",
    "load_profile",
    "LogNormal",
    "lognormal_fisher",
    "loss_chi",
    "MomentProfile",
    "MomentSet",
    "normalize_weights",
    "ParametricGaussian",
    "parse_profile",
    "parse_stats",
    "ProfilePoint",
    "ProfileSource",
    "rapp_forward",
    "rapp_system",
    "save_profile",
    "simple_bound",
    "StatisticSpec",
    "strong_bound",
    "two_moment_bound",
    "TwoMomentResult",
    "Weibull",
    "weibull_fisher",
    "weighted_bound",
]
