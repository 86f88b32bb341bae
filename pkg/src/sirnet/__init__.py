"""Social influence regression for longitudinal dyadic count networks."""

from .design import (
    DirectDesign,
    InfluenceDesign,
    collapse_alpha,
    collapse_beta,
    collapse_full,
    influence_scores,
)
from .errors import (
    BoundaryMLEError,
    ConvergenceError,
    IdentifiabilityError,
    InputError,
    NotInvertibleError,
    SimulationUnstableError,
    SingularDesignError,
    SirError,
)
from .evaluation import make_cv_plan, run_cv, run_temporal_holdout
from .fit import FitOptions, SirFit, fit_sir
from .glm import GlmFit, fit_poisson, loglik_poisson
from .inference import VcovResult, compute_vcov, score_and_hessian
from .model import NetworkData, ParameterSet, canonicalize, loglik, predict_mu
from .scoring import ScoreReport, score_cell, score_forecast
from .sim import CovariateSpec, SimConfig, simulate, stability_check
from .tensor import DyadTensor, PredictorTensor, flatten, lag_log_transform, unflatten

__version__ = "0.1.0"
