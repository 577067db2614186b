"""Prediction-based estimating functions for discretely observed ergodic diffusions.

Modules:

* ``model``: drift/diffusion families, generator, invariant law, polynomial semigroups.
* ``simulate``: stationary paths with reproducible per-replication streams.
* ``estimator``: projection coefficients, simple and 1-lag estimating functions, solvers.
* ``potential``: potential-operator pairings and asymptotic variances.
* ``experiment``: replication studies, LLN/CLT checks and reports.
"""
from .errors import (BoundaryTermError, ConfigurationError, DegeneratePredictorError, DomainError,
                     IdentifiabilityError, ModelError, NonConvergenceError, NotAvailableError, NumericalError,
                     PbefError, SimulationError, SingularJacobianError)
from .estimator import (EstimateResult, PredictorSpec, SolverOptions, gamma_limit, gfun_onelag, gfun_simple,
                        projection_coefficients, solve_onelag, solve_simple, w_limit)
from .experiment import ExperimentConfig, emit_report, run_clt_check, run_estimation_study, run_lln_check
from .functions import SmoothFunction
from .model import (CoxIngersollRoss, DiffusionModel, OrnsteinUhlenbeck, UserModel, generator_function,
                    invariant_moment, kf_coefficient, model_from_config)
from .potential import (AvarReport, PotentialMCConfig, avar_onelag, avar_simple, clt_variance,
                        potential_pairing_mc)
from .simulate import SamplePath, SamplingScheme, simulate_path, simulate_paths

__version__ = "0.1.0"

__all__ = [
    "AvarReport", "BoundaryTermError", "ConfigurationError", "CoxIngersollRoss", "DegeneratePredictorError",
    "DiffusionModel", "DomainError", "EstimateResult", "ExperimentConfig", "IdentifiabilityError",
    "ModelError", "NonConvergenceError", "NotAvailableError", "NumericalError", "OrnsteinUhlenbeck",
    "PbefError", "PotentialMCConfig", "PredictorSpec", "SamplePath", "SamplingScheme", "SimulationError",
    "SingularJacobianError", "SmoothFunction", "SolverOptions", "UserModel", "avar_onelag", "avar_simple",
    "clt_variance", "emit_report", "gamma_limit", "generator_function", "gfun_onelag", "gfun_simple",
    "invariant_moment", "kf_coefficient", "model_from_config", "potential_pairing_mc",
    "projection_coefficients", "run_clt_check", "run_estimation_study", "run_lln_check", "simulate_path",
    "simulate_paths", "solve_onelag", "solve_simple", "w_limit",
]
