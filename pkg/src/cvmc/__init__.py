"""Monte Carlo integration with ordinary-least-squares control variates."""

__version__ = "0.1.0"

from .bases import (ControlBasis, evaluate_basis, feasible_m, gram, gram_inverse, graded_degree_vectors, legendre_values,
                    make_basis, make_custom_basis, make_indicator_basis, make_legendre_basis,
                    make_legendre_tensor_basis, quadrature_gram, transform_basis)
from .core import (DEFAULT_QUADRATURE, Domain, Integrand, QuadratureSpec, SamplePoints, draw_samples,
                   quad_expect, quad_integrate, replication_seed, splitmix64, true_mean)
from .diagnostics import (check_growth_rule, empirical_leverages, leverage_function, leverage_profile,
                          mean_leverage, sup_leverage)
from .errors import (CVMCError, DegenerateSigma, EstimatorError, InsufficientSamples, NonFinite,
                     OnesInColumnSpace, RankDeficient, SingularGram, StudyAborted, UsageError)
from .estimator import (EstimateReport, beta_oracle, cost_model, estimate_with_oracle_beta, naive_mc,
                        ols_fit, ols_weights, olsmc, olsmc_weights)
from .experiments import StudyResult, StudySpec, run_study, step_integrand_sigma
from .integrands import get_integrand
from .schedules import Schedule

__all__ = [
    "CVMCError",
    "ControlBasis",
    "DEFAULT_QUADRATURE",
    "DegenerateSigma",
    "Domain",
    "EstimateReport",
    "EstimatorError",
    "InsufficientSamples",
    "Integrand",
    "NonFinite",
    "OnesInColumnSpace",
    "QuadratureSpec",
    "RankDeficient",
    "SamplePoints",
    "Schedule",
    "SingularGram",
    "StudyAborted",
    "StudyResult",
    "StudySpec",
    "UsageError",
    "beta_oracle",
    "check_growth_rule",
    "cost_model",
    "draw_samples",
    "empirical_leverages",
    "estimate_with_oracle_beta",
    "evaluate_basis",
    "feasible_m",
    "get_integrand",
    "graded_degree_vectors",
    "gram",
    "gram_inverse",
    "legendre_values",
    "leverage_function",
    "leverage_profile",
    "make_basis",
    "make_custom_basis",
    "make_indicator_basis",
    "make_legendre_basis",
    "make_legendre_tensor_basis",
    "mean_leverage",
    "naive_mc",
    "ols_fit",
    "ols_weights",
    "olsmc",
    "olsmc_weights",
    "quad_expect",
    "quad_integrate",
    "quadrature_gram",
    "replication_seed",
    "run_study",
    "splitmix64",
    "step_integrand_sigma",
    "sup_leverage",
    "transform_basis",
    "true_mean",
]
