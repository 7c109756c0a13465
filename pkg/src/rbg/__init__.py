"""RB-G distribution family: ``f(x) = (-log G(x))**(a-1) g(x) / Gamma(a)`` over a baseline ``G``.

Submodules
----------
numerics      incomplete gamma, digamma inverse, quadrature
baseline      pluggable baseline distributions
univariate    the RB-G law: evaluation, sampling, fitting of ``a``
order_stats   minimum and maximum of i.i.d. samples
characterize  residual checks of the characterization identities, Lorenz curves
bivariate     conditionally specified bivariate model with an ``M`` matrix
estimate      maximum likelihood for the eight natural parameters
cli           the ``rbg`` command
"""

__version__ = "0.1.0"

from .baseline import Exponential, Uniform, Weibull, make_baseline, parse_baseline  # noqa: E402
from .bivariate import (  # noqa: E402
    BivariateRBG,
    MMatrix,
    gibbs_sample,
    joint_log_density,
    mode_find,
    model_from_config,
    normalize,
)
from .errors import (  # noqa: E402
    ConditionalNonexistenceError,
    ConfigurationError,
    DomainError,
    NonConvergenceError,
    NonIntegrableError,
    NumericalError,
    RBGError,
)
from .estimate import FitResult, ThetaVector, fisher_information, fit_mle, sufficient_stats  # noqa: E402
from .numerics import DEFAULT_QUAD, QuadratureSpec  # noqa: E402
from .univariate import RBGDistribution, fit_univariate_a  # noqa: E402

__all__ = [
    "__version__",
    "Uniform", "Exponential", "Weibull", "make_baseline", "parse_baseline",
    "RBGDistribution", "fit_univariate_a",
    "MMatrix", "BivariateRBG", "normalize", "joint_log_density", "gibbs_sample", "mode_find",
    "model_from_config",
    "ThetaVector", "FitResult", "sufficient_stats", "fisher_information", "fit_mle",
    "QuadratureSpec", "DEFAULT_QUAD",
    "RBGError", "DomainError", "ConfigurationError", "NumericalError", "NonConvergenceError",
    "NonIntegrableError", "ConditionalNonexistenceError",
]
