"""The univariate RB-G(a) law built on a baseline distribution.

With ``s(x) = -log G(x)`` the random variable ``T = s(X)`` is Gamma(a, 1)
distributed, which gives every formula here:

* density ``f(x) = s(x)**(a-1) g(x) / Gamma(a)``
* cdf ``F(x) = Q(a, s(x))`` and survival ``1 - F(x) = P(a, s(x))``
* hazard ``g(x) s(x)**(a-1) / gamma(a, s(x))`` (lower incomplete gamma)
* quantile ``G^{-1}(exp(-Q^{-1}(a, p)))`` and sampling ``G^{-1}(exp(-Z))``
  with ``Z ~ Gamma(a, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .baseline import BaselineModel, check_in_support
from .errors import DomainError, HazardOverflowError, NonConvergenceError
from .numerics import inv_digamma, inv_reg_upper_gamma, reg_lower_gamma, reg_upper_gamma, trigamma
from .variates import gamma_variates

__all__ = ["RBGDistribution", "fit_univariate_a", "shape_standard_error"]


def _finite(x, what="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} must be finite")
    return arr


def _out(values, x):
    return float(values) if np.ndim(x) == 0 else values


@dataclass(frozen=True)
class RBGDistribution:
    """RB-G law with shape ``a > 0`` over ``baseline``; ``a = 1`` is the baseline itself."""

    a: float
    baseline: BaselineModel

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise DomainError(f"shape a must be positive and finite, got {self.a!r}")

    def logpdf(self, x):
        x = _finite(x)
        inside = self.baseline.in_support(x)
        log_s = np.asarray(self.baseline.log_neg_log_cdf(x), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (self.a - 1.0) * log_s + np.asarray(self.baseline.log_pdf(x), dtype=float) \
                - special.gammaln(self.a)
        if self.a == 1.0:
            val = np.asarray(self.baseline.log_pdf(x), dtype=float)
        return _out(np.where(inside, val, -np.inf), x)

    def pdf(self, x):
        with np.errstate(under="ignore"):
            return _out(np.exp(np.asarray(self.logpdf(x))), x)

    def cdf(self, x):
        x = _finite(x)
        s = np.asarray(self.baseline.neg_log_cdf(x), dtype=float)
        return _out(reg_upper_gamma(self.a, s), x)

    def survival(self, x):
        x = _finite(x)
        s = np.asarray(self.baseline.neg_log_cdf(x), dtype=float)
        return _out(reg_lower_gamma(self.a, s), x)

    def hazard(self, x):
        """``g(x) s(x)**(a-1) / gamma(a, s(x))`` evaluated in log space.

        Raises
        ------
        HazardOverflowError
            Where the survival function underflows to zero.
        """
        x = _finite(x)
        s = np.asarray(self.baseline.neg_log_cdf(x), dtype=float)
        surv = np.asarray(reg_lower_gamma(self.a, s), dtype=float)
        inside = self.baseline.in_support(x)
        dead = inside & (surv <= 0.0)
        if np.any(dead):
            where = np.asarray(x)[dead].ravel()[:3]
            raise HazardOverflowError(f"survival underflows to 0 at x={where.tolist()}; hazard not representable")
        with np.errstate(divide="ignore", invalid="ignore"):
            log_h = (np.asarray(self.baseline.log_pdf(x), dtype=float) + (self.a - 1.0) * np.asarray(self.baseline.log_neg_log_cdf(x), dtype=float)
                     - special.gammaln(self.a) - np.log(surv))
        if self.a == 1.0:
            log_h = np.asarray(self.baseline.log_pdf(x), dtype=float) - np.log(surv)
        return _out(np.where(inside, np.exp(log_h), 0.0), x)

    def pdf_at_t(self, t):
        """Density at the point ``x`` with ``-log G(x) = t``, evaluated from ``t`` itself.

        Avoids re-deriving ``t`` from an ``x`` that may have rounded onto a
        support edge.
        """
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
            log_f = np.asarray(self.baseline.log_pdf_t(t), dtype=float) - special.gammaln(self.a)
            if self.a != 1.0:
                log_f = log_f + (self.a - 1.0) * np.log(t)
            return _out(np.exp(log_f), t)

    def survival_at_t(self, t):
        return reg_lower_gamma(self.a, t)

    def quantile(self, p):
        p_arr = np.asarray(p, dtype=float)
        if np.any(~np.isfinite(p_arr)) or np.any(p_arr <= 0) or np.any(p_arr >= 1):
            raise DomainError("quantile needs 0 < p < 1")
        s = inv_reg_upper_gamma(self.a, p_arr)
        return _out(np.asarray(self.baseline.quantile_t(s), dtype=float), p)

    def sample(self, n: int, seed=None) -> np.ndarray:
        """Draw ``n`` variates as ``G^{-1}(exp(-Z))`` with ``Z ~ Gamma(a, 1)``."""
        z = gamma_variates(self.a, n, seed)
        return np.asarray(self.baseline.quantile_t(z), dtype=float)


def shape_standard_error(a: float, n: int) -> float:
    """Asymptotic standard error of the shape MLE with a known baseline."""
    return 1.0 / math.sqrt(n * trigamma(a))


def fit_univariate_a(data, baseline: BaselineModel) -> float:
    """Maximum-likelihood shape ``a`` for RB-G data with a known baseline.

    The score equation is ``digamma(a) = mean(log(-log G(x_i)))``, solved by
    inverting the digamma function.

    Raises
    ------
    DomainError
        Fewer than two points, or points outside the baseline support.
    NonConvergenceError
        All observations identical; a continuous law cannot have produced them.
    """
    x = check_in_support(baseline, data).ravel()
    if x.size < 2:
        raise DomainError("fit_univariate_a needs at least two observations")
    if np.all(x == x[0]):
        raise NonConvergenceError("all observations are identical; the shape fit is degenerate")
    log_t = np.asarray(baseline.log_neg_log_cdf(x), dtype=float)
    if not np.all(np.isfinite(log_t)):
        raise DomainError("observations too close to a support edge for log(-log G(x)) to be finite")
    return float(inv_digamma(math.fsum(log_t) / x.size))
