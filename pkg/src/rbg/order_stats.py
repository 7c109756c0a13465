"""Closure of the RB-G family under sample minimum and maximum.

``P(X_{1:n} > x) = P(a, s)**n`` with ``s = -log G(x)``.  Expanding the
lower incomplete gamma in its power series,

    gamma(a, s) = s**a * sum_k (-1)**k s**k / (k! (a + k)),

the n-th power becomes a multi-index sum over ``k_1..k_n``.  The expansion is
carried out by repeated convolution of the truncated coefficient sequence,
which is exactly the multi-index sum with every ``k_i <= K``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError
from .univariate import RBGDistribution

__all__ = ["SeriesTruncation", "SeriesValue", "min_survival", "max_cdf", "min_survival_series"]


@dataclass(frozen=True)
class SeriesTruncation:
    """Per-coordinate truncation ``K`` of the multi-index sums."""

    max_index: int = 30
    tolerance: float = 1e-8

    def __post_init__(self):
        if int(self.max_index) != self.max_index or self.max_index < 0:
            raise DomainError("max_index must be a non-negative integer")


@dataclass(frozen=True)
class SeriesValue:
    value: float
    bound: float
    terms: int
    within_tolerance: bool


class TruncationWarning(UserWarning):
    pass


def _check_n(n):
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    return int(n)


def min_survival(d: RBGDistribution, n: int, x):
    """``P(X_{1:n} > x) = survival(x)**n``."""
    n = _check_n(n)
    surv = d.survival(x)
    return surv ** n


def max_cdf(d: RBGDistribution, n: int, x):
    """``P(X_{n:n} <= x) = cdf(x)**n``."""
    n = _check_n(n)
    return d.cdf(x) ** n


def _single_coefficients(a: float, K: int) -> np.ndarray:
    k = np.arange(K + 1)
    return (-1.0) ** k / (special.factorial(k) * (a + k))


def min_survival_series(d: RBGDistribution, n: int, x: float,
                        trunc: SeriesTruncation = SeriesTruncation()) -> SeriesValue:
    """Evaluate ``P(X_{1:n} > x)`` by the truncated multi-index series.

    The returned bound is conservative: with ``e`` the leading omitted term of
    the single series, ``|S**n - S_K**n| <= (|S_K| + e)**n - |S_K|**n``.
    When the tail terms are not yet decreasing the bound is infinite and a
    :class:`TruncationWarning` is issued.
    """
    n = _check_n(n)
    x = float(x)
    if not math.isfinite(x):
        raise DomainError("x must be finite")
    a, K = d.a, trunc.max_index
    s = float(d.baseline.neg_log_cdf(x))
    if s == 0.0:
        return SeriesValue(0.0, 0.0, 0, True)
    if math.isinf(s):
        return SeriesValue(1.0, 0.0, 0, True)

    c = _single_coefficients(a, K)
    poly = np.array([1.0])
    for _ in range(n):
        poly = np.convolve(poly, c)
    # Horner in s over the n*K + 1 coefficients
    inner_n = 0.0
    for coef in poly[::-1]:
        inner_n = inner_n * s + coef
    prefactor = math.exp(n * (a * math.log(s) - special.gammaln(a)))
    value = prefactor * inner_n

    inner = float(np.polyval(c[::-1], s))
    # rounding allowance for the alternating sums
    rounding = 4.0 * np.finfo(float).eps * float(np.polyval(np.abs(poly)[::-1], s))
    # terms b_k = s^k / (k! (a+k)) decrease from k = K+1 on iff the ratio at K+1 is < 1
    ratio = s * (a + K + 1) / ((K + 2) * (a + K + 2))
    if ratio < 1.0:
        e = math.exp((K + 1) * math.log(s) - special.gammaln(K + 2) - math.log(a + K + 1))
        # (A + e)^n - A^n <= n e (A + e)^(n-1), written without cancellation
        bound = prefactor * (n * e * (abs(inner) + e) ** (n - 1) + rounding)
    else:
        bound = math.inf
    ok = bound <= trunc.tolerance
    if not ok:
        warnings.warn(f"series truncation bound {bound:.3g} exceeds tolerance {trunc.tolerance:.3g}",
                      TruncationWarning, stacklevel=2)
    return SeriesValue(float(value), float(bound), len(poly), ok)
