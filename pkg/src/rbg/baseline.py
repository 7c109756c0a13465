"""Baseline distributions ``G`` that generate the RB-G family.

Every baseline works on two scales: the natural ``x`` scale and the
``t = -log G(x)`` scale, which maps the support onto ``(0, inf)`` in
decreasing order.  The ``t`` scale is where the family is simplest (``T`` is
Gamma(a, 1) distributed), so the built-ins implement the ``t``-scale helpers
with dedicated formulas that stay accurate when ``G(x)`` is close to 1.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "BaselineModel",
    "Uniform",
    "Exponential",
    "Weibull",
    "make_baseline",
    "parse_baseline",
    "registered_baselines",
]


def _out(values, x):
    return float(values) if np.ndim(x) == 0 else values


def _neg_log1m_exp(t):
    """``-log(1 - exp(-t))`` for ``t > 0`` without cancellation."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(t < math.log(2.0), -np.log(-np.expm1(-t)), -np.log1p(-np.exp(-t)))


def _log_neg_log1m_exp(t):
    """``log(-log(1 - exp(-t)))``, accurate also when ``exp(-t)`` underflows."""
    t = np.asarray(t, dtype=float)
    big = t > 30.0
    safe_t = np.where(big, 1.0, t)
    with np.errstate(divide="ignore"):
        direct = np.log(_neg_log1m_exp(safe_t))
    # -log(1 - e) = e + e^2/2 + ..., so its log is -t + log1p(e/2 + e^2/3)
    e = np.exp(-np.where(big, t, 60.0))
    asym = -t + np.log1p(e / 2.0 + e * e / 3.0)
    return np.where(big, asym, direct)


class BaselineModel(ABC):
    """A continuous baseline with a strictly increasing cdf on an open interval.

    Subclasses provide ``cdf``, ``log_pdf`` and ``quantile``; the ``t``-scale
    helpers fall back to generic compositions and are overridden where an
    accurate closed form exists.  Outside the support ``pdf`` is 0 and
    ``cdf`` is 0 or 1.
    """

    name: str = "baseline"

    @property
    @abstractmethod
    def support(self) -> tuple[float, float]:
        """Open interval ``(lower, upper)`` carrying the mass."""

    @property
    def params(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}  # type: ignore[arg-type]

    @abstractmethod
    def cdf(self, x):
        ...

    @abstractmethod
    def log_pdf(self, x):
        ...

    @abstractmethod
    def quantile(self, p):
        ...

    def pdf(self, x):
        with np.errstate(divide="ignore"):
            return _out(np.exp(np.asarray(self.log_pdf(x), dtype=float)), x)

    def in_support(self, x):
        lo, hi = self.support
        x = np.asarray(x, dtype=float)
        return (x > lo) & (x < hi)

    def neg_log_cdf(self, x):
        """``s(x) = -log G(x)``: ``+inf`` at or below the lower edge, 0 at or above the upper."""
        with np.errstate(divide="ignore"):
            return _out(-np.log(np.asarray(self.cdf(x), dtype=float)), x)

    def log_neg_log_cdf(self, x):
        """``log s(x)``; subclasses override where ``s`` itself underflows in the upper tail."""
        with np.errstate(divide="ignore"):
            return _out(np.log(np.asarray(self.neg_log_cdf(x), dtype=float)), x)

    def quantile_t(self, t):
        """Inverse of :meth:`neg_log_cdf`: the ``x`` with ``-log G(x) = t``."""
        return self.quantile(np.exp(-np.asarray(t, dtype=float)))

    def log_pdf_t(self, t):
        """``log g`` evaluated at ``quantile_t(t)``."""
        return self.log_pdf(self.quantile_t(t))

    def dlog_pdf(self, x):
        """Derivative of ``log g``; default is a central difference."""
        x = np.asarray(x, dtype=float)
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        return (np.asarray(self.log_pdf(x + h)) - np.asarray(self.log_pdf(x - h))) / (2 * h)

    def describe(self) -> str:
        inner = ",".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.name}:{inner}" if inner else self.name


@dataclass(frozen=True)
class Uniform(BaselineModel):
    """Uniform distribution on ``(0, 1)``."""

    name = "uniform"

    @property
    def support(self):
        return (0.0, 1.0)

    def cdf(self, x):
        return _out(np.clip(np.asarray(x, dtype=float), 0.0, 1.0), x)

    def log_pdf(self, x):
        inside = self.in_support(x)
        return _out(np.where(inside, 0.0, -np.inf), x)

    def quantile(self, p):
        return _out(np.asarray(p, dtype=float).copy(), p)

    def neg_log_cdf(self, x):
        xc = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        with np.errstate(divide="ignore"):
            return _out(-np.log(xc), x)

    def quantile_t(self, t):
        return _out(np.exp(-np.asarray(t, dtype=float)), t)

    def log_pdf_t(self, t):
        return _out(np.zeros_like(np.asarray(t, dtype=float)), t)

    def dlog_pdf(self, x):
        return _out(np.zeros_like(np.asarray(x, dtype=float)), x)


@dataclass(frozen=True)
class Exponential(BaselineModel):
    """Exponential distribution with the given ``rate``."""

    rate: float = 1.0
    name = "exponential"

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ConfigurationError(f"exponential rate must be positive, got {self.rate!r}")

    @property
    def support(self):
        return (0.0, math.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _out(np.where(x > 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0), x)

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        return _out(np.where(x > 0, math.log(self.rate) - self.rate * x, -np.inf), x)

    def quantile(self, p):
        return _out(-np.log1p(-np.asarray(p, dtype=float)) / self.rate, p)

    def neg_log_cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = _neg_log1m_exp(self.rate * np.maximum(x, 0.0))
        return _out(np.where(x > 0, s, np.inf), x)

    def log_neg_log_cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = _log_neg_log1m_exp(self.rate * np.where(x > 0, x, 1.0))
        return _out(np.where(x > 0, val, np.inf), x)

    def quantile_t(self, t):
        return _out(_neg_log1m_exp(t) / self.rate, t)

    def log_pdf_t(self, t):
        # g = rate * (1 - G) and 1 - G = 1 - exp(-t)
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return _out(math.log(self.rate) + np.where(t < math.log(2.0), np.log(-np.expm1(-t)),
                                                       np.log1p(-np.exp(-t))), t)

    def dlog_pdf(self, x):
        return _out(np.full_like(np.asarray(x, dtype=float), -self.rate), x)


@dataclass(frozen=True)
class Weibull(BaselineModel):
    """Weibull distribution, ``G(x) = 1 - exp(-(x/scale)**shape)``."""

    shape: float = 1.0
    scale: float = 1.0
    name = "weibull"

    def __post_init__(self):
        for label, value in (("shape", self.shape), ("scale", self.scale)):
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"weibull {label} must be positive, got {value!r}")

    @property
    def support(self):
        return (0.0, math.inf)

    def _z(self, x):
        return (np.maximum(np.asarray(x, dtype=float), 0.0) / self.scale) ** self.shape

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _out(np.where(x > 0, -np.expm1(-self._z(x)), 0.0), x)

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        k, lam = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            val = math.log(k / lam) + (k - 1.0) * np.log(np.maximum(x, 0.0) / lam) - self._z(x)
        return _out(np.where(x > 0, val, -np.inf), x)

    def quantile(self, p):
        z = -np.log1p(-np.asarray(p, dtype=float))
        return _out(self.scale * z ** (1.0 / self.shape), p)

    def neg_log_cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = _neg_log1m_exp(self._z(x))
        return _out(np.where(x > 0, s, np.inf), x)

    def log_neg_log_cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = _log_neg_log1m_exp(self._z(np.where(x > 0, x, 1.0)))
        return _out(np.where(x > 0, val, np.inf), x)

    def quantile_t(self, t):
        # z = (x/scale)^shape solves 1 - exp(-z) = exp(-t)
        return _out(self.scale * np.exp(_log_neg_log1m_exp(t) / self.shape), t)

    def log_pdf_t(self, t):
        k, lam = self.shape, self.scale
        log_z = _log_neg_log1m_exp(t)
        return _out(math.log(k / lam) + (k - 1.0) / k * log_z - np.exp(log_z), t)

    def dlog_pdf(self, x):
        x = np.asarray(x, dtype=float)
        k, lam = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (k - 1.0) / x - k * x ** (k - 1.0) / lam ** k
        return _out(val, x)


_REGISTRY = {
    "uniform": (Uniform, {}),
    "exponential": (Exponential, {"rate": "rate", "lambda": "rate", "lam": "rate"}),
    "weibull": (Weibull, {"shape": "shape", "k": "shape", "scale": "scale", "lambda": "scale", "lam": "scale"}),
}


def registered_baselines() -> tuple[str, ...]:
    return tuple(_REGISTRY)


def make_baseline(name: str, params: dict | None = None) -> BaselineModel:
    """Build a registered baseline from its name and named parameters.

    Parameter aliases are accepted (``lambda`` for the exponential rate and the
    Weibull scale, ``k`` for the Weibull shape).

    Raises
    ------
    ConfigurationError
        Unknown name, unknown parameter, or an invalid value.
    """
    key = name.strip().lower()
    if key not in _REGISTRY:
        raise ConfigurationError(f"unknown baseline {name!r}; choose from {', '.join(_REGISTRY)}")
    cls, aliases = _REGISTRY[key]
    kwargs = {}
    for raw, value in (params or {}).items():
        field = aliases.get(raw.strip().lower())
        if field is None:
            raise ConfigurationError(f"baseline {key!r} has no parameter {raw!r}")
        try:
            kwargs[field] = float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"parameter {raw!r} must be a real number, got {value!r}") from None
    return cls(**kwargs)


def parse_baseline(text: str) -> BaselineModel:
    """Parse ``name`` or ``name:param=value,...`` into a baseline."""
    if not text or not text.strip():
        raise ConfigurationError("empty baseline specification")
    name, _, rest = text.partition(":")
    params = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"malformed baseline parameter {item!r}; expected key=value")
        params[key] = value
    return make_baseline(name, params)


def check_in_support(baseline: BaselineModel, x) -> np.ndarray:
    """Return ``x`` as an array, raising ``DomainError`` listing points outside the support."""
    x = np.asarray(x, dtype=float)
    bad = np.nonzero(~baseline.in_support(x).ravel())[0]
    if bad.size:
        shown = ", ".join(str(i) for i in bad[:10])
        more = "" if bad.size <= 10 else f" (+{bad.size - 10} more)"
        raise DomainError(f"{bad.size} point(s) outside the {baseline.name} support at indices {shown}{more}")
    return x
