"""Bivariate RB-G model specified through its two conditional families.

With ``u(t) = log(-log G(t))``, ``v(t) = log g(t)`` and ``q(t) = (1, u, v)``
the joint density is

    f(x, y) = r1(x) r2(y) exp(q(x)^T M q(y)),    r(t) = 1 / (-log G(t)),

and ``m00`` is fixed by normalization.  Most computations run on the
``t = -log G_x(x)``, ``w = -log G_y(y)`` scale, where the density becomes

    exp(q^T M q - u(t) - v(t) - t - u(w) - v(w) - w),   t, w > 0,

and every integral is over the positive quadrant.  These integrals use the
exp-sinh trapezoid rule in log space, which handles both the algebraic
behaviour at 0 and the exponential decay at infinity.

Given ``Y = y`` the law of ``T`` has density proportional to
``t**(A1 - 1) g(x(t))**(A2 - 1) exp(-t)`` with ``A_i = sum_j m_ij q_j(y)``;
when ``A2 == 1`` this is exactly Gamma(A1, 1), i.e. ``X | Y = y`` is RB-G.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .baseline import BaselineModel, parse_baseline
from .errors import (
    ConditionalNonexistenceError,
    ConfigurationError,
    DomainError,
    NonConvergenceError,
    NonFiniteError,
    NonIntegrableError,
)
from .numerics import DEFAULT_QUAD, QuadratureSpec, exp_sinh_rule, integrate_1d
from .univariate import RBGDistribution
from .variates import GammaStream, as_generator

__all__ = [
    "MMatrix",
    "BivariateRBG",
    "ConditionalSpec",
    "TiltedConditional",
    "PsiSummary",
    "ModeResult",
    "MomentReport",
    "DependenceSign",
    "STAT_NAMES",
    "THETA_POSITIONS",
    "conditional_density_rbg",
    "joint_log_density",
    "normalize",
    "psi_summary",
    "conditional_of_x_given_y",
    "conditional_of_y_given_x",
    "conditional_moment_k",
    "marginal_density_x",
    "marginal_density_x_closed",
    "joint_survival",
    "plrd_local_ratio",
    "dependence_sign",
    "sign_integrability_condition",
    "mode_find",
    "gibbs_sample",
    "model_from_config",
]

# position in M of theta_1 .. theta_8
THETA_POSITIONS = ((0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2))
STAT_NAMES = ("u(Y)", "v(Y)", "u(X)", "u(X)u(Y)", "u(X)v(Y)", "v(X)", "v(X)u(Y)", "v(X)v(Y)")

# share of the integral allowed on the outermost ring of exp-sinh nodes
_EDGE_LIMIT = 1e-9
_EDGE_FAST = 1e-4  # ring share that marks divergence already at the coarsest step


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MMatrix:
    """The 3x3 interaction matrix, row-major; ``m00`` is ignored and recomputed."""

    entries: tuple

    def __post_init__(self):
        flat = tuple(float(v) for v in np.asarray(self.entries, dtype=float).ravel())
        if len(flat) != 9:
            raise ConfigurationError(f"M needs 9 entries, got {len(flat)}")
        if not all(math.isfinite(v) for v in flat):
            raise ConfigurationError("M entries must be finite")
        object.__setattr__(self, "entries", flat)

    @classmethod
    def from_array(cls, arr) -> "MMatrix":
        return cls(tuple(np.asarray(arr, dtype=float).ravel()))

    @classmethod
    def strict(cls, m10: float, m01: float, m11: float = 0.0) -> "MMatrix":
        """Both conditionals RB-G: ``m20 = m02 = 1`` and ``m12 = m21 = m22 = 0``."""
        return cls((0.0, m01, 1.0, m10, m11, 0.0, 1.0, 0.0, 0.0))

    def m(self, i: int, j: int) -> float:
        return self.entries[3 * i + j]

    def array(self) -> np.ndarray:
        """Copy as a 3x3 array with ``m00`` set to 0."""
        arr = np.array(self.entries, dtype=float).reshape(3, 3)
        arr[0, 0] = 0.0
        return arr

    @property
    def interaction(self) -> np.ndarray:
        return self.array()[1:, 1:]

    @property
    def is_independent(self) -> bool:
        return bool(np.all(self.interaction == 0.0))

    @property
    def x_given_y_is_rbg(self) -> bool:
        return self.m(2, 0) == 1.0 and self.m(2, 1) == 0.0 and self.m(2, 2) == 0.0

    @property
    def y_given_x_is_rbg(self) -> bool:
        return self.m(0, 2) == 1.0 and self.m(1, 2) == 0.0 and self.m(2, 2) == 0.0

    @property
    def is_strict(self) -> bool:
        return self.x_given_y_is_rbg and self.y_given_x_is_rbg


def sign_integrability_condition(m: MMatrix) -> bool:
    """The sufficient condition ``m12 > 0, m21 > 0, m22 <= 0`` stated for the model.

    Informational only: normalization always runs the numerical probe.
    """
    return m.m(1, 2) > 0 and m.m(2, 1) > 0 and m.m(2, 2) <= 0


def _strict_integrability(m: MMatrix):
    """Reject strict submodels that cannot be normalized, with the reason."""
    if not m.is_strict:
        return
    if m.m(1, 1) != 0.0:
        raise NonIntegrableError(
            "strict submodel with m11 != 0 is not integrable: the conditional shape "
            "m10 + m11*u(y) changes sign because u = log(-log G) spans the whole real line")
    if m.m(1, 0) <= 0 or m.m(0, 1) <= 0:
        raise NonIntegrableError("strict submodel needs m10 > 0 and m01 > 0")


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

def _q_t(baseline: BaselineModel, t):
    """``(u, v)`` at the point with ``-log G = t``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(t), np.asarray(baseline.log_pdf_t(t), dtype=float)


def _q_x(baseline: BaselineModel, x):
    """``(s, u, v)`` at ``x``."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(baseline.neg_log_cdf(x), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return s, np.asarray(baseline.log_neg_log_cdf(x), dtype=float), np.asarray(baseline.log_pdf(x), dtype=float)


@dataclass(frozen=True)
class BivariateRBG:
    """Joint law with baselines for each coordinate and interaction matrix ``m``.

    The normalizing constant is computed on first use and cached; the model is
    otherwise immutable.
    """

    baseline_x: BaselineModel
    baseline_y: BaselineModel
    m: MMatrix
    quad: QuadratureSpec = DEFAULT_QUAD
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def shapes_x_given_y(self, y):
        """``(A1, A2)``: exponents of ``u(x)`` and ``v(x)`` in the conditional of X."""
        _, uy, vy = _q_x(self.baseline_y, y)
        M = self.m.array()
        return M[1, 0] + M[1, 1] * uy + M[1, 2] * vy, M[2, 0] + M[2, 1] * uy + M[2, 2] * vy

    def shapes_y_given_x(self, x):
        """``(B1, B2)``: exponents of ``u(y)`` and ``v(y)`` in the conditional of Y."""
        _, ux, vx = _q_x(self.baseline_x, x)
        M = self.m.array()
        return M[0, 1] + M[1, 1] * ux + M[2, 1] * vx, M[0, 2] + M[1, 2] * ux + M[2, 2] * vx

    def log_kernel(self, x, y):
        """``log f(x, y) - m00``; ``-inf`` outside the support rectangle."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DomainError("x and y must be finite")
        inside = self.baseline_x.in_support(x) & self.baseline_y.in_support(y)
        _, ux, vx = _q_x(self.baseline_x, x)
        _, uy, vy = _q_x(self.baseline_y, y)
        qx, qy = (1.0, ux, vx), (1.0, uy, vy)
        M = self.m.array()
        with np.errstate(invalid="ignore"):
            val = -ux - uy
            for i in range(3):
                for j in range(3):
                    if M[i, j] != 0.0:
                        val = val + M[i, j] * qx[i] * qy[j]
        out = np.where(inside, val, -np.inf)
        return float(out) if out.ndim == 0 else out

    @property
    def log_psi(self) -> float:
        if "log_psi" not in self._cache:
            self._cache["log_psi"] = psi_summary(self.m, self.baseline_x, self.baseline_y, self.quad).log_psi
        return self._cache["log_psi"]

    @property
    def m00(self) -> float:
        return -self.log_psi


@dataclass(frozen=True)
class ConditionalSpec:
    """Shape functions of the two RB-G conditionals over a shared baseline."""

    delta: Callable
    psi: Callable
    baseline: BaselineModel


def conditional_density_rbg(x, y, spec: ConditionalSpec):
    """Density of ``X`` at ``x`` given ``Y = y`` when ``X | Y = y`` is RB-G(delta(y))."""
    shape = float(spec.delta(y))
    if not (math.isfinite(shape) and shape > 0):
        raise DomainError(f"delta(y) must be positive, got {shape!r} at y={y!r}")
    return RBGDistribution(shape, spec.baseline).pdf(x)


def joint_log_density(x, y, model: BivariateRBG):
    """Normalized ``log f(x, y)``.

    Raises
    ------
    NonIntegrableError
        When ``model`` has no finite normalizing constant.
    """
    return model.log_kernel(x, y) - model.log_psi


# ---------------------------------------------------------------------------
# normalization and moments of the sufficient statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PsiSummary:
    """``log Psi`` and, on request, mean and covariance of the eight statistics.

    Statistics are ordered like ``theta`` (see :data:`STAT_NAMES`).
    """

    log_psi: float
    mean: np.ndarray | None
    cov: np.ndarray | None
    step: float
    change: float
    edge_fraction: float


def _tensor_level(M, bx, by, step, order):
    t, lw = exp_sinh_rule(step)
    ux, vx = _q_t(bx, t)
    uy, vy = _q_t(by, t)
    Bx = np.stack([np.ones_like(t), ux, vx], axis=1)
    By = np.stack([np.ones_like(t), uy, vy], axis=1)
    with np.errstate(over="ignore", invalid="ignore"):
        H = Bx @ M @ By.T
        H += (lw - ux - vx - t)[:, None]
        H += (lw - uy - vy - t)[None, :]
    if np.any(np.isnan(H)):
        raise NonFiniteError("joint integrand is NaN at some quadrature node")
    if np.any(H == np.inf):
        raise NonIntegrableError("joint integrand overflows; configuration is not integrable")
    log_psi = float(special.logsumexp(H))
    ring = np.concatenate([H[0], H[-1], H[1:-1, 0], H[1:-1, -1]])
    edge = math.exp(min(0.0, float(special.logsumexp(ring)) - log_psi))
    mean = cov = None
    if order >= 1:
        P = np.exp(H - log_psi)
        E = Bx.T @ P @ By
        mean = np.array([E[i, j] for i, j in THETA_POSITIONS])
        if order >= 2:
            pairs = [(a, b) for a in range(3) for b in range(3)]
            Xp = np.stack([Bx[:, a] * Bx[:, b] for a, b in pairs], axis=1)
            Yp = np.stack([By[:, a] * By[:, b] for a, b in pairs], axis=1)
            E2 = Xp.T @ P @ Yp
            cov = np.empty((8, 8))
            for k, (i, j) in enumerate(THETA_POSITIONS):
                for l, (i2, j2) in enumerate(THETA_POSITIONS):
                    cov[k, l] = E2[pairs.index((i, i2)), pairs.index((j, j2))] - mean[k] * mean[l]
            cov = 0.5 * (cov + cov.T)
    return log_psi, mean, cov, edge


def psi_summary(m: MMatrix, bx: BaselineModel, by: BaselineModel,
                spec: QuadratureSpec = DEFAULT_QUAD, order: int = 0) -> PsiSummary:
    """``log Psi`` for ``m``, with statistic means (``order >= 1``) and covariance (``order >= 2``).

    The exp-sinh step starts at ``2 / spec.node_count`` and is halved until
    ``log Psi`` changes by at most ``spec.tolerance(1)``.

    Raises
    ------
    NonIntegrableError
        The configuration is known not to be integrable, or the integrand keeps
        a share above 1e-9 of its mass on the truncation boundary.
    NonConvergenceError
        The refinement budget ran out without the edge test failing.
    """
    _strict_integrability(m)
    M = m.array()
    tol = spec.tolerance(1.0)
    step = 2.0 / spec.node_count
    levels = 1 + min(int(spec.max_refinements), 4)
    previous, change = None, math.inf
    for level in range(levels):
        log_psi, _, _, edge = _tensor_level(M, bx, by, step, 0)
        if edge > _EDGE_FAST:
            # the ring share hardly depends on the step; no refinement will rescue this
            break
        if previous is not None:
            change = abs(log_psi - previous)
            if change <= tol:
                if edge > _EDGE_LIMIT:
                    break
                if order > 0:
                    log_psi, mean, cov, edge = _tensor_level(M, bx, by, step, order)
                    return PsiSummary(log_psi, mean, cov, step, change, edge)
                return PsiSummary(log_psi, None, None, step, change, edge)
        previous = log_psi
        step *= 0.5
    if edge > _EDGE_LIMIT:
        raise NonIntegrableError(
            f"normalizing integral does not converge: {edge:.3g} of the mass sits on the truncation "
            "boundary (divergent integral or extremely heavy tails)")
    raise NonConvergenceError("normalizing integral did not settle under refinement",
                              estimate=previous, error_bound=change)


def normalize(model: BivariateRBG) -> float:
    """Compute ``Psi = exp(-m00)`` and cache ``m00`` on the model."""
    return math.exp(model.log_psi)


# ---------------------------------------------------------------------------
# one-dimensional laws on the t scale
# ---------------------------------------------------------------------------

def _de_sum(log_f, spec: QuadratureSpec, h=None):
    """``int_0^inf exp(log_f(t)) h(t) dt`` by exp-sinh; returns ``(value, edge_fraction)``.

    Without ``h`` the result is the log of the integral.
    """
    tol = spec.tolerance(1.0)
    step = 2.0 / spec.node_count
    previous, change, edge = None, math.inf, 0.0
    for _ in range(1 + min(int(spec.max_refinements), 4)):
        t, lw = exp_sinh_rule(step)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            terms = np.asarray(log_f(t), dtype=float) + lw
        if np.any(np.isnan(terms)):
            raise NonFiniteError("integrand is NaN at some quadrature node")
        log_total = float(special.logsumexp(terms))
        if not math.isfinite(log_total):
            return log_total if h is None else 0.0, (1.0 if log_total == math.inf else 0.0)
        edge = math.exp(min(0.0, float(np.logaddexp(terms[0], terms[-1])) - log_total))
        if h is None:
            value, scale = log_total, 1.0
        else:
            hv = np.asarray(h(t), dtype=float)
            value = float(np.sum(np.exp(terms - log_total) * hv)) * math.exp(log_total)
            scale = max(1.0, abs(value))
        if previous is not None:
            change = abs(value - previous) / scale
            if change <= tol:
                return value, edge
        previous = value
        step *= 0.5
    raise NonConvergenceError("exp-sinh sum did not settle under refinement",
                              estimate=previous, error_bound=change)


@functools.lru_cache(maxsize=32)
def _sampling_grid(baseline: BaselineModel, step: float = 1.0 / 64.0):
    tau = np.arange(math.ceil(-6.5 / step), math.floor(2.5 / step) + 1) * step
    log_t = 0.5 * math.pi * np.sinh(tau)
    t = np.exp(log_t)
    log_jac = np.log(0.5 * math.pi * np.cosh(tau)) + log_t
    u, v = _q_t(baseline, t)
    return tau, t, u, v, log_jac, step


def _grid_inverse(baseline, shape, power, uniforms):
    """Inverse-cdf draws of ``T`` with density ``t**(shape-1) g**(power-1) e**-t``.

    The density is tabulated against ``tau`` (``t = exp(pi/2 sinh tau)``) and
    treated as piecewise linear between nodes, so the cdf is piecewise
    quadratic and inverted exactly.
    """
    tau, t, u, v, log_jac, h = _sampling_grid(baseline)
    with np.errstate(over="ignore", invalid="ignore"):
        logp = (shape - 1.0) * u + (power - 1.0) * v - t + log_jac
    top = np.max(logp)
    if not math.isfinite(top):
        raise ConditionalNonexistenceError("conditional density is not finite on the sampling grid",
                                           state={"shape": shape, "power": power})
    p = np.exp(logp - top)
    if max(p[0], p[-1]) > _EDGE_LIMIT * 1e3:
        raise ConditionalNonexistenceError("conditional density is not normalizable",
                                           state={"shape": shape, "power": power})
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (p[1:] + p[:-1]))])
    target = np.asarray(uniforms, dtype=float) * cum[-1]
    k = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, len(p) - 2)
    rem = target - cum[k]
    p0, slope = p[k], (p[k + 1] - p[k]) / h
    # solve p0 d + slope d^2 / 2 = rem for d in [0, h]
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = np.sqrt(np.maximum(p0 * p0 + 2.0 * slope * rem, 0.0))
        d = np.where(np.abs(slope) * h > 1e-12 * np.maximum(p0, 1e-300), 2.0 * rem / (p0 + disc), rem / p0)
    d = np.clip(np.nan_to_num(d, nan=0.0), 0.0, h)
    return np.exp(0.5 * math.pi * np.sinh(tau[k] + d))


@dataclass(frozen=True)
class TiltedConditional:
    """Law on the ``baseline`` support with density ``∝ (-log G)**(shape-1) g**power``.

    On the ``t`` scale the density is ``∝ t**(shape-1) g(x(t))**(power-1) e**-t``;
    ``power == 1`` gives RB-G(shape).  Conditionals of a general M are of this
    form.

    Raises
    ------
    ConditionalNonexistenceError
        At construction, when the density cannot be normalized.
    """

    shape: float
    power: float
    baseline: BaselineModel
    quad: QuadratureSpec = DEFAULT_QUAD
    log_norm: float = field(init=False)

    def __post_init__(self):
        try:
            log_norm, edge = _de_sum(self._log_unnormalized_t, self.quad)
        except NonConvergenceError as exc:
            raise ConditionalNonexistenceError(f"conditional cannot be normalized: {exc}",
                                               state={"shape": self.shape, "power": self.power}) from exc
        if not math.isfinite(log_norm) or edge > _EDGE_LIMIT:
            raise ConditionalNonexistenceError(
                f"conditional with shape {self.shape:.6g} and g-power {self.power:.6g} is not normalizable",
                state={"shape": self.shape, "power": self.power})
        object.__setattr__(self, "log_norm", log_norm)

    def _log_unnormalized_t(self, t):
        u, v = _q_t(self.baseline, t)
        return (self.shape - 1.0) * u + (self.power - 1.0) * v - t

    def logpdf_t(self, t):
        return self._log_unnormalized_t(t) - self.log_norm

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        _, u, v = _q_x(self.baseline, x)
        with np.errstate(invalid="ignore"):
            val = (self.shape - 1.0) * u + self.power * v - self.log_norm
        out = np.where(self.baseline.in_support(x), val, -np.inf)
        return float(out) if out.ndim == 0 else out

    def pdf(self, x):
        with np.errstate(under="ignore"):
            out = np.exp(np.asarray(self.logpdf(x)))
        return float(out) if np.ndim(x) == 0 else out

    def cdf(self, x, spec: QuadratureSpec = QuadratureSpec(abs_tol=1e-13, rel_tol=1e-10, max_refinements=2000)):
        """``P(X <= x) = P(T >= s(x))`` by adaptive quadrature on the ``t`` scale."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        s = np.asarray(self.baseline.neg_log_cdf(xs), dtype=float).ravel()

        def dens(t):
            with np.errstate(under="ignore"):
                return np.exp(self.logpdf_t(t))
        # integrate between consecutive sorted points and accumulate from t = inf
        order = np.argsort(-s, kind="stable")
        acc, upper = 0.0, math.inf
        out = np.empty(s.size)
        for idx in order:
            si = s[idx]
            if si < upper:
                acc += integrate_1d(dens, si, upper, spec) if si < math.inf else 0.0
                upper = si
            out[idx] = acc
        out = np.clip(out, 0.0, 1.0).reshape(xs.shape)
        return float(out.ravel()[0]) if np.ndim(x) == 0 else out

    def moment_t(self, k: int) -> float:
        """``E[T**k]``."""
        value, _ = _de_sum(self.logpdf_t, self.quad, h=lambda t: t ** k)
        return value

    def moment(self, k: int) -> float:
        """``E[X**k]``."""
        value, _ = _de_sum(self.logpdf_t, self.quad,
                           h=lambda t: np.asarray(self.baseline.quantile_t(t), dtype=float) ** k)
        return value

    def sample(self, n: int, seed=None) -> np.ndarray:
        rng = as_generator(seed)
        t = _grid_inverse(self.baseline, self.shape, self.power, rng.random(int(n)))
        return np.asarray(self.baseline.quantile_t(t), dtype=float)


def _conditional(shape, power, baseline, quad, where):
    if power == 1.0:
        if not (math.isfinite(shape) and shape > 0):
            raise ConditionalNonexistenceError(
                f"conditional shape {shape:.6g} is not positive at {where}; the conditional law does not exist",
                state={"shape": shape, "where": where})
        return RBGDistribution(float(shape), baseline)
    return TiltedConditional(float(shape), float(power), baseline, quad)


def conditional_of_x_given_y(model: BivariateRBG, y: float):
    """Law of ``X`` given ``Y = y``.

    Returns :class:`RBGDistribution` with shape ``m10 + m11 u(y) + m12 v(y)``
    whenever the ``v(x)`` exponent equals 1 (always in the strict
    submodel), otherwise a quadrature-normalized :class:`TiltedConditional`.

    Raises
    ------
    ConditionalNonexistenceError
        Non-positive shape or non-normalizable conditional.
    """
    y = float(y)
    if not model.baseline_y.in_support(y):
        raise DomainError(f"y={y!r} is outside the support")
    a1, a2 = model.shapes_x_given_y(y)
    return _conditional(float(a1), float(a2), model.baseline_x, model.quad, f"y={y!r}")


def conditional_of_y_given_x(model: BivariateRBG, x: float):
    """Law of ``Y`` given ``X = x``; mirror image of :func:`conditional_of_x_given_y`."""
    x = float(x)
    if not model.baseline_x.in_support(x):
        raise DomainError(f"x={x!r} is outside the support")
    b1, b2 = model.shapes_y_given_x(x)
    return _conditional(float(b1), float(b2), model.baseline_y, model.quad, f"x={x!r}")


@dataclass(frozen=True)
class MomentReport:
    """``E[X**k | Y=y]`` plus the moment of ``T = -log G(X)`` by quadrature and, for RB-G conditionals, in closed form."""

    value: float
    finite: bool
    t_moment: float
    t_moment_closed: float | None


def conditional_moment_k(model: BivariateRBG, y: float, k: int) -> MomentReport:
    """``k``-th conditional moment of ``X`` given ``Y = y``.

    For an RB-G conditional with shape ``A`` the closed form
    ``E[T**k] = A (A+1) ... (A+k-1)`` is reported next to the quadrature value.
    A moment whose quadrature does not settle is reported as infinite.
    """
    if int(k) != k or k < 1:
        raise DomainError("k must be a positive integer")
    k = int(k)
    law = conditional_of_x_given_y(model, y)
    if isinstance(law, RBGDistribution):
        shape = law.a
        tilted = TiltedConditional(shape, 1.0, law.baseline, model.quad)
        closed = float(np.prod(shape + np.arange(k)))
    else:
        tilted, closed = law, None
    t_moment = tilted.moment_t(k)
    try:
        value, edge = _de_sum(tilted.logpdf_t, model.quad,
                              h=lambda t: np.asarray(tilted.baseline.quantile_t(t), dtype=float) ** k)
        finite = math.isfinite(value) and edge <= _EDGE_LIMIT
    except (NonConvergenceError, NonFiniteError):
        value, finite = math.inf, False
    return MomentReport(value if finite else math.inf, finite, t_moment, closed)


# ---------------------------------------------------------------------------
# marginals and joint probabilities
# ---------------------------------------------------------------------------

def _log_marginal_x(model: BivariateRBG, x: float) -> float:
    s, ux, vx = _q_x(model.baseline_x, x)
    M = model.m.array()
    c1 = M[0, 1] + M[1, 1] * ux + M[2, 1] * vx
    c2 = M[0, 2] + M[1, 2] * ux + M[2, 2] * vx

    def log_inner(w):
        uw, vw = _q_t(model.baseline_y, w)
        return (c1 - 1.0) * uw + (c2 - 1.0) * vw - w

    log_inner_value, edge = _de_sum(log_inner, model.quad)
    if not math.isfinite(log_inner_value) or edge > _EDGE_LIMIT:
        raise NonIntegrableError(f"the integral over y diverges at x={x!r}")
    return float(-ux + M[1, 0] * ux + M[2, 0] * vx + log_inner_value)


def marginal_density_x(model: BivariateRBG, x, normalized: bool = True):
    """``f_X(x) = int f(x, y) dy`` by quadrature over ``w = -log G_y(y)``.

    With ``normalized=False`` the kernel is integrated with ``m00 = 0``,
    which is meaningful for configurations that have no normalizing constant.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    inside = model.baseline_x.in_support(xs)
    shift = -model.log_psi if normalized else 0.0
    out = np.zeros(xs.shape)
    s = np.asarray(model.baseline_x.neg_log_cdf(xs), dtype=float)
    # where G(x) rounds to 0 or 1 the density is below any representable scale
    usable = inside & (s > 0) & (s < math.inf)
    for i in np.nonzero(usable)[0]:
        out[i] = math.exp(_log_marginal_x(model, float(xs[i])) + shift)
    return float(out[0]) if np.ndim(x) == 0 else out


def marginal_density_x_closed(model: BivariateRBG, x, normalized: bool = True):
    """Strict-submodel closed form ``r1(x) Gamma(C(x)) exp(m00 + m10 u(x) + v(x))``, ``C = m01 + m11 u``."""
    if not model.m.is_strict:
        raise ConfigurationError("the closed-form marginal needs the strict submodel")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    _, ux, vx = _q_x(model.baseline_x, xs)
    c = model.m.m(0, 1) + model.m.m(1, 1) * ux
    inside = model.baseline_x.in_support(xs)
    if np.any(inside & (c <= 0)):
        raise NonIntegrableError("C(x) <= 0: the integral over y diverges")
    shift = -model.log_psi if normalized else 0.0
    with np.errstate(invalid="ignore"):
        val = np.exp(-ux + special.gammaln(np.where(inside, c, 1.0)) + model.m.m(1, 0) * ux + vx + shift)
    out = np.where(inside, val, 0.0)
    return float(out[0]) if np.ndim(x) == 0 else out


def joint_survival(model: BivariateRBG, x: float, y: float,
                   spec: QuadratureSpec = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-9, max_refinements=2000)) -> float:
    """``P(X > x, Y > y)`` by nested adaptive quadrature on the ``(t, w)`` scale.

    Passing the lower support edge for one coordinate gives a marginal
    survival probability.
    """
    s_x = float(model.baseline_x.neg_log_cdf(x))
    s_y = float(model.baseline_y.neg_log_cdf(y))
    M = model.m.array()
    log_psi = model.log_psi

    def inner(t):
        ut, vt = _q_t(model.baseline_x, t)
        qx = (1.0, ut, vt)
        a = [sum(M[i, j] * qx[i] for i in range(3)) for j in range(3)]
        base = a[0] - ut - vt - t - log_psi

        def dens(w):
            uw, vw = _q_t(model.baseline_y, w)
            with np.errstate(over="ignore", under="ignore", invalid="ignore"):
                return np.exp(base + (a[1] - 1.0) * uw + (a[2] - 1.0) * vw - w)
        return integrate_1d(dens, 0.0, s_y, spec)

    def outer(ts):
        return np.array([inner(float(t)) for t in np.atleast_1d(ts)])

    return float(integrate_1d(outer, 0.0, s_x, spec))


# ---------------------------------------------------------------------------
# dependence
# ---------------------------------------------------------------------------

def plrd_local_ratio(model: BivariateRBG, x1: float, x2: float, y1: float, y2: float,
                     log: bool = False) -> float:
    """``f(x1,y1) f(x2,y2) / (f(x1,y2) f(x2,y1))``.

    PLRD means this ratio is at least 1 whenever ``x1 > x2`` and ``y1 > y2``.
    Other orderings are accepted; swapping ``y1`` and ``y2`` inverts the ratio.
    Only the interaction block of ``M`` survives the ratio, so it is computed
    as ``sum_{i,j>=1} m_ij (q_i(x1) - q_i(x2)) (q_j(y1) - q_j(y2))`` in log
    space; no normalization is needed.
    """
    if not all(math.isfinite(float(v)) for v in (x1, x2, y1, y2)):
        raise DomainError("points must be finite")
    bx, by = model.baseline_x, model.baseline_y
    if not (bx.in_support([x1, x2]).all() and by.in_support([y1, y2]).all()):
        raise DomainError("degenerate ratio: a density in the ratio is 0 outside the support")
    _, u1, v1 = _q_x(bx, x1)
    _, u2, v2 = _q_x(bx, x2)
    _, p1, w1 = _q_x(by, y1)
    _, p2, w2 = _q_x(by, y2)
    dx = (float(u1 - u2), float(v1 - v2))
    dy = (float(p1 - p2), float(w1 - w2))
    inter = model.m.interaction
    value = math.fsum(inter[i, j] * dx[i] * dy[j] for i in range(2) for j in range(2))
    if not math.isfinite(value):
        raise DomainError("degenerate ratio: non-finite log densities")
    return value if log else math.exp(value)


@dataclass(frozen=True)
class DependenceSign:
    """Verdict of the ratio chain with the determinant of ``M``."""

    label: str
    determinant: float
    ratios: tuple | None


def dependence_sign(m: MMatrix, m00: float | None = None) -> DependenceSign:
    """Classify ``m`` by the chain ``m22/m12 < m20/m10 < m21/m11`` (positive) or its reverse (negative).

    The chain is only meaningful when all entries involved are positive;
    otherwise the verdict is ``"indeterminate"``, except that a zero
    interaction block is ``"independent"``.  ``m00`` defaults to the stored
    entry and only enters the determinant.
    """
    M = np.array(m.entries).reshape(3, 3)
    if m00 is not None:
        M[0, 0] = m00
    det = float(np.linalg.det(M))
    if m.is_independent:
        return DependenceSign("independent", det, None)
    used = [M[1, 0], M[1, 1], M[1, 2], M[2, 0], M[2, 1], M[2, 2]]
    if not all(v > 0 for v in used):
        return DependenceSign("indeterminate", det, None)
    r = (M[2, 2] / M[1, 2], M[2, 0] / M[1, 0], M[2, 1] / M[1, 1])
    if r[0] < r[1] < r[2]:
        label = "positive"
    elif r[0] > r[1] > r[2]:
        label = "negative"
    else:
        label = "indeterminate"
    return DependenceSign(label, det, r)


# ---------------------------------------------------------------------------
# mode
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeResult:
    point: tuple
    gradient_norm: float
    negative_definite: bool
    iterations: int
    scale: str


def _grad_x_scale(model: BivariateRBG, p):
    x, y = p
    bx, by = model.baseline_x, model.baseline_y
    sx, ux, vx = (float(v) for v in _q_x(bx, x))
    sy, uy, vy = (float(v) for v in _q_x(by, y))
    M = model.m.array()
    a1 = M[1, 0] + M[1, 1] * uy + M[1, 2] * vy
    a2 = M[2, 0] + M[2, 1] * uy + M[2, 2] * vy
    b1 = M[0, 1] + M[1, 1] * ux + M[2, 1] * vx
    b2 = M[0, 2] + M[1, 2] * ux + M[2, 2] * vx
    # u'(x) = s'(x)/s(x) with s' = -g/G = -exp(v + s)
    dux = -math.exp(vx + sx) / sx
    duy = -math.exp(vy + sy) / sy
    return np.array([(a1 - 1.0) * dux + a2 * float(bx.dlog_pdf(x)),
                     (b1 - 1.0) * duy + b2 * float(by.dlog_pdf(y))])


def _log_t_scale(model: BivariateRBG, p):
    t, w = p
    ut, vt = (float(v) for v in _q_t(model.baseline_x, t))
    uw, vw = (float(v) for v in _q_t(model.baseline_y, w))
    qt, qw = np.array([1.0, ut, vt]), np.array([1.0, uw, vw])
    return float(qt @ model.m.array() @ qw - ut - vt - t - uw - vw - w)


def _grad_t_scale(model: BivariateRBG, p):
    t, w = p
    bx, by = model.baseline_x, model.baseline_y
    ut, vt = (float(v) for v in _q_t(bx, t))
    uw, vw = (float(v) for v in _q_t(by, w))
    M = model.m.array()
    a1 = M[1, 0] + M[1, 1] * uw + M[1, 2] * vw
    a2 = M[2, 0] + M[2, 1] * uw + M[2, 2] * vw
    b1 = M[0, 1] + M[1, 1] * ut + M[2, 1] * vt
    b2 = M[0, 2] + M[1, 2] * ut + M[2, 2] * vt
    # dv/dt = (log g)'(x) dx/dt with dx/dt = -G/g = -exp(-t - v)
    dvt = -float(bx.dlog_pdf(float(bx.quantile_t(t)))) * math.exp(-t - vt)
    dvw = -float(by.dlog_pdf(float(by.quantile_t(w)))) * math.exp(-w - vw)
    return np.array([(a1 - 1.0) / t + (a2 - 1.0) * dvt - 1.0,
                     (b1 - 1.0) / w + (b2 - 1.0) * dvw - 1.0])


def mode_find(model: BivariateRBG, start, scale: str = "x", tol: float = 1e-8,
              max_iter: int = 200) -> ModeResult:
    """Critical point of the joint log density by damped Newton iteration.

    The gradient is analytic; the Hessian is a central difference of it.
    ``scale="x"`` works with ``f(x, y)``; ``scale="t"`` with the density of
    ``(-log G_x(X), -log G_y(Y))``, whose critical points differ in general
    because of the Jacobian.  ``start`` and the result are on the chosen scale.

    Raises
    ------
    NonConvergenceError
        Iteration cap reached or the ascent leaves the support; the trace of
        ``(point, log density, gradient norm)`` rows is attached.
    """
    if scale == "x":
        def logf(p):
            return float(model.log_kernel(p[0], p[1]))

        def grad(p):
            return _grad_x_scale(model, p)

        def inside(p):
            return bool(model.baseline_x.in_support(p[0]) and model.baseline_y.in_support(p[1]))
    elif scale == "t":
        logf = functools.partial(_log_t_scale, model)

        def grad(p):
            return _grad_t_scale(model, p)

        def inside(p):
            return bool(p[0] > 0 and p[1] > 0 and math.isfinite(p[0]) and math.isfinite(p[1]))
    else:
        raise DomainError("scale must be 'x' or 't'")

    p = np.asarray(start, dtype=float).copy()
    if p.shape != (2,) or not inside(p):
        raise DomainError("start must be an interior point (2 coordinates)")

    def hessian(p):
        H = np.empty((2, 2))
        for i in range(2):
            h = 1e-6 * max(abs(p[i]), 1e-4)
            e = np.zeros(2)
            e[i] = h
            H[:, i] = (grad(p + e) - grad(p - e)) / (2.0 * h)
        return 0.5 * (H + H.T)

    trace = []
    f = logf(p)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for it in range(max_iter):
            g = grad(p)
            gn = float(np.max(np.abs(g)))
            trace.append((tuple(p), f, gn))
            if not math.isfinite(gn):
                break
            if gn <= tol:
                H = hessian(p)
                neg = bool(np.all(np.linalg.eigvalsh(H) < 0))
                return ModeResult(tuple(float(v) for v in p), gn, neg, it, scale)
            H = hessian(p)
            newton = np.all(np.linalg.eigvalsh(H) < 0)
            d = -np.linalg.solve(H, g) if newton else g / max(1.0, float(np.linalg.norm(g)))
            lam, moved = 1.0, False
            while lam > 1e-14:
                q = p + lam * d
                if inside(q):
                    fq = logf(q)
                    if math.isfinite(fq) and fq >= f - 1e-12 * (1.0 + abs(f)):
                        p, f, moved = q, fq, True
                        break
                lam *= 0.5
            if not moved:
                break
    raise NonConvergenceError(f"mode_find: gradient norm did not reach {tol:g}", estimate=tuple(p),
                              error_bound=trace[-1][2] if trace else None, trace=trace)


# ---------------------------------------------------------------------------
# Gibbs sampling
# ---------------------------------------------------------------------------

def gibbs_sample(model: BivariateRBG, n: int, burn: int = 500, seed=None, thin: int = 1,
                 start=None) -> np.ndarray:
    """Draw ``n`` pairs by alternating ``X | Y`` and ``Y | X``.

    RB-G conditionals are drawn exactly (gamma variates on the ``t`` scale);
    other conditionals by inverse cdf on a cached exp-sinh grid.  Returns an
    ``(n, 2)`` array after ``burn`` discarded sweeps, keeping every ``thin``-th.

    Raises
    ------
    ConditionalNonexistenceError
        A conditional shape became non-positive; ``state`` holds the sweep
        index and the current point.
    """
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    if int(burn) != burn or burn < 0 or int(thin) != thin or thin < 1:
        raise DomainError("burn must be >= 0 and thin >= 1")
    rng = as_generator(seed)
    stream = GammaStream(rng)
    bx, by = model.baseline_x, model.baseline_y
    M = model.m.array()
    exact_x, exact_y = model.m.x_given_y_is_rbg, model.m.y_given_x_is_rbg
    if start is None:
        t, w = 1.0, 1.0
    else:
        t, w = float(bx.neg_log_cdf(start[0])), float(by.neg_log_cdf(start[1]))
        if not (0 < t < math.inf and 0 < w < math.inf):
            raise DomainError("start must be interior")
    tiny = np.finfo(float).tiny
    total = int(burn) + int(n) * int(thin)
    ts, ws = np.empty(int(n)), np.empty(int(n))
    vw = float(by.log_pdf_t(w))
    k = 0
    for sweep in range(total):
        uw = math.log(w)
        a1 = M[1, 0] + M[1, 1] * uw + M[1, 2] * vw
        a2 = M[2, 0] + M[2, 1] * uw + M[2, 2] * vw
        try:
            if exact_x:
                if not a1 > 0:
                    raise ConditionalNonexistenceError("X | Y shape is not positive")
                t = max(stream.draw(a1), tiny)
            else:
                t = max(float(_grid_inverse(bx, a1, a2, stream.uniform())), tiny)
            ut, vt = math.log(t), float(bx.log_pdf_t(t))
            b1 = M[0, 1] + M[1, 1] * ut + M[2, 1] * vt
            b2 = M[0, 2] + M[1, 2] * ut + M[2, 2] * vt
            if exact_y:
                if not b1 > 0:
                    raise ConditionalNonexistenceError("Y | X shape is not positive")
                w = max(stream.draw(b1), tiny)
            else:
                w = max(float(_grid_inverse(by, b1, b2, stream.uniform())), tiny)
        except ConditionalNonexistenceError as exc:
            raise ConditionalNonexistenceError(
                f"Gibbs sweep {sweep}: {exc}",
                state={"sweep": sweep, "t": t, "w": w, "x": float(bx.quantile_t(t)),
                       "y": float(by.quantile_t(w))}) from exc
        vw = float(by.log_pdf_t(w))
        if sweep >= burn and (sweep - burn) % thin == 0:
            ts[k], ws[k] = t, w
            k += 1
    return np.column_stack([np.asarray(bx.quantile_t(ts), dtype=float),
                            np.asarray(by.quantile_t(ws), dtype=float)])


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def model_from_config(cfg: dict, quad: QuadratureSpec | None = None) -> BivariateRBG:
    """Build a model from ``{baseline_x, baseline_y, M | strict, quadrature}``.

    ``M`` is 9 reals (row-major or nested); ``strict`` is ``{m10, m01, m11}``;
    ``quadrature`` may set ``nodes`` and ``tol``.
    """
    if not isinstance(cfg, dict):
        raise ConfigurationError("model configuration must be a JSON object")
    try:
        bx = parse_baseline(str(cfg["baseline_x"]))
        by = parse_baseline(str(cfg["baseline_y"]))
    except KeyError as exc:
        raise ConfigurationError(f"model configuration lacks {exc.args[0]!r}") from None
    if ("M" in cfg) == ("strict" in cfg):
        raise ConfigurationError("give exactly one of 'M' and 'strict'")
    if "M" in cfg:
        try:
            m = MMatrix(tuple(np.asarray(cfg["M"], dtype=float).ravel()))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad M: {exc}") from None
    else:
        st = cfg["strict"]
        try:
            m = MMatrix.strict(float(st["m10"]), float(st["m01"]), float(st.get("m11", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad strict block: {exc}") from None
    if quad is None:
        quad = DEFAULT_QUAD
    q = cfg.get("quadrature") or {}
    try:
        if "nodes" in q:
            quad = QuadratureSpec(int(q["nodes"]), quad.abs_tol, quad.rel_tol, quad.max_refinements)
        if "tol" in q:
            tol = float(q["tol"])
            quad = QuadratureSpec(quad.node_count, tol * 1e-2, tol, quad.max_refinements)
    except (TypeError, ValueError, DomainError) as exc:
        raise ConfigurationError(f"bad quadrature block: {exc}") from None
    return BivariateRBG(bx, by, m, quad)
