"""Maximum-likelihood estimation of the eight natural parameters of the bivariate model.

The model is an exponential family in ``theta`` (the free entries of ``M``)
with sufficient statistics ``u(Y), v(Y), u(X), u(X)u(Y), u(X)v(Y), v(X),
v(X)u(Y), v(X)v(Y)`` and log-partition ``log Psi(theta)``.  Hence

* the score per observation is ``mean(stat) - E_theta[stat]``,
* the Fisher information per observation is ``Cov_theta[stat]``, the
  Hessian of ``log Psi``,

and both expectations come from the same quadrature pass that gives
``log Psi``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .baseline import BaselineModel, check_in_support
from .bivariate import STAT_NAMES, THETA_POSITIONS, MMatrix, psi_summary
from .errors import DomainError, NonConvergenceError, NonIntegrableError, NumericalError
from .numerics import DEFAULT_QUAD, QuadratureSpec
from .univariate import fit_univariate_a

__all__ = [
    "ThetaVector",
    "SufficientStats",
    "FitResult",
    "DEFAULT_SWEEP",
    "sufficient_stats",
    "log_psi",
    "log_likelihood",
    "likelihood_residuals",
    "fisher_information",
    "fit_mle",
]

DEFAULT_SWEEP = (8, 1, 2, 3, 4, 5, 6, 7)


@dataclass(frozen=True)
class ThetaVector:
    """``theta_1 .. theta_8`` = ``m01, m02, m10, m11, m12, m20, m21, m22``."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in np.asarray(self.values, dtype=float).ravel())
        if len(vals) != 8:
            raise DomainError(f"theta needs 8 entries, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("theta entries must be finite")
        object.__setattr__(self, "values", vals)

    def to_m(self) -> MMatrix:
        arr = np.zeros((3, 3))
        for value, (i, j) in zip(self.values, THETA_POSITIONS):
            arr[i, j] = value
        return MMatrix.from_array(arr)

    @classmethod
    def from_m(cls, m: MMatrix) -> "ThetaVector":
        return cls(tuple(m.m(i, j) for i, j in THETA_POSITIONS))

    def array(self) -> np.ndarray:
        return np.array(self.values)

    def as_dict(self) -> dict:
        return {f"theta{k + 1}": v for k, v in enumerate(self.values)}


@dataclass(frozen=True)
class SufficientStats:
    """Sample means of the eight statistics (in ``theta`` order) and of ``log r``."""

    means: np.ndarray
    n: int
    mean_log_r_x: float
    mean_log_r_y: float


def _baselines(baselines):
    try:
        bx, by = baselines
    except (TypeError, ValueError):
        raise DomainError("baselines must be a (baseline_x, baseline_y) pair") from None
    if not (isinstance(bx, BaselineModel) and isinstance(by, BaselineModel)):
        raise DomainError("baselines must be BaselineModel instances")
    return bx, by


def _pairs(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise DomainError("data must be an (n, 2) array with n >= 1")
    if not np.all(np.isfinite(arr)):
        bad = np.nonzero(~np.all(np.isfinite(arr), axis=1))[0]
        raise DomainError(f"non-finite data at rows {bad[:10].tolist()}")
    return arr


def sufficient_stats(data, baselines) -> SufficientStats:
    """Means of ``u(X), v(X), u(Y), v(Y)`` and their four products.

    Raises
    ------
    DomainError
        A point outside either support; the message lists the row indices.
    """
    bx, by = _baselines(baselines)
    arr = _pairs(data)
    check_in_support(bx, arr[:, 0])
    check_in_support(by, arr[:, 1])
    with np.errstate(divide="ignore"):
        ux = np.asarray(bx.log_neg_log_cdf(arr[:, 0]), dtype=float)
        uy = np.asarray(by.log_neg_log_cdf(arr[:, 1]), dtype=float)
    vx = np.asarray(bx.log_pdf(arr[:, 0]), dtype=float)
    vy = np.asarray(by.log_pdf(arr[:, 1]), dtype=float)
    bad = np.nonzero(~(np.isfinite(ux) & np.isfinite(uy) & np.isfinite(vx) & np.isfinite(vy)))[0]
    if bad.size:
        raise DomainError(f"statistics not finite (point too close to a support edge) at rows {bad[:10].tolist()}")
    qx, qy = (np.ones_like(ux), ux, vx), (np.ones_like(uy), uy, vy)
    means = np.array([math.fsum(qx[i] * qy[j]) / arr.shape[0] for i, j in THETA_POSITIONS])
    return SufficientStats(means, int(arr.shape[0]), -math.fsum(ux) / ux.size, -math.fsum(uy) / uy.size)


@functools.lru_cache(maxsize=256)
def _summary(theta: tuple, bx, by, quad, order):
    return psi_summary(ThetaVector(theta).to_m(), bx, by, quad, order)


def _theta(theta) -> ThetaVector:
    return theta if isinstance(theta, ThetaVector) else ThetaVector(theta)


def log_psi(theta, baselines, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``log Psi(theta)``, cached per ``theta``."""
    bx, by = _baselines(baselines)
    return _summary(_theta(theta).values, bx, by, quad, 0).log_psi


def log_likelihood(theta, data, baselines, quad: QuadratureSpec = DEFAULT_QUAD, stats=None) -> float:
    """``-n log Psi + sum log r1(x_i) + sum log r2(y_i) + n <theta, means>``."""
    theta = _theta(theta)
    st = stats if stats is not None else sufficient_stats(data, baselines)
    lp = log_psi(theta, baselines, quad)
    return st.n * (-lp + st.mean_log_r_x + st.mean_log_r_y + float(np.dot(theta.array(), st.means)))


def likelihood_residuals(theta, stats: SufficientStats, baselines,
                         quad: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """``d log Psi / d theta_j - mean_j`` for ``j = 1..8``; zero at the MLE.

    The derivative is the model expectation of statistic ``j``, computed by
    quadrature of the statistic-weighted integrand.  This is minus the
    gradient of ``loglik / n``.
    """
    bx, by = _baselines(baselines)
    summary = _summary(_theta(theta).values, bx, by, quad, 1)
    return summary.mean - stats.means


def fisher_information(theta, baselines, quad: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """Per-observation Fisher information: the covariance of the statistics under ``theta``."""
    bx, by = _baselines(baselines)
    return _summary(_theta(theta).values, bx, by, quad, 2).cov.copy()


@dataclass(frozen=True)
class FitResult:
    """Outcome of :func:`fit_mle`.

    ``covariance`` is ``I(theta_hat)^-1 / n`` on the free block (NaN rows and
    columns for fixed parameters); ``None`` when the information is singular.
    """

    theta_hat: ThetaVector
    covariance: np.ndarray | None
    loglik: float
    iterations: int
    converged: bool
    gradient_norm: float
    method: str
    free: tuple
    trace: list = field(default_factory=list, repr=False)

    @property
    def standard_errors(self) -> np.ndarray | None:
        if self.covariance is None:
            return None
        return np.sqrt(np.diag(self.covariance))

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.as_dict(),
            "statistics": list(STAT_NAMES),
            "covariance": None if self.covariance is None else
            [[None if math.isnan(v) else float(v) for v in row] for row in self.covariance],
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "method": self.method,
            "free": list(self.free),
        }


def _default_init(arr, bx, by) -> ThetaVector:
    # independent RB-G margins: theta3 = a_x, theta1 = a_y, theta6 = theta2 = 1
    ax = fit_univariate_a(arr[:, 0], bx)
    ay = fit_univariate_a(arr[:, 1], by)
    return ThetaVector((ay, 1.0, ax, 0.0, 0.0, 1.0, 0.0, 0.0))


def _covariance(theta, free_idx, n, bx, by, quad):
    info = _summary(theta.values, bx, by, quad, 2).cov[np.ix_(free_idx, free_idx)]
    cov = np.full((8, 8), np.nan)
    try:
        if np.linalg.cond(info) > 1e12:
            return None
        inv = np.linalg.inv(info) / n
    except np.linalg.LinAlgError:
        return None
    inv = 0.5 * (inv + inv.T)
    cov[np.ix_(free_idx, free_idx)] = inv
    return cov


def _try_summary(values, bx, by, quad, order):
    try:
        return _summary(tuple(float(v) for v in values), bx, by, quad, order)
    except (NonIntegrableError, NumericalError):
        return None


def fit_mle(data, baselines, init=None, method: str = "gradient", quad: QuadratureSpec = DEFAULT_QUAD,
            free=None, tol: float = 1e-6, max_iter: int = 200,
            sweep_order: tuple = DEFAULT_SWEEP) -> FitResult:
    """Maximum-likelihood fit of ``theta``.

    Parameters
    ----------
    init : ThetaVector or sequence, optional
        Starting point; defaults to independent RB-G margins fitted
        separately.  Entries outside ``free`` stay at their initial values.
    method : {"gradient", "cyclic"}
        ``gradient``: Fisher scoring (Newton on the concave log-likelihood)
        with a backtracking line search.  ``cyclic``: one-dimensional
        bracketed secant solves of each likelihood equation in turn, in
        ``sweep_order``.
    free : sequence of int, optional
        1-based indices of the estimated parameters; all eight by default.
    tol : float
        Convergence when ``max |residual_j|`` over free ``j`` is at most ``tol``.

    Returns
    -------
    FitResult
        ``converged`` is false if ``max_iter`` iterations (or sweeps) did not
        reach ``tol``.  Rejected trial points outside the integrable region
        are listed in ``trace``.
    """
    bx, by = _baselines(baselines)
    arr = _pairs(data)
    stats = sufficient_stats(arr, (bx, by))
    theta = _theta(init) if init is not None else _default_init(arr, bx, by)
    free = tuple(range(1, 9)) if free is None else tuple(sorted({int(j) for j in free}))
    if not free or any(j < 1 or j > 8 for j in free):
        raise DomainError("free must list parameter indices in 1..8")
    free_idx = [j - 1 for j in free]
    if _try_summary(theta.values, bx, by, quad, 2) is None:
        raise NonIntegrableError("the initial theta is not in the integrable region")

    if method == "gradient":
        theta, iterations, converged, gnorm, trace = _fit_scoring(theta, stats, free_idx, bx, by, quad,
                                                                  tol, max_iter)
    elif method == "cyclic":
        order = [j - 1 for j in sweep_order if j in free]
        order += [j for j in free_idx if j not in order]
        theta, iterations, converged, gnorm, trace = _fit_cyclic(theta, stats, order, free_idx, bx, by,
                                                                 quad, tol, max_iter)
    else:
        raise DomainError("method must be 'gradient' or 'cyclic'")
    loglik = log_likelihood(theta, None, (bx, by), quad, stats=stats)
    cov = _covariance(theta, free_idx, stats.n, bx, by, quad)
    return FitResult(theta, cov, loglik, iterations, converged, gnorm, method, free, trace)


def _objective(values, stats, bx, by, quad):
    """``loglik / n`` up to the data-only constant; ``-inf`` outside the integrable region."""
    summary = _try_summary(values, bx, by, quad, 0)
    if summary is None:
        return -math.inf
    return float(np.dot(values, stats.means)) - summary.log_psi


def _fit_scoring(theta, stats, free_idx, bx, by, quad, tol, max_iter):
    x = theta.array()
    trace = []
    f = _objective(x, stats, bx, by, quad)
    gnorm = math.inf
    for it in range(max_iter + 1):
        summary = _summary(tuple(x), bx, by, quad, 2)
        resid = summary.mean - stats.means
        gnorm = float(np.max(np.abs(resid[free_idx])))
        trace.append(("iterate", it, tuple(x), gnorm))
        if gnorm <= tol:
            return ThetaVector(x), it, True, gnorm, trace
        if it == max_iter:
            break
        info = summary.cov[np.ix_(free_idx, free_idx)]
        try:
            step = -np.linalg.solve(info, resid[free_idx])
        except np.linalg.LinAlgError:
            step = -resid[free_idx]
        lam = 1.0
        while lam > 1e-10:
            trial = x.copy()
            trial[free_idx] += lam * step
            ft = _objective(trial, stats, bx, by, quad)
            if ft == -math.inf:
                trace.append(("rejected: not integrable", it, tuple(trial), lam))
            elif ft >= f - 1e-13 * (1.0 + abs(f)):
                x, f = trial, ft
                break
            lam *= 0.5
        else:
            trace.append(("line search failed", it, tuple(x), gnorm))
            break
    return ThetaVector(x), it, False, gnorm, trace


def _fit_cyclic(theta, stats, order, free_idx, bx, by, quad, tol, max_iter):
    x = theta.array()
    trace = []
    gnorm = math.inf

    def resid(values, j):
        summary = _try_summary(values, bx, by, quad, 1)
        if summary is None:
            return None
        return float(summary.mean[j] - stats.means[j])

    for sweep in range(max_iter + 1):
        summary = _summary(tuple(x), bx, by, quad, 2)
        full = summary.mean - stats.means
        gnorm = float(np.max(np.abs(full[free_idx])))
        trace.append(("sweep", sweep, tuple(x), gnorm))
        if gnorm <= tol:
            return ThetaVector(x), sweep, True, gnorm, trace
        if sweep == max_iter:
            break
        for j in order:
            x = _solve_coordinate(x, j, resid, summary.cov[j, j], tol, trace)
            summary = _summary(tuple(x), bx, by, quad, 2)
    return ThetaVector(x), sweep, False, gnorm, trace


def _solve_coordinate(x, j, resid, var_jj, tol, trace, max_steps=100, max_rejections=6):
    """Root of the increasing function ``theta_j -> residual_j`` by a bracketed secant (Illinois) method."""
    def at(value):
        trial = x.copy()
        trial[j] = value
        return resid(trial, j)

    a = x[j]
    fa = at(a)
    if fa is None or abs(fa) <= 0.1 * tol:
        return x
    # Newton guess for the bracket width; the residual's slope is Var(stat_j)
    width = abs(fa) / max(var_jj, 1e-12)
    direction = -1.0 if fa > 0 else 1.0
    b, fb = None, None
    rejected = 0
    for _ in range(40):
        cand = a + direction * width
        fc = at(cand)
        if fc is None:
            trace.append(("rejected: not integrable", j + 1, cand))
            rejected += 1
            if rejected > max_rejections:
                break
            width *= 0.5
            continue
        if (fc > 0) != (fa > 0):
            b, fb = cand, fc
            break
        a, fa = cand, fc
        width *= 2.0
    if b is None:
        trace.append(("bracket failed", j + 1, a))
        out = x.copy()
        out[j] = a
        return out
    side = 0
    c = a
    for _ in range(max_steps):
        c = b - fb * (b - a) / (fb - fa)
        fc = at(c)
        if fc is None:
            c = 0.5 * (a + b)
            fc = at(c)
            if fc is None:
                raise NonConvergenceError(f"coordinate {j + 1}: bracket interior is not integrable")
        if abs(fc) <= 0.1 * tol or abs(b - a) <= 1e-14 * (1.0 + abs(c)):
            break
        if (fc > 0) == (fb > 0):
            b, fb = c, fc
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a, fa = c, fc
            if side == 1:
                fb *= 0.5
            side = 1
    out = x.copy()
    out[j] = c
    return out
