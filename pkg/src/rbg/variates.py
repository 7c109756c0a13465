"""Gamma(a, 1) random variates by the Marsaglia-Tsang squeeze method."""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _marsaglia_tsang(shape: float, n: int, rng: np.random.Generator) -> np.ndarray:
    # valid for shape >= 1
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(n)
    filled = 0
    while filled < n:
        need = n - filled
        batch = int(need * 1.1) + 16
        z = rng.standard_normal(batch)
        u = rng.random(batch)
        v = (1.0 + c * z) ** 3
        ok = v > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = ok & (
                (u < 1.0 - 0.0331 * z ** 4)
                | (np.log(u) < 0.5 * z * z + d * (1.0 - v + np.log(np.where(ok, v, 1.0))))
            )
        got = (d * v)[accept][:need]
        out[filled:filled + got.size] = got
        filled += got.size
    return out


def gamma_variates(shape, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` Gamma(shape, 1) variates.

    Shapes below one use the boost ``G(shape + 1) * U**(1/shape)``.  The
    stream is fully determined by ``seed`` (an int or a ``Generator``).
    """
    shape = float(shape)
    if not (np.isfinite(shape) and shape > 0):
        raise DomainError("gamma shape must be positive and finite")
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    rng = as_generator(seed)
    if shape >= 1.0:
        return _marsaglia_tsang(shape, int(n), rng)
    g = _marsaglia_tsang(shape + 1.0, int(n), rng)
    u = rng.random(int(n))
    # log-space power keeps tiny variates from underflowing to exactly 0 too early
    return np.exp(np.log(g) + np.log(u) / shape)


def gamma_variates_varying(shapes, rng: np.random.Generator) -> np.ndarray:
    """One Gamma(shape_i, 1) draw per entry of ``shapes`` (all positive)."""
    shapes = np.asarray(shapes, dtype=float)
    if np.any(~np.isfinite(shapes)) or np.any(shapes <= 0):
        raise DomainError("gamma shapes must be positive and finite")
    boosted = shapes < 1.0
    a = np.where(boosted, shapes + 1.0, shapes)
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(shapes.shape)
    pending = np.arange(shapes.size)
    while pending.size:
        z = rng.standard_normal(pending.size)
        u = rng.random(pending.size)
        dp, cp = d[pending], c[pending]
        v = (1.0 + cp * z) ** 3
        ok = v > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = ok & (
                (u < 1.0 - 0.0331 * z ** 4)
                | (np.log(u) < 0.5 * z * z + dp * (1.0 - v + np.log(np.where(ok, v, 1.0))))
            )
        out[pending[accept]] = (dp * v)[accept]
        pending = pending[~accept]
    if boosted.any():
        idx = np.nonzero(boosted)[0]
        u = rng.random(idx.size)
        out[idx] = np.exp(np.log(out[idx]) + np.log(u) / shapes[idx])
    return out


class GammaStream:
    """Scalar Gamma(shape, 1) draws with a different shape on every call.

    A Gibbs sweep needs one variate at a time with a state-dependent shape;
    drawing normals and uniforms from the generator in blocks keeps the
    per-variate cost in plain float arithmetic.
    """

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self._rng = rng
        self._block = int(block)
        self._normals = rng.standard_normal(self._block)
        self._uniforms = rng.random(self._block)
        self._i = 0
        self._j = 0

    def _normal(self) -> float:
        if self._i == self._block:
            self._normals = self._rng.standard_normal(self._block)
            self._i = 0
        z = self._normals[self._i]
        self._i += 1
        return float(z)

    def uniform(self) -> float:
        if self._j == self._block:
            self._uniforms = self._rng.random(self._block)
            self._j = 0
        u = self._uniforms[self._j]
        self._j += 1
        return float(u)

    def draw(self, shape: float) -> float:
        if not (math.isfinite(shape) and shape > 0):
            raise DomainError("gamma shape must be positive and finite")
        boost = shape < 1.0
        a = shape + 1.0 if boost else shape
        d = a - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            z = self._normal()
            v = 1.0 + c * z
            if v <= 0.0:
                continue
            v = v * v * v
            u = self.uniform()
            if u < 1.0 - 0.0331 * z ** 4 or (u > 0.0 and math.log(u) < 0.5 * z * z + d * (1.0 - v + math.log(v))):
                x = d * v
                break
        if boost:
            u = self.uniform()
            while u == 0.0:
                u = self.uniform()
            x = math.exp(math.log(x) + math.log(u) / shape)
        return x
