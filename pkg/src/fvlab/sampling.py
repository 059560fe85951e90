"""Seeded random streams and exact samplers.

A :class:`RngStream` wraps a PCG64DXSM bit generator keyed by
``(seed, stream_id)`` through :class:`numpy.random.SeedSequence`, so distinct
stream ids give independent streams and a pair always reproduces the same
sequence.  Samplers draw only through ``stream.normal`` and
``stream.uniform``; the stub streams below override those two methods.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .specfun import DomainError, _finite

_MASK64 = (1 << 64) - 1


class NoFiniteHittingTime(DomainError):
    """The squared Bessel process never reaches 0 (dimension >= 2)."""


class RngStream:
    """Independent random stream identified by ``(seed, stream_id)``."""

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= int(seed) <= _MASK64 and 0 <= int(stream_id) <= _MASK64):
            raise DomainError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64DXSM(ss))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(seed={self.seed}, stream_id={self.stream_id})"

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, size=None):
        """Uniform variates on the half-open interval (0, 1]."""
        return 1.0 - self._gen.random(size)


class ZeroNoiseStream(RngStream):
    """Stub stream: every normal is 0 and every uniform is ``uniform_value``."""

    def __init__(self, uniform_value: float = 0.5):
        super().__init__(0, 0)
        self.uniform_value = float(uniform_value)

    def normal(self, size=None):
        return 0.0 if size is None else np.zeros(size)

    def uniform(self, size=None):
        return self.uniform_value if size is None else np.full(size, self.uniform_value)


class ScriptedStream(RngStream):
    """Stub stream replaying fixed normal and uniform sequences (zeros/0.5 once exhausted)."""

    def __init__(self, normals=(), uniforms=()):
        super().__init__(0, 0)
        self._normals = list(map(float, normals))
        self._uniforms = list(map(float, uniforms))

    @staticmethod
    def _take(queue, fill, size):
        n = 1 if size is None else int(np.prod(size))
        head, queue[:] = queue[:n], queue[n:]
        vals = np.array(head + [fill] * (n - len(head)))
        return float(vals[0]) if size is None else vals.reshape(size)

    def normal(self, size=None):
        return self._take(self._normals, 0.0, size)

    def uniform(self, size=None):
        return self._take(self._uniforms, 0.5, size)


def _count(size) -> int:
    return 1 if size is None else int(np.prod(size))


def _shape(values: np.ndarray, size):
    return float(values[0]) if size is None else values.reshape(size)


def sample_standard_normal(stream: RngStream, size=None):
    return stream.normal(size)


def sample_gamma(alpha: float, stream: RngStream, size=None):
    """Unit-scale gamma variates, density x**(alpha-1) e**-x / Gamma(alpha).

    Marsaglia-Tsang squeeze rejection for alpha >= 1; for alpha < 1 a
    Gamma(alpha + 1) draw is multiplied by U**(1/alpha).
    """
    alpha = _finite(alpha, "alpha")
    if alpha <= 0.0:
        raise DomainError(f"alpha must be > 0, got {alpha}")
    n = _count(size)
    shape = alpha + 1.0 if alpha < 1.0 else alpha
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)

    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(8, int(1.1 * (n - filled)) + 8)
        z = np.atleast_1d(stream.normal(m))
        u = np.atleast_1d(stream.uniform(m))
        v = (1.0 + c * z) ** 3
        pos = v > 0.0
        with np.errstate(invalid="ignore", divide="ignore"):
            log_v = np.where(pos, np.log(np.where(pos, v, 1.0)), -np.inf)
            accept = pos & (
                (u < 1.0 - 0.0331 * z**4) | (np.log(u) < 0.5 * z * z + d * (1.0 - v + log_v))
            )
        got = (d * v[accept])[: n - filled]
        out[filled : filled + got.size] = got
        filled += got.size
    if alpha < 1.0:
        out *= np.atleast_1d(stream.uniform(n)) ** (1.0 / alpha)
    return _shape(out, size)


def sample_chi_squared(dof: float, stream: RngStream, size=None):
    dof = _finite(dof, "dof")
    if dof <= 0.0:
        raise DomainError(f"degrees of freedom must be > 0, got {dof}")
    return 2.0 * sample_gamma(0.5 * dof, stream, size)


def sample_student_t(a: float, stream: RngStream, size=None):
    """Student-t with ``a`` degrees of freedom as Z sqrt(a / V), V ~ chi2(a)."""
    a = _finite(a, "a")
    if a <= 0.0:
        raise DomainError(f"degrees of freedom must be > 0, got {a}")
    z = stream.normal(size)
    v = sample_chi_squared(a, stream, size)
    return z * np.sqrt(a / v)


@dataclass(frozen=True)
class HittingTimeLaw:
    """Law of the first hitting time of 0 by a squared Bessel process.

    ``start`` is the starting value of the squared process; for a Bessel
    process started at x use ``start = x**2``.
    """

    start: float
    nu: float

    def __post_init__(self):
        if not (math.isfinite(self.start) and self.start > 0.0):
            raise DomainError(f"start must be > 0, got {self.start}")
        if not math.isfinite(self.nu):
            raise DomainError(f"nu must be finite, got {self.nu}")

    @property
    def alpha(self) -> float:
        return 1.0 - 0.5 * self.nu

    def mean(self) -> float:
        """E T0 = start / (2 (alpha - 1)); infinite for alpha <= 1."""
        if self.nu >= 2.0:
            return math.inf
        return self.start / (2.0 * (self.alpha - 1.0)) if self.alpha > 1.0 else math.inf


def sample_hitting_time(law: HittingTimeLaw, stream: RngStream, size=None):
    """Exact draw of T0 = start / (2 G), G ~ Gamma(1 - nu/2)."""
    if law.nu >= 2.0:
        raise NoFiniteHittingTime(f"no finite hitting time of 0 for nu = {law.nu} >= 2")
    g = sample_gamma(law.alpha, stream, size)
    return law.start / (2.0 * g)


def sample_alpha_sq(nu: float, stream: RngStream, size=None):
    """Exact draw of the squared jump factor as 2|Z| / sqrt(V), V ~ chi2(2 - nu)."""
    nu = _finite(nu, "nu")
    if nu >= 2.0:
        raise DomainError(f"nu must be < 2, got {nu}")
    z = stream.normal(size)
    v = sample_chi_squared(2.0 - nu, stream, size)
    return 2.0 * np.abs(z) / np.sqrt(v)
