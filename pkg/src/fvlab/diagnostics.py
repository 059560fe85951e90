"""Estimators that tie simulated samples back to closed-form predictions."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .specfun import DomainError, _require


# --- mergeable summary statistics ---------------------------------------------


@dataclass(frozen=True)
class SummaryStats:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0  # sum of squared deviations from the mean
    min: float = math.inf
    max: float = -math.inf

    @classmethod
    def from_values(cls, values) -> "SummaryStats":
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            return cls()
        mu = float(v.mean())
        return cls(int(v.size), mu, float(np.sum((v - mu) ** 2)), float(v.min()), float(v.max()))

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else math.nan

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def se(self) -> float:
        return self.std / math.sqrt(self.count) if self.count > 1 else math.nan


def merge_stats(a: SummaryStats, b: SummaryStats) -> SummaryStats:
    """Pairwise combination (Chan et al.); the empty summary is the identity."""
    if a.count == 0:
        return b
    if b.count == 0:
        return a
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = (a.count * a.mean + b.count * b.mean) / n
    m2 = a.m2 + b.m2 + delta * delta * a.count * b.count / n
    return SummaryStats(n, mean, m2, min(a.min, b.min), max(a.max, b.max))


# --- perpetuity criterion -------------------------------------------------------


class Verdict(enum.Enum):
    CONVERGES = "converges"
    DIVERGES = "diverges"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class PerpetuityResult:
    elog_a: float
    se: float
    verdict: Verdict
    partial_sum: float  # sum_{n <= n_terms} A_1 ... A_{n-1} B_n


def perpetuity_test(pairs, n_terms: int | None = None, margin: float = 3.0) -> PerpetuityResult:
    """Sign test on E log A for the series sum_n A_1 ... A_{n-1} B_n.

    ``pairs`` is a sequence of (A, B) or an (n, 2) array.  The verdict is
    CONVERGES when mean + margin SE < 0, DIVERGES when mean - margin SE > 0.
    """
    arr = np.asarray(pairs, dtype=float)
    _require(arr.ndim == 2 and arr.shape[1] == 2 and arr.shape[0] >= 1,
             "pairs must be a nonempty sequence of (A, B)")
    a, b = arr[:, 0], arr[:, 1]
    if not (np.all(a > 0) and np.all(b > 0) and np.all(np.isfinite(arr))):
        raise DomainError("A and B must be positive and finite")
    log_a = np.log(a)
    mean = float(log_a.mean())
    se = float(log_a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
    if mean + margin * se < 0.0:
        verdict = Verdict.CONVERGES
    elif mean - margin * se > 0.0:
        verdict = Verdict.DIVERGES
    else:
        verdict = Verdict.INCONCLUSIVE
    k = a.size if n_terms is None else min(int(n_terms), a.size)
    _require(k >= 1, "n_terms must be >= 1")
    log_prefix = np.concatenate([[0.0], np.cumsum(log_a[: k - 1])])
    with np.errstate(over="ignore"):
        partial = float(np.sum(np.exp(log_prefix) * b[:k]))
    return PerpetuityResult(mean, se, verdict, partial)


# --- Kolmogorov-Smirnov -----------------------------------------------------------


@dataclass(frozen=True)
class KsResult:
    d: float
    p: float


def kolmogorov_q(lam: float, terms: int = 100) -> float:
    """Q(lam) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lam^2), the limiting KS tail."""
    if lam < 0.2:
        return 1.0  # series has not settled this close to 0; Q(0.2) = 1 - 1e-20
    k = np.arange(1, terms + 1)
    q = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k * k * lam * lam))
    return float(min(1.0, max(0.0, q)))


def ks_statistic(x, y) -> float:
    xs = np.sort(np.asarray(x, dtype=float).ravel())
    ys = np.sort(np.asarray(y, dtype=float).ravel())
    grid = np.concatenate([xs, ys])
    fx = np.searchsorted(xs, grid, side="right") / xs.size
    fy = np.searchsorted(ys, grid, side="right") / ys.size
    return float(np.max(np.abs(fx - fy)))


def ks_two_sample(x, y) -> KsResult:
    """Two-sample KS statistic with the asymptotic p-value (Stephens' small-sample correction)."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size == 0 or y.size == 0:
        raise DomainError("KS test needs two nonempty samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("KS samples must be finite")
    d = ks_statistic(x, y)
    ne = x.size * y.size / (x.size + y.size)
    sq = math.sqrt(ne)
    return KsResult(d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d))


def ks_one_sample(x, cdf) -> KsResult:
    """One-sample KS against a vectorised CDF."""
    xs = np.sort(np.asarray(x, dtype=float).ravel())
    if xs.size == 0:
        raise DomainError("KS test needs a nonempty sample")
    if not np.all(np.isfinite(xs)):
        raise DomainError("KS sample must be finite")
    f = np.asarray(cdf(xs), dtype=float)
    n = xs.size
    d = float(max(np.max(np.arange(1, n + 1) / n - f), np.max(f - np.arange(n) / n)))
    sq = math.sqrt(n)
    return KsResult(d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d))


# --- exponential tail ------------------------------------------------------------------


@dataclass(frozen=True)
class TailFit:
    rate: float
    log_intercept: float
    r_squared: float
    t_range: tuple[float, float]
    n_points: int


MIN_TAIL_SAMPLE = 100


def tail_fit(extinction_times: Sequence[float], quantile_lo: float = 0.5,
             quantile_hi: float = 0.99) -> TailFit:
    """Least-squares line through (t, log S_hat(t)) for order statistics in the quantile band.

    S_hat(t_(i)) = 1 - i/n; the rate is minus the slope.
    """
    t = np.sort(np.asarray(extinction_times, dtype=float).ravel())
    n = t.size
    if n < MIN_TAIL_SAMPLE:
        raise DomainError(f"tail fit needs at least {MIN_TAIL_SAMPLE} samples, got {n}")
    if not np.all(np.isfinite(t)):
        raise DomainError("extinction times must be finite")
    _require(0.0 < quantile_lo < quantile_hi < 1.0,
             f"need 0 < quantile_lo < quantile_hi < 1, got ({quantile_lo}, {quantile_hi})")
    if t[0] == t[-1]:
        raise DomainError("degenerate sample: all values equal")
    frac = np.arange(1, n + 1) / n
    keep = (frac >= quantile_lo) & (frac <= quantile_hi)
    tt, ls = t[keep], np.log1p(-frac[keep])
    if tt.size < 10 or tt[0] == tt[-1]:
        raise DomainError("too few distinct points in the quantile band")
    slope, intercept = np.polyfit(tt, ls, 1)
    resid = ls - (slope * tt + intercept)
    ss_tot = float(np.sum((ls - ls.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return TailFit(float(-slope), float(intercept), max(0.0, r2), (float(tt[0]), float(tt[-1])), int(tt.size))
