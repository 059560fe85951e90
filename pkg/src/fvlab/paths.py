"""Euler-Maruyama paths for the Bessel, squared Bessel and power-drift laws.

Steps are adaptive near the singular drift, ``dt = min(dt_base, kappa x^2)``
(and ``kappa beta x^beta`` for the power drift, so the drift increment stays
a small fraction of ``x``).  A path is absorbed when a proposed value falls
to ``eps_abs`` or below; the crossing time is refined by linear
interpolation inside the step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit

from . import _kernels as K
from .sampling import RngStream
from .specfun import DomainError, _finite, _require, fw_lipschitz, ode_flow, power_drift


@dataclass(frozen=True)
class PathConfig:
    dt_base: float = 1e-3
    kappa: float = 0.01
    eps_abs: float = 1e-6
    horizon: float = 10.0

    def __post_init__(self):
        for name in ("dt_base", "kappa", "eps_abs", "horizon"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be a positive finite number, got {v!r}")
        if self.eps_abs >= 0.5:
            raise DomainError(f"eps_abs must be small, got {self.eps_abs}")


# --- driving laws -----------------------------------------------------------


@dataclass(frozen=True)
class Bessel:
    """Bessel(nu) on (0, inf), drift (nu - 1)/(2x), absorbed at 0."""

    nu: float

    def __post_init__(self):
        _finite(self.nu, "nu")

    code = K.BESSEL

    @property
    def param(self) -> float:
        return float(self.nu)

    def check_start(self, x0: float) -> float:
        x0 = _finite(x0, "x0")
        _require(x0 > 0.0, f"Bessel start must be > 0, got {x0}")
        return x0


@dataclass(frozen=True)
class PowerDriftReflected:
    """dX = dW - dt/(beta X^(beta-1)) on (0, 2], mirrored at 2, absorbed at 0."""

    beta: float

    def __post_init__(self):
        _require(math.isfinite(self.beta) and self.beta > 2.0, f"beta must be > 2, got {self.beta}")

    code = K.POWER_REFLECTED

    @property
    def param(self) -> float:
        return float(self.beta)

    def check_start(self, x0: float) -> float:
        x0 = _finite(x0, "x0")
        _require(0.0 < x0 <= K.UPPER_BARRIER, f"start must lie in (0, 2], got {x0}")
        return x0


@dataclass(frozen=True)
class PowerDrift:
    """Same drift as :class:`PowerDriftReflected` without the barrier at 2."""

    beta: float

    def __post_init__(self):
        _require(math.isfinite(self.beta) and self.beta > 2.0, f"beta must be > 2, got {self.beta}")

    code = K.POWER_FREE

    @property
    def param(self) -> float:
        return float(self.beta)

    def check_start(self, x0: float) -> float:
        x0 = _finite(x0, "x0")
        _require(x0 > 0.0, f"start must be > 0, got {x0}")
        return x0


@dataclass(frozen=True)
class SquaredBessel:
    """dZ = dim dt + 2 sqrt(|Z|) dW, absorbed when it reaches 0."""

    dim: float

    def __post_init__(self):
        _finite(self.dim, "dim")

    code = K.SQUARED_BESSEL

    @property
    def param(self) -> float:
        return float(self.dim)

    def check_start(self, x0: float) -> float:
        x0 = _finite(x0, "x0")
        _require(x0 > 0.0, f"squared Bessel start must be > 0, got {x0}")
        return x0


DriftLaw = Union[Bessel, PowerDriftReflected, PowerDrift, SquaredBessel]


def reflect_upper(value: float, barrier: float) -> float:
    """Mirror ``value`` at ``barrier`` if it lies above it."""
    return value if value <= barrier else 2.0 * barrier - value


# --- paths ------------------------------------------------------------------


@dataclass(frozen=True)
class Absorbed:
    time: float


@dataclass(frozen=True)
class HorizonReached:
    pass


@dataclass
class Path:
    times: np.ndarray
    values: np.ndarray
    terminal: Union[Absorbed, HorizonReached]

    def write_csv(self, filename) -> None:
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "value"])
            for t, v in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(v))])


class NormalFeed:
    """Buffered standard normals drawn from one stream in fixed-size blocks.

    Block sizes are constant, so the draw sequence (and therefore every
    path) depends only on the stream and the order of requests.
    """

    def __init__(self, stream: RngStream, block: int = 1 << 14):
        self.stream = stream
        self.block = int(block)
        self._buf = np.empty(0)
        self._pos = 0

    def rows(self, width: int) -> np.ndarray:
        """View of the buffered normals as rows of ``width``; refills when short."""
        if self._buf.size - self._pos < width:
            rest = self._buf[self._pos :]
            fresh = np.asarray(self.stream.normal(self.block), dtype=float).reshape(-1)
            self._buf = np.concatenate([rest, fresh])
            self._pos = 0
        avail = (self._buf.size - self._pos) // width
        return self._buf[self._pos : self._pos + avail * width].reshape(avail, width)

    def consume(self, n_rows: int, width: int) -> None:
        self._pos += n_rows * width


class Stepper:
    """Drives the compiled kernel for a fixed set of particles."""

    def __init__(self, law: DriftLaw, x: np.ndarray, config: PathConfig, feed: NormalFeed,
                 record: bool = False, couple_dim: float | None = None):
        self.law = law
        self.config = config
        self.feed = feed
        self.x = np.array(x, dtype=float)  # owned copy; the kernel updates it in place
        self.n = self.x.size
        self.clock = np.zeros(2)
        self.record = record
        self.couple = couple_dim is not None
        self.couple_dim = float(couple_dim) if self.couple else 0.0
        # same summation order as the kernel, so an unjumped system stays coalesced bit for bit
        ss = 0.0
        for v in self.x:
            ss += float(v) * float(v)
        self.yhat = np.array([math.sqrt(ss)]) if self.couple else np.zeros(1)
        self.dying = np.zeros(self.n, dtype=np.bool_)
        self._prop = np.empty(self.n)
        self._rec_t: list[np.ndarray] = []
        self._rec_x: list[np.ndarray] = []
        self._rec_aux: list[np.ndarray] = []

    @property
    def time(self) -> float:
        return float(self.clock[0])

    def run(self, horizon: float) -> int:
        """Advance until a crossing or ``horizon``; returns the kernel status."""
        c = self.config
        while True:
            normals = self.feed.rows(self.n)
            nb = normals.shape[0]
            if self.record:
                rt, rx, ra = np.empty(nb), np.empty((nb, self.n)), np.empty(nb)
            else:
                rt, rx, ra = _EMPTY1, _EMPTY2, _EMPTY1
            used, nrec, status = K.advance(
                self.law.code, self.law.param, self.x, self.clock, normals, horizon,
                c.dt_base, c.kappa, c.eps_abs, self.couple, self.couple_dim, self.yhat,
                self.record, rt, rx, ra, self.dying, self._prop,
            )
            self.feed.consume(used, self.n)
            if self.record and nrec:
                self._rec_t.append(rt[:nrec])
                self._rec_x.append(rx[:nrec])
                self._rec_aux.append(ra[:nrec])
            if status != K.BLOCK_DONE:
                return status

    def recorded(self):
        if not self._rec_t:
            return np.empty(0), np.empty((0, self.n)), np.empty(0)
        return (np.concatenate(self._rec_t), np.concatenate(self._rec_x),
                np.concatenate(self._rec_aux))


_EMPTY1 = np.empty(0)
_EMPTY2 = np.empty((0, 1))


def distinct_times(times: np.ndarray, *columns: np.ndarray):
    """Keep the last row of every run of equal times.

    Steps near the singularity can be shorter than one ulp of the clock;
    such rows carry no time information of their own.
    """
    keep = np.ones(times.size, dtype=bool)
    keep[:-1] = times[1:] != times[:-1]
    return (times[keep],) + tuple(c[keep] for c in columns)


def simulate(law: DriftLaw, x0: float, config: PathConfig, stream: RngStream,
             feed: NormalFeed | None = None) -> Path:
    """One Euler-Maruyama path from ``x0`` until absorption or ``config.horizon``."""
    x0 = law.check_start(x0)
    feed = feed or NormalFeed(stream)
    st = Stepper(law, np.array([x0]), config, feed, record=True)
    status = st.run(config.horizon)
    t, xs, _ = st.recorded()
    times, values = distinct_times(np.concatenate([[0.0], t]), np.concatenate([[x0], xs[:, 0]]))
    if status == K.CROSSED:
        values[-1] = min(values[-1], config.eps_abs)
        return Path(times, values, Absorbed(st.time))
    return Path(times, values, HorizonReached())


def absorption_time(law: DriftLaw, x0: float, config: PathConfig, feed: NormalFeed) -> float:
    """Absorption time of one path (``inf`` if the horizon is reached first)."""
    st = Stepper(law, np.array([law.check_start(x0)]), config, feed)
    return st.time if st.run(config.horizon) == K.CROSSED else math.inf


def absorption_times(law: DriftLaw, x0: float, n_paths: int, config: PathConfig,
                     stream: RngStream) -> np.ndarray:
    """Absorption times of ``n_paths`` independent paths drawn from one stream."""
    _require(int(n_paths) >= 1, "n_paths must be >= 1")
    feed = NormalFeed(stream)
    return np.array([absorption_time(law, x0, config, feed) for _ in range(int(n_paths))])


# --- Freidlin-Wentzell deviation check ----------------------------------------


@dataclass(frozen=True)
class FwCheckResult:
    a: float
    beta: float
    gamma: float
    delta: float
    lipschitz_L: float
    empirical_prob: float
    bound: float
    n_reps: int

    @property
    def binomial_se(self) -> float:
        p = self.empirical_prob
        return math.sqrt(p * (1.0 - p) / self.n_reps)

    @property
    def holds(self) -> bool:
        return self.empirical_prob <= self.bound + 3.0 * self.binomial_se


def fw_precondition(a: float, beta: float, gamma: float, delta: float) -> None:
    """Raise unless ``delta`` keeps the tube inside [a (gamma/2)^(1/beta) / 2, 2a]."""
    _require(math.isfinite(a) and a > 0.0, f"a must be > 0, got {a}")
    _require(math.isfinite(beta) and beta > 2.0, f"beta must be > 2, got {beta}")
    _require(0.0 < gamma < 1.0, f"gamma must lie in (0, 1), got {gamma}")
    _require(math.isfinite(delta) and delta > 0.0, f"delta must be > 0, got {delta}")
    low = a * (gamma / 2.0) ** (1.0 / beta)
    if not low / 2.0 <= low - delta:
        raise DomainError(
            f"lower tube condition fails: need y(T) - delta >= {low / 2.0:.6g}, "
            f"i.e. delta <= {low / 2.0:.6g}, got delta = {delta}"
        )
    if not a + delta <= 2.0 * a:
        raise DomainError(f"upper tube condition fails: need a + delta <= 2a, i.e. delta <= {a}")


def fw_bound(a: float, beta: float, gamma: float, delta: float) -> float:
    """4 P(N(0, T) > delta e^(-L T)) with T = (1 - gamma/2) a^beta."""
    horizon = (1.0 - gamma / 2.0) * a**beta
    lip = fw_lipschitz(a, beta, gamma)
    z = delta * math.exp(-lip * horizon) / math.sqrt(horizon)
    return 2.0 * math.erfc(z / math.sqrt(2.0))


@njit(cache=True)
def _fw_exceeds(a, beta, horizon, delta, normals, dt_base, kappa, state):
    """Advance one deviation path; state = (x, t, done, exceeded)."""
    x = state[0]
    t = state[1]
    ab = a**beta
    for s in range(normals.shape[0]):
        if t >= horizon:
            state[0] = x
            state[1] = t
            state[2] = 1.0
            return s
        dt = min(dt_base, kappa * x * x, kappa * beta * x**beta)
        if t + dt > horizon:
            dt = horizon - t
        x = x - dt / (beta * x ** (beta - 1.0)) + math.sqrt(dt) * normals[s]
        t += dt
        y = (ab - t) ** (1.0 / beta)
        if abs(x - y) > delta or x <= 0.0:
            state[0] = x
            state[1] = t
            state[2] = 1.0
            state[3] = 1.0
            return s + 1
    state[0] = x
    state[1] = t
    return normals.shape[0]


def fw_deviation_check(a: float, beta: float, gamma: float, delta: float, n_reps: int,
                       config: PathConfig, stream: RngStream) -> FwCheckResult:
    """Fraction of power-drift paths from ``a`` leaving the delta-tube around the ODE flow."""
    fw_precondition(a, beta, gamma, delta)
    _require(int(n_reps) >= 1, "n_reps must be >= 1")
    horizon = (1.0 - gamma / 2.0) * a**beta
    feed = NormalFeed(stream)
    hits = 0
    for _ in range(int(n_reps)):
        state = np.array([float(a), 0.0, 0.0, 0.0])
        while state[2] == 0.0:
            normals = feed.rows(1)[:, 0]
            used = _fw_exceeds(a, beta, horizon, delta, normals, config.dt_base, config.kappa, state)
            feed.consume(used, 1)
        hits += int(state[3])
    return FwCheckResult(a, beta, gamma, delta, fw_lipschitz(a, beta, gamma),
                         hits / int(n_reps), fw_bound(a, beta, gamma, delta), int(n_reps))


__all__ = [
    "PathConfig", "Bessel", "PowerDriftReflected", "PowerDrift", "SquaredBessel", "DriftLaw",
    "reflect_upper", "distinct_times", "Absorbed", "HorizonReached", "Path", "NormalFeed", "Stepper", "simulate",
    "absorption_time", "absorption_times", "FwCheckResult", "fw_precondition", "fw_bound",
    "fw_deviation_check", "ode_flow", "power_drift",
]
