"""Fleming-Viot particle systems on the half line.

N particles move independently under one driving law.  When a particle
reaches the absorption level it jumps to the current position of another
particle chosen uniformly at random.  The jump times tau_1 < tau_2 < ...
either accumulate at a finite time (extinction) or run off to infinity.

Also here: the two-particle scaling construction, which builds the jump
times of a two-particle Bessel system from i.i.d. pairs (sigma_i, alpha_i),
and the sum-of-squares coupling against a Bessel(N nu) process.
"""
from __future__ import annotations

import csv
import math
from array import array
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import _kernels as K
from .paths import (Absorbed, Bessel, DriftLaw, HorizonReached, NormalFeed, Path,
                    PathConfig, Stepper, distinct_times)
from .sampling import NoFiniteHittingTime, RngStream
from .specfun import DomainError, _finite, _require


@dataclass(frozen=True)
class ExtinctionThresholds:
    """Numerical extinction: the last ``m`` jumps fit in ``w_min`` and every particle is below ``pos_min``."""

    m: int = 100
    w_min: float = 1e-9
    pos_min: float = 1e-4
    k_max: int = 1_000_000

    def __post_init__(self):
        _require(self.m >= 2, f"m must be >= 2, got {self.m}")
        _require(self.w_min > 0 and self.pos_min > 0, "w_min and pos_min must be > 0")
        _require(self.k_max >= self.m, f"k_max must be >= m, got {self.k_max}")


@dataclass(frozen=True)
class Extinct:
    tau_inf_estimate: float
    degenerate: bool = False  # every particle crossed within a single step


@dataclass(frozen=True)
class Survived:
    horizon: float
    cap: bool = False  # stopped at the event cap rather than the horizon


Classification = Union[Extinct, Survived]


@dataclass(frozen=True)
class EventRecord:
    tau_k: float
    dying_index: int  # 1-based
    target_index: int  # 1-based


@dataclass
class SystemState:
    positions: np.ndarray
    time: float = 0.0
    event_count: int = 0


@dataclass
class RunOutcome:
    tau: np.ndarray
    dying: np.ndarray
    target: np.ndarray
    classification: Classification
    max_position_at_end: float
    final_state: Optional[SystemState] = None

    @property
    def events(self) -> list[EventRecord]:
        return [EventRecord(float(t), int(d), int(g)) for t, d, g in zip(self.tau, self.dying, self.target)]

    @property
    def extinct(self) -> bool:
        return isinstance(self.classification, Extinct)


def classify_extinction(state: SystemState, event_times: Sequence[float], horizon: float,
                        thresholds: ExtinctionThresholds = ExtinctionThresholds()) -> Optional[Classification]:
    """Extinct, Survived, or ``None`` (keep running).

    ``event_times`` needs only the most recent ``thresholds.m`` jump times.
    """
    m = thresholds.m
    n_ev = state.event_count
    max_pos = float(np.max(state.positions))
    if n_ev >= m and len(event_times) >= m:
        window = event_times[-1] - event_times[-m]
        if window < thresholds.w_min and max_pos < thresholds.pos_min:
            return Extinct(float(event_times[-1]))
    if n_ev >= thresholds.k_max:
        return Survived(float(state.time), cap=True)
    if state.time >= horizon:
        return Survived(float(horizon))
    return None


def _pick_target(dying: int, candidates: Sequence[int], stream: RngStream) -> int:
    others = [j for j in candidates if j != dying]
    u = float(stream.uniform())
    return others[min(len(others) - 1, max(0, math.ceil(u * len(others)) - 1))]


def _check_system(x0, law: DriftLaw) -> np.ndarray:
    x = np.array([law.check_start(float(v)) for v in x0], dtype=float)
    _require(x.size >= 2, f"need at least 2 particles, got {x.size}")
    return x


class _EventLog:
    def __init__(self):
        self.tau = array("d")
        self.dying = array("l")
        self.target = array("l")

    def add(self, t: float, d: int, g: int) -> float:
        if self.tau and t <= self.tau[-1]:
            # successive crossings closer than one ulp of the clock
            t = float(np.nextafter(self.tau[-1], math.inf))
        self.tau.append(t)
        self.dying.append(d)
        self.target.append(g)
        return t


def _run_system(st: Stepper, stream: RngStream, horizon: float,
                thresholds: ExtinctionThresholds) -> tuple[_EventLog, Classification]:
    log = _EventLog()
    n = st.n
    everyone = range(n)
    state = SystemState(st.x, 0.0, 0)
    while True:
        status = st.run(horizon)
        state.time = st.time
        if status == K.HORIZON:
            return log, Survived(float(horizon))
        dying = [i for i in everyone if st.dying[i]]
        t = st.time
        for i in dying:
            alive = [j for j in everyone if not st.dying[j] or j == i]
            g = _pick_target(i, alive, stream)
            st.x[i] = st.x[g]
            st.dying[i] = False
            t = log.add(t, i + 1, g + 1)
        state.event_count = len(log.tau)
        state.positions = st.x
        if status == K.ALL_CROSSED:
            return log, Extinct(float(t), degenerate=True)
        tail = log.tau[-thresholds.m:] if len(log.tau) >= thresholds.m else log.tau
        verdict = classify_extinction(state, tail, horizon, thresholds)
        if verdict is not None:
            return log, verdict


def fv_simulate(x0: Sequence[float], law: DriftLaw, config: PathConfig, stream: RngStream,
                thresholds: ExtinctionThresholds = ExtinctionThresholds()) -> RunOutcome:
    """Run the particle system from ``x0`` until classified or ``config.horizon``."""
    x = _check_system(x0, law)
    st = Stepper(law, x, config, NormalFeed(stream))
    log, verdict = _run_system(st, stream, config.horizon, thresholds)
    return RunOutcome(
        np.frombuffer(log.tau, dtype=float).copy(),
        np.array(log.dying, dtype=int),
        np.array(log.target, dtype=int),
        verdict,
        float(np.max(st.x)),
        SystemState(st.x.copy(), st.time, len(log.tau)),
    )


# --- two-particle scaling construction -----------------------------------------


def _require_absorbing(nu: float) -> float:
    nu = _finite(nu, "nu")
    if nu >= 2.0:
        raise NoFiniteHittingTime(f"Bessel({nu}) paths never reach 0; need nu < 2")
    return nu


def _pair_draw(nu: float, config: PathConfig, feed: NormalFeed) -> tuple[float, float]:
    st = Stepper(Bessel(nu), np.array([1.0, 1.0]), config, feed)
    status = st.run(config.horizon)
    if status == K.HORIZON:
        return math.inf, float(np.max(st.x))
    survivor = 1 if st.dying[0] else 0
    return st.time, float(st.x[survivor])


def alpha_from_paths(nu: float, config: PathConfig, stream: RngStream,
                     feed: NormalFeed | None = None) -> tuple[float, float]:
    """(sigma, alpha): first absorption time of two Bessel(nu) paths from 1 and the survivor's value.

    ``sigma`` is ``inf`` if neither path is absorbed by ``config.horizon``.
    """
    nu = _require_absorbing(nu)
    return _pair_draw(nu, config, feed or NormalFeed(stream))


def alpha_pairs(nu: float, n_pairs: int, config: PathConfig, stream: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """``n_pairs`` i.i.d. draws of (sigma, alpha) sharing one stream."""
    nu = _require_absorbing(nu)
    _require(int(n_pairs) >= 1, "n_pairs must be >= 1")
    feed = NormalFeed(stream)
    out = np.array([_pair_draw(nu, config, feed) for _ in range(int(n_pairs))])
    return out[:, 0], out[:, 1]


CONVERGENCE_RATIO = 1e-12
CONVERGENCE_RUN = 20


@dataclass
class ScalingRun:
    alphas: np.ndarray
    sigmas: np.ndarray
    xis: np.ndarray  # xis[j] = alpha_1 ... alpha_j, xis[0] = 1
    partial_sums: np.ndarray  # partial_sums[n-1] = tau_n
    converged: bool
    converged_at: Optional[int] = None

    @property
    def tau_limit(self) -> float:
        return float(self.partial_sums[-1]) if self.partial_sums.size else 0.0


def scaling_run(alphas: Sequence[float], sigmas: Sequence[float], tau_horizon: float = math.inf) -> ScalingRun:
    """Form xi_j and tau_n from given pairs and apply the relative-Cauchy test.

    Converged once xi_n^2 sigma_{n+1} < 1e-12 tau_n for 20 consecutive n.
    Stops early (not converged) when tau_n exceeds ``tau_horizon``.
    """
    a = np.asarray(alphas, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    _require(a.shape == s.shape and a.ndim == 1, "alphas and sigmas must be equal-length 1-d")
    xis = [1.0]
    taus: list[float] = []
    tau = 0.0
    streak = 0
    converged_at = None
    for n in range(a.size):
        tau = tau + xis[-1] * xis[-1] * s[n]
        taus.append(tau)
        xis.append(xis[-1] * a[n])
        if n + 1 < a.size and converged_at is None:
            if xis[-1] * xis[-1] * s[n + 1] < CONVERGENCE_RATIO * tau:
                streak += 1
                if streak >= CONVERGENCE_RUN:
                    converged_at = n + 1
            else:
                streak = 0
        if tau > tau_horizon:
            break
    k = len(taus)
    return ScalingRun(a[:k].copy(), s[:k].copy(), np.array(xis), np.array(taus),
                      converged_at is not None, converged_at)


PairDraw = Callable[[], tuple[float, float]]


def fv_two_particle_scaling(nu: float, n_events: int, config: PathConfig, stream: RngStream,
                            draw_pair: PairDraw | None = None) -> ScalingRun:
    """Jump times of the two-particle Bessel(nu) system from i.i.d. pair draws.

    ``config.horizon`` bounds both each pair simulation and the partial sums.
    ``draw_pair`` replaces the path-simulated (sigma, alpha) draws.
    """
    nu = _require_absorbing(nu)
    _require(int(n_events) >= 1, "n_events must be >= 1")
    if draw_pair is None:
        feed = NormalFeed(stream)
        draw_pair = lambda: _pair_draw(nu, config, feed)  # noqa: E731
    alphas, sigmas = [], []
    tau, xi2 = 0.0, 1.0
    for _ in range(int(n_events)):
        sigma, alpha = draw_pair()
        alphas.append(alpha)
        sigmas.append(sigma)
        tau += xi2 * sigma
        xi2 *= alpha * alpha
        if tau > config.horizon:
            break
    return scaling_run(alphas, sigmas, config.horizon)


# --- sum-of-squares coupling ------------------------------------------------------


@dataclass
class CouplingResult:
    fv_z: Path
    coupled_z: Path
    domination_holds: bool
    max_excess: float
    low_dimension: bool  # N nu < 2: domination is not guaranteed
    outcome: RunOutcome = field(repr=False, default=None)


def sum_of_squares_coupling(x0: Sequence[float], nu: float, horizon: float, config: PathConfig,
                            stream: RngStream, tol: float | None = None,
                            thresholds: ExtinctionThresholds = ExtinctionThresholds()) -> CouplingResult:
    """Compare Z = sum of squared FV positions with a squared Bessel(N nu) driven by the same noise.

    Between jumps sqrt(Z) solves dY = dB + (N nu - 1)/(2Y) dt; the driver B is
    recovered from the increments of Y and fed to the Bessel(N nu) copy, which
    starts from sqrt(Z_0).  Jumps of Z (always upward) are not passed on.
    """
    law = Bessel(float(nu))
    x = _check_system(x0, law)
    _require(math.isfinite(horizon) and horizon > 0, f"horizon must be > 0, got {horizon}")
    dim = x.size * float(nu)
    tol = 10.0 * config.dt_base if tol is None else float(tol)
    st = Stepper(law, x, config, NormalFeed(stream), record=True, couple_dim=dim)
    y0 = float(st.yhat[0])
    log, verdict = _run_system(st, stream, horizon, thresholds)
    t, xs, yhat = st.recorded()
    # Z = Y^2 with Y summed in the kernel's order, so an unjumped Z matches Zhat bit for bit
    sq = np.zeros(t.size)
    for j in range(xs.shape[1]):
        sq += xs[:, j] * xs[:, j]
    y = np.sqrt(sq)
    times, z, zhat = distinct_times(np.concatenate([[0.0], t]),
                                    np.concatenate([[y0], y]) ** 2,
                                    np.concatenate([[y0], yhat]) ** 2)
    terminal = Absorbed(verdict.tau_inf_estimate) if isinstance(verdict, Extinct) else HorizonReached()
    excess = float(np.max(zhat - z))
    outcome = RunOutcome(np.frombuffer(log.tau, dtype=float).copy(), np.array(log.dying, dtype=int),
                         np.array(log.target, dtype=int), verdict, float(np.max(st.x)))
    return CouplingResult(Path(times, z, terminal), Path(times, zhat, terminal),
                          excess <= tol, excess, dim < 2.0, outcome)


# --- export -------------------------------------------------------------------------


def write_events_csv(outcomes: Sequence[RunOutcome], fh, replica_ids: Sequence[int] | None = None) -> None:
    """CSV rows ``replica_id,k,tau_k,dying,target`` (k and indices 1-based)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["replica_id", "k", "tau_k", "dying", "target"])
    ids = range(len(outcomes)) if replica_ids is None else replica_ids
    for rid, out in zip(ids, outcomes):
        for k, (t, d, g) in enumerate(zip(out.tau, out.dying, out.target), start=1):
            w.writerow([rid, k, repr(float(t)), int(d), int(g)])


__all__ = [
    "ExtinctionThresholds", "Extinct", "Survived", "EventRecord", "SystemState", "RunOutcome",
    "classify_extinction", "fv_simulate", "alpha_from_paths", "alpha_pairs", "ScalingRun",
    "scaling_run", "fv_two_particle_scaling", "CouplingResult", "sum_of_squares_coupling",
    "write_events_csv", "DomainError",
]
