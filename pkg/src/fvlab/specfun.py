"""Closed-form special functions, densities and flow formulas.

Everything here is deterministic and pure.  Arguments outside a function's
domain raise :class:`DomainError` rather than returning NaN.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

EULER_GAMMA = 0.57721566490153286061

# Asymptotic coefficients B_{2k} / (2k) for the digamma expansion.
_DIGAMMA_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_DIGAMMA_SHIFT = 8.0


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise DomainError(msg)


def _finite(x: float, name: str) -> float:
    x = float(x)
    _require(math.isfinite(x), f"{name} must be finite, got {x!r}")
    return x


def _check_nu(nu: float) -> float:
    nu = _finite(nu, "nu")
    _require(nu < 2.0, f"nu must be < 2, got {nu}")
    return nu


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0.

    Backed by the C library ``lgamma`` (max error a few ulp on [1e-3, 1e3]).
    """
    x = _finite(x, "x")
    _require(x > 0.0, f"log_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def digamma(x: float) -> float:
    """Digamma function psi(x) = d/dx ln Gamma(x) for x > 0.

    Upward recurrence psi(x) = psi(x + 1) - 1/x until x >= 8, then the
    Stirling-type asymptotic series truncated after the x**-14 term.  The
    truncation error at x = 8 is below 1e-16.
    """
    x = _finite(x, "x")
    _require(x > 0.0, f"digamma requires x > 0, got {x}")
    acc = 0.0
    while x < _DIGAMMA_SHIFT:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for coef in _DIGAMMA_ASYMPTOTIC:
        series += coef * power
        power *= inv2
    return acc + math.log(x) - 0.5 / x - series


def gamma_density(x: float, alpha: float) -> float:
    """One-parameter gamma density x**(alpha-1) e**-x / Gamma(alpha)."""
    x = _finite(x, "x")
    alpha = _finite(alpha, "alpha")
    _require(x > 0.0, f"x must be > 0, got {x}")
    _require(alpha > 0.0, f"alpha must be > 0, got {alpha}")
    return math.exp((alpha - 1.0) * math.log(x) - x - math.lgamma(alpha))


def student_t_density(x: float, a: float) -> float:
    """Student-t density with ``a`` degrees of freedom."""
    x = _finite(x, "x")
    a = _finite(a, "a")
    _require(a > 0.0, f"degrees of freedom must be > 0, got {a}")
    log_norm = math.lgamma(0.5 * (a + 1.0)) - math.lgamma(0.5 * a) - 0.5 * math.log(math.pi * a)
    return math.exp(log_norm - 0.5 * (a + 1.0) * math.log1p(x * x / a))


def _alpha_sq_log_const(nu: float) -> float:
    # ln of 2**(2-nu)/sqrt(pi) * Gamma((3-nu)/2) / Gamma(1-nu/2)
    return (
        (2.0 - nu) * math.log(2.0)
        - 0.5 * math.log(math.pi)
        + math.lgamma(0.5 * (3.0 - nu))
        - math.lgamma(1.0 - 0.5 * nu)
    )


def alpha_sq_density(y: float, nu: float) -> float:
    """Closed form h_nu(y) = C_nu (y**2 + 4)**(-(3-nu)/2) for y >= 0.

    This is the function as published.  It carries total mass 1/2 on
    [0, inf); the probability density of the squared jump factor is
    :func:`alpha_sq_pdf` (twice this value).
    """
    y = _finite(y, "y")
    nu = _check_nu(nu)
    _require(y >= 0.0, f"y must be >= 0, got {y}")
    return math.exp(_alpha_sq_log_const(nu) - 0.5 * (3.0 - nu) * math.log(y * y + 4.0))


def alpha_sq_pdf(y: float, nu: float) -> float:
    """Normalised probability density of the squared jump factor (= 2 h_nu)."""
    return 2.0 * alpha_sq_density(y, nu)


def alpha_sq_density_series(y: float, nu: float, n_terms: int) -> float:
    """Truncated power series for h_nu(y).

    Sums at most ``n_terms`` terms of
    (y+2)**(nu-3) / Gamma(1-nu/2) * sum_n c_n z**n with z = y/(y+2)**2 and
    c_n = Gamma(2n+3-nu) / (n! Gamma(n+2-nu/2)).  All terms are positive, so
    every partial sum is a lower bound.  Summation stops early once a term
    drops below 1e-15 of the running sum (after the terms start shrinking).
    Near y = 2 the ratio 4z approaches 1 and many terms are needed.
    """
    y = _finite(y, "y")
    nu = _check_nu(nu)
    _require(y >= 0.0, f"y must be >= 0, got {y}")
    n_terms = int(n_terms)
    _require(n_terms >= 1, f"n_terms must be >= 1, got {n_terms}")

    prefactor = math.exp((nu - 3.0) * math.log(y + 2.0) - math.lgamma(1.0 - 0.5 * nu))
    if y == 0.0:
        return prefactor * math.exp(math.lgamma(3.0 - nu) - math.lgamma(2.0 - 0.5 * nu))

    log_z = math.log(y) - 2.0 * math.log(y + 2.0)
    total = 0.0
    chunk = 512
    start = 0
    prev_last = -math.inf
    while start < n_terms:
        n = np.arange(start, min(start + chunk, n_terms), dtype=float)
        log_terms = (
            special.gammaln(2.0 * n + 3.0 - nu)
            - special.gammaln(n + 1.0)
            - special.gammaln(n + 2.0 - 0.5 * nu)
            + n * log_z
        )
        terms = np.exp(log_terms)
        # terms rise then fall; stop at the first small term past the peak
        falling = np.concatenate(([log_terms[0] < prev_last], np.diff(log_terms) < 0.0))
        running = total + np.cumsum(terms)
        small = falling & (terms < 1e-15 * running)
        if small.any():
            k = int(np.argmax(small))
            return prefactor * float(running[k])
        total = float(running[-1])
        prev_last = float(log_terms[-1])
        start += chunk
    return prefactor * total


def i_of_nu(nu: float) -> float:
    """I(nu) = (psi(1) - psi((2 - nu)/2)) / 4 = integral of h_nu(y) ln y.

    Negative iff nu < 0.  Because h_nu has mass 1/2 this equals E ln alpha_1,
    i.e. half of E ln alpha_1**2.
    """
    nu = _check_nu(nu)
    return 0.25 * (digamma(1.0) - digamma(0.5 * (2.0 - nu)))


def integrate_half_line(f, tol: float = 1e-9, tail_power: float | None = None) -> float:
    """Integrate f over (0, inf).

    (0, 1] is mapped by y = tan(theta).  The tail (1, inf) uses the same
    map unless ``tail_power`` p > 1 is given, meaning f(y) ~ y**-p; then
    y = w**(-1/(p-1)) turns the tail into a bounded integrand on (0, 1].
    """

    def g(theta: float) -> float:
        c = math.cos(theta)
        if c <= 0.0:
            return 0.0
        return f(math.tan(theta)) / (c * c)

    opts = dict(epsabs=tol, epsrel=tol, limit=400)
    head, _ = integrate.quad(g, 0.0, 0.25 * math.pi, **opts)
    if tail_power is None:
        tail, _ = integrate.quad(g, 0.25 * math.pi, 0.5 * math.pi, **opts)
        return head + tail
    if tail_power <= 1.0:
        raise DomainError(f"tail_power must exceed 1, got {tail_power}")
    k = 1.0 / (tail_power - 1.0)

    def h(w: float) -> float:
        if w <= 0.0:
            return 0.0
        try:
            y = w ** (-k)
        except OverflowError:
            return 0.0
        return f(y) * k * y / w

    tail, _ = integrate.quad(h, 0.0, 1.0, **opts)
    return head + tail


def alpha_sq_cdf(y: float, nu: float) -> float:
    """P(alpha_1**2 <= y) by quadrature of :func:`alpha_sq_pdf`."""
    y = _finite(y, "y")
    nu = _check_nu(nu)
    if y <= 0.0:
        return 0.0
    # tail = int_y^inf pdf, via y + tan(theta); better behaved than the head for large y
    tail = integrate_half_line(lambda s: alpha_sq_pdf(y + s, nu), tail_power=3.0 - nu)
    return min(1.0, max(0.0, 1.0 - tail))


def alpha_sq_cdf_many(ys, nu: float) -> np.ndarray:
    """Vectorised :func:`alpha_sq_cdf`, accumulating quadrature between sorted points."""
    nu = _check_nu(nu)
    ys = np.asarray(ys, dtype=float)
    order = np.argsort(ys, kind="stable")
    sorted_y = np.maximum(ys[order], 0.0)
    cdf = np.empty_like(sorted_y)
    acc, prev = 0.0, 0.0
    for k, y in enumerate(sorted_y):
        if y > prev:
            piece, _ = integrate.quad(alpha_sq_pdf, prev, y, args=(nu,), epsabs=1e-13, epsrel=1e-11)
            acc += piece
            prev = y
        cdf[k] = min(acc, 1.0)
    out = np.empty_like(cdf)
    out[order] = cdf
    return out


def power_drift(x: float, beta: float) -> float:
    """b(x) = -1 / (beta x**(beta-1))."""
    return -1.0 / (beta * x ** (beta - 1.0))


def ode_flow(s: float, a: float, t: float, beta: float) -> float:
    """Solution y_{s,a}(t) = (a**beta + s - t)**(1/beta) of y' = b(y), y(s) = a."""
    s = _finite(s, "s")
    a = _finite(a, "a")
    t = _finite(t, "t")
    beta = _finite(beta, "beta")
    _require(a > 0.0, f"a must be > 0, got {a}")
    _require(beta > 2.0, f"beta must be > 2, got {beta}")
    life = a**beta
    _require(s <= t <= s + life, f"t must lie in [{s}, {s + life}], got {t}")
    rem = life + s - t
    return rem ** (1.0 / beta) if rem > 0.0 else 0.0


@dataclass(frozen=True)
class ProofConstants:
    """Constants of the extinction cascade for one starting height ``a``."""

    a: float
    beta: float
    gamma: float
    epsilon: float
    u: float
    delta_bar: float
    M: float
    delta_hat: tuple[float, ...]
    c4: float
    drop_condition: bool
    contraction_condition: bool
    tube_condition: bool

    @property
    def n_particles(self) -> int:
        return len(self.delta_hat)

    @property
    def conditions_hold(self) -> bool:
        return self.drop_condition and self.contraction_condition and self.tube_condition


def proof_constants(
    a: float, beta: float, gamma: float, epsilon: float, n_particles: int
) -> ProofConstants:
    """Evaluate u, delta_bar, M, delta_hat_n and c4 and test the smallness conditions.

    ``epsilon`` is taken as given; the three boolean fields report whether it
    is small enough:

    * drop: (1 - gamma/2)(a - delta_bar)**beta > (1 - gamma) a**beta
    * contraction: c4 < 1
    * tube: delta_bar <= a (gamma/2)**(1/beta) / 2 and delta_bar <= a
    """
    a = _finite(a, "a")
    beta = _finite(beta, "beta")
    gamma = _finite(gamma, "gamma")
    epsilon = _finite(epsilon, "epsilon")
    _require(a > 0.0, f"a must be > 0, got {a}")
    _require(beta > 2.0, f"beta must be > 2, got {beta}")
    _require(0.0 < gamma < 1.0, f"gamma must be in (0, 1), got {gamma}")
    _require(0.0 < epsilon < 1.0, f"epsilon must be in (0, 1), got {epsilon}")
    _require(int(n_particles) == n_particles and n_particles >= 2,
             f"n_particles must be an integer >= 2, got {n_particles}")
    n_particles = int(n_particles)

    shrink = (1.0 - epsilon * gamma) ** (1.0 / beta)
    u = (1.0 - gamma) * a**beta
    delta_bar = a * (1.0 - shrink)
    M = ((1.0 - epsilon * gamma) / (gamma * (1.0 - epsilon))) ** (1.0 - 1.0 / beta)
    delta_hat = tuple(delta_bar / (M + 1.0) ** (n_particles - n) for n in range(1, n_particles + 1))
    c4 = gamma ** (1.0 / beta) + 1.0 - shrink

    drop = (1.0 - 0.5 * gamma) * (a - delta_bar) ** beta > u
    tube = delta_bar <= 0.5 * a * (0.5 * gamma) ** (1.0 / beta) and delta_bar <= a
    return ProofConstants(
        a=a, beta=beta, gamma=gamma, epsilon=epsilon, u=u, delta_bar=delta_bar, M=M,
        delta_hat=delta_hat, c4=c4, drop_condition=bool(drop),
        contraction_condition=bool(c4 < 1.0), tube_condition=bool(tube),
    )


def fw_lipschitz(a: float, beta: float, gamma: float) -> float:
    """Lipschitz constant of b on [a (gamma/2)**(1/beta) / 2, 2a]."""
    return (beta - 1.0) / (beta * gamma * 2.0 ** (1.0 - beta) * a**beta)
