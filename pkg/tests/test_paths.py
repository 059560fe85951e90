import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fvlab.diagnostics import ks_two_sample
from fvlab.paths import (Absorbed, Bessel, HorizonReached, PathConfig, PowerDrift,
                         PowerDriftReflected, SquaredBessel, absorption_times, fw_bound,
                         fw_deviation_check, reflect_upper, simulate)
from fvlab.sampling import HittingTimeLaw, RngStream, ScriptedStream, ZeroNoiseStream, sample_hitting_time
from fvlab.specfun import DomainError, ode_flow


def test_config_validation():
    with pytest.raises(DomainError):
        PathConfig(dt_base=0)
    with pytest.raises(DomainError):
        PathConfig(eps_abs=-1e-6)
    with pytest.raises(DomainError):
        PathConfig(horizon=math.inf)


@pytest.mark.parametrize("law,x0", [
    (Bessel(-1), 0.0), (Bessel(-1), -1.0), (PowerDriftReflected(3), 2.5), (PowerDriftReflected(3), 0.0),
    (SquaredBessel(1.0), -0.1), (Bessel(1), math.nan),
])
def test_start_outside_domain(law, x0):
    with pytest.raises(DomainError):
        simulate(law, x0, PathConfig(), RngStream(0))


def test_beta_must_exceed_two():
    with pytest.raises(DomainError):
        PowerDriftReflected(2.0)


def test_reflect_upper():
    assert reflect_upper(1.5, 2) == 1.5
    assert reflect_upper(2.3, 2) == pytest.approx(1.7)
    assert reflect_upper(2.0, 2) == 2.0


@given(st.floats(-10, 2))
def test_reflect_upper_idempotent_below_barrier(v):
    assert reflect_upper(v, 2.0) == v
    assert reflect_upper(reflect_upper(v + 1.0, 2.0), 2.0) <= 2.0 or v + 1.0 > 4.0


def test_zero_noise_bessel_one_is_constant():
    p = simulate(Bessel(1.0), 1.0, PathConfig(horizon=1.0), ZeroNoiseStream())
    assert np.all(p.values == 1.0)
    assert isinstance(p.terminal, HorizonReached)
    assert p.times[-1] == pytest.approx(1.0)


def test_zero_noise_reflected_first_step():
    p = simulate(PowerDriftReflected(3), 2.0, PathConfig(dt_base=1e-3, horizon=0.01), ZeroNoiseStream())
    assert p.values[1] == pytest.approx(2 - 1e-3 / 12, abs=1e-15)


def test_scripted_noise_is_mirrored_at_two():
    p = simulate(PowerDriftReflected(3), 1.95, PathConfig(dt_base=0.01, horizon=0.01),
                 ScriptedStream(normals=[1.0]))
    expected = 1.95 - 0.01 / (3 * 1.95**2) + 0.1
    assert p.values[1] == pytest.approx(4 - expected, abs=1e-14)


def test_zero_noise_reflected_tracks_ode_flow():
    a, beta, dt = 1.0, 3.0, 1e-4
    p = simulate(PowerDriftReflected(beta), a, PathConfig(dt_base=dt, horizon=0.9), ZeroNoiseStream())
    y = np.array([ode_flow(0, a, t, beta) for t in p.times])
    assert np.max(np.abs(p.values - y)) <= 10 * dt


def test_times_increase_and_domain_respected():
    cfg = PathConfig(horizon=5.0)
    for law, x0 in [(Bessel(-1), 1.0), (Bessel(0.5), 0.3), (SquaredBessel(1.0), 1.0),
                    (PowerDriftReflected(3), 1.9)]:
        p = simulate(law, x0, cfg, RngStream(3, law.code))
        assert np.all(np.diff(p.times) > 0)
        assert np.all(p.values >= 0)
        if isinstance(law, PowerDriftReflected):
            assert np.all(p.values <= 2.0)
        if isinstance(p.terminal, Absorbed):
            assert p.values[-1] <= cfg.eps_abs
            assert p.terminal.time == pytest.approx(p.times[-1])


def test_adaptive_step_bound():
    cfg = PathConfig(dt_base=1e-3, kappa=0.01)
    for law in (Bessel(-1.0), PowerDriftReflected(3.0)):
        p = simulate(law, 0.5, cfg, RngStream(4))
        dt = np.diff(p.times)[:-1]  # last step is the interpolated crossing
        x = p.values[:-2]
        resolution = 4 * np.spacing(p.times[1:-1])
        assert np.all(dt <= cfg.kappa * x * x + resolution)
        assert np.all(dt <= cfg.dt_base * (1 + 1e-12))


def test_path_is_deterministic_per_stream():
    cfg = PathConfig(horizon=2.0)
    a = simulate(Bessel(-1), 1.0, cfg, RngStream(9, 9))
    b = simulate(Bessel(-1), 1.0, cfg, RngStream(9, 9))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.values, b.values)


def test_csv_dump(tmp_path):
    p = simulate(Bessel(-4), 1.0, PathConfig(), RngStream(1))
    f = tmp_path / "p.csv"
    p.write_csv(f)
    lines = f.read_text().splitlines()
    assert lines[0] == "time,value" and len(lines) == p.times.size + 1


def test_absorption_time_matches_exact_law():
    cfg = PathConfig(dt_base=1e-3, horizon=100)
    t = absorption_times(Bessel(-4), 1.0, 4000, cfg, RngStream(5, 0))
    exact = sample_hitting_time(HittingTimeLaw(1.0, -4), RngStream(5, 1), 4000)
    assert abs(t.mean() / 0.25 - 1) < 0.05
    assert ks_two_sample(t, exact).p > 0.01


def test_halving_dt_is_stable():
    m = [absorption_times(Bessel(-4), 1.0, 40_000, PathConfig(dt_base=dt, horizon=100), RngStream(6)).mean()
         for dt in (2e-3, 1e-3)]
    # each mean carries ~0.5% Monte Carlo error
    assert abs(m[0] / m[1] - 1) < 0.02


def test_squared_bessel_matches_bessel_hitting_law():
    # BESQ(nu) from x^2 hits 0 like Bessel(nu) from x
    cfg = PathConfig(dt_base=1e-4, horizon=100)
    t = absorption_times(SquaredBessel(-4.0), 1.0, 2000, cfg, RngStream(7))
    assert abs(t.mean() / 0.25 - 1) < 0.08


# tube deviation check


def test_fw_zero_noise_never_leaves_tube():
    r = fw_deviation_check(1.0, 3.0, 0.5, 0.3, 50, PathConfig(dt_base=1e-3), ZeroNoiseStream())
    assert r.empirical_prob == 0.0


def test_fw_vacuous_bound():
    r = fw_deviation_check(1.0, 3.0, 0.5, 0.3, 2000, PathConfig(dt_base=1e-3), RngStream(8))
    assert r.bound >= 1.0 and 0.0 <= r.empirical_prob <= 1.0 and r.holds


def test_fw_bound_small_scale():
    a, gamma = 0.01, 0.95
    delta = 0.5 * a * (gamma / 2) ** (1 / 3)
    horizon = (1 - gamma / 2) * a**3
    r = fw_deviation_check(a, 3.0, gamma, delta, 4000, PathConfig(dt_base=horizon / 1000), RngStream(9))
    assert r.bound < 1.0
    assert r.empirical_prob <= r.bound + 3 * r.binomial_se


def test_fw_bound_formula():
    # 4 P(N(0,T) > d e^{-LT}) with L T = (8/(3 gamma))(1 - gamma/2) for beta = 3
    a, gamma, delta = 0.01, 0.95, 0.003
    T = (1 - gamma / 2) * a**3
    z = delta * math.exp(-(8 / (3 * gamma)) * (1 - gamma / 2)) / math.sqrt(T)
    assert fw_bound(a, 3.0, gamma, delta) == pytest.approx(2 * math.erfc(z / math.sqrt(2)), rel=1e-12)


@pytest.mark.parametrize("delta,which", [(0.32, "lower"), (1.5, "lower")])
def test_fw_precondition_explains_failure(delta, which):
    with pytest.raises(DomainError, match=which):
        fw_deviation_check(1.0, 3.0, 0.5, delta, 10, PathConfig(), RngStream(0))


def test_free_power_drift_law_is_available():
    p = simulate(PowerDrift(3.0), 2.0, PathConfig(dt_base=1e-3, horizon=0.01), ZeroNoiseStream())
    assert p.values[1] == pytest.approx(2 - 1e-3 / 12)
