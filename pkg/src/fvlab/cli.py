"""Batch experiment runner.

Each subcommand builds an :class:`ExperimentConfig` (defaults, then a flat
``key = value`` config file, then command-line flags), runs its replicas on
streams ``(seed, replica index)`` and writes one report: CSV with a
commented manifest header, or a single JSON object ``{manifest, results}``.

Exit codes: 0 success, 2 usage error, 3 failed ``--assert`` check.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from .diagnostics import (SummaryStats, Verdict, ks_one_sample, ks_two_sample, merge_stats,
                          perpetuity_test, tail_fit)
from .fleming_viot import (ExtinctionThresholds, alpha_pairs, fv_simulate, fv_two_particle_scaling,
                           sum_of_squares_coupling, write_events_csv)
from .paths import (Bessel, PathConfig, PowerDriftReflected, absorption_times, fw_deviation_check,
                    simulate)
from .sampling import HittingTimeLaw, RngStream, sample_alpha_sq, sample_hitting_time
from .specfun import (DomainError, alpha_sq_cdf_many, alpha_sq_density, digamma, i_of_nu,
                      integrate_half_line, proof_constants)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ASSERT = 3

CHUNK = 10_000  # draws per stream for the pure-sampling commands


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = ""
    law: str = "bessel"  # bessel | reflected
    mode: str = "fv"  # fv | scaling (two-particle construction)
    nu: float = -1.0
    beta: float = 3.0
    n_particles: int = 2
    replicas: int = 1000
    horizon: float = 1000.0
    dt_base: float = 1e-3
    kappa: float = 0.01
    eps_abs: float = 1e-6
    seed: int = 0
    x0: float = 1.0
    n_events: int = 200
    a: float = 1.0
    gamma: float = 0.5
    epsilon: float = 0.5
    delta: float = 0.3
    workers: int = 1
    out_path: str = "-"
    format: str = "json"

    def path_config(self, horizon: Optional[float] = None) -> PathConfig:
        return PathConfig(self.dt_base, self.kappa, self.eps_abs,
                          self.horizon if horizon is None else horizon)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_CASTS: dict[str, Callable[[str], Any]] = {"float": float, "int": int, "str": str}
_ALIASES = {"dt": "dt_base", "out": "out_path"}


def _cast(key: str, raw: Any) -> Any:
    kind = _FIELD_TYPES[key]
    try:
        v = _CASTS[kind](raw)
    except (TypeError, ValueError):
        raise UsageError(f"bad value for {key}: {raw!r}") from None
    if kind == "float" and not math.isfinite(v):
        raise UsageError(f"{key} must be finite, got {raw!r}")
    return v


def read_config_file(path: str) -> dict[str, Any]:
    """Flat ``key = value`` text, ``#`` comments; keys as flags (dashes or underscores)."""
    out: dict[str, Any] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
        if key not in _FIELD_TYPES or key == "experiment":
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _cast(key, value)
    return out


# --- manifest and output ---------------------------------------------------------


def _clean(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    return v


def build_manifest(cfg: ExperimentConfig, streams: dict, wall_time: Optional[float]) -> dict:
    snap = dataclasses.asdict(cfg)
    # neither affects the results
    snap.pop("workers")
    snap.pop("out_path")
    m = {"tool": "fvlab", "version": __version__, "config": snap, "streams": streams}
    if wall_time is not None:
        m["wall_time_s"] = wall_time
    return m


def _cell(v: Any) -> str:
    v = _clean(v)
    if v is None:
        return "inf"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(manifest: dict, summary: dict, rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        doc = {"manifest": manifest, "results": {"summary": summary, "rows": rows}}
        return json.dumps(_clean(doc), indent=1, sort_keys=False, allow_nan=False) + "\n"
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(_clean(manifest), sort_keys=False, allow_nan=False) + "\n")
    buf.write("# summary: " + json.dumps(_clean(summary), sort_keys=False, allow_nan=False) + "\n")
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(rows[0].keys()))
        for r in rows:
            w.writerow([_cell(v) for v in r.values()])
    return buf.getvalue()


# --- replica execution ----------------------------------------------------------


def _run_replicas(func: Callable[[ExperimentConfig, int], Any], cfg: ExperimentConfig,
                  ids: range) -> list:
    """``func(cfg, i)`` for every replica id; results in id order whatever the worker count."""
    if cfg.workers <= 1 or len(ids) < 2:
        return [func(cfg, i) for i in ids]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        chunk = max(1, len(ids) // (4 * cfg.workers))
        return list(pool.map(func, [cfg] * len(ids), ids, chunksize=chunk))


def _chunk_sizes(total: int) -> list[int]:
    return [min(CHUNK, total - k) for k in range(0, total, CHUNK)]


def _stream(cfg: ExperimentConfig, rid: int) -> RngStream:
    return RngStream(cfg.seed, rid)


@dataclass
class Report:
    summary: dict
    rows: list[dict]
    checks: dict[str, bool]
    streams: dict


# --- commands -----------------------------------------------------------------


def _log_alpha_chunk(cfg: ExperimentConfig, rid: int) -> SummaryStats:
    n = _chunk_sizes(cfg.replicas)[rid]
    return SummaryStats.from_values(np.log(sample_alpha_sq(cfg.nu, _stream(cfg, rid), n)))


def cmd_sign_test(cfg: ExperimentConfig) -> Report:
    if not cfg.nu < 2.0:
        raise UsageError(f"sign-test needs nu < 2, got {cfg.nu}")
    chunks = _run_replicas(_log_alpha_chunk, cfg, range(len(_chunk_sizes(cfg.replicas))))
    st = SummaryStats()
    for c in chunks:
        st = merge_stats(st, c)
    target = i_of_nu(cfg.nu)
    mean, se = st.mean, st.se
    sign_mc = 0 if abs(mean) <= 3.0 * se else int(math.copysign(1, mean))
    sign_th = 0 if target == 0.0 else int(math.copysign(1, target))
    summary = {
        "nu": cfg.nu, "i_of_nu": target, "mc_mean_log_alpha_sq": mean, "se": se,
        "n": st.count, "agree": sign_mc == sign_th,
        "within_3se_of_i_of_nu": abs(mean - target) <= 3.0 * se,
        "within_3se_of_2_i_of_nu": abs(mean - 2.0 * target) <= 3.0 * se,
    }
    return Report(summary, [], {"agree": summary["agree"]},
                  {"seed": cfg.seed, "stream_ids": [0, len(chunks) - 1], "draws_per_stream": CHUNK})


def _fv_replica(cfg: ExperimentConfig, rid: int):
    law = Bessel(cfg.nu) if cfg.law == "bessel" else PowerDriftReflected(cfg.beta)
    return fv_simulate([cfg.x0] * cfg.n_particles, law, cfg.path_config(), _stream(cfg, rid))


def _scaling_replica(cfg: ExperimentConfig, rid: int):
    return fv_two_particle_scaling(cfg.nu, cfg.n_events, cfg.path_config(), _stream(cfg, rid))


def cmd_extinct(cfg: ExperimentConfig, explicit: set[str], dump_dir: Optional[str] = None) -> Report:
    if cfg.law not in ("bessel", "reflected"):
        raise UsageError(f"law must be bessel or reflected, got {cfg.law!r}")
    if cfg.law == "bessel" and "beta" in explicit:
        raise UsageError("--beta has no meaning for the bessel law")
    if cfg.law == "reflected" and "nu" in explicit:
        raise UsageError("--nu has no meaning for the reflected law")
    if cfg.mode not in ("fv", "scaling"):
        raise UsageError(f"mode must be fv or scaling, got {cfg.mode!r}")
    if cfg.n_particles < 2:
        raise UsageError("need at least 2 particles")
    ids = range(cfg.replicas)
    rows = []
    if cfg.mode == "scaling":
        if cfg.law != "bessel" or cfg.n_particles != 2:
            raise UsageError("scaling mode needs --law bessel and --n-particles 2")
        if not cfg.nu < 2.0:
            raise UsageError(f"scaling mode needs nu < 2, got {cfg.nu}")
        runs = _run_replicas(_scaling_replica, cfg, ids)
        for rid, r in zip(ids, runs):
            rows.append({"replica": rid, "extinct": r.converged,
                         "tau_inf": r.tau_limit if r.converged else math.inf,
                         "n_events": int(r.partial_sums.size)})
    else:
        outs = _run_replicas(_fv_replica, cfg, ids)
        for rid, o in zip(ids, outs):
            c = o.classification
            rows.append({"replica": rid, "extinct": o.extinct,
                         "tau_inf": c.tau_inf_estimate if o.extinct else math.inf,
                         "n_events": int(o.tau.size)})
        if dump_dir:
            os.makedirs(dump_dir, exist_ok=True)
            with open(os.path.join(dump_dir, "events.csv"), "w", newline="") as fh:
                write_events_csv(outs, fh, list(ids))
    taus = np.array([r["tau_inf"] for r in rows if r["extinct"]])
    frac = taus.size / len(rows)
    summary: dict[str, Any] = {"law": cfg.law, "mode": cfg.mode, "n_particles": cfg.n_particles,
                               "replicas": len(rows), "extinct_fraction": frac}
    if cfg.law == "bessel":
        summary["nu"] = cfg.nu
    else:
        summary["beta"] = cfg.beta
    if taus.size:
        st = SummaryStats.from_values(taus)
        summary.update(tau_inf_mean=st.mean, tau_inf_max=st.max)
    checks: dict[str, bool] = {}
    if cfg.law == "reflected":
        try:
            fit = tail_fit(taus)
            summary.update(tail_rate=fit.rate, tail_log_intercept=fit.log_intercept,
                           tail_r_squared=fit.r_squared)
            checks["tail_rate_positive"] = fit.rate > 0
        except DomainError as exc:
            summary["tail_fit_error"] = str(exc)
            checks["tail_rate_positive"] = False
        checks["all_extinct"] = frac == 1.0
    elif cfg.nu < 0:
        checks["all_extinct"] = frac == 1.0
    elif cfg.n_particles * cfg.nu >= 2:
        checks["none_extinct"] = frac == 0.0
    return Report(summary, rows, checks, {"seed": cfg.seed, "stream_ids": [0, cfg.replicas - 1]})


def _coupling_replica(cfg: ExperimentConfig, rid: int):
    c = sum_of_squares_coupling([cfg.x0] * cfg.n_particles, cfg.nu, cfg.horizon, cfg.path_config(),
                                _stream(cfg, rid))
    return c


def cmd_coupling(cfg: ExperimentConfig, dump_dir: Optional[str] = None) -> Report:
    if cfg.n_particles < 2:
        raise UsageError("need at least 2 particles")
    res = _run_replicas(_coupling_replica, cfg, range(cfg.replicas))
    rows = [{"replica": i, "domination_holds": c.domination_holds, "max_excess": c.max_excess,
             "extinct": c.outcome.extinct, "n_events": int(c.outcome.tau.size)}
            for i, c in enumerate(res)]
    if dump_dir:
        os.makedirs(dump_dir, exist_ok=True)
        for i, c in enumerate(res):
            c.fv_z.write_csv(os.path.join(dump_dir, f"z_{i:06d}.csv"))
            c.coupled_z.write_csv(os.path.join(dump_dir, f"zhat_{i:06d}.csv"))
    dim = cfg.n_particles * cfg.nu
    summary = {"n_particles": cfg.n_particles, "nu": cfg.nu, "dimension": dim,
               "low_dimension_warning": dim < 2, "tol": 10 * cfg.dt_base,
               "all_dominated": all(r["domination_holds"] for r in rows),
               "n_extinct": sum(r["extinct"] for r in rows),
               "max_excess": max(r["max_excess"] for r in rows)}
    checks = {"all_dominated": summary["all_dominated"]}
    if dim >= 2:
        checks["none_extinct"] = summary["n_extinct"] == 0
    return Report(summary, rows, checks, {"seed": cfg.seed, "stream_ids": [0, cfg.replicas - 1]})


def cmd_fw_check(cfg: ExperimentConfig, explicit: set[str]) -> Report:
    horizon = (1.0 - cfg.gamma / 2.0) * cfg.a**cfg.beta
    dt = cfg.dt_base if "dt_base" in explicit else min(cfg.dt_base, horizon / 1000.0)
    pc = PathConfig(dt, cfg.kappa, cfg.eps_abs, horizon)
    r = fw_deviation_check(cfg.a, cfg.beta, cfg.gamma, cfg.delta, cfg.replicas, pc, _stream(cfg, 0))
    summary = {"a": r.a, "beta": r.beta, "gamma": r.gamma, "delta": r.delta,
               "lipschitz_L": r.lipschitz_L, "empirical_prob": r.empirical_prob,
               "binomial_se": r.binomial_se, "bound": r.bound, "holds": r.holds, "dt_base": dt}
    return Report(summary, [], {"holds": r.holds}, {"seed": cfg.seed, "stream_ids": [0, 0]})


def _pair_chunk(cfg: ExperimentConfig, rid: int):
    n = _chunk_sizes(cfg.replicas)[rid]
    return alpha_pairs(cfg.nu, n, cfg.path_config(), _stream(cfg, rid))


def _exact_alpha_chunk(cfg: ExperimentConfig, rid: int):
    # exact draws use a disjoint range of stream ids from the path draws
    n = _chunk_sizes(cfg.replicas)[rid]
    return sample_alpha_sq(cfg.nu, _stream(cfg, (1 << 32) + rid), n)


def cmd_density_check(cfg: ExperimentConfig) -> Report:
    if not cfg.nu < 2.0:
        raise UsageError(f"density-check needs nu < 2, got {cfg.nu}")
    ids = range(len(_chunk_sizes(cfg.replicas)))
    pairs = _run_replicas(_pair_chunk, cfg, ids)
    alpha = np.concatenate([p[1] for p in pairs])
    sigma = np.concatenate([p[0] for p in pairs])
    path_sq = alpha[np.isfinite(sigma)] ** 2
    exact_sq = np.concatenate(_run_replicas(_exact_alpha_chunk, cfg, ids))
    ks2 = ks_two_sample(path_sq, exact_sq)
    ks1 = ks_one_sample(exact_sq, lambda y: alpha_sq_cdf_many(y, cfg.nu))
    mass = integrate_half_line(lambda y: alpha_sq_density(y, cfg.nu), tail_power=3.0 - cfg.nu)
    summary = {"nu": cfg.nu, "n": int(exact_sq.size), "n_paths_absorbed": int(path_sq.size),
               "ks_paths_vs_exact_d": ks2.d, "ks_paths_vs_exact_p": ks2.p,
               "ks_exact_vs_quadrature_cdf_d": ks1.d, "ks_exact_vs_quadrature_cdf_p": ks1.p,
               "density_mass": mass, "i_of_nu": i_of_nu(cfg.nu),
               "mean_log_alpha_sq_paths": float(np.mean(np.log(path_sq))),
               "mean_log_alpha_sq_exact": float(np.mean(np.log(exact_sq)))}
    checks = {"ks_paths_vs_exact": ks2.p > 0.01, "ks_exact_vs_quadrature_cdf": ks1.p > 0.01}
    return Report(summary, [], checks, {"seed": cfg.seed, "stream_ids": [0, len(ids) - 1],
                                        "exact_stream_ids_offset": 1 << 32})


def cmd_constants(cfg: ExperimentConfig) -> Report:
    pc = proof_constants(cfg.a, cfg.beta, cfg.gamma, cfg.epsilon, cfg.n_particles)
    summary = {"a": pc.a, "beta": pc.beta, "gamma": pc.gamma, "epsilon": pc.epsilon, "u": pc.u,
               "delta_bar": pc.delta_bar, "M": pc.M, "c4": pc.c4,
               "drop_condition": pc.drop_condition, "contraction_condition": pc.contraction_condition,
               "conditions_hold": pc.conditions_hold}
    rows = [{"n": n, "delta_hat": d} for n, d in enumerate(pc.delta_hat, start=1)]
    return Report(summary, rows, {"conditions_hold": pc.conditions_hold}, {})


def cmd_hitting_law(cfg: ExperimentConfig, dump_dir: Optional[str] = None) -> Report:
    if not cfg.nu < 2.0:
        raise UsageError(f"hitting-law needs nu < 2, got {cfg.nu}")
    if not cfg.x0 > 0:
        raise UsageError(f"x0 must be > 0, got {cfg.x0}")
    law = Bessel(cfg.nu)
    pc = cfg.path_config()
    t_path = absorption_times(law, cfg.x0, cfg.replicas, pc, _stream(cfg, 0))
    hl = HittingTimeLaw(cfg.x0**2, cfg.nu)
    t_exact = np.asarray(sample_hitting_time(hl, _stream(cfg, 1), cfg.replicas))
    finite = t_path[np.isfinite(t_path)]
    ks = ks_two_sample(finite, t_exact) if finite.size else None
    log_t = SummaryStats.from_values(np.log(finite))
    e_log = math.log(cfg.x0**2) - math.log(2.0) - digamma(hl.alpha)
    mean_th = hl.mean()
    mean_path = float(finite.mean()) if finite.size else math.inf
    summary = {"nu": cfg.nu, "x0": cfg.x0, "n": cfg.replicas, "n_absorbed": int(finite.size),
               "mean_path": mean_path, "mean_exact_sampler": float(t_exact.mean()), "mean_theory": mean_th,
               "mean_log_path": log_t.mean, "mean_log_se": log_t.se, "mean_log_theory": e_log,
               "ks_d": ks.d if ks else None, "ks_p": ks.p if ks else None}
    checks = {"ks": bool(ks and ks.p > 0.01 and finite.size == cfg.replicas),
              "mean_log": abs(log_t.mean - e_log) <= 3 * log_t.se}
    if math.isfinite(mean_th):
        checks["mean_5pct"] = abs(mean_path / mean_th - 1.0) <= 0.05
    if dump_dir:
        os.makedirs(dump_dir, exist_ok=True)
        for i in range(min(cfg.replicas, 100)):
            simulate(law, cfg.x0, pc, RngStream(cfg.seed, (1 << 33) + i)).write_csv(
                os.path.join(dump_dir, f"path_{i:06d}.csv"))
    return Report(summary, [], checks, {"seed": cfg.seed, "paths_stream": 0, "exact_stream": 1})


def cmd_perpetuity(cfg: ExperimentConfig) -> Report:
    if not cfg.nu < 2.0:
        raise UsageError(f"perpetuity needs nu < 2, got {cfg.nu}")
    ids = range(len(_chunk_sizes(cfg.replicas)))
    pairs = _run_replicas(_pair_chunk, cfg, ids)
    sigma = np.concatenate([p[0] for p in pairs])
    alpha = np.concatenate([p[1] for p in pairs])
    ok = np.isfinite(sigma)
    res = perpetuity_test(np.column_stack([alpha[ok] ** 2, sigma[ok]]), n_terms=cfg.n_events)
    target = i_of_nu(cfg.nu)
    expected = (Verdict.CONVERGES if target < 0 else Verdict.DIVERGES if target > 0
                else Verdict.INCONCLUSIVE)
    summary = {"nu": cfg.nu, "n_pairs": int(ok.sum()), "elog_a": res.elog_a, "se": res.se,
               "verdict": res.verdict.value, "expected_verdict": expected.value,
               "i_of_nu": target, "partial_sum": res.partial_sum}
    return Report(summary, [], {"verdict_matches_sign": res.verdict == expected},
                  {"seed": cfg.seed, "stream_ids": [0, len(ids) - 1]})


# --- argument parsing -----------------------------------------------------------------

COMMANDS = ("sign-test", "extinct", "coupling", "fw-check", "density-check", "constants",
            "hitting-law", "perpetuity")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # one-line reason, exit code 2
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    add = common.add_argument
    add("--nu", type=float, default=S, help="Bessel dimension (default -1)")
    add("--beta", type=float, default=S, help="power-drift exponent, > 2 (default 3)")
    add("--n-particles", dest="n_particles", type=int, default=S, help="particles per system (default 2)")
    add("--replicas", type=int, default=S, help="replicas or draws (default 1000)")
    add("--horizon", type=float, default=S, help="time horizon (default 1000)")
    add("--dt", dest="dt_base", type=float, default=S, help="maximum time step (default 1e-3)")
    add("--kappa", type=float, default=S, help="adaptive step coefficient (default 0.01)")
    add("--eps-abs", dest="eps_abs", type=float, default=S, help="absorption level (default 1e-6)")
    add("--seed", type=int, default=S, help="64-bit seed (default 0)")
    add("--x0", type=float, default=S, help="initial position of every particle (default 1)")
    add("--n-events", dest="n_events", type=int, default=S, help="events per scaling run (default 200)")
    add("--law", choices=["bessel", "reflected"], default=S, help="driving law (default bessel)")
    add("--mode", choices=["fv", "scaling"], default=S, help="extinct: particle system or scaling construction")
    add("--a", type=float, default=S, help="initial height for fw-check/constants (default 1)")
    add("--gamma", type=float, default=S, help="gamma in (0,1) (default 0.5)")
    add("--epsilon", type=float, default=S, help="epsilon in (0,1) (default 0.5)")
    add("--delta", type=float, default=S, help="tube half-width for fw-check (default 0.3)")
    add("--workers", type=int, default=S, help="worker processes (default 1)")
    add("--out", dest="out_path", default=S, help="output file, '-' for stdout (default)")
    add("--format", choices=["csv", "json"], default=S, help="output format (default json)")
    add("--config", dest="config_file", default=None, help="flat key = value config file")
    add("--assert", dest="assert_checks", action="store_true", help="exit 3 unless every check passes")
    add("--dump-paths", dest="dump_paths", default=None, metavar="DIR", help="write per-replica CSV paths")
    add("--wall-time", dest="wall_time", action="store_true",
        help="embed wall time in the manifest (output is then no longer byte-reproducible)")

    p = _Parser(prog="fvlab", description="Fleming-Viot particle system experiments.")
    p.add_argument("--version", action="version", version=f"fvlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "sign-test": "Monte Carlo mean of log alpha^2 against its closed form",
        "extinct": "extinction fraction and extinction-time tail",
        "coupling": "sum-of-squares domination by a Bessel(N nu) copy",
        "fw-check": "tube-deviation probability against the Gaussian-tail bound",
        "density-check": "path-simulated alpha^2 against the exact sampler and the density",
        "constants": "tube and contraction constants",
        "hitting-law": "simulated absorption times against the exact hitting-time law",
        "perpetuity": "perpetuity sign test on path-simulated pairs",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def resolve_config(ns: argparse.Namespace) -> tuple[ExperimentConfig, set[str]]:
    values: dict[str, Any] = {}
    if ns.config_file:
        values.update(read_config_file(ns.config_file))
    for key in _FIELD_TYPES:
        if hasattr(ns, key) and key != "experiment":
            values[key] = _cast(key, getattr(ns, key))
    explicit = set(values)
    cfg = ExperimentConfig(experiment=ns.command, **values)
    _validate(cfg)
    return cfg, explicit


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.replicas < 1:
        raise UsageError(f"replicas must be >= 1, got {cfg.replicas}")
    if cfg.n_events < 1:
        raise UsageError(f"n-events must be >= 1, got {cfg.n_events}")
    if cfg.workers < 1:
        raise UsageError(f"workers must be >= 1, got {cfg.workers}")
    if not 0 <= cfg.seed < 1 << 64:
        raise UsageError(f"seed must be an unsigned 64-bit integer, got {cfg.seed}")
    if cfg.format not in ("csv", "json"):
        raise UsageError(f"format must be csv or json, got {cfg.format!r}")
    for key in ("horizon", "dt_base", "kappa", "eps_abs"):
        if not getattr(cfg, key) > 0:
            raise UsageError(f"{key} must be > 0, got {getattr(cfg, key)}")


def run(cfg: ExperimentConfig, explicit: set[str], dump_dir: Optional[str] = None) -> Report:
    name = cfg.experiment
    if name == "sign-test":
        return cmd_sign_test(cfg)
    if name == "extinct":
        return cmd_extinct(cfg, explicit, dump_dir)
    if name == "coupling":
        return cmd_coupling(cfg, dump_dir)
    if name == "fw-check":
        return cmd_fw_check(cfg, explicit)
    if name == "density-check":
        return cmd_density_check(cfg)
    if name == "constants":
        return cmd_constants(cfg)
    if name == "hitting-law":
        return cmd_hitting_law(cfg, dump_dir)
    if name == "perpetuity":
        return cmd_perpetuity(cfg)
    raise UsageError(f"unknown command {name!r}")


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        cfg, explicit = resolve_config(ns)
        report = run(cfg, explicit, ns.dump_paths)
    except (UsageError, DomainError) as exc:
        sys.stderr.write(f"fvlab {ns.command}: error: {exc}\n")
        return EXIT_USAGE
    wall = time.perf_counter() - start
    manifest = build_manifest(cfg, report.streams, wall if ns.wall_time else None)
    manifest["checks"] = report.checks
    text = render(manifest, report.summary, report.rows, cfg.format)
    if cfg.out_path == "-":
        sys.stdout.write(text)
    else:
        with open(cfg.out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    sys.stderr.write(f"fvlab {cfg.experiment}: done in {wall:.2f} s\n")
    if ns.assert_checks:
        failed = [k for k, ok in report.checks.items() if not ok]
        if failed:
            sys.stderr.write(f"fvlab {cfg.experiment}: failed checks: {', '.join(failed)}\n")
            return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
