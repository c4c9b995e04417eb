"""Experiment runners. Each returns a :class:`Table` with one row per grid point and variant."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..closed_form_se import (assemble_sinr, build_cache, lsfd_sinr, optimal_lsfd, se_per_ue,
                           sld_weights, term_powers)
from ..config import (HARDWARE_PROFILES, ConfigError, SystemConfig, dbm_to_watt,
                      hardware_profile)
from ..monte_carlo import empirical_se, run_monte_carlo
from ..optimizer import extract_affine_coeffs, initial_power, optimize_power
from ..scenario import build_scenario
from .output import Table

KINDS = ("validate", "sweep_instant", "sweep_tauc", "sweep_taup", "sweep_aps",
         "sweep_antennas", "sweep_power", "optimize", "term_breakdown")
MONTE_CARLO_KINDS = ("validate",)


@dataclass
class ExperimentSpec:
    kind: str
    grid: list = field(default_factory=list)
    trials: int = 10_000
    seed: int = 0
    threads: int = 1
    params: dict[str, Any] = field(default_factory=dict)

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}", "kind")
        if not self.grid:
            raise ConfigError("grid must be nonempty", "grid")
        if self.kind in MONTE_CARLO_KINDS and self.trials < 1:
            raise ConfigError("trials must be >= 1", "trials")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1", "threads")


def default_grid(kind: str, cfg: SystemConfig) -> list:
    return {
        "validate": list(HARDWARE_PROFILES),
        "sweep_instant": list(range(cfg.anchor, cfg.tau_c + 1)),
        "sweep_tauc": [10, 20, 30, 50, 75, 100, 150, 200, 300, 400],
        "sweep_taup": [1, 2, 4, 6, 8],
        "sweep_aps": [8, 16, 32, 48, 64],
        "sweep_antennas": [1, 2, 4, 6, 8],
        "sweep_power": [-10.0, 0.0, 10.0, 20.0, 30.0],
        "optimize": [0.0, 10.0, 20.0],
        "term_breakdown": list(range(cfg.anchor, cfg.tau_c + 1)),
    }[kind]


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _kmh(v):
    return np.asarray(v, dtype=float) / 3.6


def _drops(cfg: SystemConfig, params) -> list[SystemConfig]:
    n = int(params.get("drops", 1))
    if n < 1:
        raise ConfigError("drops must be >= 1", "params/drops")
    return [cfg.with_(seed=cfg.seed + d) for d in range(n)]


def _sum_se(cfg: SystemConfig, params) -> dict:
    """Full-power sum SE for LSFD and SLD, averaged over scenario drops."""
    out = {"se_lsfd": 0.0, "se_sld": 0.0}
    drops = _drops(cfg, params)
    for c in drops:
        cache = build_cache(build_scenario(c))
        p = np.full(c.K, c.p_max)
        out["se_lsfd"] += se_per_ue(cache, p, "lsfd").sum() / len(drops)
        out["se_sld"] += se_per_ue(cache, p, "sld").sum() / len(drops)
    return out


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _adc_architecture(cfg: SystemConfig, name: str) -> SystemConfig:
    """ADC layouts: ideal, four resolutions spread over each AP's antennas, or over APs."""
    bits = [1, 2, 3, 4]
    if name == "ideal":
        return cfg.with_(adc_bits=math.inf)
    if name == "dynamic_antennas":
        per_ant = [bits[l * len(bits) // cfg.N] for l in range(cfg.N)]
        return cfg.with_(adc_bits=np.tile(per_ant, cfg.M).astype(float))
    if name == "dynamic_aps":
        return cfg.with_(adc_bits={"ap_groups": bits})
    raise ConfigError(f"unknown ADC architecture {name!r}", "params/variants")


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_validate(spec: ExperimentSpec, cfg: SystemConfig) -> Table:
    """Closed-form vs Monte Carlo per-UE SE for hardware profiles (equal full power)."""
    table = Table(["experiment", "seed", "variant", "profile", "ue",
                   "se_closed_form", "se_monte_carlo", "rel_error"])
    modes = spec.params.get("modes", ["lsfd", "sld"])
    for profile in spec.grid:
        c = hardware_profile(cfg, profile)
        scn = build_scenario(c)
        cache = build_cache(scn)
        p = np.full(c.K, c.p_max)
        mc = run_monte_carlo(scn, spec.trials, seed=spec.seed, threads=spec.threads)
        for mode in modes:
            if mode == "lsfd":
                weights = {n: optimal_lsfd(cache.terms(n), p) for n in cache.instants}
            else:
                weights = {n: sld_weights(cache.terms(n)) for n in cache.instants}
            cf = se_per_ue(cache, p, mode)
            em = empirical_se(mc, c, cache.hw, cache.aging, weights.__getitem__, p)
            for k in range(c.K):
                table.add(experiment="validate", seed=spec.seed, variant=mode,
                          profile=profile, ue=k, se_closed_form=cf[k],
                          se_monte_carlo=em[k], rel_error=em[k] / cf[k] - 1)
    return table


def run_sweep_instant(spec: ExperimentSpec, cfg: SystemConfig) -> Table:
    """Per-instant sum SE sum_k log2(1 + SINR_k,n) for several UE speeds."""
    speeds = spec.params.get("velocities_kmh", [54.0, 128.0, 212.0])
    table = Table(["experiment", "seed", "variant", "n", "se_lsfd", "se_sld"])
    for v in speeds:
        c = cfg.with_(velocities=float(_kmh(v)))
        for n in spec.grid:
            if not c.anchor <= n <= c.tau_c:
                raise ConfigError(f"instant {n} outside {c.anchor}..{c.tau_c}", "grid")
        cache = build_cache(build_scenario(c))
        p = np.full(c.K, c.p_max)

        def row(n, cache=cache, p=p):
            t = cache.terms(n)
            return (np.log2(1 + lsfd_sinr(t, p)).sum(),
                    np.log2(1 + assemble_sinr(t, sld_weights(t), p)[2]).sum())

        for n, (a, b) in zip(spec.grid, _map(row, spec.grid, spec.threads)):
            table.add(experiment="sweep_instant", seed=spec.seed, variant=f"v={v:g}kmh",
                      n=n, se_lsfd=a, se_sld=b)
    return table


def _sweep(spec, cfg, name, column, make_cfg, variants):
    table = Table(["experiment", "seed", "variant", column, "se_lsfd", "se_sld"])
    for var in variants:
        cfgs = [make_cfg(cfg, var, x) for x in spec.grid]
        results = _map(lambda c: _sum_se(c, spec.params), cfgs, spec.threads)
        for x, r in zip(spec.grid, results):
            table.add(experiment=name, seed=spec.seed, variant=var[0], **{column: x}, **r)
    return table


def run_sweep_tauc(spec, cfg):
    speeds = spec.params.get("velocities_kmh", [54.0, 212.0])
    variants = [(f"v={v:g}kmh", v) for v in speeds]
    return _sweep(spec, cfg, "sweep_tauc", "tau_c", lambda c, var, x: c.with_(
        tau_c=int(x), velocities=float(_kmh(var[1]))), variants)


def run_sweep_taup(spec, cfg):
    antennas = spec.params.get("antennas", [cfg.N])
    variants = [(f"N={n}", n) for n in antennas]
    return _sweep(spec, cfg, "sweep_taup", "tau_p", lambda c, var, x: c.with_(
        tau_p=int(x), N=int(var[1])), variants)


def run_sweep_aps(spec, cfg):
    users = spec.params.get("users", [cfg.K])
    variants = [(f"K={k}", k) for k in users]
    return _sweep(spec, cfg, "sweep_aps", "M", lambda c, var, x: c.with_(
        M=int(x), K=int(var[1]), tau_p=max(1, int(var[1]) // 2)), variants)


def run_sweep_antennas(spec, cfg):
    speeds = spec.params.get("velocities_kmh", [0.0, 54.0, 128.0])
    variants = [(f"v={v:g}kmh", v) for v in speeds]
    return _sweep(spec, cfg, "sweep_antennas", "N", lambda c, var, x: c.with_(
        N=int(x), velocities=float(_kmh(var[1]))), variants)


def run_sweep_power(spec, cfg):
    archs = spec.params.get("variants", ["ideal", "dynamic_antennas", "dynamic_aps"])
    antennas = int(spec.params.get("antennas", 4))
    variants = [(a, a) for a in archs]
    return _sweep(spec, cfg, "sweep_power", "p_max_dbm", lambda c, var, x: _adc_architecture(
        c.with_(p_max=float(dbm_to_watt(x)), N=antennas), var[1]), variants)


def _se_with_powers(cache, p, mode):
    return float(se_per_ue(cache, p, mode).sum())


def run_optimize(spec: ExperimentSpec, cfg: SystemConfig) -> Table:
    """Sum SE of full power vs both MM methods, optimized at instant(s) n_opt."""
    modes = spec.params.get("modes", ["lsfd", "sld"])
    methods = spec.params.get("methods", ["closed_form", "projected_gradient"])
    n_opts = spec.params.get("n_opt", ["anchor"])
    max_iters = int(spec.params.get("max_iters", 500))
    table = Table(["experiment", "seed", "variant", "p_max_dbm", "n_opt", "se",
                   "iterations", "converged"])

    def point(x):
        c = cfg.with_(p_max=float(dbm_to_watt(x)))
        cache = build_cache(build_scenario(c))
        rows = []
        for mode in modes:
            full = np.full(c.K, c.p_max)
            rows.append((f"{mode}/full_power", "-", _se_with_powers(cache, full, mode), 0, True))
            for method in methods:
                for n_opt in n_opts:
                    if n_opt == "per_instant":
                        se, its, conv = _per_instant(cache, mode, method, max_iters)
                    else:
                        n = c.anchor if n_opt == "anchor" else int(n_opt)
                        p, its, conv = _optimize_at(cache, n, mode, method, max_iters)
                        se = _se_with_powers(cache, p, mode)
                    rows.append((f"{mode}/{method}", str(n_opt), se, its, conv))
        return rows

    for x, rows in zip(spec.grid, _map(point, spec.grid, spec.threads)):
        for variant, n_opt, se, its, conv in rows:
            table.add(experiment="optimize", seed=spec.seed, variant=variant, p_max_dbm=x,
                      n_opt=n_opt, se=se, iterations=its, converged=int(conv))
    return table


def _optimize_at(cache, n, mode, method, max_iters):
    cfg = cache.config
    terms = cache.terms(n)
    p_half = np.full(cfg.K, cfg.p_max / 2)
    a = sld_weights(terms) if mode == "sld" else optimal_lsfd(terms, p_half)
    coeffs = extract_affine_coeffs(terms, a, cfg.p_max)
    res = optimize_power(coeffs, method, initial_power(coeffs, cfg.K), max_iters=max_iters)
    return res.p, res.iterations, res.converged


def _per_instant(cache, mode, method, max_iters):
    """Optimize separately at every data instant and sum the per-instant SE."""
    total, its, conv = 0.0, 0, True
    for n in cache.instants:
        p, i, c = _optimize_at(cache, n, mode, method, max_iters)
        t = cache.terms(n)
        if mode == "lsfd":
            sinr = lsfd_sinr(t, p)
        else:
            sinr = assemble_sinr(t, sld_weights(t), p)[2]
        total += np.log2(1 + sinr).sum()
        its, conv = max(its, i), conv and c
    return total / cache.config.tau_c, its, conv


def run_term_breakdown(spec: ExperimentSpec, cfg: SystemConfig) -> Table:
    """Per-UE power of every SINR term versus instant, LSFD and SLD weights."""
    speeds = spec.params.get("velocities_kmh")
    if speeds is None:
        half = cfg.K // 2
        speeds = [54.0] * half + [212.0] * (cfg.K - half)
    c = cfg.with_(velocities=_kmh(speeds))
    cache = build_cache(build_scenario(c))
    p = np.full(c.K, c.p_max)
    names = ["DS", "BU", "CA", "IUI", "DAC_TRF", "RRF", "ADC", "NS"]
    table = Table(["experiment", "seed", "variant", "n", "ue", "velocity_kmh"] + names)
    for mode in ("lsfd", "sld"):
        for n in spec.grid:
            t = cache.terms(n)
            a = optimal_lsfd(t, p) if mode == "lsfd" else sld_weights(t)
            tp = term_powers(t, a, p)
            for k in range(c.K):
                table.add(experiment="term_breakdown", seed=spec.seed, variant=mode, n=n,
                          ue=k, velocity_kmh=float(speeds[k]), DS=tp["DS"][k], BU=tp["BU"][k],
                          CA=tp["CA"][k], IUI=tp["IUI"][k].sum(),
                          DAC_TRF=tp["DAC"][k] + tp["TRF"][k], RRF=tp["RRF"][k],
                          ADC=tp["ADC"][k], NS=tp["NS"][k])
    return table


RUNNERS = {
    "validate": run_validate,
    "sweep_instant": run_sweep_instant,
    "sweep_tauc": run_sweep_tauc,
    "sweep_taup": run_sweep_taup,
    "sweep_aps": run_sweep_aps,
    "sweep_antennas": run_sweep_antennas,
    "sweep_power": run_sweep_power,
    "optimize": run_optimize,
    "term_breakdown": run_term_breakdown,
}


def run_experiment(spec: ExperimentSpec, cfg: SystemConfig) -> Table:
    """Run one experiment. The scenario seed follows ``spec.seed``."""
    if not spec.grid:
        spec.grid = default_grid(spec.kind, cfg)
    spec.validate()
    cfg = cfg.with_(seed=int(spec.seed))
    return RUNNERS[spec.kind](spec, cfg)
