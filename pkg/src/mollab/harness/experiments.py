"""Experiment drivers: declarative configs in, reports out.

Ladder points and Monte Carlo paths run concurrently under a bounded
worker pool (RENORMAL_WORKERS caps it); results are collected in ladder
order so reports are independent of scheduling.  All verdicts come from
thresholds in the config.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import commutators as comm
from ..entropy import make_entropy, theorem_combination, weighted_integral
from ..errors import ConfigError
from ..fields import (
    ScalarField,
    exponents,
    gen_sigma,
    gen_u,
    lq_norm,
    make_grid,
    parse_preset,
    save_binary,
)
from ..mollifier import (
    build_kernel,
    direct_convolve_field,
    second_moment_matrix,
    weighted_moment_first,
    DIRECT_COST_GUARD,
)
from ..operators import apply_K_scalar, apply_K_vector
from ..spde import (
    DriftSpec,
    SpdeState,
    cfl_dt,
    estimate_apriori,
    run_path,
    sample_increments,
)
from .config import ExperimentConfig
from .report import ConvergenceReport, fit_rate

__all__ = ["run", "worker_count"]


def worker_count() -> int:
    raw = os.environ.get("RENORMAL_WORKERS", "")
    if raw.strip():
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"RENORMAL_WORKERS must be an integer, got {raw!r}")
        if n < 1:
            raise ConfigError("RENORMAL_WORKERS must be >= 1")
        return n
    return min(4, os.cpu_count() or 1)


def _map_ordered(fn, items):
    workers = worker_count()
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _build_inputs(cfg: ExperimentConfig):
    grid = make_grid(cfg.d, cfg.N)
    sigma = gen_sigma(cfg.sigma_preset, grid, m=cfg.m, seed=cfg.sigma_seed)
    u = gen_u(cfg.u_preset, grid, seed=cfg.u_seed, p=cfg.p)
    return grid, sigma, u


def _finite_or_str(x):
    return x if math.isfinite(x) else "inf"


def _metadata(cfg: ExperimentConfig, grid, sigma) -> dict:
    ex = exponents(cfg.p, cfg.q)
    md = {
        "config": {k: getattr(cfg, k) for k in sorted(vars(cfg))},
        "grid": {"d": grid.d, "N": grid.N, "h": grid.h},
        "exponents": {
            "p": ex.p,
            "q": ex.q,
            "r1": _finite_or_str(ex.r1),
            "r2": _finite_or_str(ex.r2),
        },
        "sigma_regularity": {
            "w1_r1": {"r": _finite_or_str(ex.r1), "value": sigma.regularity(1, ex.r1)},
            "w2_r2": {"r": _finite_or_str(ex.r2), "value": sigma.regularity(2, ex.r2)},
        },
    }
    return md


def _vector_lq(vf, q) -> float:
    return lq_norm(vf.pointwise_norm(), q)


def _phi_field(cfg: ExperimentConfig, grid) -> ScalarField:
    name, args = parse_preset(cfg.phi_preset)
    if name == "constant":
        c = args[0] if args else 1.0
        return ScalarField(grid, np.full(grid.shape, float(c)))
    if name == "trig":
        x = grid.coords(0)
        return ScalarField(grid, 1.0 + 0.5 * np.sin(2.0 * math.pi * x))
    raise ConfigError(f"unknown phi preset {cfg.phi_preset!r}")


def _ladder_verdicts(cfg: ExperimentConfig, values) -> dict:
    verdicts = {}
    if max(values) <= cfg.degenerate_abs_tol:
        verdicts["monotone_decrease"] = "degenerate-pass"
        verdicts["final_over_initial"] = "degenerate-pass"
        return verdicts
    if cfg.require_monotone:
        mono = all(b < a for a, b in zip(values, values[1:]))
        verdicts["monotone_decrease"] = "pass" if mono else "fail"
    ratio = values[-1] / values[0]
    verdicts["final_over_initial"] = (
        "pass" if ratio <= cfg.final_over_initial_max else "fail"
    )
    return verdicts


def _norm_sweep(cfg: ExperimentConfig) -> ConvergenceReport:
    grid, sigma, u = _build_inputs(cfg)
    deltas = [2.0 ** (-k) for k in cfg.delta_ks()]
    is_dc = cfg.experiment == "double-commutator-sweep"

    def one(delta):
        kern = build_kernel(cfg.kernel, delta, grid)
        if is_dc:
            fld = comm.double_commutator(sigma, u, kern, dealias=cfg.dealias)
            norm = lq_norm(fld, cfg.q)
        else:
            fld = comm.e2(sigma, u, kern, dealias=cfg.dealias)
            norm = _vector_lq(fld, cfg.q)
        oracle = None
        if cfg.oracle_check and grid.npoints <= DIRECT_COST_GUARD:
            oracle = _sweep_oracle_diff(sigma, u, kern, fld, is_dc)
        return norm, oracle

    results = _map_ordered(one, deltas)
    rows = []
    for delta, (norm, oracle) in zip(deltas, results):
        rows.append({"delta": delta, "norm_q": norm, "oracle_absdiff": oracle})
    values = [r["norm_q"] for r in rows]
    fits = {"norm_q": fit_rate([(r["delta"], r["norm_q"]) for r in rows])}
    verdicts = _ladder_verdicts(cfg, values)
    if cfg.oracle_check:
        diffs = [r["oracle_absdiff"] for r in rows if r["oracle_absdiff"] is not None]
        if diffs:
            verdicts["oracle_agreement"] = (
                "pass" if max(diffs) <= cfg.identity_rtol else "fail"
            )
    report = ConvergenceReport(
        kind=cfg.experiment,
        columns=["delta", "norm_q", "oracle_absdiff"],
        rows=rows,
        fits=fits,
        metadata=_metadata(cfg, grid, sigma),
        verdicts=verdicts,
    )
    return report


def _sweep_oracle_diff(sigma, u, kern, fast_field, is_dc) -> float:
    """Re-evaluate the sweep quantity with brute-force convolutions."""
    conv = direct_convolve_field

    def moll_s(f):
        return conv(kern.samples, f)

    def moll_v(g):
        from ..fields import VectorFieldM

        return VectorFieldM(tuple(moll_s(c) for c in g.components))

    ku = apply_K_scalar(sigma, u)
    if is_dc:
        kjku = apply_K_vector(sigma, moll_v(ku))
        jkku = moll_s(apply_K_vector(sigma, ku))
        kkju = apply_K_vector(sigma, apply_K_scalar(sigma, moll_s(u)))
        ref = 2.0 * kjku.values - jkku.values - kkju.values
        return float(np.abs(ref - fast_field.values).max())
    jku = moll_v(ku)
    kju = apply_K_scalar(sigma, moll_s(u))
    diff = 0.0
    for k in range(jku.m):
        ref = jku[k].values - kju[k].values
        diff = max(diff, float(np.abs(ref - fast_field[k].values).max()))
    return diff


def _decomposition_check(cfg: ExperimentConfig) -> ConvergenceReport:
    grid, sigma, u = _build_inputs(cfg)
    deltas = [2.0 ** (-k) for k in cfg.delta_ks()]

    def one(delta):
        kern = build_kernel(cfg.kernel, delta, grid)
        dc = comm.double_commutator(sigma, u, kern, dealias=cfg.dealias)
        terms = comm.decompose(sigma, u, kern)
        resid = np.abs(terms.reassembled().values - dc.values).max()
        scale = max(np.abs(dc.values).max(), 1e-300)
        oracle = None
        if cfg.oracle_check and grid.npoints <= DIRECT_COST_GUARD:
            ref = comm.decompose(sigma, u, kern, conv=direct_convolve_field)
            oracle = max(
                float(np.abs(getattr(terms, t).values - getattr(ref, t).values).max())
                for t in ("T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8")
            )
        return {
            "delta": delta,
            "norm_q": float(resid / scale),
            "oracle_absdiff": oracle,
            "t2_inf": float(np.abs(terms.T2.values).max()),
            "t5_inf": float(np.abs(terms.T5.values).max()),
            "t6_inf": float(np.abs(terms.T6.values).max()),
        }

    rows = _map_ordered(one, deltas)
    verdicts = {
        "identity_residual": (
            "pass" if max(r["norm_q"] for r in rows) <= cfg.identity_rtol else "fail"
        )
    }
    if cfg.oracle_check:
        diffs = [r["oracle_absdiff"] for r in rows if r["oracle_absdiff"] is not None]
        if diffs:
            verdicts["oracle_agreement"] = (
                "pass" if max(diffs) <= 1e-11 * (1 + max(r["norm_q"] for r in rows)) else "fail"
            )
    return ConvergenceReport(
        kind=cfg.experiment,
        columns=["delta", "norm_q", "oracle_absdiff", "t2_inf", "t5_inf", "t6_inf"],
        rows=rows,
        fits={},
        metadata=_metadata(cfg, grid, sigma),
        verdicts=verdicts,
    )


def _limit_residuals(cfg: ExperimentConfig) -> ConvergenceReport:
    grid, sigma, u = _build_inputs(cfg)
    deltas = [2.0 ** (-k) for k in cfg.delta_ks()]

    def one(delta):
        res = comm.limit_residuals(sigma, u, delta, cfg.q)
        return {
            "delta": delta,
            "norm_q": max(res),
            "oracle_absdiff": None,
            "res_i1": res[0],
            "res_i2": res[1],
            "res_i3": res[2],
            "res_t5": res[3],
        }

    rows = _map_ordered(one, deltas)
    names = ["res_i1", "res_i2", "res_i3", "res_t5"]
    fits = {n: fit_rate([(r["delta"], r[n]) for r in rows]) for n in names}
    verdicts = {}
    if cfg.limit_verdict == "slope":
        ok = all(
            fits[n].outcome == "ok"
            and abs(fits[n].slope - cfg.slope_target) <= cfg.slope_tol
            for n in names
        )
        verdicts["residual_slopes"] = "pass" if ok else "fail"
    else:
        ok = all(
            all(b[n] < a[n] for a, b in zip(rows, rows[1:])) for n in names
        )
        verdicts["residual_monotone"] = "pass" if ok else "fail"
    return ConvergenceReport(
        kind=cfg.experiment,
        columns=["delta", "norm_q", "oracle_absdiff"] + names,
        rows=rows,
        fits=fits,
        metadata=_metadata(cfg, grid, sigma),
        verdicts=verdicts,
    )


def _theorem3_sweep(cfg: ExperimentConfig) -> ConvergenceReport:
    grid, sigma, u = _build_inputs(cfg)
    phi = _phi_field(cfg, grid)
    ent = make_entropy(cfg.entropy, cfg.entropy_q)
    deltas = [2.0 ** (-k) for k in cfg.delta_ks()]

    def one(delta):
        combo = theorem_combination(sigma, u, delta, ent, dealias=cfg.dealias)
        return abs(weighted_integral(combo, phi))

    values = _map_ordered(one, deltas)
    rows = [
        {"delta": d, "norm_q": v, "oracle_absdiff": None}
        for d, v in zip(deltas, values)
    ]
    fits = {"norm_q": fit_rate(list(zip(deltas, values)))}
    verdicts = _ladder_verdicts(cfg, values)
    return ConvergenceReport(
        kind=cfg.experiment,
        columns=["delta", "norm_q", "oracle_absdiff"],
        rows=rows,
        fits=fits,
        metadata=_metadata(cfg, grid, sigma),
        verdicts=verdicts,
    )


def _moment_check(cfg: ExperimentConfig) -> ConvergenceReport:
    grid = make_grid(cfg.d, cfg.N)
    sigma = gen_sigma(cfg.sigma_preset, grid, m=cfg.m, seed=cfg.sigma_seed)
    deltas = [2.0 ** (-k) for k in cfg.delta_ks()]

    def one(delta):
        kern = build_kernel(cfg.kernel, delta, grid)
        wm = weighted_moment_first(kern, 0)
        worst = 0.0
        for i in range(grid.d):
            for j in range(grid.d):
                for a in range(grid.d):
                    for b in range(grid.d):
                        got = second_moment_matrix(kern, i, j, a, b)
                        want = float((i == a) * (j == b) + (j == a) * (i == b))
                        worst = max(worst, abs(got - want))
        return {
            "delta": delta,
            "norm_q": wm,
            "oracle_absdiff": worst,
            "delta_over_h": delta / grid.h,
        }

    rows = _map_ordered(one, deltas)
    firsts = [r["norm_q"] for r in rows]
    band_ok = max(firsts) / min(firsts) <= cfg.moment_band_factor
    pair_rows = [r for r in rows if r["delta_over_h"] >= cfg.moment_pair_min_ratio]
    pair_ok = all(r["oracle_absdiff"] <= cfg.moment_pair_tol for r in pair_rows)
    verdicts = {
        "first_moment_band": "pass" if band_ok else "fail",
        "second_moment_identity": "pass" if pair_ok and pair_rows else "fail",
    }
    return ConvergenceReport(
        kind=cfg.experiment,
        columns=["delta", "norm_q", "oracle_absdiff", "delta_over_h"],
        rows=rows,
        fits={},
        metadata=_metadata(cfg, grid, sigma),
        verdicts=verdicts,
    )


def _drift_for(cfg: ExperimentConfig, grid) -> DriftSpec:
    if cfg.drift == "zero":
        return DriftSpec()
    x = grid.coords(0)
    b0 = ScalarField(grid, 0.2 + 0.1 * np.sin(2.0 * math.pi * x))
    rest = [
        ScalarField(grid, np.full(grid.shape, 0.1)) for _ in range(grid.d - 1)
    ]
    return DriftSpec("linear-divergence", (b0, *rest))


def _spde_run(cfg: ExperimentConfig) -> ConvergenceReport:
    grid, sigma, u0 = _build_inputs(cfg)
    drift = _drift_for(cfg, grid)
    dt = cfg.dt if cfg.dt > 0 else cfg.horizon / cfg.steps
    steps = cfg.steps if cfg.dt <= 0 else int(round(cfg.horizon / cfg.dt))
    driver = sample_increments(sigma.m, steps, dt, seed=cfg.seed)
    state = SpdeState(t=0.0, u=u0, sigma=sigma, drift=drift)
    final, snaps = run_path(state, driver, scheme=cfg.scheme,
                            snapshot_stride=cfg.snapshot_stride)
    rows = []
    for t, st in snaps:
        rows.append({
            "t": t,
            "mean": st.u.mean(),
            "norm_l2": lq_norm(st.u, 2),
            "norm_linf": lq_norm(st.u, math.inf),
            "norm_lp": lq_norm(st.u, cfg.p),
        })
    os.makedirs(cfg.out_dir, exist_ok=True)
    for idx, (t, st) in enumerate(snaps):
        save_binary(st.u, os.path.join(cfg.out_dir, f"snapshot_{idx:04d}.bin"))
    drift_mass = abs(final.u.mean() - u0.mean())
    verdicts = {
        "mass_conservation": "pass" if drift_mass <= cfg.mass_tol else "fail",
        "bounded": "pass" if rows[-1]["norm_linf"] <= cfg.blowup_bound else "fail",
    }
    md = _metadata(cfg, grid, sigma)
    md["cfl_dt"] = cfl_dt(sigma, grid)
    md["dt"] = dt
    md["steps"] = steps
    md["mass_drift"] = drift_mass
    return ConvergenceReport(
        kind=cfg.experiment,
        columns=["t", "mean", "norm_l2", "norm_linf", "norm_lp"],
        rows=rows,
        fits={},
        metadata=md,
        verdicts=verdicts,
    )


def _apriori_mc(cfg: ExperimentConfig) -> ConvergenceReport:
    grid, sigma, u0 = _build_inputs(cfg)
    drift = _drift_for(cfg, grid)
    est = estimate_apriori(
        sigma, u0, drift, p=cfg.p, horizon=cfg.horizon,
        paths=cfg.paths_count, steps=cfg.steps, seed=cfg.seed, scheme=cfg.scheme,
    )
    rows = [{"paths": est.paths, "value": est.value, "stderr": est.stderr}]
    verdicts = {}
    if float(sigma.squared_magnitude().max()) == 0.0 and cfg.drift == "zero":
        expected = cfg.horizon * lq_norm(u0, cfg.p) ** cfg.p
        rel = abs(est.value - expected) / expected
        verdicts["static_exactness"] = "pass" if rel <= cfg.apriori_rtol else "fail"
    else:
        verdicts["estimate_finite"] = "pass" if math.isfinite(est.value) else "fail"
    md = _metadata(cfg, grid, sigma)
    md["estimate"] = {"value": est.value, "stderr": est.stderr, "paths": est.paths}
    return ConvergenceReport(
        kind=cfg.experiment,
        columns=["paths", "value", "stderr"],
        rows=rows,
        fits={},
        metadata=md,
        verdicts=verdicts,
    )


_RUNNERS = {
    "e2-sweep": _norm_sweep,
    "double-commutator-sweep": _norm_sweep,
    "decomposition-check": _decomposition_check,
    "limit-residuals": _limit_residuals,
    "theorem3-sweep": _theorem3_sweep,
    "moment-check": _moment_check,
    "spde-run": _spde_run,
    "apriori-mc": _apriori_mc,
}


def run(cfg: ExperimentConfig) -> ConvergenceReport:
    """Execute the configured experiment and return its report."""
    try:
        runner = _RUNNERS[cfg.experiment]
    except KeyError:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}") from None
    return runner(cfg)
