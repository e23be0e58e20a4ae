"""The registered experiments.  Each returns ``(statistics, tables)``.

Replica ``r`` of an experiment with master seed ``S`` always draws from
``replica_seed(S, r)``, so results do not depend on how replicas are
scheduled.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from . import averaging as av
from .harness import ConfigError, Table, gate, register
from .integrals import (SmoothIntegrand, h_norm, lt_space_integral, multidim_lt_identity_terms,
                        path_derivative_integral, random_elementary)
from .ito import POLY_BATTERY, ito_terms
from .localtime import XGrid, default_bandwidth, slab_discrepancy, tanaka_terms
from .sheet import GridSpec, lines_as_sheet, replica_seed, sample_lines, sample_sheet
from .stats import lower_confidence_bound, mc_aggregate, quantile

__all__ = ["sin_st", "x1_x2"]


def _agg(values):
    return mc_aggregate(values)


def _is_pow2(v: int) -> bool:
    return v >= 1 and (v & (v - 1)) == 0


def _check_node(value: float, steps: int, label: str):
    k = value * steps
    if abs(k - round(k)) > 1e-9 or not 0 <= value <= 1:
        near = round(min(max(value, 0.0), 1.0) * steps) / steps
        raise ConfigError(f"{label}={value!r} is not a node of a grid with {steps} steps; nearest is {near!r}")


def _nearest_pow2(v: int) -> int:
    return 1 << max(0, round(math.log2(max(v, 1))))


def _require_pow2(v: int, label: str):
    if not _is_pow2(v):
        raise ConfigError(f"{label}={v} must be a power of two; nearest feasible is {_nearest_pow2(v)}")


def _line_sheet_for(s: float, n: int, dim: int, seed: int):
    """Sheet view carrying the lines ``k/K`` with ``s`` among them (K = denominator of s)."""
    K = Fraction(s).limit_denominator(1 << 20).denominator
    return lines_as_sheet(sample_lines(np.arange(1, K + 1) / K, n, dim, seed))


# ----------------------------------------------------------------------- tanaka


def _validate_tanaka(cfg):
    p = cfg.params
    if not 0 < p["s"] <= 1:
        raise ConfigError("s must lie in (0, 1]")
    grids = p["grids"] or [cfg.n]
    for g in grids:
        _check_node(p["t"], g, "t")


@register("tanaka", "Tanaka identity on the line s: mean |residual| across refining grids, eps = c n^-1/4",
          {"m": 1, "n": 16384, "replicas": 200,
           "params": {"s": 1.0, "t": 1.0, "x": 0.0, "c": 1.0, "grids": [1024, 4096, 16384]},
           "tolerances": {"final_mean_abs": 0.05}},
          _validate_tanaka)
def run_tanaka(cfg):
    p = cfg.params
    grids = p["grids"] or [cfg.n]
    stats, rows, means = [], [], []
    for g in grids:
        eps = default_bandwidth(g, p["c"])
        res = []
        for r in range(cfg.replicas):
            path = _line_sheet_for(p["s"], g, cfg.dim, replica_seed(cfg.seed, r))
            res.append(tanaka_terms(path, 0, p["s"], p["x"], p["t"], eps)["residual"])
        res = np.array(res)
        m_abs, se_abs, cnt = _agg(np.abs(res))
        m, se, _ = _agg(res)
        means.append(m_abs)
        rows.append((g, eps, m_abs, se_abs, m, se))
        stats.append(gate(f"mean_abs_residual[n={g}]", m_abs, se=se_abs, count=cnt))
        stats.append(gate(f"mean_residual[n={g}]", m, se=se, count=cnt))
    mono = all(b < a for a, b in zip(means, means[1:]))
    stats.append(gate("monotone_decrease", float(mono), "==", 1.0))
    stats.append(gate("final_mean_abs_residual", means[-1], "<", cfg.tolerances["final_mean_abs"]))
    return stats, {"convergence": Table.of(("n", "eps", "mean_abs", "se_abs", "mean", "se_mean"), rows)}


# ------------------------------------------------------------------ slab identity


def _validate_slab(cfg):
    p = cfg.params
    if p["route"] not in ("line1", "line2", "both"):
        raise ConfigError("route must be line1, line2 or both")
    if p["bins"] < 1 or p["eps_x"] <= 0 or p["x_min"] >= p["x_max"]:
        raise ConfigError("need bins >= 1, eps_x > 0 and x_min < x_max")


@register("slab-identity", "Line local times integrated over the other parameter versus the plane local time",
          {"m": 1024, "n": 1024, "replicas": 50,
           "params": {"eps_x": 0.05, "x_min": -1.5, "x_max": 1.5, "bins": 12, "route": "line1",
                      "s_stride": 1, "t_stride": 1},
           "tolerances": {"max_rel_l1": 0.05}},
          _validate_slab)
def run_slab(cfg):
    p = cfg.params
    xg = XGrid(p["x_min"], p["x_max"], p["bins"], p["eps_x"])
    routes = ["line1", "line2"] if p["route"] == "both" else [p["route"]]
    stats, tables = [], {}
    for route in routes:
        per_rep, per_bin = [], np.zeros(xg.p)
        for r in range(cfg.replicas):
            path = sample_sheet(GridSpec(cfg.m, cfg.n), cfg.dim, replica_seed(cfg.seed, r))
            num, den = slab_discrepancy(path, 0, xg, p["s_stride"], p["t_stride"], route)
            rel = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
            per_rep.append(float(rel.max()))
            per_bin += rel
        m, se, cnt = _agg(per_rep)
        stats.append(gate(f"max_rel_l1[{route}]", m, "<", cfg.tolerances["max_rel_l1"], se, cnt))
        tables[f"bins_{route}"] = Table.of(("x", "mean_rel_l1"), zip(xg.centers, per_bin / cfg.replicas))
    return stats, tables


# --------------------------------------------------------- local-time-space identity


def sin_st() -> SmoothIntegrand:
    """``f(s, t, x) = sin(x) s t`` with its x-derivative."""
    return SmoothIntegrand(lambda s, t, x: np.sin(x) * s * t, {"x": lambda s, t, x: np.cos(x) * s * t}, "sin(x)*s*t")


def _validate_lt_space(cfg):
    xi = cfg.params["xi_min"]
    if xi is not None:
        if xi <= 0:
            raise ConfigError("xi_min must be > 0")
        _check_node(xi, cfg.m, "xi_min")


@register("lt-space", "Local-time-space integral of sin(x) s t against minus the integral of its x-derivative",
          {"m": 1024, "n": 1024, "replicas": 200, "params": {"xi_min": None, "s": 1.0, "t": 1.0},
           "tolerances": {"k_se": 3.0, "max_rel_error": 0.10}},
          _validate_lt_space)
def run_lt_space(cfg):
    p = cfg.params
    f = sin_st()
    xi_min = p["xi_min"] if p["xi_min"] is not None else 16.0 / cfg.m
    D, ref = [], []
    for r in range(cfg.replicas):
        path = sample_sheet(GridSpec(cfg.m, cfg.n), 1, replica_seed(cfg.seed, r))
        a = lt_space_integral(f, path, 0, p["s"], p["t"], xi_min)
        b = path_derivative_integral(f, path, 0, p["s"], p["t"])
        D.append(a + b)
        ref.append(abs(b))
    m, se, cnt = _agg(D)
    mabs, _, _ = _agg(np.abs(D))
    mref, _, _ = _agg(ref)
    tol = cfg.tolerances
    return [gate("mean_sum", m, "within_se", tol["k_se"], se, cnt),
            gate("relative_error", mabs / mref, "<", tol["max_rel_error"]),
            gate("mean_abs_derivative_integral", mref, count=cnt)], {}


# ------------------------------------------------------------------- L1 bound


@register("lt-bound", "95% lower confidence bound of E|local-time-space integral| against the H-norm",
          {"m": 256, "n": 256, "replicas": 200,
           "params": {"functions": 20, "function_seed": 0, "xi_min": None},
           "tolerances": {"z": 1.6448536269514722}})
def run_lt_bound(cfg):
    p = cfg.params
    fs = [random_elementary(replica_seed(p["function_seed"], k)) for k in range(p["functions"])]
    vals = np.empty((len(fs), cfg.replicas))
    for r in range(cfg.replicas):
        path = sample_sheet(GridSpec(cfg.m, cfg.n), 1, replica_seed(cfg.seed, r))
        for k, f in enumerate(fs):
            vals[k, r] = abs(lt_space_integral(f, path, 0, 1.0, 1.0, p["xi_min"]))
    stats, rows = [], []
    for k, f in enumerate(fs):
        m, se, cnt = _agg(vals[k])
        lcb = lower_confidence_bound(m, se, cfg.tolerances["z"])
        hn = h_norm(f).total
        stats.append(gate(f"lcb_minus_hnorm[{k}]", lcb - hn, "<=", 0.0, se, cnt))
        rows.append((k, m, se, lcb, hn))
    return stats, {"functions": Table.of(("function", "mean_abs", "se", "lcb", "h_norm"), rows)}


# ----------------------------------------------------------- multi-d identity


def x1_x2() -> SmoothIntegrand:
    return SmoothIntegrand(lambda s, t, x: x[..., 0] * x[..., 1],
                           {"x0": lambda s, t, x: x[..., 1], "x1": lambda s, t, x: x[..., 0]}, "x1*x2", dim=2)


def _validate_md(cfg):
    if cfg.dim != 2:
        raise ConfigError("eisenbaum-md uses f = x1 x2 and needs dim = 2")
    tc = cfg.params["t_cut"]
    if tc is not None:
        if not 0 < tc < 1:
            raise ConfigError("t_cut must lie in (0, 1)")
        _check_node(tc, cfg.n, "t_cut")


@register("eisenbaum-md", "d = 2 local-time identity for f = x1 x2 through the time-reversal drift",
          {"m": 1024, "n": 1024, "dim": 2, "replicas": 200,
           "params": {"component": 0, "t_cut": None, "xi_min": None, "s": 1.0, "t": 1.0},
           "tolerances": {"k_se": 3.0}},
          _validate_md)
def run_md(cfg):
    p = cfg.params
    f = x1_x2()
    t_cut = p["t_cut"] if p["t_cut"] is not None else 1.0 - 16.0 / cfg.n
    keys = ("residual", "lhs", "forward", "b_term", "drift", "tail")
    acc = {k: [] for k in keys}
    for r in range(cfg.replicas):
        path = sample_sheet(GridSpec(cfg.m, cfg.n), 2, replica_seed(cfg.seed, r))
        res = multidim_lt_identity_terms(f, path, p["component"], p["s"], p["t"], t_cut, p["xi_min"])
        for k in keys:
            acc[k].append(res[k])
    m, se, cnt = _agg(acc["residual"])
    stats = [gate("mean_residual", m, "within_se", cfg.tolerances["k_se"], se, cnt)]
    rows = []
    for k in keys[1:]:
        mk, sek, _ = _agg(acc[k])
        stats.append(gate(f"mean_{k}", mk, se=sek, count=cnt))
        rows.append((k, mk, sek))
    return stats, {"terms": Table.of(("term", "mean", "se"), rows)}


# ------------------------------------------------------------------------ Ito


@register("ito", "Two-parameter Ito formula residuals for a polynomial battery",
          {"m": 256, "n": 256, "replicas": 200,
           "params": {"exact": ["1", "x"], "gated": ["x^2", "s*x", "x^3"], "reported": ["s*x^2", "x*t"],
                      "mode": "smooth", "raw_replicas": 5, "s": 1.0, "t": 1.0},
           "tolerances": {"k_se": 3.0, "exact_abs": 1e-12}})
def run_ito(cfg):
    p = cfg.params
    names = list(p["exact"]) + list(p["gated"]) + list(p["reported"])
    unknown = set(names) - set(POLY_BATTERY)
    if unknown:
        raise ConfigError(f"unknown integrands {sorted(unknown)}; choose from {sorted(POLY_BATTERY)}")
    res = {h: [] for h in names}
    run = {h: [] for h in names}
    raw = {h: [] for h in names}
    for r in range(cfg.replicas):
        path = sample_sheet(GridSpec(cfg.m, cfg.n), 1, replica_seed(cfg.seed, r))
        for h in names:
            terms = ito_terms(POLY_BATTERY[h], path, 0, p["s"], p["t"], p["mode"])
            res[h].append(terms["residual"])
            run[h].append(terms["residual_running"])
            if r < p["raw_replicas"] and p["mode"] == "smooth":
                rt = ito_terms(POLY_BATTERY[h], path, 0, p["s"], p["t"], "raw")
                raw[h].append(rt["residual"] - terms["residual"])
    tol = cfg.tolerances
    stats, rows = [], []
    for h in names:
        m, se, cnt = _agg(res[h])
        if h in p["exact"]:
            stats.append(gate(f"max_abs_residual[{h}]", float(np.max(np.abs(res[h]))), "<=", tol["exact_abs"],
                              count=cnt))
        elif h in p["gated"]:
            stats.append(gate(f"mean_residual[{h}]", m, "within_se", tol["k_se"], se, cnt))
        else:
            stats.append(gate(f"mean_residual[{h}]", m, se=se, count=cnt))
        mr, ser, _ = _agg(run[h])
        stats.append(gate(f"mean_residual_running[{h}]", mr, se=ser, count=cnt))
        rawm = float(np.mean(np.abs(raw[h]))) if raw[h] else 0.0
        rows.append((h, m, se if se is not None else 0.0, mr, ser if ser is not None else 0.0, rawm))
    return stats, {"battery": Table.of(("h", "mean", "se", "mean_running", "se_running",
                                         "mean_abs_raw_minus_smooth"), rows)}


# ---------------------------------------------------------------- Davie moments


def _drift(name: str, dim: int):
    try:
        return av.make_drift(name, dim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _validate_moment(cfg):
    p = cfg.params
    if not 0 < p["s"] <= p["s2"] <= 1:
        raise ConfigError("need 0 < s <= s2 <= 1")
    if p["a"] < 0 or p["a"] + p["eps"] > 1:
        raise ConfigError("need a >= 0 and a + eps <= 1")
    _check_node(p["a"], cfg.n, "a")
    _check_node(p["eps"], cfg.n, "eps")
    if any(a < 0 for a in p["alphas"]):
        raise ConfigError("the alpha ladder must be non-negative")
    if cfg.replicas < 2:
        raise ConfigError("davie-moment needs at least 2 replicas")


@register("davie-moment", "Exponential moments of the averaging increment on an alpha ladder",
          {"m": 1, "n": 256, "dim": 2, "replicas": 10000,
           "params": {"drift": "sign", "a": 0.25, "eps": 0.5, "s": 1.0, "s2": 1.0, "x": 0.0, "y": 0.1,
                      "alphas": [0.0, 0.025, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0], "stability": 0.1},
           "tolerances": {"alpha_small": 0.1, "moment_max": 10.0}},
          _validate_moment)
def run_moment(cfg):
    p = cfg.params
    b = _drift(p["drift"], cfg.dim)
    rep = av.exp_moment_estimate(b, cfg.replicas, p["a"], p["eps"], p["s"], p["s2"], p["y"], p["alphas"],
                                 cfg.seed, cfg.n, p["x"], p["stability"])
    tol = cfg.tolerances
    small = rep.alphas <= tol["alpha_small"]
    worst = float(np.max(np.where(rep.stable[small], rep.moments[small], np.inf))) if small.any() else 0.0
    zero = rep.alphas == 0
    stats = [gate("max_moment_small_alpha", worst, "<", tol["moment_max"], count=cfg.replicas),
             gate("largest_stable_alpha", rep.largest_stable_alpha if rep.largest_stable_alpha is not None else -1.0)]
    if zero.any():
        stats.append(gate("moment_at_alpha_0", float(rep.moments[zero][0]), "==", 1.0))
    rows = [(a, m if np.isfinite(m) else "inf", st) for a, m, st in rep.rows()]
    return stats, {"moments": Table.of(("alpha", "moment", "stable_flag"), rows)}


# ------------------------------------------------------------------- Davie tail


def _validate_tail(cfg):
    p = cfg.params
    if not 0 < p["s"] <= p["s2"] <= 1:
        raise ConfigError("need 0 < s <= s2 <= 1")
    if not 0 <= p["a"] < p["a2"] <= 1:
        raise ConfigError("need 0 <= a < a2 <= 1")
    _check_node(p["a"], cfg.n, "a")
    _check_node(p["a2"], cfg.n, "a2")


@register("davie-tail", "Tail curve of the scaled averaging increment with a log-linear fit",
          {"m": 1, "n": 256, "dim": 1, "replicas": 100000,
           "params": {"drift": "floor", "a": 0.25, "a2": 0.75, "s": 0.5, "s2": 0.75, "x": 0.0, "x2": 0.1,
                      "etas": [round(0.1 * k, 10) for k in range(31)], "min_count": 5},
           "tolerances": {"k_slope": 3.0}},
          _validate_tail)
def run_tail(cfg):
    p = cfg.params
    b = _drift(p["drift"], cfg.dim)
    tr = av.tail_curve(b, cfg.replicas, p["a"], p["a2"], p["s"], p["s2"], p["x"], p["x2"], p["etas"],
                       cfg.seed, cfg.n, p["min_count"])
    beyond = tr.etas > tr.cutoff
    nonincreasing = bool(np.all(np.diff(tr.counts) <= 0))
    stats = [gate("beyond_cutoff_count", int(tr.counts[beyond].sum()), "==", 0.0),
             gate("nonincreasing", float(nonincreasing), "==", 1.0),
             gate("cutoff", tr.cutoff)]
    if tr.slope is None:
        stats.append(gate("slope", float("nan"), "<", 0.0))
    else:
        stats.append(gate("slope", tr.slope, "<", 0.0, tr.slope_se, tr.fit_points))
        stats.append(gate("slope_over_se", abs(tr.slope) / tr.slope_se, ">", cfg.tolerances["k_slope"]))
        stats.append(gate("intercept_C_hat", tr.C_hat))
    return stats, {"tail": Table.of(("eta", "count", "p_hat", "se"), tr.rows())}


# --------------------------------------------------------------------- modulus


def _validate_modulus(cfg):
    p = cfg.params
    if not 1 <= p["compare_depth"] <= p["depth"]:
        raise ConfigError("need 1 <= compare_depth <= depth")
    if cfg.m % 4 ** p["depth"]:
        raise ConfigError(f"m={cfg.m} must be a multiple of 4^depth = {4 ** p['depth']}")
    _require_pow2(cfg.n, "n")


@register("modulus", "Per-path modulus constant over sampled dyadic quadruples at two scan depths",
          {"m": 4096, "n": 256, "dim": 1, "replicas": 200,
           "params": {"drift": "floor", "depth": 6, "compare_depth": 4, "per_level": 2000, "quantile": 0.99},
           "tolerances": {"max_rel_change": 0.25}},
          _validate_modulus)
def run_modulus(cfg):
    p = cfg.params
    b = _drift(p["drift"], cfg.dim)
    c_small, c_full = [], []
    for r in range(cfg.replicas):
        sd = replica_seed(cfg.seed, r)
        path = sample_sheet(GridSpec(cfg.m, cfg.n), cfg.dim, sd)
        rep = av.modulus_scan(b, path, p["depth"], p["per_level"], seed=sd)
        c_small.append(max(rep.per_level[k] for k in range(1, p["compare_depth"] + 1)))
        c_full.append(rep.c0)
    q = p["quantile"]
    qa, qb = quantile(c_small, q), quantile(c_full, q)
    change = abs(qb - qa) / qa if qa > 0 else (0.0 if qb == 0 else math.inf)
    stats = [gate(f"quantile_c0[M={p['compare_depth']}]", qa, count=cfg.replicas),
             gate(f"quantile_c0[M={p['depth']}]", qb, count=cfg.replicas),
             gate("relative_change", change, "<", cfg.tolerances["max_rel_change"]),
             gate("max_c0", max(c_full))]
    rows = [(r, a, b_) for r, (a, b_) in enumerate(zip(c_small, c_full))]
    return stats, {"c0": Table.of(("replica", f"c0_M{p['compare_depth']}", f"c0_M{p['depth']}"), rows)}


# ----------------------------------------------------------------- occupation


@register("occupation", "Scaled occupation of shrinking open boxes along sheet lines",
          {"m": 16, "n": 256, "dim": 1, "replicas": 100,
           "params": {"q_max": 6, "x_points": 17, "x_range": 1.0, "quantile": 0.95},
           "tolerances": {}})
def run_occupation(cfg):
    p = cfg.params
    s_vals = np.arange(1, cfg.m + 1) / cfg.m
    xs = np.linspace(-p["x_range"], p["x_range"], p["x_points"])
    qs = list(range(1, p["q_max"] + 1))
    full = av.BoxSet((((-1.0, 2.0), ((-math.inf, math.inf),) * cfg.dim),), cfg.dim)
    vals = np.empty((len(qs), cfg.replicas))
    full_max = 0.0
    for r in range(cfg.replicas):
        path = lines_as_sheet(sample_lines(s_vals, cfg.n, cfg.dim, replica_seed(cfg.seed, r)))
        if r == 0:
            full_max = av.occupation_open_set(full, path, s_vals, np.zeros((1, cfg.dim)))
        for a, q in enumerate(qs):
            h = 0.5 * 2.0 ** -q
            U = av.BoxSet((((0.0, 1.0), ((-h, h),) + ((-0.5, 0.5),) * (cfg.dim - 1)),), cfg.dim)
            vals[a, r] = av.occupation_open_set(U, path, s_vals, np.repeat(xs[:, None], cfg.dim, axis=1))
    quants = [quantile(v, p["quantile"]) for v in vals]
    decreasing = all(b < a for a, b in zip(quants, quants[1:]))
    stats = [gate("full_set_max", full_max, "==", 1.0),
             gate("quantile_decreasing", float(decreasing), "==", 1.0)]
    rows = [(q, 2.0 ** -q, qu) for q, qu in zip(qs, quants)]
    return stats, {"shrinking": Table.of(("q", "measure", "quantile_max"), rows)}


# -------------------------------------------------------------- regularization


def _validate_reg(cfg):
    p = cfg.params
    if not 0 < p["s"] <= 1:
        raise ConfigError("s must lie in (0, 1]")


@register("regularization", "Averages along approaching sequences (s_q, x_q) -> (s, x) per sampled path",
          {"m": 1, "n": 4096, "dim": 1, "replicas": 100,
           "params": {"drift": "floor", "s": 0.5, "x": 0.3, "q_max": 10, "tol": 0.01},
           "tolerances": {"pass_rate": 0.95}},
          _validate_reg)
def run_regularization(cfg):
    p = cfg.params
    b = _drift(p["drift"], cfg.dim)
    lip = av.lipschitz_drift(0, cfg.dim)
    s, x = p["s"], np.full(cfg.dim, p["x"])
    seq = [(s * (1.0 - 4.0 ** -q), x + 2.0 ** -q) for q in range(1, p["q_max"] + 1)]
    s_all = [s] + [sq for sq, _ in seq]
    passes, lip_ok, rows = 0, 0, []
    table = np.zeros(len(seq))
    for r in range(cfg.replicas):
        lines = sample_lines(s_all, cfg.n, cfg.dim, replica_seed(cfg.seed, r))
        probe = av.regularization_probe(b, lines, (s, x), seq)
        passes += av.probe_passes(probe, p["tol"])
        table += np.array([row[-1] for row in probe])
        base = lines.line(s)
        ok = True
        for (q, sq, xq, dist, diff) in av.regularization_probe(lip, lines, (s, x), seq):
            bound = float(np.max(np.abs(np.asarray(xq) - x))) + float(np.max(np.abs(lines.line(sq) - base)))
            ok &= diff <= bound + 1e-12
        lip_ok += ok
    rate = passes / cfg.replicas
    stats = [gate("pass_rate", rate, ">=", cfg.tolerances["pass_rate"], count=cfg.replicas),
             gate("lipschitz_bound_rate", lip_ok / cfg.replicas, "==", 1.0, count=cfg.replicas)]
    rows = [(q + 1, sq, float(np.max(xq)), float(np.max(np.abs(xq - x))) + math.sqrt(s - sq), d / cfg.replicas)
            for q, ((sq, xq), d) in enumerate(zip(seq, table))]
    return stats, {"approach": Table.of(("q", "s_q", "x_q", "distance", "mean_difference"), rows)}


# -------------------------------------------------------------- counterexample


@register("counterexample", "Deterministic continuous w along which the floor averages jump from 0 to 1",
          {"m": 1, "n": 1, "replicas": 1,
           "params": {"q_max": 1000000, "n_quad": 64},
           "tolerances": {"limit_max": 1e-6}})
def run_counterexample(cfg):
    p = cfg.params
    rep = av.counterexample_demo(p["q_max"], p["n_quad"])
    stats = [gate("limit_estimate", rep.limit_estimate, "<=", cfg.tolerances["limit_max"]),
             gate("value_at_1", rep.value_at_1, "==", 1.0),
             gate("naive_float_limit", rep.naive_limit)]
    return stats, {"ladder": Table.of(("q", "s_q", "integral"), rep.table)}
