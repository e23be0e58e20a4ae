"""Averaging operator along sheet lines and the regularity experiments built on it.

``T_I[b](s, x) = sum_{t_j in I} b(t_j, x + W_{s,t_j}) dt`` (left end points) and
``rho_nk(s,x; s',x') = T_{I_nk}[b](s',x') - T_{I_nk}[b](s,x)`` with
``I_nk = [k 2^-n, (k+1) 2^-n]``.  Distances on R^d use the maximum norm and
``log+(z) = max(ln z, 0)``.

Path arguments only need ``line(s)`` (values of shape (n+1, d)) and ``n``,
so a :class:`~sheetlab.sheet.SheetPath`, a windowed sheet or a
:class:`~sheetlab.sheet.LineSet` can be used interchangeably.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .sheet import GridError, GridSpec, make_rng, replica_seed, sample_lines

__all__ = [
    "DriftBoundError",
    "DriftFunction",
    "constant_drift",
    "floor_drift",
    "sign_drift",
    "lipschitz_drift",
    "indicator_drift",
    "random_step_drift",
    "DRIFTS",
    "make_drift",
    "log_plus",
    "averaging_transform",
    "rho",
    "rho_all_levels",
    "max_feasible_level",
    "MomentReport",
    "exp_moment_estimate",
    "TailReport",
    "tail_curve",
    "fit_log_tail",
    "dyadic_quadruples",
    "DavieReport",
    "ModulusReport",
    "modulus_scan",
    "interval_modulus_check",
    "integrated_modulus_check",
    "BoxSet",
    "occupation_open_set",
    "regularization_probe",
    "probe_passes",
    "CounterexampleReport",
    "counterexample_demo",
]


class DriftBoundError(ValueError):
    """A drift violates the bound |b| <= 1."""


def log_plus(z):
    """``max(ln z, 0)`` (natural logarithm); ``log_plus(inf) = inf``."""
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(z), 0.0)


@dataclass(frozen=True, eq=False)
class DriftFunction:
    """Measurable drift ``b(t, x)`` on [0,1] x R^d with ``|b| <= 1``.

    ``func(t, x)`` receives ``x`` with a trailing axis of length ``dim`` and
    returns an array over the leading axes (or with one more trailing axis
    for vector-valued drifts).  The bound is checked on seeded random
    points at construction unless ``validate=False``.
    """

    func: Callable
    name: str
    dim: int = 1
    validate: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.validate:
            rng = make_rng(0x5EED)
            t = rng.uniform(0.0, 1.0, 4096)
            x = rng.normal(0.0, 3.0, (4096, self.dim))
            v = np.asarray(self.func(t, x), dtype=float)
            if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > 1.0:
                raise DriftBoundError(f"drift {self.name!r} violates |b| <= 1 (max |b| = {np.max(np.abs(v))!r})")

    def __call__(self, t, x):
        return np.asarray(self.func(t, x), dtype=float)

    def shifted(self, c: float) -> "DriftFunction":
        """``b + c``; only used to check that the statistics ignore constants."""
        return DriftFunction(lambda t, x: self.func(t, x) + c, f"{self.name}+{c!r}", self.dim, False,
                             dict(self.params, shift=c))

    def scaled(self, a: float) -> "DriftFunction":
        """``a * b``; rejected when it breaks the bound."""
        return DriftFunction(lambda t, x: a * self.func(t, x), f"{a!r}*{self.name}", self.dim, True,
                             dict(self.params, scale=a))


def constant_drift(c: float = 0.0, dim: int = 1) -> DriftFunction:
    return DriftFunction(lambda t, x: np.full(np.shape(x)[:-1], float(c)), f"constant({c!r})", dim,
                         params={"c": c})


def floor_drift(component: int = 0, dim: int = 1) -> DriftFunction:
    """``clip(floor(x_i), -1, 1)``: the integer part, clipped to keep |b| <= 1."""
    return DriftFunction(lambda t, x: np.clip(np.floor(np.asarray(x)[..., component]), -1.0, 1.0),
                         f"floor(x{component})", dim, params={"component": component})


def sign_drift(component: int = 0, dim: int = 1) -> DriftFunction:
    return DriftFunction(lambda t, x: np.sign(np.asarray(x)[..., component]), f"sign(x{component})", dim,
                         params={"component": component})


def lipschitz_drift(component: int = 0, dim: int = 1) -> DriftFunction:
    """``clip(x_i, -1, 1)``, Lipschitz with constant 1."""
    return DriftFunction(lambda t, x: np.clip(np.asarray(x)[..., component], -1.0, 1.0),
                         f"clip(x{component})", dim, params={"component": component})


@dataclass(frozen=True)
class BoxSet:
    """Finite union of open boxes ``(t0, t1) x prod_k (x0_k, x1_k)`` in [0,1] x R^d."""

    boxes: tuple  # each: ((t0, t1), ((x0, x1), ...))
    dim: int = 1

    def contains(self, t, x) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.broadcast_shapes(t.shape, x.shape[:-1]), dtype=bool)
        for (t0, t1), xr in self.boxes:
            hit = (t > t0) & (t < t1)
            for k, (a, b) in enumerate(xr):
                hit = hit & (x[..., k] > a) & (x[..., k] < b)
            out |= hit
        return out

    def measure(self) -> float:
        """Lebesgue measure of the union (coordinate compression)."""
        if not self.boxes:
            return 0.0
        axes = [sorted({v for (tr, _) in self.boxes for v in tr})]
        for k in range(self.dim):
            axes.append(sorted({v for (_, xr) in self.boxes for v in xr[k]}))
        if any(math.isinf(v) for ax in axes for v in ax):
            return float("inf")
        mids = [0.5 * (np.array(a[1:]) + np.array(a[:-1])) for a in axes]
        widths = [np.diff(a) for a in axes]
        grids = np.meshgrid(*mids, indexing="ij")
        vol = np.ones_like(grids[0])
        for k, w in enumerate(widths):
            shape = [1] * len(widths)
            shape[k] = -1
            vol = vol * w.reshape(shape)
        inside = self.contains(grids[0], np.stack(grids[1:], axis=-1))
        return float(np.sum(vol[inside]))


def indicator_drift(U: BoxSet) -> DriftFunction:
    return DriftFunction(lambda t, x: U.contains(t, x).astype(float), f"1_U({len(U.boxes)} boxes)", U.dim,
                         params={"boxes": U.boxes})


def random_step_drift(seed: int = 0, n_t: int = 4, n_x: int = 8, x_range: float = 2.0,
                      dim: int = 1) -> DriftFunction:
    """Random step function of (t, x_0) with values uniform in [-1, 1]."""
    rng = make_rng(seed)
    vals = rng.uniform(-1.0, 1.0, (n_t, n_x + 2))
    tk = np.linspace(0.0, 1.0, n_t + 1)[1:-1]
    xk = np.linspace(-x_range, x_range, n_x + 1)

    def f(t, x):
        jt = np.searchsorted(tk, np.asarray(t), side="right")
        jx = np.searchsorted(xk, np.asarray(x)[..., 0], side="right")
        jt, jx = np.broadcast_arrays(jt, jx)
        return vals[jt, jx]

    return DriftFunction(f, f"random_step({seed})", dim, params={"seed": seed, "n_t": n_t, "n_x": n_x})


DRIFTS = {
    "constant": constant_drift,
    "floor": floor_drift,
    "sign": sign_drift,
    "lipschitz": lipschitz_drift,
    "random-step": random_step_drift,
}


def make_drift(name: str, dim: int = 1, **kw) -> DriftFunction:
    try:
        fn = DRIFTS[name]
    except KeyError:
        raise ValueError(f"unknown drift {name!r}; choose from {sorted(DRIFTS)}") from None
    if name == "random-step":
        return fn(dim=dim, **kw)
    return fn(dim=dim, **kw) if name != "constant" else fn(kw.get("c", 0.0), dim)


# --------------------------------------------------------------- core operators


def _interval_nodes(n: int, I: tuple) -> tuple[int, int]:
    a, c = float(I[0]), float(I[1])
    ja, jc = a * n, c * n
    ia, ic = int(round(ja)), int(round(jc))
    if abs(ja - ia) > 1e-9 * n or abs(jc - ic) > 1e-9 * n or not (0 <= ia <= ic <= n):
        raise GridError(f"interval [{a}, {c}] is not aligned with the t-grid of {n} steps")
    return ia, ic


def _as_vec(x, d: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size == 1 and d > 1:
        x = np.full(d, float(x[0]))
    if x.shape != (d,):
        raise ValueError(f"point must have {d} coordinates, got shape {x.shape}")
    return x


def _b_line(b: DriftFunction, path, s: float, x) -> np.ndarray:
    """``b(t_j, x + W_{s,t_j})`` for every t-node; shape (n+1,) or (n+1, k)."""
    line = np.asarray(path.line(s), dtype=float)
    if line.ndim == 1:
        line = line[:, None]
    line = line[:, : b.dim]
    t = np.arange(path.n + 1) / path.n
    return b(t, _as_vec(x, b.dim)[None, :] + line)


def averaging_transform(b: DriftFunction, path, I: tuple, s: float, x) -> float | np.ndarray:
    """``T_I[b](s, x)`` by left-endpoint quadrature on the t-grid."""
    if not s > 0:
        raise GridError("s must be > 0")
    ia, ic = _interval_nodes(path.n, I)
    vals = _b_line(b, path, s, x)[ia:ic]
    out = np.sum(vals, axis=0) * (1.0 / path.n)
    return float(out) if np.ndim(out) == 0 else out


def max_feasible_level(n_steps: int) -> int:
    """Largest dyadic level n with ``2^n`` dividing the number of t-steps."""
    return (n_steps & -n_steps).bit_length() - 1


def _check_level(path, n: int):
    nmax = max_feasible_level(path.n)
    if n < 0 or n > nmax:
        raise GridError(f"dyadic level n={n} exceeds the grid resolution; max feasible n is {nmax}")


def rho(b: DriftFunction, path, n: int, k: int, p1: tuple, p2: tuple):
    """``rho_nk(s,x; s',x') = T_{I_nk}[b](s',x') - T_{I_nk}[b](s,x)``."""
    _check_level(path, n)
    if not 0 <= k < 2**n:
        raise ValueError(f"k must lie in [0, 2^n), got {k}")
    I = (k / 2**n, (k + 1) / 2**n)
    (s, x), (s2, x2) = p1, p2
    return averaging_transform(b, path, I, s2, x2) - averaging_transform(b, path, I, s, x)


def rho_all_levels(diff: np.ndarray, n_steps: int, levels: Sequence[int]) -> dict:
    """Dyadic block sums of ``diff * dt`` along the last axis, per level.

    ``diff`` has shape (..., n_steps) and holds ``b(t_j, x'+W_{s'}) - b(t_j, x+W_s)``
    at the left end points.  Returns ``{n: array (..., 2^n)}``.
    """
    out = {}
    for n in levels:
        blocks = diff.reshape(diff.shape[:-1] + (2**n, n_steps // 2**n))
        out[n] = blocks.sum(axis=-1) * (1.0 / n_steps)
    return out


# -------------------------------------------------------------- Davie moments


@dataclass(frozen=True)
class MomentReport:
    alphas: np.ndarray
    moments: np.ndarray
    moments_half: np.ndarray
    stable: np.ndarray
    largest_stable_alpha: float | None
    replicas: int
    scale: float
    params: dict = field(default_factory=dict)

    def rows(self):
        for a, m, st in zip(self.alphas, self.moments, self.stable):
            yield (float(a), float(m), bool(st))


def _window_pair_stats(b, s, s2, x, x2, a, eps, n_t, dim, seeds, component_norm=True):
    """``int_0^1 {b(t, x' + W^eps_{s',t}) - b(t, x + W^eps_{s,t})} dt`` per seed (max norm)."""
    j0 = a * n_t
    k = eps * n_t
    j0i, ki = int(round(j0)), int(round(k))
    if abs(j0 - j0i) > 1e-9 or abs(k - ki) > 1e-9 or ki < 1 or j0i + ki > n_t:
        raise GridError(f"window a={a}, eps={eps} is not aligned with n_t={n_t}")
    tw = np.arange(ki) / ki
    out = np.empty(len(seeds))
    for r, sd in enumerate(seeds):
        ls = sample_lines([s, s2], n_t, dim, sd).values
        w1 = ls[0, j0i:j0i + ki, :]
        w2 = ls[1, j0i:j0i + ki, :]
        diff = b(tw, x2[None, :] + w2) - b(tw, x[None, :] + w1)
        val = np.sum(diff, axis=0) / ki
        out[r] = np.max(np.abs(val))
    return out


def exp_moment_estimate(b: DriftFunction, replicas: int, a: float, eps: float, s: float, s2: float,
                        y, alphas: Sequence[float], seed: int = 0, n_t: int = 256,
                        x=None, tol: float = 0.10) -> MomentReport:
    """Empirical ``E exp(alpha sqrt(eps s)/(|y| + sqrt(s'-s)) |int_0^1 ...dt|)`` on an alpha ladder.

    Replica r uses ``sample_lines([s, s'], n_t, d, replica_seed(seed, r))``.
    A ladder value is *stable* when the estimate is finite and the estimate
    from the first half of the replicas differs from the full one by less
    than ``tol`` (relative).
    """
    if not (0 < s <= s2 <= 1):
        raise ValueError("need 0 < s <= s' <= 1")
    d = b.dim
    yv = _as_vec(y, d)
    if s2 == s and not np.any(yv):
        raise ValueError("(s' - s, y) must not vanish")
    xv = np.zeros(d) if x is None else _as_vec(x, d)
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    seeds = [replica_seed(seed, r) for r in range(replicas)]
    Z = _window_pair_stats(b, s, s2, xv, xv + yv, a, eps, n_t, d, seeds)
    scale = math.sqrt(eps * s) / (np.max(np.abs(yv)) + math.sqrt(s2 - s))
    al = np.asarray(alphas, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        E = np.exp(al[:, None] * scale * Z[None, :])
        mom = E.mean(axis=1)
        half = E[:, : replicas // 2].mean(axis=1)
        stable = np.isfinite(mom) & np.isfinite(half) & (np.abs(half - mom) <= tol * np.abs(mom))
    ok = al[stable]
    largest = float(ok.max()) if ok.size else None
    return MomentReport(al, mom, half, stable, largest, replicas, scale,
                        {"a": a, "eps": eps, "s": s, "s2": s2, "y": yv.tolist(), "x": xv.tolist(),
                         "n_t": n_t, "seed": seed, "drift": b.name})


# ------------------------------------------------------------------ tail curve


@dataclass(frozen=True)
class TailReport:
    etas: np.ndarray
    counts: np.ndarray
    p_hat: np.ndarray
    se: np.ndarray
    replicas: int
    cutoff: float
    slope: float | None
    slope_se: float | None
    intercept: float | None
    fit_points: int
    params: dict = field(default_factory=dict)

    @property
    def alpha_hat(self):
        return None if self.slope is None else -self.slope

    @property
    def C_hat(self):
        return None if self.intercept is None else math.exp(self.intercept)

    def rows(self):
        for e, c, p, s in zip(self.etas, self.counts, self.p_hat, self.se):
            yield (float(e), int(c), float(p), float(s))


def fit_log_tail(etas, counts, replicas: int, min_count: int = 5):
    """Weighted least squares of ``log p_hat`` on ``eta``.

    Uses grid points with ``min_count <= count < replicas``; weights are the
    inverse delta-method variances ``count / (1 - p_hat)``.  The slope
    standard error is inflated by ``sqrt(chi2/dof)`` when that exceeds 1.

    Returns ``(slope, slope_se, intercept, n_points)``; the first three are
    None when fewer than three points qualify.
    """
    etas = np.asarray(etas, dtype=float)
    counts = np.asarray(counts, dtype=float)
    sel = (counts >= min_count) & (counts < replicas)
    if np.count_nonzero(sel) < 3:
        return None, None, None, int(np.count_nonzero(sel))
    e, c = etas[sel], counts[sel]
    p = c / replicas
    y = np.log(p)
    w = c / (1.0 - p)
    X = np.stack([np.ones_like(e), e], axis=1)
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ y)
    resid = y - X @ beta
    dof = e.size - 2
    chi2 = float(np.sum(w * resid**2))
    inflate = max(1.0, chi2 / dof) if dof > 0 else 1.0
    slope_se = math.sqrt(cov[1, 1] * inflate)
    return float(beta[1]), slope_se, float(beta[0]), int(e.size)


def tail_curve(b: DriftFunction, replicas: int, a: float, a2: float, s: float, s2: float, x, x2,
               etas: Sequence[float], seed: int = 0, n_t: int = 256, min_count: int = 5,
               chunk: int = 4096) -> TailReport:
    """Empirical ``P(sqrt(s) |rho| >= eta sqrt(eps) (|x'-x| + sqrt(s'-s)))`` with eps = a' - a.

    ``rho = T_[a,a'][b](s', x') - T_[a,a'][b](s, x)``.  Since ``|rho| <= 2 eps``
    the curve vanishes for ``eta > sqrt(s) 2 eps / (sqrt(eps) D)``.
    """
    if not (0 < s <= s2 <= 1):
        raise ValueError("need 0 < s <= s' <= 1")
    eps = a2 - a
    if not eps > 0:
        raise ValueError("need a < a'")
    d = b.dim
    xv, x2v = _as_vec(x, d), _as_vec(x2, d)
    D = float(np.max(np.abs(x2v - xv))) + math.sqrt(s2 - s)
    if D == 0:
        raise ValueError("(s, x) and (s', x') must differ")
    ia, ic = _interval_nodes(n_t, (a, a2))
    t = np.arange(n_t + 1) / n_t
    stat = np.empty(replicas)
    for start in range(0, replicas, chunk):
        stop = min(start + chunk, replicas)
        L = np.stack([sample_lines([s, s2], n_t, d, replica_seed(seed, r)).values for r in range(start, stop)])
        w1 = L[:, 0, ia:ic, :]
        w2 = L[:, 1, ia:ic, :]
        tt = t[ia:ic][None, :]
        diff = b(tt, x2v + w2) - b(tt, xv + w1)
        r = np.sum(diff, axis=1) / n_t
        r = np.max(np.abs(r.reshape(r.shape[0], -1)), axis=1)
        stat[start:stop] = math.sqrt(s) * r
    etas = np.asarray(etas, dtype=float)
    thr = etas * math.sqrt(eps) * D
    counts = np.array([int(np.count_nonzero(stat >= th)) for th in thr])
    p = counts / replicas
    se = np.sqrt(p * (1.0 - p) / replicas)
    slope, slope_se, icpt, npts = fit_log_tail(etas, counts, replicas, min_count)
    cutoff = math.sqrt(s) * 2.0 * eps / (math.sqrt(eps) * D)
    return TailReport(etas, counts, p, se, replicas, cutoff, slope, slope_se, icpt, npts,
                      {"a": a, "a2": a2, "s": s, "s2": s2, "x": xv.tolist(), "x2": x2v.tolist(),
                       "n_t": n_t, "seed": seed, "drift": b.name})


# ------------------------------------------------------------- modulus scans


def dyadic_quadruples(m: int, count: int, seed: int, dim: int = 1, local_fraction: float = 0.5):
    """Seeded sample of dyadic quadruples of level m.

    ``s, s'`` lie in ``4^-m N`` within (0, 1] with ``s <= s'`` and ``x, x'``
    in ``2^-m Z^d`` within [-1, 1]^d, with ``(s, x) != (s', x')``.  A
    fraction ``local_fraction`` are near neighbours (``s' - s <= 3 * 4^-m``,
    ``|x' - x| <= 2 * 2^-m``); the rest are uniform.

    Returns arrays ``s, s2`` of shape (count,) and ``x, x2`` of shape (count, d).
    """
    rng = make_rng(replica_seed(seed, m))
    S = 4**m
    X = 2**m
    n_local = int(round(local_fraction * count))
    parts = []
    for want, local in ((n_local, True), (count - n_local, False)):
        got = []
        have = 0
        while have < want:
            k = 2 * (want - have) + 16
            i = rng.integers(1, S + 1, k)
            xi = rng.integers(-X, X + 1, (k, dim))
            if local:
                i2 = np.minimum(S, i + rng.integers(0, 4, k))
                xi2 = np.clip(xi + rng.integers(-2, 3, (k, dim)), -X, X)
            else:
                i2 = rng.integers(1, S + 1, k)
                xi2 = rng.integers(-X, X + 1, (k, dim))
                swap = i2 < i
                i, i2 = np.where(swap, i2, i), np.where(swap, i, i2)
                xi, xi2 = np.where(swap[:, None], xi2, xi), np.where(swap[:, None], xi, xi2)
            keep = ~((i == i2) & np.all(xi == xi2, axis=1))
            sel = np.flatnonzero(keep)[: want - have]
            got.append((i[sel], i2[sel], xi[sel], xi2[sel]))
            have += sel.size
        parts.extend(got)
    i = np.concatenate([p[0] for p in parts])
    i2 = np.concatenate([p[1] for p in parts])
    xi = np.concatenate([p[2] for p in parts]).reshape(-1, dim)
    xi2 = np.concatenate([p[3] for p in parts]).reshape(-1, dim)
    return i / S, i2 / S, xi / X, xi2 / X


@dataclass(frozen=True)
class DavieReport:
    """Bundle of the regularity statistics for one parameter tuple."""

    params: dict
    replicas: int
    moments: MomentReport | None = None
    tail: TailReport | None = None
    c0: np.ndarray | None = None

    def summary(self) -> dict:
        out = {"params": self.params, "replicas": self.replicas}
        if self.moments is not None:
            out["largest_stable_alpha"] = self.moments.largest_stable_alpha
        if self.tail is not None:
            out["alpha_hat"] = self.tail.alpha_hat
            out["C_hat"] = self.tail.C_hat
        if self.c0 is not None:
            out["c0_max"] = float(np.max(self.c0))
        return out


@dataclass(frozen=True)
class ModulusReport:
    c0: float
    per_level: dict
    argmax: dict
    depth: int


def _rows_at(path, s_values) -> np.ndarray:
    """Lines of ``path`` at the given s values, shape (k, n+1, d)."""
    vals = getattr(path, "values", None)
    grid = getattr(path, "grid", None)
    if vals is not None and grid is not None and hasattr(grid, "s_index"):
        idx = np.array([grid.s_index(v) for v in np.unique(s_values)])
        lut = dict(zip(np.unique(s_values).tolist(), idx.tolist()))
        return vals[[lut[v] for v in np.asarray(s_values).tolist()]]
    return np.stack([np.asarray(path.line(v)) for v in s_values])


def _modulus_ratio(b, path, s, s2, x, x2, levels, chunk: int = 8192):
    """``max_{n,k} sqrt(s)|rho_nk| 2^{n/2} / ([n + log+(1/D)] D)`` per quadruple."""
    if s.size > chunk:
        parts = [_modulus_ratio(b, path, s[i:i + chunk], s2[i:i + chunk], x[i:i + chunk], x2[i:i + chunk],
                                levels, chunk) for i in range(0, s.size, chunk)]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    n_t = path.n
    t = np.arange(n_t) / n_t
    best = np.zeros(s.size)
    best_nk = np.zeros((s.size, 2), dtype=int)
    rows1 = _rows_at(path, s)[:, :n_t, : b.dim]
    rows2 = _rows_at(path, s2)[:, :n_t, : b.dim]
    diff = b(t[None, :], x2[:, None, :] + rows2) - b(t[None, :], x[:, None, :] + rows1)
    if diff.ndim == 3:
        raise ValueError("modulus scans expect a scalar drift")
    D = np.max(np.abs(x2 - x), axis=1) + np.sqrt(s2 - s)
    rhos = rho_all_levels(diff, n_t, levels)
    for n in levels:
        r = np.abs(rhos[n])
        k = np.argmax(r, axis=1)
        val = np.sqrt(s) * r[np.arange(s.size), k] * 2.0 ** (n / 2) / ((n + log_plus(1.0 / D)) * D)
        upd = val > best
        best = np.where(upd, val, best)
        best_nk[upd] = np.stack([np.full(np.count_nonzero(upd), n), k[upd]], axis=1)
    return best, best_nk


def modulus_scan(b: DriftFunction, path, depth: int = 6, per_level: int = 10**5, seed: int = 0,
                 levels: Sequence[int] | None = None) -> ModulusReport:
    """Per-path modulus statistic ``C0_hat`` over sampled dyadic quadruples of levels 1..depth.

    The sample of level m does not depend on ``depth``, so the quadruples
    used at depth M are a subset of those used at any larger depth.
    Requires the path to carry the lines ``s in 4^-depth N``.
    """
    if levels is None:
        levels = range(1, max_feasible_level(path.n) + 1)
    levels = list(levels)
    for n in levels:
        _check_level(path, n)
    per = {}
    arg = {}
    c0 = 0.0
    for m in range(1, depth + 1):
        s, s2, x, x2 = dyadic_quadruples(m, per_level, seed, b.dim)
        vals, nk = _modulus_ratio(b, path, s, s2, x, x2, levels)
        q = int(np.argmax(vals))
        per[m] = float(vals[q])
        if vals[q] > c0 or not arg:
            c0 = max(c0, float(vals[q]))
            arg = {"level": m, "s": float(s[q]), "s2": float(s2[q]), "x": x[q].tolist(),
                   "x2": x2[q].tolist(), "n": int(nk[q, 0]), "k": int(nk[q, 1])}
    return ModulusReport(c0, per, arg, depth)


def interval_modulus_check(b: DriftFunction, path, I: tuple, pairs) -> float:
    """``max |T_I(s',x') - T_I(s,x)| sqrt(s) / (sqrt|I| [1 + log+(1/(D|I|))] D)`` over pairs.

    ``pairs`` is an iterable of ``((s, x), (s', x'))``.
    """
    length = float(I[1]) - float(I[0])
    best = 0.0
    for (s, x), (s2, x2) in pairs:
        xv, x2v = _as_vec(x, b.dim), _as_vec(x2, b.dim)
        D = float(np.max(np.abs(x2v - xv))) + math.sqrt(abs(s2 - s))
        if D == 0:
            continue
        diff = np.max(np.abs(np.atleast_1d(averaging_transform(b, path, I, s2, x2v)
                                           - averaging_transform(b, path, I, s, xv))))
        den = math.sqrt(length) * (1.0 + float(log_plus(1.0 / (D * length)))) * D
        best = max(best, diff * math.sqrt(min(s, s2)) / den)
    return best


def integrated_modulus_check(b: DriftFunction, path, n: int, x_pairs) -> float:
    """Integrated-in-s variant over all cells I_nl x I_nk.

    ``max |int_{I_nl} T_{I_nk}(s, x') ds - int_{I_nl} T_{I_nk}(s, x) ds| /
    (2^-n [n + log+(1/|x'-x|)] |x'-x|)`` with left-Riemann quadrature in s
    over the sheet rows inside I_nl.
    """
    g = path.grid
    _check_level(path, n)
    if g.m % 2**n:
        raise GridError(f"the s-grid ({g.m} steps) does not resolve level {n}")
    best = 0.0
    t = np.arange(g.n) / g.n
    W = path.values[:, : g.n, : b.dim]
    for x, x2 in x_pairs:
        xv, x2v = _as_vec(x, b.dim), _as_vec(x2, b.dim)
        dx = float(np.max(np.abs(x2v - xv)))
        if dx == 0:
            continue
        diff = b(t[None, :], x2v + W[:g.m]) - b(t[None, :], xv + W[:g.m])   # (m, n)
        blocks = diff.reshape(2**n, g.m // 2**n, 2**n, g.n // 2**n).sum(axis=(1, 3)) * (g.ds * g.dt)
        den = 2.0**-n * (n + float(log_plus(1.0 / dx))) * dx
        best = max(best, float(np.max(np.abs(blocks))) / den)
    return best


def occupation_open_set(U: BoxSet, path, s_values: Sequence[float], x_values) -> float:
    """``max over the scan grid of sqrt(s) sum_j 1_U(t_j, x + W_{s,t_j}) dt``."""
    if not U.boxes:
        return 0.0
    n_t = path.n
    t = np.arange(n_t) / n_t
    xs = np.asarray(x_values, dtype=float).reshape(-1, U.dim)
    best = 0.0
    for s in s_values:
        line = np.asarray(path.line(s), dtype=float)[:n_t, : U.dim]
        occ = U.contains(t[None, :], xs[:, None, :] + line[None, :, :]).sum(axis=1) / n_t
        best = max(best, math.sqrt(s) * float(occ.max()))
    return best


def regularization_probe(b: DriftFunction, path, target: tuple, sequence) -> list[tuple]:
    """Rows ``(q, s_q, x_q, distance, |int b(t, x_q + W_{s_q}) - int b(t, x + W_s)|)``.

    ``distance = |x_q - x| + sqrt(|s_q - s|)``, the natural metric of the
    sheet (line increments scale like the square root of the s-gap).
    """
    s, x = target
    base = averaging_transform(b, path, (0.0, 1.0), s, x)
    rows = []
    for q, (sq, xq) in enumerate(sequence):
        v = averaging_transform(b, path, (0.0, 1.0), sq, xq)
        dist = float(np.max(np.abs(_as_vec(xq, b.dim) - _as_vec(x, b.dim)))) + math.sqrt(abs(sq - s))
        rows.append((q, float(sq), _as_vec(xq, b.dim).tolist(), dist,
                     float(np.max(np.abs(np.atleast_1d(v - base))))))
    return rows


def probe_passes(rows, tol: float) -> bool:
    """Trend-to-zero diagnostic: last difference <= tol and <= the first one."""
    if not rows:
        return True
    diffs = [r[-1] for r in rows]
    return diffs[-1] <= tol and diffs[-1] <= diffs[0]


# -------------------------------------------------------------- counterexample


@dataclass(frozen=True)
class CounterexampleReport:
    limit_estimate: float
    value_at_1: float
    naive_limit: float
    table: list
    q_max: int
    n_quad: int


def _floor_w(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``floor(w(s, t))`` with ``w = 1 - exp(-1/(t(1-s)))`` on [0,1) x (0,1], 1 elsewhere.

    On the first region ``log(1 - w) = -1/(t(1-s))`` is finite, so
    ``0 <= w < 1`` and the floor is 0; it is decided from the exponent
    instead of from the rounded value, which underflows to w == 1.0 once
    ``t(1-s)`` drops below about 1/745.
    """
    s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
    inside = (s >= 0) & (s < 1) & (t > 0) & (t <= 1)
    expo = np.full(s.shape, -np.inf)
    np.divide(-1.0, t * (1.0 - s), out=expo, where=inside)
    return np.where(inside & np.isfinite(expo), 0.0, 1.0)


def counterexample_demo(q_max: int = 10**6, n_quad: int = 64, ladder: Sequence[int] | None = None
                        ) -> CounterexampleReport:
    """Deterministic counterexample: a continuous w along which the averages jump.

    Computes ``int_0^1 floor(w(s_q, t)) dt`` for ``s_q = 1 - 1/q`` (midpoint
    rule with ``n_quad`` nodes) on a geometric ladder of q up to ``q_max``,
    and ``int_0^1 floor(w(1, t)) dt``.  ``naive_limit`` evaluates the same
    integral at ``q_max`` with the rounded formula ``floor(1 - exp(...))``
    to show the underflow artefact.
    """
    t = (np.arange(n_quad) + 0.5) / n_quad
    if ladder is None:
        ladder = sorted({int(round(v)) for v in np.geomspace(2, q_max, 25)} | {2, q_max})
    table = []
    for q in ladder:
        sq = 1.0 - 1.0 / q
        table.append((int(q), sq, float(np.mean(_floor_w(sq, t)))))
    value_at_1 = float(np.mean(_floor_w(1.0, t)))
    s_last = 1.0 - 1.0 / q_max
    with np.errstate(over="ignore", under="ignore"):
        naive = float(np.mean(np.floor(1.0 - np.exp(-1.0 / (t * (1.0 - s_last))))))
    return CounterexampleReport(table[-1][2], value_at_1, naive, table, q_max, n_quad)
