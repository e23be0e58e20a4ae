"""Occupation-density estimates of sheet local times and Tanaka-type checks.

All estimators use a hard window: a node contributes ``1/(2 eps)`` times its
time (or area) weight when the path lies within ``eps`` of the level.  Counts
are accumulated as integers and scaled once, so saturated windows reproduce
``t / (2 eps)`` exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import csv_text, write_text
from .sheet import GridError, GridSpec

__all__ = [
    "XGrid",
    "LocalTimeField",
    "default_bandwidth",
    "line_local_time",
    "line2_local_time",
    "plane_local_time",
    "occupation_total",
    "tanaka_terms",
    "tanaka_residual",
    "reversed_lt_check",
    "slab_discrepancy",
]


def default_bandwidth(n: int, c: float = 1.0) -> float:
    """Bandwidth schedule ``eps = c * n**(-1/4)``."""
    return float(c) * float(n) ** -0.25


@dataclass(frozen=True)
class XGrid:
    """Level grid: ``p`` bins on [x_min, x_max] with window half-width ``eps``."""

    x_min: float
    x_max: float
    p: int
    eps: float

    def __post_init__(self):
        if not (self.x_min < self.x_max):
            raise ValueError(f"need x_min < x_max, got {self.x_min}, {self.x_max}")
        if int(self.p) < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not (self.eps > 0):
            raise ValueError(f"bandwidth must be positive, got {self.eps}")
        object.__setattr__(self, "p", int(self.p))

    @classmethod
    def single(cls, x: float, eps: float) -> "XGrid":
        """One bin centred exactly at ``x``."""
        h = max(abs(x), 1.0)
        return cls(x - h, x + h, 1, eps)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.p

    @property
    def centers(self) -> np.ndarray:
        if self.p == 1:
            return np.array([0.5 * (self.x_min + self.x_max)])
        return self.x_min + (np.arange(self.p) + 0.5) * self.dx

    def nearest_bin(self, x: float) -> int:
        q = int(np.floor((x - self.x_min) / self.dx))
        return min(max(q, 0), self.p - 1)

    def bin_of_center(self, x: float, tol: float = 1e-9) -> int:
        """Index of the bin whose centre equals ``x``; raises if none does."""
        c = self.centers
        q = int(np.argmin(np.abs(c - x)))
        if abs(c[q] - x) > tol * max(1.0, abs(x)):
            raise GridError(f"x={x!r} is not a bin centre of the level grid")
        return q


@dataclass(frozen=True, eq=False)
class LocalTimeField:
    """Estimated local times over a level grid.

    Attributes
    ----------
    kind : {'line1', 'line2', 'plane'}
        'line1': t -> L(s, t; x) along the line at fixed s, shape (p, n+1).
        'line2': s -> L(s, t; x) along the line at fixed t, shape (p, m+1).
        'plane': (s, t) -> L(s, t; x), shape (p, len(s_index), len(t_index)).
    xgrid : XGrid
    samples : ndarray
    grid : GridSpec
    fixed : float or None
        The fixed coordinate of a line field.
    s_index, t_index : ndarray of int
        Grid nodes carried by the time axes.
    seed : int
        Seed of the generating path.
    component : int
    """

    kind: str
    xgrid: XGrid
    samples: np.ndarray = field(repr=False)
    grid: GridSpec
    fixed: float | None
    s_index: np.ndarray = field(repr=False)
    t_index: np.ndarray = field(repr=False)
    seed: int = 0
    component: int = 0

    def value(self, x: float, *time_idx: int) -> float:
        """Nearest-bin lookup at grid node indices (no interpolation)."""
        q = self.xgrid.nearest_bin(x)
        if self.kind == "plane":
            i, j = time_idx
            a = int(np.searchsorted(self.s_index, i))
            b = int(np.searchsorted(self.t_index, j))
            if a >= self.s_index.size or self.s_index[a] != i or b >= self.t_index.size or self.t_index[b] != j:
                raise GridError(f"node ({i}, {j}) is not carried by this field")
            return float(self.samples[q, a, b])
        (j,) = time_idx
        return float(self.samples[q, j])

    def metadata(self) -> dict:
        return {
            "kind": self.kind,
            "x_min": self.xgrid.x_min,
            "x_max": self.xgrid.x_max,
            "p": self.xgrid.p,
            "bandwidth": self.xgrid.eps,
            "m": self.grid.m,
            "n": self.grid.n,
            "fixed": self.fixed,
            "component": self.component,
            "seed": self.seed,
        }

    def rows(self):
        xs = self.xgrid.centers
        g = self.grid
        if self.kind == "plane":
            for q, x in enumerate(xs):
                for a, i in enumerate(self.s_index):
                    for b, j in enumerate(self.t_index):
                        yield (x, j / g.n, i / g.m, self.samples[q, a, b])
        elif self.kind == "line1":
            for q, x in enumerate(xs):
                for j in range(g.n + 1):
                    yield (x, j / g.n, self.samples[q, j])
        else:
            for q, x in enumerate(xs):
                for i in range(g.m + 1):
                    yield (x, self.fixed, i / g.m, self.samples[q, i])

    def export(self, stem) -> tuple[Path, Path]:
        """Write ``<stem>.csv`` (x, t[, s], value) and ``<stem>.json`` metadata."""
        stem = Path(stem)
        header = ["x", "t", "value"] if self.kind == "line1" else ["x", "t", "s", "value"]
        c = write_text(stem.with_suffix(".csv"), csv_text(header, self.rows()))
        j = write_text(stem.with_suffix(".json"), json.dumps(self.metadata(), sort_keys=True, indent=1) + "\n")
        return c, j


def _window_counts(w: np.ndarray, centers: np.ndarray, eps: float) -> np.ndarray:
    """Cumulative left-endpoint window counts along the last axis.

    ``w`` has shape (..., N+1); the result has shape (p, ..., N+1) with
    ``out[..., 0] = 0`` and ``out[..., j] = #{j' < j : |w_j' - x| <= eps}``.
    """
    left = w[..., :-1]
    ind = np.abs(left[None, ...] - centers.reshape((-1,) + (1,) * left.ndim)) <= eps
    out = np.zeros(ind.shape[:-1] + (ind.shape[-1] + 1,), dtype=np.int64)
    np.cumsum(ind, axis=-1, out=out[..., 1:])
    return out


def line_local_time(path, component: int, s: float, xgrid: XGrid) -> LocalTimeField:
    """Local time ``L(s, t; x)`` of the line ``t -> W_{s,t}`` (density in dt)."""
    i = path.grid.s_index(s)
    if i == 0:
        raise GridError("s = 0 is a degenerate line (W = 0); choose s > 0")
    w = path.values[i, :, component]
    counts = _window_counts(w, xgrid.centers, xgrid.eps)
    samples = counts * (path.grid.dt / (2.0 * xgrid.eps))
    g = path.grid
    return LocalTimeField("line1", xgrid, samples, g, float(s), np.array([i]),
                          np.arange(g.n + 1), getattr(path, "seed", 0), component)


def line2_local_time(path, component: int, t: float, xgrid: XGrid) -> LocalTimeField:
    """Local time of the line ``s -> W_{s,t}`` at fixed t (density in ds)."""
    j = path.grid.t_index(t)
    if j == 0:
        raise GridError("t = 0 is a degenerate line (W = 0); choose t > 0")
    w = path.values[:, j, component]
    counts = _window_counts(w, xgrid.centers, xgrid.eps)
    samples = counts * (path.grid.ds / (2.0 * xgrid.eps))
    g = path.grid
    return LocalTimeField("line2", xgrid, samples, g, float(t), np.arange(g.m + 1),
                          np.array([j]), getattr(path, "seed", 0), component)


def plane_local_time(path, component: int, xgrid: XGrid, s_stride: int = 1,
                     t_stride: int = 1) -> LocalTimeField:
    """Plane local time ``L^x_{s,t}`` by left-Riemann area occupation.

    ``L^x_{s,t} = (1/2eps) sum_{s_i < s} sum_{t_j < t} 1[|W_{s_i,t_j} - x| <= eps] ds dt``.
    Strides keep only every ``s_stride``-th / ``t_stride``-th node on output;
    the last node is always kept.
    """
    g = path.grid
    W = path.values[:, :, component]
    s_idx = np.unique(np.append(np.arange(0, g.m + 1, s_stride), g.m))
    t_idx = np.unique(np.append(np.arange(0, g.n + 1, t_stride), g.n))
    out = np.empty((xgrid.p, s_idx.size, t_idx.size))
    scale = g.ds * g.dt / (2.0 * xgrid.eps)
    C = np.zeros((g.m + 1, g.n + 1), dtype=np.int64)
    interior = W[:-1, :-1]
    for q, x in enumerate(xgrid.centers):
        ind = np.abs(interior - x) <= xgrid.eps
        np.cumsum(ind, axis=0, out=C[1:, 1:])
        np.cumsum(C[1:, 1:], axis=1, out=C[1:, 1:])
        out[q] = C[np.ix_(s_idx, t_idx)] * scale
    return LocalTimeField("plane", xgrid, out, g, None, s_idx, t_idx,
                          getattr(path, "seed", 0), component)


def occupation_total(field: LocalTimeField) -> np.ndarray:
    """``sum_q L(x_q) * dx`` at every time node of the field."""
    return field.samples.sum(axis=0) * field.xgrid.dx


def tanaka_terms(path, component: int, s: float, x: float, t: float, eps: float) -> dict:
    """Both sides of the one-line Tanaka identity at level x.

    ``lhs = sum_{t_j < t} 1{W_{s,t_j} <= x} (W_{s,t_{j+1}} - W_{s,t_j})``
    ``rhs = (s/2) L(s,t;x) - (W_{s,t} - x)^- + x^+``
    """
    i = path.grid.s_index(s)
    if i == 0:
        raise GridError("s = 0 is a degenerate line (W = 0); choose s > 0")
    J = path.grid.t_index(t)
    w = path.values[i, : J + 1, component]
    below = w[:-1] <= x
    lhs = float(np.sum(np.diff(w)[below])) if J > 0 else 0.0
    count = int(np.count_nonzero(np.abs(w[:-1] - x) <= eps))
    L = count * (path.grid.dt / (2.0 * eps))
    wt = float(w[-1])
    neg = max(x - wt, 0.0)
    rhs = (s / 2.0) * L - neg + max(x, 0.0)
    return {"lhs": lhs, "rhs": rhs, "local_time": L, "residual": lhs - rhs}


def tanaka_residual(path, component: int, s: float, x: float, t: float, eps: float) -> float:
    """Residual ``lhs - rhs`` of the Tanaka identity (see :func:`tanaka_terms`).

    The level x is expected to lie inside the range scanned by the caller;
    far above the path the local time vanishes and the residual is zero.
    """
    return tanaka_terms(path, component, s, x, t, eps)["residual"]


def reversed_lt_check(path, component: int, s: float, x: float, t: float, eps: float,
                      convention: str = "right") -> float:
    """Residual ``Lhat(s,t;x) - [L(s,1;x) - L(s,1-t;x)]``.

    ``Lhat`` is the occupation density of the reversed line
    ``u -> W_{s,1-u}`` over [0, t].  With ``convention='right'`` the reversed
    sum uses right end points in reversed time, which maps node for node onto
    the forward left-endpoint sum, so the residual is zero up to rounding.
    ``convention='left'`` applies the forward estimator verbatim to the
    reversed path; the two sums then differ by one boundary node, so
    ``|residual| <= dt / (2 eps)``.
    """
    if convention not in ("right", "left"):
        raise ValueError("convention must be 'right' or 'left'")
    g = path.grid
    i = g.s_index(s)
    if i == 0:
        raise GridError("s = 0 is a degenerate line (W = 0); choose s > 0")
    J = g.t_index(t)
    w = path.values[i, :, component]
    w_hat = w[::-1]
    hit = np.abs(w - x) <= eps
    hit_hat = np.abs(w_hat - x) <= eps
    scale = g.dt / (2.0 * eps)
    if convention == "right":
        c_hat = int(np.count_nonzero(hit_hat[1: J + 1]))
    else:
        c_hat = int(np.count_nonzero(hit_hat[:J]))
    L1 = int(np.count_nonzero(hit[: g.n])) * scale
    L1mt = int(np.count_nonzero(hit[: g.n - J])) * scale
    return c_hat * scale - (L1 - L1mt)


def slab_discrepancy(path, component: int, xgrid: XGrid, s_stride: int = 1,
                     t_stride: int = 1, route: str = "line1") -> tuple[np.ndarray, np.ndarray]:
    """Per-bin absolute and reference L1 mass for the slab identity.

    The left side integrates line local times over the other parameter with
    the trapezoid rule (the degenerate line at 0 contributes 0); the right
    side is :func:`plane_local_time`.  ``route='line1'`` integrates
    ``L(s_1, t; x)`` over s_1, ``route='line2'`` integrates the fixed-t line
    local times over t_1.

    Returns
    -------
    num, den : ndarray, shape (p,)
        ``sum |lhs - rhs|`` and ``sum |rhs|`` over the carried (s, t) nodes.
    """
    if route not in ("line1", "line2"):
        raise ValueError("route must be 'line1' or 'line2'")
    g = path.grid
    plane = plane_local_time(path, component, xgrid, s_stride, t_stride)
    W = path.values[:, :, component]
    num = np.empty(xgrid.p)
    den = np.empty(xgrid.p)
    for q, x in enumerate(xgrid.centers):
        if route == "line1":
            lhs = _trapezoid_slab(W, x, xgrid.eps, g.dt, g.ds)
        else:
            lhs = _trapezoid_slab(W.T, x, xgrid.eps, g.ds, g.dt).T
        lhs = lhs[np.ix_(plane.s_index, plane.t_index)]
        rhs = plane.samples[q]
        num[q] = np.abs(lhs - rhs).sum()
        den[q] = np.abs(rhs).sum()
    return num, den


def _trapezoid_slab(W: np.ndarray, x: float, eps: float, d_along: float,
                    d_across: float) -> np.ndarray:
    """Trapezoid integral over the row index of per-row line local times.

    Row 0 is the degenerate line and contributes 0.  Returns an array of the
    same shape as ``W`` indexed (row node, column node).
    """
    counts = _window_counts(W[1:, :], np.array([x]), eps)[0]
    L = counts * (d_along / (2.0 * eps))
    out = np.zeros(W.shape)
    out[1] = 0.5 * d_across * L[0]
    if W.shape[0] > 2:
        steps = 0.5 * d_across * (L[1:] + L[:-1])
        out[2:] = out[1] + np.cumsum(steps, axis=0)
    return out
