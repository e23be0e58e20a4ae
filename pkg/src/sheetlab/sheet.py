"""Brownian sheet sampling on uniform grids of [0,1]^2.

A sheet is built from i.i.d. Gaussian cell increments with variance equal to
the cell area, accumulated by a double cumulative sum.  This reproduces the
exact finite-dimensional law at the grid nodes and leaves the axes ``s = 0``
and ``t = 0`` identically zero.

Randomness comes from a counter-based Philox stream keyed by a 64-bit seed,
so replica ``r`` of a Monte Carlo run can be regenerated on its own, in any
order, from ``replica_seed(master_seed, r)``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "GridError",
    "WindowAlignmentError",
    "GridSpec",
    "SheetPath",
    "ReversedSheet",
    "WindowedSheet",
    "LineSet",
    "make_rng",
    "replica_seed",
    "sample_sheet",
    "sample_lines",
    "lines_as_sheet",
    "rectangle_increment",
    "reverse_in_t",
    "window",
    "extract_reversal_drift",
    "default_t_cut_index",
]

_NODE_TOL = 1e-9
_U64 = (1 << 64) - 1


class GridError(ValueError):
    """Invalid grid or a coordinate that does not sit on a grid node."""


class WindowAlignmentError(GridError):
    """A time window whose end points do not land on grid nodes."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [0,1]^2 with ``m`` steps in s and ``n`` steps in t."""

    m: int
    n: int

    def __post_init__(self):
        for name in ("m", "n"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise GridError(f"{name} must be a positive integer, got {v!r}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "n", int(self.n))

    @property
    def ds(self) -> float:
        return 1.0 / self.m

    @property
    def dt(self) -> float:
        return 1.0 / self.n

    @property
    def s_nodes(self) -> np.ndarray:
        return np.arange(self.m + 1) / self.m

    @property
    def t_nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    def s_index(self, s: float) -> int:
        return _node_index(s, self.m, "s")

    def t_index(self, t: float) -> int:
        return _node_index(t, self.n, "t")


def _node_index(v: float, steps: int, label: str) -> int:
    x = float(v) * steps
    k = int(round(x))
    if abs(x - k) > _NODE_TOL * max(1.0, steps) or k < 0 or k > steps:
        raise GridError(
            f"{label}={v!r} is not a node of the {label}-grid with {steps} steps "
            f"(nearest node {min(max(k, 0), steps) / steps!r})"
        )
    return k


class _SheetLike:
    """Shared accessors for objects carrying ``grid``, ``dim`` and ``values``."""

    grid: GridSpec
    dim: int

    def line(self, s: float, component: int | None = None) -> np.ndarray:
        """Values along the line ``t -> W_{s,t}``; shape (n+1, d) or (n+1,)."""
        row = self.values[self.grid.s_index(s)]
        return row if component is None else row[:, component]

    def component(self, k: int) -> np.ndarray:
        return self.values[:, :, k]


@dataclass(frozen=True, eq=False)
class SheetPath(_SheetLike):
    """Grid sample of a d-dimensional Brownian sheet.

    Attributes
    ----------
    grid : GridSpec
    dim : int
    values : ndarray, shape (m+1, n+1, d)
        ``values[i, j, k]`` is component k of W at (i/m, j/n).  Read-only.
    seed : int
        64-bit key used to draw the cell increments.
    """

    grid: GridSpec
    dim: int
    values: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        shape = (self.grid.m + 1, self.grid.n + 1, self.dim)
        if v.shape != shape:
            raise GridError(f"values shape {v.shape} does not match {shape}")
        if v is self.values and v.flags.writeable:
            v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.grid.n


@dataclass(frozen=True, eq=False)
class ReversedSheet(_SheetLike):
    """Index-remapped view ``What_{s, j/n} = W_{s, (n-j)/n}``."""

    base: SheetPath | "ReversedSheet"

    @property
    def grid(self) -> GridSpec:
        return self.base.grid

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def values(self) -> np.ndarray:
        return self.base.values[:, ::-1, :]

    @property
    def n(self) -> int:
        return self.grid.n


@dataclass(frozen=True, eq=False)
class WindowedSheet(_SheetLike):
    """Time window ``t -> W_{s, a + eps t}`` of a base sheet.

    ``mode='shifted'`` keeps the raw values, ``mode='centered'`` subtracts
    ``W_{s,a}`` so that the window starts at zero on every line.  The window
    has its own grid with ``eps * n`` steps in t.
    """

    base: SheetPath
    a: float
    eps: float
    mode: str
    j0: int
    j1: int

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.base.grid.m, self.j1 - self.j0)

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def values(self) -> np.ndarray:
        v = self.base.values[:, self.j0:self.j1 + 1, :]
        if self.mode == "centered":
            v = v - self.base.values[:, self.j0:self.j0 + 1, :]
        return v

    @property
    def n(self) -> int:
        return self.j1 - self.j0


@dataclass(frozen=True, eq=False)
class LineSet:
    """Joint sample of the lines ``t -> W_{s_k, t}`` for a few values s_k.

    Used where only a handful of lines matter (tail curves, moments,
    regularization probes); the joint law is exact for arbitrary s_k.
    """

    s_values: np.ndarray
    n: int
    dim: int
    values: np.ndarray = field(repr=False)
    seed: int = 0

    def line(self, s: float, component: int | None = None) -> np.ndarray:
        hits = np.flatnonzero(np.abs(self.s_values - float(s)) <= _NODE_TOL)
        if hits.size == 0:
            raise GridError(f"s={s!r} is not one of the sampled lines {self.s_values.tolist()}")
        row = self.values[hits[0]]
        return row if component is None else row[:, component]


def make_rng(seed: int) -> np.random.Generator:
    """Philox generator keyed by a 64-bit seed."""
    key = np.array([int(seed) & _U64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def replica_seed(master_seed: int, replica: int) -> int:
    """Seed of replica ``r``: first 8 bytes of BLAKE2b(master || r), little endian."""
    msg = struct.pack("<QQ", int(master_seed) & _U64, int(replica) & _U64)
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


def sample_sheet(grid: GridSpec, dim: int, seed: int) -> SheetPath:
    """Sample a d-dimensional Brownian sheet on ``grid``.

    ``values[i, j, k]`` is the double cumulative sum of i.i.d.
    N(0, ds*dt) cell increments; the row i=0 and column j=0 are exactly zero.
    """
    if not isinstance(grid, GridSpec):
        grid = GridSpec(*grid)
    if int(dim) < 1:
        raise GridError(f"dim must be >= 1, got {dim!r}")
    rng = make_rng(seed)
    inc = rng.standard_normal((grid.m, grid.n, int(dim)))
    inc *= np.sqrt(grid.ds * grid.dt)
    values = np.zeros((grid.m + 1, grid.n + 1, int(dim)))
    np.cumsum(inc, axis=0, out=inc)
    np.cumsum(inc, axis=1, out=values[1:, 1:, :])
    return SheetPath(grid, int(dim), values, int(seed) & _U64)


def sample_lines(s_values: Sequence[float], n: int, dim: int, seed: int) -> LineSet:
    """Sample the lines ``W_{s_k, .}`` on a t-grid with ``n`` steps.

    With sorted ``0 < s_1 < ... < s_K`` the lines are partial sums of
    independent Brownian motions scaled by ``sqrt(s_k - s_{k-1})``, which is
    the exact joint law of the sheet restricted to those lines.
    """
    s = np.asarray(s_values, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise GridError("s_values must be a non-empty 1-d sequence")
    if np.any(s <= 0) or np.any(s > 1):
        raise GridError("s_values must lie in (0, 1]")
    if int(n) < 1:
        raise GridError(f"n must be >= 1, got {n!r}")
    order = np.argsort(s, kind="stable")
    s_sorted = s[order]
    gaps = np.diff(np.concatenate(([0.0], s_sorted)))
    rng = make_rng(seed)
    inc = rng.standard_normal((s.size, int(n), int(dim)))
    inc *= np.sqrt(gaps / n)[:, None, None]
    np.cumsum(inc, axis=0, out=inc)
    vals_sorted = np.zeros((s.size, int(n) + 1, int(dim)))
    np.cumsum(inc, axis=1, out=vals_sorted[:, 1:, :])
    values = np.empty_like(vals_sorted)
    values[order] = vals_sorted
    return LineSet(s, int(n), int(dim), values, int(seed) & _U64)


def lines_as_sheet(lines: LineSet) -> SheetPath:
    """View lines sampled at ``s = 1/K, 2/K, ..., 1`` as a sheet on a (K, n) grid.

    Lets the grid-based estimators run on very long t-grids where only a few
    lines are needed (``K = 1`` gives the single line ``W_{1, .}``).
    """
    K = lines.s_values.size
    want = np.arange(1, K + 1) / K
    if not np.allclose(lines.s_values, want, rtol=0.0, atol=_NODE_TOL):
        raise GridError("lines_as_sheet needs s_values == (1/K, ..., 1)")
    values = np.zeros((K + 1, lines.n + 1, lines.dim))
    values[1:] = lines.values
    return SheetPath(GridSpec(K, lines.n), lines.dim, values, lines.seed)


def rectangle_increment(path, s1: float, t1: float, s2: float, t2: float) -> np.ndarray:
    """W(R) = W_{s2,t2} - W_{s1,t2} - W_{s2,t1} + W_{s1,t1} for R = (s1,s2]x(t1,t2]."""
    g = path.grid
    i1, i2 = g.s_index(s1), g.s_index(s2)
    j1, j2 = g.t_index(t1), g.t_index(t2)
    if i1 > i2 or j1 > j2:
        raise GridError("rectangle corners must satisfy s1 <= s2 and t1 <= t2")
    v = path.values
    return v[i2, j2] - v[i1, j2] - v[i2, j1] + v[i1, j1]


def reverse_in_t(path):
    """Time reversal ``What_{s,t} = W_{s,1-t}`` as an index remap (no copy)."""
    if isinstance(path, ReversedSheet):
        return path.base
    return ReversedSheet(path)


def window(path: SheetPath, a: float, eps: float, mode: str = "shifted") -> WindowedSheet:
    """Restrict ``path`` to the time window [a, a+eps], rescaled to [0,1].

    Raises
    ------
    WindowAlignmentError
        If ``a`` or ``a + eps`` is not a t-grid node.  The message suggests
        the nearest aligned pair.
    """
    if mode not in ("shifted", "centered"):
        raise ValueError(f"mode must be 'shifted' or 'centered', got {mode!r}")
    n = path.grid.n
    if not (0.0 <= a < 1.0) or not (0.0 < eps <= 1.0) or a + eps > 1.0 + _NODE_TOL:
        raise WindowAlignmentError(
            f"need 0 <= a < 1, 0 < eps <= 1 and a + eps <= 1 (got a={a!r}, eps={eps!r})"
        )
    ja, je = a * n, eps * n
    j0, k = int(round(ja)), int(round(je))
    if abs(ja - j0) > _NODE_TOL * n or abs(je - k) > _NODE_TOL * n or k < 1:
        k_s = max(1, min(k, n - min(j0, n - 1)))
        j0_s = min(j0, n - k_s)
        raise WindowAlignmentError(
            f"window a={a!r}, eps={eps!r} is not aligned with the t-grid (n={n}); "
            f"nearest aligned choice is a={j0_s / n!r}, eps={k_s / n!r}"
        )
    return WindowedSheet(path, float(a), float(eps), mode, j0, j0 + k)


def default_t_cut_index(n: int) -> int:
    """Grid index of the default cutoff ``t_cut = 1 - 16/n`` (at least one step)."""
    return max(n - 16, 1) if n > 1 else 0


def extract_reversal_drift(path, t_cut: float | None = None) -> np.ndarray:
    """Driving sheet B of the time-reversal representation.

    ``B_{s,t} = What_{s,t} - W_{s,1} + sum_{u_j < t} What_{s,u_j} / (1 - u_j) dt``
    for t on the grid up to ``t_cut`` (left-endpoint quadrature).

    Returns
    -------
    ndarray, shape (m+1, J+1, d) with ``J = t_cut * n``.
    """
    n = path.grid.n
    J = default_t_cut_index(n) if t_cut is None else path.grid.t_index(t_cut)
    if J >= n:
        raise GridError("t_cut must be < 1: the drift 1/(1-u) is singular at u = 1")
    w = path.values
    w_hat = w[:, ::-1, :][:, : J + 1, :]
    u = np.arange(J) / n
    drift = w_hat[:, :J, :] / (1.0 - u)[None, :, None] * (1.0 / n)
    B = np.empty_like(w_hat)
    B[:, 0, :] = 0.0
    B[:, 1:, :] = np.cumsum(drift, axis=1)
    B += w_hat - w[:, n:n + 1, :]
    B[:, 0, :] = w_hat[:, 0, :] - w[:, n, :]
    return B
