"""Second-order process J and the two-parameter Ito formula on the grid.

Discrete conventions (node (I, J) = (s, t), cells indexed by their lower-left
corner, left end points everywhere):

* ``dW_ij`` is the rectangle increment of cell (i, j);
* ``dJ_ij = (W_{i,j+1} - W_{i,j}) (W_{i+1,j} - W_{i,j})``, which is the sum
  of ``dW_{a,j} dW_{i,b}`` over a < i, b < j, i.e. all ordered cell pairs
  whose J-indicator first switches on in cell (i, j).

Terms of the formula, smooth-substitution mode (each local-time integral is
replaced by the path quadrature it equals for smooth h)::

    lhs = h(s, t, W_st) - h(0, t, 0)
    T1  = sum_{i<I} d_s h(u_i, t, W_{i,J}) ds
    T2  = (s/2) sum_{j<J} d_xx h(s, xi_j, W_{I,j}) dt          (frozen first argument)
    T3  = (t/2) sum_{i<I} d_xx h(u_i, t, W_{i,J}) ds
    T4  = sum d_x h(u_i, xi_j, W_ij) dW_ij
    T5  = sum d_xx h(u_i, xi_j, W_ij) dJ_ij
    T6  = -(1/2) sum {u d_sxx h + d_xx h + u xi d_xxxx h}(u_i, xi_j, W_ij) ds dt

The raw mode computes T2, T3 and T6 as Stieltjes sums against estimated
local-time fields instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .integrals import Integrand, PolyIntegrand, SmoothIntegrand
from .localtime import XGrid, default_bandwidth, line2_local_time, line_local_time, plane_local_time
from .sheet import GridError, GridSpec

__all__ = [
    "AdaptednessError",
    "JField",
    "GuardedPath",
    "RandomIntegrand",
    "build_j_field",
    "j_field_bruteforce",
    "ito_terms",
    "ito_residual",
    "green_check",
    "mollify",
    "POLY_BATTERY",
]

ITO_KEYS = ("", "x", "s", "xx", "sx", "xxx", "sxx", "xxxx")


class AdaptednessError(RuntimeError):
    """A random integrand read the path outside [0, s] x [0, t]."""


@dataclass(frozen=True, eq=False)
class JField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)


def _cell_increments(W: np.ndarray) -> np.ndarray:
    return W[1:, 1:] - W[:-1, 1:] - W[1:, :-1] + W[:-1, :-1]


def _j_increments(W: np.ndarray) -> np.ndarray:
    return (W[:-1, 1:] - W[:-1, :-1]) * (W[1:, :-1] - W[:-1, :-1])


def build_j_field(path, component: int = 0) -> JField:
    """J on every grid node by prefix sums of the cell increments ``dJ_ij``."""
    W = path.values[:, :, component]
    g = path.grid
    J = np.zeros((g.m + 1, g.n + 1))
    np.cumsum(_j_increments(W), axis=0, out=J[1:, 1:])
    np.cumsum(J[1:, 1:], axis=1, out=J[1:, 1:])
    return JField(g, J)


def j_field_bruteforce(path, component: int = 0) -> JField:
    """O(m^2 n^2) oracle: enumerate all ordered cell pairs explicitly.

    A pair (c1, c2) = ((a, b), (a', b')) with a < a' and b > b' contributes
    ``dW_c1 dW_c2`` to ``J_{I,J}`` whenever both cells lie in [0, I) x [0, J),
    i.e. a' < I and b < J.
    """
    W = path.values[:, :, component]
    g = path.grid
    dW = _cell_increments(W).ravel()
    a, b = np.divmod(np.arange(g.m * g.n), g.n)
    i, j = np.nonzero((a[:, None] < a[None, :]) & (b[:, None] > b[None, :]))
    # pair switches on at row index a' (= a[j]) and column index b (= b[i])
    first = np.bincount(a[j] * g.n + b[i], weights=dW[i] * dW[j], minlength=g.m * g.n).reshape(g.m, g.n)
    J = np.zeros((g.m + 1, g.n + 1))
    J[1:, 1:] = first.cumsum(axis=0).cumsum(axis=1)
    return JField(g, J)


@dataclass(eq=False)
class GuardedPath:
    """Read-only path accessor limited to nodes (i, j) with i <= i_max, j <= j_max."""

    path: object
    i_max: int
    j_max: int

    def __call__(self, i: int, j: int, component: int = 0) -> float:
        if i > self.i_max or j > self.j_max or i < 0 or j < 0:
            g = self.path.grid
            raise AdaptednessError(
                f"read of W at node ({i}, {j}) = ({i / g.m}, {j / g.n}) outside "
                f"[0, {self.i_max / g.m}] x [0, {self.j_max / g.n}]"
            )
        return float(self.path.values[i, j, component])

    @property
    def grid(self):
        return self.path.grid


@dataclass(frozen=True, eq=False)
class RandomIntegrand:
    """Adapted random integrand.

    ``evaluate(i, j, x, W)`` returns a dict of partial derivatives at
    ``(s_i, t_j, x)`` keyed like :data:`ITO_KEYS` (``''`` is h itself).  ``W``
    is a :class:`GuardedPath` bounded to node (i, j); reading beyond it
    raises :class:`AdaptednessError`.
    """

    evaluate: Callable
    name: str = "h"


# ----------------------------------------------------------------- evaluation


class _Eval:
    """Uniform access to h and its partials at node lists."""

    def __init__(self, h, path):
        self.h = h
        self.path = path
        self.g = path.grid
        self._random = isinstance(h, RandomIntegrand)

    def __call__(self, key: str, i, j, x) -> np.ndarray:
        i = np.asarray(i)
        j = np.asarray(j)
        x = np.asarray(x, dtype=float)
        shape = np.broadcast_shapes(i.shape, j.shape, x.shape)
        if not self._random:
            fn = self.h if key == "" else self.h.partial(key)
            out = fn(self.g.s_nodes[i], self.g.t_nodes[j], x)
            return np.broadcast_to(np.asarray(out, dtype=float), shape)
        ii, jj, xx = np.broadcast_arrays(i, j, x)
        out = np.empty(shape)
        for idx in np.ndindex(shape):
            a, b = int(ii[idx]), int(jj[idx])
            vals = self.h.evaluate(a, b, float(xx[idx]), GuardedPath(self.path, a, b))
            if key not in vals:
                raise KeyError(f"{self.h.name}: partial {key!r} not supplied")
            out[idx] = vals[key]
        return out


def _raw_xgrid(W_sub: np.ndarray, eps: float) -> XGrid:
    r = float(np.max(np.abs(W_sub))) + 2.0 * eps
    p = max(8, int(np.ceil(2.0 * r / (0.5 * eps))))
    return XGrid(-r, r, p, eps)


def _stieltjes_2d(g_vals: np.ndarray, L: np.ndarray) -> float:
    """``sum_{q,j} g[q, j] (L[q+1,j+1] - L[q,j+1] - L[q+1,j] + L[q,j])``."""
    d = L[1:, 1:] - L[:-1, 1:] - L[1:, :-1] + L[:-1, :-1]
    return float(np.sum(g_vals[:-1, :] * d))


def ito_terms(h, path, component: int, s: float, t: float, mode: str = "smooth",
              eps: float | None = None) -> dict:
    """All terms of the two-parameter Ito formula at the node (s, t).

    Parameters
    ----------
    h : Integrand or RandomIntegrand
        Needs partials ``x, s, xx, sx, xxx, sxx, xxxx`` (raw mode: ``x, s, xx, sx, xxx``).
    mode : {'smooth', 'raw'}
    eps : float, optional
        Bandwidth for raw mode; default ``n**(-1/4)``.

    Returns
    -------
    dict
        ``lhs``, ``T1``..``T6``, ``residual`` and, for the ambiguous L2 term,
        ``T2_running`` / ``residual_running`` where the first argument runs
        over u in [0, s) instead of being frozen at s.
    """
    if mode not in ("smooth", "raw"):
        raise ValueError("mode must be 'smooth' or 'raw'")
    g = path.grid
    I, J = g.s_index(s), g.t_index(t)
    if I == 0 or J == 0:
        raise GridError("the Ito formula is evaluated at s, t > 0")
    W = path.values[:, :, component]
    ev = _Eval(h, path)
    ds, dt = g.ds, g.dt
    ii = np.arange(I)
    jj = np.arange(J)
    Ic, Jc = ii[:, None], jj[None, :]
    Wc = W[:I, :J]
    u = g.s_nodes[:I][:, None]
    xi = g.t_nodes[:J][None, :]

    lhs = float(ev("", I, J, W[I, J]) - ev("", 0, J, 0.0))
    T1 = float(np.sum(ev("s", ii, J, W[:I, J])) * ds)
    T4 = float(np.sum(ev("x", Ic, Jc, Wc) * _cell_increments(W[: I + 1, : J + 1])))
    T5 = float(np.sum(ev("xx", Ic, Jc, Wc) * _j_increments(W[: I + 1, : J + 1])))
    out = {"lhs": lhs, "T1": T1, "T4": T4, "T5": T5}

    if mode == "smooth":
        out["T2"] = float(s / 2.0 * np.sum(ev("xx", I, jj, W[I, :J])) * dt)
        out["T2_running"] = float(0.5 * np.sum(ev("xx", Ic, Jc, W[I, :J][None, :])) * ds * dt)
        out["T3"] = float(t / 2.0 * np.sum(ev("xx", ii, J, W[:I, J])) * ds)
        G = u * ev("sxx", Ic, Jc, Wc) + ev("xx", Ic, Jc, Wc) + u * xi * ev("xxxx", Ic, Jc, Wc)
        out["T6"] = float(-0.5 * np.sum(G) * ds * dt)
    else:
        eps = default_bandwidth(g.n) if eps is None else eps
        xg = _raw_xgrid(W[: I + 1, : J + 1], eps)
        xs = xg.centers
        L1 = line_local_time(path, component, s, xg).samples[:, : J + 1]          # (p, J+1)
        L2 = line2_local_time(path, component, t, xg).samples[:, : I + 1]         # (p, I+1)
        gx2 = ev("x", I, jj[None, :], xs[:, None])                                 # (p, J)
        out["T2"] = -s / 2.0 * _stieltjes_2d(gx2, L1)
        out["T2_running"] = out["T2"]
        gx3 = ev("x", ii[None, :], J, xs[:, None])                                 # (p, I)
        out["T3"] = -t / 2.0 * _stieltjes_2d(gx3, L2)
        Lp = plane_local_time(path, component, xg).samples[:, : I + 1, : J + 1]  # (p, I+1, J+1)
        X = xs[:, None, None]
        Ib, Jb = ii[None, :, None], jj[None, None, :]
        ub, xib = g.s_nodes[:I][None, :, None], g.t_nodes[:J][None, None, :]
        G = ub * ev("sx", Ib, Jb, X) + ev("x", Ib, Jb, X) + ub * xib * ev("xxx", Ib, Jb, X)
        d3 = (Lp[1:, 1:, 1:] - Lp[1:, :-1, 1:] - Lp[:-1, 1:, 1:] + Lp[:-1, :-1, 1:]
              - Lp[1:, 1:, :-1] + Lp[1:, :-1, :-1] + Lp[:-1, 1:, :-1] - Lp[:-1, :-1, :-1])
        out["T6"] = 0.5 * float(np.sum(G[:-1] * d3))
        out["bandwidth"] = eps

    rhs = out["T1"] + out["T2"] + out["T3"] + T4 + T5 + out["T6"]
    rhs_run = rhs - out["T2"] + out["T2_running"]
    out["lt_terms"] = out["T2"] + out["T3"] + out["T6"]
    out["residual"] = lhs - rhs
    out["residual_running"] = lhs - rhs_run
    return out


def ito_residual(h, path, component: int, s: float, t: float, mode: str = "smooth",
                 eps: float | None = None) -> float:
    """``lhs - (T1 + ... + T6)``; see :func:`ito_terms`."""
    return ito_terms(h, path, component, s, t, mode, eps)["residual"]


def green_check(h, path, component: int, s: float, t: float) -> dict:
    """Both sides of the Green identity for the line integral at fixed t.

    ``lhs = sum_{i<I} d_x h(u_i, t, W_{i,J}) (W_{i+1,J} - W_{i,J})`` and
    ``rhs = T4 + T5 + sum_{j<J} sum_{i<I} (u_i/2) d_xxx h(u_i, xi_j, W_ij) (W_{i+1,j} - W_{i,j}) dt``.
    """
    g = path.grid
    I, J = g.s_index(s), g.t_index(t)
    W = path.values[:, :, component]
    ev = _Eval(h, path)
    ii, jj = np.arange(I), np.arange(J)
    Ic, Jc = ii[:, None], jj[None, :]
    Wc = W[:I, :J]
    lhs = float(np.sum(ev("x", ii, J, W[:I, J]) * (W[1: I + 1, J] - W[:I, J])))
    T4 = float(np.sum(ev("x", Ic, Jc, Wc) * _cell_increments(W[: I + 1, : J + 1])))
    T5 = float(np.sum(ev("xx", Ic, Jc, Wc) * _j_increments(W[: I + 1, : J + 1])))
    u = g.s_nodes[:I][:, None]
    T7 = float(np.sum(0.5 * u * ev("xxx", Ic, Jc, Wc) * (W[1: I + 1, :J] - Wc)) * g.dt)
    rhs = T4 + T5 + T7
    return {"lhs": lhs, "rhs": rhs, "residual": lhs - rhs}


# ------------------------------------------------------------------ mollifier


def mollify(h, k: int, order: int = 20):
    """Gaussian mollification ``h_k(x) = int h(x - y/(k+1)) p(y) dy``.

    ``p`` is the standard normal density, integrated with ``order``-point
    Gauss-Hermite nodes.  Written as ``h(x) + sum_q w_q (h(x - y_q/(k+1)) - h(x))``
    so constants are reproduced exactly; odd moments of p vanish, so
    functions linear in x are reproduced up to rounding.  Every declared
    partial is mollified the same way.
    """
    y, w = hermegauss(order)
    w = w / np.sqrt(2.0 * np.pi)
    shift = y / (k + 1.0)

    def smooth(fn):
        def g(s, t, x):
            x = np.asarray(x, dtype=float)
            base = np.asarray(fn(s, t, x), dtype=float)
            acc = np.zeros(np.broadcast_shapes(base.shape, np.shape(s), np.shape(t), x.shape))
            for yq, wq in zip(shift, w):
                acc = acc + wq * (np.asarray(fn(s, t, x - yq), dtype=float) - base)
            return base + acc
        return g

    if isinstance(h, RandomIntegrand):
        def evaluate(i, j, x, W):
            base = h.evaluate(i, j, x, W)
            out = dict(base)
            for yq, wq in zip(shift, w):
                other = h.evaluate(i, j, x - yq, W)
                for key in base:
                    out[key] = out[key] + wq * (other[key] - base[key])
            return out
        return RandomIntegrand(evaluate, f"mollify({h.name},{k})")

    partials = {}
    for key in ITO_KEYS[1:] + ("t",):
        if isinstance(h, Integrand) and h.has_partial(key):
            partials[key] = smooth(h.partial(key))
    return SmoothIntegrand(smooth(h), partials, f"mollify({h.name},{k})", getattr(h, "dim", 1))


def _poly(name, *terms):
    return PolyIntegrand(tuple(terms), name)


POLY_BATTERY = {
    "1": _poly("1", (1.0, 0, 0, 0)),
    "x": _poly("x", (1.0, 0, 0, 1)),
    "x^2": _poly("x^2", (1.0, 0, 0, 2)),
    "x^3": _poly("x^3", (1.0, 0, 0, 3)),
    "s*x": _poly("s*x", (1.0, 1, 0, 1)),
    "s*x^2": _poly("s*x^2", (1.0, 1, 0, 2)),
    "x*t": _poly("x*t", (1.0, 0, 1, 1)),
}
