"""Forward/backward line integrals, the H-norm, and local-time-space integrals.

Conventions
-----------
* forward sums evaluate the integrand at left end points,
  ``sum_j f(s, t_j, W_{s,t_j}) (W_{s,t_{j+1}} - W_{s,t_j})``;
* backward sums evaluate it at right end points,
  ``sum_j f(s, t_{j+1}, W_{s,t_{j+1}}) (W_{s,t_{j+1}} - W_{s,t_j})``;
* single-line sums are reduced with :func:`math.fsum` (correctly rounded,
  hence independent of term order), which makes the discrete reversal
  identity hold exactly.

Integrands take ``(s, t, x)`` with numpy broadcasting.  For d-dimensional
integrands ``x`` carries a trailing axis of length d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy import special

from .localtime import LocalTimeField, XGrid, line_local_time
from .sheet import GridError, default_t_cut_index, extract_reversal_drift

__all__ = [
    "Integrand",
    "SmoothIntegrand",
    "PolyIntegrand",
    "ElementaryIntegrand",
    "HNormQuadrature",
    "HNormReport",
    "indicator_below",
    "random_elementary",
    "forward_integral",
    "backward_integral",
    "reversed_forward_integral",
    "quadratic_variation",
    "h_norm",
    "elementary_lt_integral",
    "lt_space_integral",
    "path_derivative_integral",
    "normalization_crosscheck",
    "multidim_lt_identity_terms",
    "multidim_lt_identity_residual",
]


class Integrand:
    """Test function ``f(s, t, x)``; subclasses supply evaluation and partials."""

    dim: int = 1
    name: str = "f"

    def __call__(self, s, t, x):
        raise NotImplementedError

    def partial(self, key: str) -> Callable:
        """Partial derivative by key, e.g. ``'x'``, ``'sx'``, ``'xxx'``, ``'x0'``."""
        raise KeyError(f"{self.name}: partial {key!r} not declared")

    def has_partial(self, key: str) -> bool:
        try:
            self.partial(key)
        except KeyError:
            return False
        return True


@dataclass(frozen=True, eq=False)
class SmoothIntegrand(Integrand):
    """Callable integrand with declared partial derivatives.

    Parameters
    ----------
    func : callable
        ``func(s, t, x)``, vectorised.
    partials : mapping
        Keys are derivative codes: ``'s'`` for d/ds, then one ``'x'`` per
        derivative in x (``'x'``, ``'xx'``, ``'sx'``, ``'sxx'``, ...).  In d
        dimensions use ``'x0'``, ``'x1'``, ... for first derivatives.
    """

    func: Callable
    partials: Mapping[str, Callable] = field(default_factory=dict)
    name: str = "f"
    dim: int = 1

    def __call__(self, s, t, x):
        return self.func(s, t, x)

    def partial(self, key: str) -> Callable:
        try:
            return self.partials[key]
        except KeyError:
            raise KeyError(f"{self.name}: partial {key!r} not declared") from None


@dataclass(frozen=True, eq=False)
class PolyIntegrand(Integrand):
    """Polynomial ``sum c * s**a * t**b * x**k`` with exact partials.

    ``terms`` is a tuple of ``(c, a, b, k)``.
    """

    terms: tuple
    name: str = "poly"
    dim: int = 1

    def __call__(self, s, t, x):
        s, t, x = np.asarray(s, float), np.asarray(t, float), np.asarray(x, float)
        out = np.zeros(np.broadcast_shapes(s.shape, t.shape, x.shape))
        for c, a, b, k in self.terms:
            out = out + c * s**a * t**b * x**k
        return out

    def derivative(self, ns: int = 0, nx: int = 0, nt: int = 0) -> "PolyIntegrand":
        out = []
        for c, a, b, k in self.terms:
            if a < ns or k < nx or b < nt:
                continue
            coef = c * math.perm(a, ns) * math.perm(k, nx) * math.perm(b, nt)
            out.append((coef, a - ns, b - nt, k - nx))
        return PolyIntegrand(tuple(out), f"d({self.name})")

    def partial(self, key: str) -> Callable:
        if set(key) - {"s", "x", "t"}:
            raise KeyError(f"{self.name}: partial {key!r} not declared")
        return self.derivative(key.count("s"), key.count("x"), key.count("t"))


@dataclass(frozen=True, eq=False)
class ElementaryIntegrand(Integrand):
    """Step function on boxes (s_j, s_{j+1}] x (t_k, t_{k+1}] x (x_i, x_{i+1}].

    ``coeffs[j, k, i]`` is the value on the box; the function vanishes
    outside the knot ranges.
    """

    s_knots: np.ndarray
    t_knots: np.ndarray
    x_knots: np.ndarray
    coeffs: np.ndarray
    name: str = "elementary"
    dim: int = 1

    def __post_init__(self):
        for attr in ("s_knots", "t_knots", "x_knots"):
            k = np.asarray(getattr(self, attr), dtype=float)
            if k.ndim != 1 or k.size < 2 or np.any(np.diff(k) <= 0):
                raise ValueError(f"{attr} must be strictly increasing with at least 2 knots")
            object.__setattr__(self, attr, k)
        c = np.asarray(self.coeffs, dtype=float)
        shape = (self.s_knots.size - 1, self.t_knots.size - 1, self.x_knots.size - 1)
        if c.shape != shape:
            raise ValueError(f"coeffs shape {c.shape} does not match the boxes {shape}")
        object.__setattr__(self, "coeffs", c)

    @staticmethod
    def _locate(knots, v):
        idx = np.searchsorted(knots, v, side="left") - 1
        ok = (idx >= 0) & (idx < knots.size - 1)
        return np.where(ok, idx, 0), ok

    def __call__(self, s, t, x):
        s, t, x = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float), np.asarray(x, float))
        js, oks = self._locate(self.s_knots, s)
        ks, okt = self._locate(self.t_knots, t)
        ix, okx = self._locate(self.x_knots, x)
        val = self.coeffs[js, ks, ix]
        return np.where(oks & okt & okx, val, 0.0)


def indicator_below(x0: float) -> SmoothIntegrand:
    """``f(s, t, x) = 1{x <= x0}`` (no derivatives declared)."""
    return SmoothIntegrand(lambda s, t, x: (np.asarray(x) <= x0).astype(float), {}, f"1{{x<={x0}}}")


def _line_args(f: Integrand, path, i: int, component: int, J: int):
    vals = path.values[i, : J + 1, :]
    x = vals if getattr(f, "dim", 1) > 1 else vals[:, component]
    return x, vals[:, component]


def _check_line(path, s, t):
    i = path.grid.s_index(s)
    if i == 0:
        raise GridError("s = 0 is a degenerate line (W = 0); choose s > 0")
    return i, path.grid.t_index(t)


def forward_integral(f: Integrand, path, component: int, s: float, t: float) -> float:
    """Left-endpoint sum ``sum_{t_j < t} f(s, t_j, W_{s,t_j}) dW_j``."""
    i, J = _check_line(path, s, t)
    if J == 0:
        return 0.0
    x, w = _line_args(f, path, i, component, J)
    tt = path.grid.t_nodes[: J + 1]
    vals = np.broadcast_to(f(s, tt[:-1], x[:-1]), (J,))
    return math.fsum(vals * np.diff(w))


def backward_integral(f: Integrand, path, component: int, s: float, t: float) -> float:
    """Right-endpoint sum ``sum_{t_j < t} f(s, t_{j+1}, W_{s,t_{j+1}}) dW_j``."""
    i, J = _check_line(path, s, t)
    if J == 0:
        return 0.0
    x, w = _line_args(f, path, i, component, J)
    tt = path.grid.t_nodes[: J + 1]
    vals = np.broadcast_to(f(s, tt[1:], x[1:]), (J,))
    return math.fsum(vals * np.diff(w))


def reversed_forward_integral(f: Integrand, path, component: int, s: float, t: float) -> float:
    """Forward sum along the reversed line over reversed times [1-t, 1).

    ``sum_{u_k in [1-t, 1)} f(s, 1-u_k, What_{s,u_k}) (What_{s,u_{k+1}} - What_{s,u_k})``
    with ``1 - u_k`` taken as the grid node ``t_{n-k}`` (index remap), so
    that ``backward_integral + reversed_forward_integral == 0`` exactly.
    """
    i, J = _check_line(path, s, t)
    n = path.grid.n
    if J == 0:
        return 0.0
    vals_all = path.values[i]
    ks = np.arange(n - J, n)
    what = vals_all[n - ks]          # What_{u_k}
    what_next = vals_all[n - ks - 1]  # What_{u_{k+1}}
    x = what if getattr(f, "dim", 1) > 1 else what[:, component]
    times = path.grid.t_nodes[n - ks]
    vals = np.broadcast_to(f(s, times, x), (J,))
    return math.fsum(vals * (what_next[:, component] - what[:, component]))


def quadratic_variation(path, component: int, s: float, t: float) -> float:
    i, J = _check_line(path, s, t)
    w = path.values[i, : J + 1, component]
    return math.fsum(np.diff(w) ** 2)


# --------------------------------------------------------------------------- H-norm


@dataclass(frozen=True)
class HNormQuadrature:
    """Quadrature settings for :func:`h_norm`.

    ``n_st`` Gauss-Legendre nodes per axis in ``u = sqrt(s)``, ``v = sqrt(t)``.
    ``x_rule='split-legendre'`` integrates the Gaussian expectation with
    ``n_x`` Gauss-Legendre nodes on each of [-x_max, 0] and [0, x_max];
    ``x_rule='hermite'`` uses ``n_x``-point Gauss-Hermite (probabilists').
    ``n_box`` nodes per axis are used inside each box of an elementary
    integrand, whose x-expectation is evaluated in closed form.
    """

    n_st: int = 48
    n_x: int = 96
    x_max: float = 12.0
    x_rule: str = "split-legendre"
    n_box: int = 24


@dataclass(frozen=True)
class HNormReport:
    l2_part: float
    weighted_l1_part: float
    total: float
    divergent: bool = False
    quadrature: dict = field(default_factory=dict)


def _x_rule(q: HNormQuadrature):
    if q.x_rule == "hermite":
        z, w = hermegauss(q.n_x)
        return z, w / math.sqrt(2.0 * math.pi)
    if q.x_rule != "split-legendre":
        raise ValueError(f"unknown x_rule {q.x_rule!r}")
    g, gw = leggauss(q.n_x)
    z = 0.5 * q.x_max * (g + 1.0)
    w = 0.5 * q.x_max * gw * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return np.concatenate((-z[::-1], z)), np.concatenate((w[::-1], w))


def _gl01(n):
    g, w = leggauss(n)
    return 0.5 * (g + 1.0), 0.5 * w


def _abs_moment(a, b):
    """``int_a^b |z| phi(z) dz`` elementwise (a <= b, infinities allowed)."""
    phi = lambda z: np.exp(-0.5 * np.square(z)) / math.sqrt(2.0 * math.pi)
    pa, pb = phi(a), phi(b)
    p0 = 1.0 / math.sqrt(2.0 * math.pi)
    return np.where(a >= 0, pa - pb, np.where(b <= 0, pb - pa, 2.0 * p0 - pa - pb))


def _report(A, B, meta):
    if not (np.isfinite(A) and np.isfinite(B)):
        return HNormReport(float("inf"), float("inf"), float("inf"), True, meta)
    l2 = math.sqrt(max(A, 0.0))
    return HNormReport(l2, float(B), 2.0 * l2 + float(B), False, meta)


def h_norm(f: Integrand, quad: HNormQuadrature | None = None) -> HNormReport:
    """``||f|| = 2 (int int E f^2)^{1/2} + int int E|f W / (st)|`` over [0,1]^2.

    With ``s = u^2`` and ``t = v^2`` the Jacobian ``4uv`` cancels the
    ``1/(st)`` weight (``W = uv Z``), leaving smooth integrands in (u, v).
    Elementary integrands are handled box by box with the Gaussian
    expectation in closed form, so their step discontinuities never fall
    inside a quadrature cell.
    """
    q = quad or HNormQuadrature()
    with np.errstate(all="ignore"):
        if isinstance(f, ElementaryIntegrand):
            return _h_norm_elementary(f, q)
        u, wu = _gl01(q.n_st)
        z, wz = _x_rule(q)
        U, V, Z = u[:, None, None], u[None, :, None], z[None, None, :]
        S, T = U * U, V * V
        vals = np.broadcast_to(np.asarray(f(S, T, U * V * Z), dtype=float), (u.size, u.size, z.size))
        w2 = wu[:, None] * wu[None, :]
        e_f2 = vals**2 @ wz
        e_fz = np.abs(vals * Z) @ wz
        A = float(np.sum(w2 * 4.0 * u[:, None] * u[None, :] * e_f2))
        B = float(np.sum(w2 * 4.0 * e_fz))
    meta = {"route": "generic", "n_st": q.n_st, "n_x": q.n_x, "x_rule": q.x_rule, "x_max": q.x_max}
    return _report(A, B, meta)


def _h_norm_elementary(f: ElementaryIntegrand, q: HNormQuadrature) -> HNormReport:
    g, gw = leggauss(q.n_box)
    A = 0.0
    B = 0.0
    xk = f.x_knots
    for j in range(f.s_knots.size - 1):
        ua, ub = math.sqrt(f.s_knots[j]), math.sqrt(f.s_knots[j + 1])
        u = 0.5 * (ub - ua) * (g + 1.0) + ua
        wu = 0.5 * (ub - ua) * gw
        for k in range(f.t_knots.size - 1):
            c = f.coeffs[j, k]
            if not np.any(c):
                continue
            va, vb = math.sqrt(f.t_knots[k]), math.sqrt(f.t_knots[k + 1])
            v = 0.5 * (vb - va) * (g + 1.0) + va
            wv = 0.5 * (vb - va) * gw
            sig = (u[:, None] * v[None, :])[..., None]
            lo, hi = xk[:-1] / sig, xk[1:] / sig
            prob = special.ndtr(hi) - special.ndtr(lo)
            mom = _abs_moment(lo, hi)
            w2 = wu[:, None] * wv[None, :]
            A += float(np.sum(w2 * 4.0 * sig[..., 0] * (prob @ (c * c))))
            B += float(np.sum(w2 * 4.0 * (mom @ np.abs(c))))
    meta = {"route": "elementary-closed-form", "n_box": q.n_box}
    return _report(A, B, meta)


def random_elementary(seed: int, n_s: int = 3, n_t: int = 3, n_x: int = 4, x_range: float = 2.0,
                      resolution: int = 16) -> ElementaryIntegrand:
    """Seeded step function with coefficients uniform in [-1, 1].

    s/t knots are drawn from the multiples of ``1/resolution`` in [0, 1]
    (always including 0 and 1) and x knots uniformly in ``[-x_range, x_range]``.
    """
    from .sheet import make_rng

    rng = make_rng(seed)

    def knots01(k):
        inner = rng.choice(np.arange(1, resolution), size=k - 1, replace=False)
        return np.concatenate(([0.0], np.sort(inner) / resolution, [1.0]))

    xk = np.sort(rng.uniform(-x_range, x_range, n_x + 1))
    coeffs = rng.uniform(-1.0, 1.0, (n_s, n_t, n_x))
    return ElementaryIntegrand(knots01(n_s), knots01(n_t), xk, coeffs, name=f"elementary({seed})")


# --------------------------------------------------------------- local-time integrals


def elementary_lt_integral(f: ElementaryIntegrand, L: LocalTimeField) -> float:
    """Integral of a step function against the plane local-time field.

    Each box contributes its coefficient times the alternating sum of L over
    the eight corners (x_i, x_{i+1}) x (s_j, s_{j+1}) x (t_k, t_{k+1}).
    Knots must be carried by the field: s/t knots on its node lists, x knots
    on its bin centres.
    """
    if L.kind != "plane":
        raise ValueError("elementary_lt_integral needs a plane local-time field")
    g = L.grid

    def node_pos(knots, steps, carried, label):
        out = []
        for v in knots:
            idx = g.s_index(v) if label == "s" else g.t_index(v)
            pos = np.flatnonzero(carried == idx)
            if pos.size == 0:
                raise GridError(f"{label}-knot {v!r} is not carried by the local-time field")
            out.append(int(pos[0]))
        return np.array(out)

    sp = node_pos(f.s_knots, g.m, L.s_index, "s")
    tp = node_pos(f.t_knots, g.n, L.t_index, "t")
    xp = np.array([L.xgrid.bin_of_center(v) for v in f.x_knots])
    A = L.samples[np.ix_(xp, sp, tp)]  # (x, s, t) corner values
    box = (A[1:, 1:, 1:] - A[1:, :-1, 1:] - A[:-1, 1:, 1:] + A[:-1, :-1, 1:]
           - A[1:, 1:, :-1] + A[1:, :-1, :-1] + A[:-1, 1:, :-1] - A[:-1, :-1, :-1])
    # coeffs are indexed (s, t, x); box is (x, s, t)
    return float(np.sum(np.transpose(f.coeffs, (2, 0, 1)) * box))


def _rows_lt_terms(f: Integrand, path, component: int, i0: int, I: int, J: int):
    """Per-line forward and backward sums for rows i0 <= i < I over [0, t_J]."""
    g = path.grid
    xi = g.s_nodes[i0:I]
    tt = g.t_nodes[: J + 1]
    vals = path.values[i0:I, : J + 1, :]
    x = vals if getattr(f, "dim", 1) > 1 else vals[..., component]
    F = np.broadcast_to(np.asarray(f(xi[:, None], tt[None, :], x), dtype=float), (I - i0, J + 1))
    dW = np.diff(vals[..., component], axis=1)
    fwd = np.sum(F[:, :-1] * dW, axis=1)
    bwd = np.sum(F[:, 1:] * dW, axis=1)
    return xi, fwd, bwd


def lt_space_integral(f: Integrand, path, component: int, s: float, t: float,
                      xi_min: float | None = None) -> float:
    """``int_0^s int_0^t int f dL`` through the forward/backward representation.

    ``sum_{xi_i in [xi_min, s)} [forward(f, xi_i, t) - backward(f, xi_i, t)] ds / xi_i``;
    the default cutoff is ``xi_min = 16 / m`` (at least one step).
    """
    g = path.grid
    I = g.s_index(s)
    if I == 0:
        raise GridError("s must be > 0")
    J = g.t_index(t)
    if xi_min is None:
        i0 = min(16, g.m)
    else:
        if not xi_min > 0:
            raise ValueError(f"xi_min must be > 0, got {xi_min!r}")
        i0 = g.s_index(xi_min)
    if i0 >= I or J == 0:
        return 0.0
    xi, fwd, bwd = _rows_lt_terms(f, path, component, i0, I, J)
    return float(np.sum((fwd - bwd) / xi) * g.ds)


def path_derivative_integral(f: Integrand, path, component: int, s: float, t: float,
                             key: str = "x") -> float:
    """Left-Riemann quadrature ``sum_{i<I, j<J} d_key f(s_i, t_j, W_ij) ds dt``."""
    g = path.grid
    I, J = g.s_index(s), g.t_index(t)
    if I == 0 or J == 0:
        return 0.0
    df = f.partial(key)
    vals = path.values[:I, :J, :]
    x = vals if getattr(f, "dim", 1) > 1 else vals[..., component]
    S = g.s_nodes[:I, None]
    T = g.t_nodes[None, :J]
    out = np.broadcast_to(np.asarray(df(S, T, x), dtype=float), (I, J))
    return float(np.sum(out) * g.ds * g.dt)


def normalization_crosscheck(path, component: int, s: float, x: float, t: float,
                             eps: float) -> dict:
    """Compare the two local-time normalizations on one line.

    Returns ``s * L(s,t;x)`` from the occupation estimator next to
    ``forward - backward`` of ``1{W <= x}``, which estimates the same
    quantity through the quadratic variation ``s dt``.
    """
    f = indicator_below(x)
    occ = line_local_time(path, component, s, XGrid.single(x, eps)).samples[0, path.grid.t_index(t)]
    fb = forward_integral(f, path, component, s, t) - backward_integral(f, path, component, s, t)
    return {"s_times_occupation": s * occ, "forward_minus_backward": fb,
            "difference": s * occ - fb}


# ------------------------------------------------------------- multi-d identity


def multidim_lt_identity_terms(f: Integrand, path, component: int, s: float, t: float,
                               t_cut: float | None = None, xi_min: float | None = None) -> dict:
    """Terms of the d-dimensional local-time identity along the lines s' < s.

    ``lhs = sum_{i<I, j<J} d_{x_c} f(xi_i, u_j, W_ij) ds dt`` and the right
    side is ``forward + B-term + drift + tail`` with

    * forward: ``-sum_xi sum_j f dW^c / xi ds``;
    * the reversed integral over u in [1-t, 1) is split at ``t_cut``.  On
      u < t_cut the reversed increments are replaced through the drift
      representation, giving ``-sum f dB^c / xi ds`` (B-term) and
      ``+sum f What^c / (xi (1-u)) du ds`` (drift, left end points); on
      u >= t_cut the singular drift is avoided and ``-sum f dWhat^c / xi ds``
      (tail) is used directly.

    Lines with ``xi < xi_min`` are skipped on the right (default: only the
    degenerate line xi = 0).
    """
    g = path.grid
    n = g.n
    I, J = g.s_index(s), g.t_index(t)
    if I == 0:
        raise GridError("s must be > 0")
    K = default_t_cut_index(n) if t_cut is None else g.t_index(t_cut)
    if K >= n:
        raise GridError("t_cut must be < 1: the drift 1/(1-u) is singular at u = 1")
    i0 = 1 if xi_min is None else max(1, g.s_index(xi_min))
    key = "x" if getattr(f, "dim", 1) == 1 else f"x{component}"
    lhs = path_derivative_integral(f, path, component, s, t, key=key)
    res = {"lhs": lhs, "forward": 0.0, "b_term": 0.0, "drift": 0.0, "tail": 0.0}
    if J == 0 or i0 >= I:
        res["rhs"] = 0.0
        res["residual"] = lhs
        return res
    xi, fwd, _ = _rows_lt_terms(f, path, component, i0, I, J)
    res["forward"] = -float(np.sum(fwd / xi) * g.ds)

    W = path.values[i0:I]                 # (rows, n+1, d)
    What = W[:, ::-1, :]                  # What[:, k] = W[:, n-k]
    ks = np.arange(n - J, n)              # reversed times u_k in [1-t, 1)
    times = g.t_nodes[n - ks]             # 1 - u_k as exact grid nodes
    xw = What[:, ks, :] if getattr(f, "dim", 1) > 1 else What[:, ks, component]
    F = np.broadcast_to(np.asarray(f(xi[:, None], times[None, :], xw), dtype=float), (I - i0, J))
    wc = What[..., component]
    dWhat = wc[:, ks + 1] - wc[:, ks]
    head = ks < K
    if np.any(head):
        kh = ks[head]
        u = kh / n
        drift_inc = wc[:, kh] / (1.0 - u)[None, :] * (1.0 / n)
        B = extract_reversal_drift(path, K / n)[i0:I, :, component]
        dB = B[:, kh + 1] - B[:, kh]
        Fh = F[:, head]
        res["b_term"] = -float(np.sum(np.sum(Fh * dB, axis=1) / xi) * g.ds)
        res["drift"] = float(np.sum(np.sum(Fh * drift_inc, axis=1) / xi) * g.ds)
    if np.any(~head):
        res["tail"] = -float(np.sum(np.sum(F[:, ~head] * dWhat[:, ~head], axis=1) / xi) * g.ds)
    res["rhs"] = res["forward"] + res["b_term"] + res["drift"] + res["tail"]
    res["residual"] = lhs - res["rhs"]
    return res


def multidim_lt_identity_residual(f: Integrand, path, component: int, s: float, t: float,
                                  t_cut: float | None = None, xi_min: float | None = None) -> float:
    """Residual ``lhs - rhs`` of :func:`multidim_lt_identity_terms`."""
    return multidim_lt_identity_terms(f, path, component, s, t, t_cut, xi_min)["residual"]
