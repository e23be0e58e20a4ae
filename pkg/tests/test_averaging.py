import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sheetlab import averaging as av
from sheetlab.sheet import GridError, GridSpec, lines_as_sheet, replica_seed, sample_lines, sample_sheet

FLOOR = av.floor_drift()
SIGN = av.sign_drift()
STEP = av.random_step_drift(3)


@pytest.fixture(scope="module")
def path():
    return sample_sheet(GridSpec(16, 256), 1, seed=8)


# ------------------------------------------------------------- drift functions


def test_drift_bound_is_enforced():
    with pytest.raises(av.DriftBoundError):
        FLOOR.scaled(2.0)
    with pytest.raises(av.DriftBoundError):
        av.DriftFunction(lambda t, x: 1.5 + 0 * x[..., 0], "too-big")
    assert SIGN.scaled(0.5)(0.0, np.array([[2.0]]))[0] == 0.5


def test_builtin_drifts_respect_bound():
    x = np.linspace(-5, 5, 1001)[:, None]
    t = np.linspace(0, 1, 1001)
    for b in (FLOOR, SIGN, STEP, av.lipschitz_drift(), av.constant_drift(-1.0)):
        assert np.max(np.abs(b(t, x))) <= 1.0
    assert np.array_equal(FLOOR(t, x), np.clip(np.floor(x[:, 0]), -1, 1))
    assert av.make_drift("constant", c=0.5)(0.0, np.zeros((1, 1)))[0] == 0.5
    with pytest.raises(ValueError):
        av.make_drift("nope")


def test_log_plus():
    assert av.log_plus(0.5) == 0.0 and av.log_plus(1.0) == 0.0
    assert av.log_plus(math.e) == pytest.approx(1.0)


# ------------------------------------------------------------- averaging transform


def test_constant_drift_gives_c_times_length(path):
    for c in (0.0, 0.25, -0.75, 1.0):
        assert av.averaging_transform(av.constant_drift(c), path, (0.25, 0.75), 1.0, 0.3) == c * 0.5
    v = av.averaging_transform(av.constant_drift(0.3), path, (0.0, 1.0), 0.5, 0.0)
    assert abs(v - 0.3) < 1e-15


def test_misaligned_interval_rejected(path):
    with pytest.raises(GridError):
        av.averaging_transform(FLOOR, path, (0.1, 0.5), 1.0, 0.0)
    with pytest.raises(GridError):
        av.averaging_transform(FLOOR, path, (0.0, 0.5), 0.0, 0.0)


def test_positive_half_line_indicator_symmetry():
    b = av.DriftFunction(lambda t, x: (x[..., 0] > 0).astype(float), "1{x>0}")
    vals = [av.averaging_transform(b, sample_lines([1.0], 64, 1, replica_seed(2, r)), (0.0, 1.0), 1.0, 0.0)
            for r in range(10000)]
    m, se = np.mean(vals), np.std(vals, ddof=1) / 100
    assert abs(m - 0.5) < 3 * se


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([FLOOR, SIGN, STEP]), st.integers(0, 255), st.integers(0, 256),
       st.sampled_from([1 / 16, 0.5, 1.0]), st.floats(-2, 2))
def test_length_bound(path, b, k0, k1, s, x):
    a, c = sorted((k0, k1))
    I = (a / 256, c / 256)
    assert abs(av.averaging_transform(b, path, I, s, x)) <= I[1] - I[0]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([FLOOR, SIGN]), st.integers(0, 256), st.integers(0, 256), st.integers(0, 256),
       st.floats(-2, 2))
def test_interval_additivity_exact(path, b, a, m, c, x):
    a, m, c = sorted((a, m, c))
    whole = av.averaging_transform(b, path, (a / 256, c / 256), 0.5, x)
    parts = (av.averaging_transform(b, path, (a / 256, m / 256), 0.5, x)
             + av.averaging_transform(b, path, (m / 256, c / 256), 0.5, x))
    assert whole == parts


def test_interval_additivity_general_drift_to_rounding(path):
    whole = av.averaging_transform(STEP, path, (0.0, 1.0), 0.5, 0.2)
    parts = sum(av.averaging_transform(STEP, path, (k / 8, (k + 1) / 8), 0.5, 0.2) for k in range(8))
    assert abs(whole - parts) < 1e-14


# ---------------------------------------------------------------------- rho


def test_rho_trivial_and_bounds(path):
    p = (0.5, 0.1)
    assert av.rho(FLOOR, path, 3, 2, p, p) == 0.0
    assert av.rho(av.constant_drift(0.7), path, 3, 2, p, (1.0, -0.4)) == 0.0
    for n in range(0, 9):
        for k in range(0, 2**n, max(1, 2**n // 4)):
            assert abs(av.rho(SIGN, path, n, k, (0.25, -0.3), (1.0, 0.2))) <= 2 * 2.0**-n


def test_rho_resolution_error_names_max_level(path):
    with pytest.raises(GridError, match="max feasible n is 8"):
        av.rho(FLOOR, path, 9, 0, (0.5, 0.0), (1.0, 0.0))
    with pytest.raises(ValueError):
        av.rho(FLOOR, path, 2, 4, (0.5, 0.0), (1.0, 0.0))
    assert av.max_feasible_level(96) == 5


def test_rho_additivity_exact(path):
    p1, p2, p3 = (0.25, -0.2), (0.5, 0.4), (1.0, 0.05)
    for b in (FLOOR, SIGN):
        for n, k in ((0, 0), (3, 5), (8, 200)):
            assert av.rho(b, path, n, k, p1, p3) == av.rho(b, path, n, k, p1, p2) + av.rho(b, path, n, k, p2, p3)


def test_statistics_ignore_constant_shift(path):
    shifted = FLOOR.shifted(0.25)
    for n, k in ((0, 0), (4, 9)):
        assert av.rho(shifted, path, n, k, (0.5, 0.0), (1.0, 0.3)) == av.rho(FLOOR, path, n, k, (0.5, 0.0), (1.0, 0.3))
    big = sample_sheet(GridSpec(16, 64), 1, 4)
    assert av.modulus_scan(shifted, big, 2, 50, seed=1).c0 == av.modulus_scan(FLOOR, big, 2, 50, seed=1).c0
    a = av.tail_curve(shifted, 300, 0.25, 0.75, 0.5, 0.75, 0.0, 0.1, [0.0, 0.5, 1.0], seed=2, n_t=64)
    b = av.tail_curve(FLOOR, 300, 0.25, 0.75, 0.5, 0.75, 0.0, 0.1, [0.0, 0.5, 1.0], seed=2, n_t=64)
    assert np.array_equal(a.counts, b.counts)


# ----------------------------------------------------------- moments and tails


def test_moments_trivial_cases():
    rep = av.exp_moment_estimate(av.constant_drift(0.0), 200, 0.25, 0.5, 0.5, 1.0, 0.1, [0.0, 1.0, 50.0], seed=1,
                                 n_t=64)
    assert np.all(rep.moments == 1.0) and rep.stable.all()
    rep = av.exp_moment_estimate(SIGN, 200, 0.25, 0.5, 0.5, 1.0, 0.1, [0.0, 1.0], seed=1, n_t=64)
    assert rep.moments[0] == 1.0
    with pytest.raises(ValueError):
        av.exp_moment_estimate(SIGN, 10, 0.0, 0.5, 1.0, 1.0, 0.0, [1.0])
    with pytest.raises(ValueError):
        av.exp_moment_estimate(SIGN, 10, 0.0, 0.5, 1.0, 0.5, 0.1, [1.0])


def test_moment_overflow_is_unstable_not_an_error():
    rep = av.exp_moment_estimate(SIGN, 200, 0.0, 1.0, 0.01, 1.0, 0.0, [1e6], seed=2, n_t=64)
    assert not rep.stable[0]


def test_sign_drift_moments_small_alpha():
    b = av.sign_drift(dim=2)
    rep = av.exp_moment_estimate(b, 10000, 0.25, 0.5, 1.0, 1.0, 0.1, [0.0, 0.05, 0.1], seed=3, n_t=64)
    assert rep.stable.all() and np.all(np.isfinite(rep.moments)) and np.all(rep.moments < 10)
    assert rep.largest_stable_alpha == 0.1


def test_tail_trivial_cases():
    etas = np.linspace(0, 3, 16)
    zero = av.tail_curve(av.constant_drift(0.0), 300, 0.25, 0.75, 0.5, 0.75, 0.0, 0.1, etas, seed=1, n_t=64)
    assert np.all(zero.counts[1:] == 0) and zero.slope is None
    rep = av.tail_curve(FLOOR, 2000, 0.25, 0.75, 0.5, 0.75, 0.0, 0.1, etas, seed=1, n_t=64)
    assert np.all(np.diff(rep.counts) <= 0)
    assert np.all(rep.counts[etas > rep.cutoff] == 0)
    assert np.all((0 <= rep.p_hat) & (rep.p_hat <= 1))
    assert rep.cutoff == pytest.approx(math.sqrt(0.5) * 2 * 0.5 / (math.sqrt(0.5) * (0.1 + 0.5)))


def test_log_tail_fit_recovers_known_slope():
    etas = np.linspace(0.0, 4.0, 21)
    counts = np.round(1e6 * 0.8 * np.exp(-1.5 * etas))
    slope, se, icpt, npts = av.fit_log_tail(etas, counts, 10**6)
    assert slope == pytest.approx(-1.5, abs=1e-3) and math.exp(icpt) == pytest.approx(0.8, rel=1e-3)
    assert npts == 21 and se > 0
    assert av.fit_log_tail([0, 1], [5, 0], 10)[0] is None


# ------------------------------------------------------------------- modulus


def test_dyadic_quadruples_are_valid_and_nested():
    s, s2, x, x2 = av.dyadic_quadruples(3, 500, seed=4, dim=2)
    assert np.all(s <= s2) and np.all((s > 0) & (s2 <= 1))
    assert np.all(np.abs(s * 64 - np.round(s * 64)) == 0) and np.all(np.abs(x * 8 - np.round(x * 8)) == 0)
    assert np.all(np.abs(x) <= 1) and np.all(np.abs(x2) <= 1)
    assert not np.any((s == s2) & np.all(x == x2, axis=1))
    again = av.dyadic_quadruples(3, 500, seed=4, dim=2)
    assert all(np.array_equal(a, b) for a, b in zip((s, s2, x, x2), again))


def test_modulus_constant_drift_zero_and_depth_monotone():
    p = sample_sheet(GridSpec(256, 64), 1, 6)
    assert av.modulus_scan(av.constant_drift(0.4), p, 3, 100).c0 == 0.0
    r3 = av.modulus_scan(FLOOR, p, 3, 300, seed=2)
    r4 = av.modulus_scan(FLOOR, p, 4, 300, seed=2)
    assert r4.c0 >= r3.c0 and [r4.per_level[k] for k in (1, 2, 3)] == [r3.per_level[k] for k in (1, 2, 3)]
    assert np.isfinite(r4.c0) and r4.argmax["level"] in r4.per_level


def test_interval_modulus_check(path):
    pairs = [((0.5, 0.0), (1.0, 0.2)), ((0.25, -0.1), (0.25, 0.3))]
    assert av.interval_modulus_check(av.constant_drift(0.9), path, (0.0, 0.5), pairs) == 0.0
    I = (3 / 256, 4 / 256)
    ratio = av.interval_modulus_check(SIGN, path, I, pairs)
    bound = 0.0
    for (s, x), (s2, x2) in pairs:
        D = abs(x2 - x) + math.sqrt(abs(s2 - s))
        den = math.sqrt(I[1] - I[0]) * (1 + float(av.log_plus(1 / (D * (I[1] - I[0]))))) * D
        bound = max(bound, 2 * (I[1] - I[0]) * math.sqrt(s) / den)
    assert ratio <= bound


def test_interval_modulus_refinement_stability():
    pairs = [((0.5, 0.0), (0.75, 0.1)), ((1.0, -0.2), (1.0, 0.2)), ((0.25, 0.3), (0.5, 0.3))]
    s_vals = [0.25, 0.5, 0.75, 1.0]

    def p95(n, seed):
        vals = [av.interval_modulus_check(FLOOR, sample_lines(s_vals, n, 1, replica_seed(seed, r)), (0.25, 0.5),
                                          pairs) for r in range(100)]
        return np.quantile(vals, 0.95)

    a, b = p95(2**10, 1), p95(2**12, 2)
    assert abs(b - a) / a < 0.2


def test_integrated_modulus_check():
    p = sample_sheet(GridSpec(64, 64), 1, 3)
    assert av.integrated_modulus_check(av.constant_drift(0.2), p, 2, [(0.0, 0.3)]) == 0.0
    v = av.integrated_modulus_check(FLOOR, p, 2, [(0.0, 0.3), (-0.5, 0.25)])
    assert np.isfinite(v) and v >= 0
    with pytest.raises(GridError):
        av.integrated_modulus_check(FLOOR, p, 7, [(0.0, 0.3)])


# ---------------------------------------------------------------- occupation


def test_occupation_trivial_sets(path):
    assert av.occupation_open_set(av.BoxSet(()), path, [1.0], [0.0]) == 0.0
    whole = av.BoxSet((((-1.0, 2.0), ((-np.inf, np.inf),)),))
    assert av.occupation_open_set(whole, path, [0.25, 1.0], [0.0, 0.5]) == 1.0


def test_box_measure():
    U = av.BoxSet((((0.0, 0.5), ((0.0, 1.0),)), ((0.25, 1.0), ((0.5, 2.0),))))
    assert U.measure() == pytest.approx(0.5 + 1.125 - 0.125)
    assert av.BoxSet(()).measure() == 0.0


# ------------------------------------------------------------ regularization


def test_regularization_probe_constant_sequence(path):
    rows = av.regularization_probe(FLOOR, path, (0.5, 0.2), [(0.5, 0.2)] * 4)
    assert all(r[-1] == 0.0 and r[3] == 0.0 for r in rows)
    assert av.probe_passes(rows, 0.0)


def test_regularization_lipschitz_bound():
    lip = av.lipschitz_drift()
    s, x = 0.5, 0.1
    seq = [(s * (1 - 4.0**-q), x + 2.0**-q) for q in range(1, 9)]
    for r in range(20):
        lines = sample_lines([s] + [a for a, _ in seq], 1024, 1, replica_seed(5, r))
        for q, sq, xq, dist, diff in av.regularization_probe(lip, lines, (s, x), seq):
            bound = abs(xq[0] - x) + np.max(np.abs(lines.line(sq) - lines.line(s)))
            assert diff <= bound + 1e-12


def test_regularization_floor_pass_rate():
    s, x = 0.5, 0.3
    seq = [(s * (1 - 4.0**-q), x + 2.0**-q) for q in range(1, 11)]
    ok = 0
    for r in range(100):
        lines = sample_lines([s] + [a for a, _ in seq], 4096, 1, replica_seed(6, r))
        ok += av.probe_passes(av.regularization_probe(FLOOR, lines, (s, x), seq), 0.01)
    assert ok >= 95


# ------------------------------------------------------------ counterexample


def test_counterexample_values_and_runtime():
    t0 = time.perf_counter()
    rep = av.counterexample_demo()
    assert time.perf_counter() - t0 < 1.0
    assert rep.value_at_1 == 1.0
    assert rep.limit_estimate <= 1e-6
    assert rep.naive_limit == 1.0
    assert rep.table[-1][0] == 10**6 and all(v == 0.0 for _, _, v in rep.table)


def test_counterexample_half_line_is_zero():
    t = (np.arange(64) + 0.5) / 64
    assert np.all(av._floor_w(0.5, t) == 0.0)
    assert np.all(av._floor_w(1.0, t) == 1.0)
    assert av._floor_w(0.3, 0.0) == 1.0
