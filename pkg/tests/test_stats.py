import math

import numpy as np
from hypothesis import given, settings, strategies as st

from sheetlab.stats import Moments, lower_confidence_bound, mc_aggregate, within_se


def test_constant_stream():
    assert mc_aggregate([2.5] * 10) == (2.5, 0.0, 10)


def test_alternating_stream_hand_computed():
    mean, se, n = mc_aggregate([0, 1, 0, 1])
    assert n == 4 and mean == 0.5
    assert math.isclose(se, math.sqrt(1 / 3) / 2, rel_tol=1e-15)


def test_single_replica_has_no_se():
    assert mc_aggregate([3.0]) == (3.0, None, 1)


def test_stable_for_large_offset():
    x = 1e9 + np.array([4.0, 7.0, 13.0, 16.0] * 1000)
    mean, se, n = mc_aggregate(x)
    assert mean == 1e9 + 10.0
    assert math.isclose(se * math.sqrt(n), np.std(x - 1e9, ddof=1), rel_tol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=300), st.integers(1, 299))
def test_merge_matches_direct(xs, cut):
    cut = min(cut, len(xs) - 1)
    a = b = Moments()
    for v in xs[:cut]:
        a = a.push(v)
    for v in xs[cut:]:
        b = b.push(v)
    m = a.merge(b)
    assert m.count == len(xs)
    assert math.isclose(m.mean, np.mean(xs), rel_tol=1e-9, abs_tol=1e-6)
    assert math.isclose(m.m2, np.var(xs) * len(xs), rel_tol=1e-7, abs_tol=1e-3)


def test_within_se_and_lcb():
    assert within_se(0.29, 0.1) and not within_se(0.31, 0.1)
    assert not within_se(0.0, None)
    assert lower_confidence_bound(1.0, 0.1) == 1.0 - 0.16448536269514722
