import json

import numpy as np
import pytest

from sheetlab.localtime import (XGrid, default_bandwidth, line2_local_time, line_local_time, occupation_total,
                                plane_local_time, reversed_lt_check, slab_discrepancy, tanaka_residual,
                                tanaka_terms)
from sheetlab.sheet import GridError, GridSpec, lines_as_sheet, replica_seed, sample_lines, sample_sheet


@pytest.fixture(scope="module")
def path():
    return sample_sheet(GridSpec(64, 128), 2, seed=21)


def test_xgrid_centres_and_validation():
    g = XGrid(-1.0, 1.0, 4, 0.1)
    assert np.allclose(g.centers, [-0.75, -0.25, 0.25, 0.75])
    assert g.bin_of_center(0.25) == 2
    with pytest.raises(GridError):
        g.bin_of_center(0.3)
    for bad in ((1.0, 0.0, 2, 0.1), (0.0, 1.0, 0, 0.1), (0.0, 1.0, 2, 0.0)):
        with pytest.raises(ValueError):
            XGrid(*bad)


def test_bandwidth_schedule():
    assert default_bandwidth(2**12) == 0.125
    assert default_bandwidth(16, c=2.0) == 1.0


def test_line_local_time_far_level_is_zero(path):
    top = np.abs(path.values[..., 0]).max()
    L = line_local_time(path, 0, 0.5, XGrid.single(top + 1.0, 0.1))
    assert np.all(L.samples == 0)


def test_saturated_window_gives_elapsed_time(path):
    eps = np.abs(path.values[..., 0]).max() + 1.0
    L = line_local_time(path, 0, 1.0, XGrid.single(0.0, eps))
    assert np.allclose(L.samples[0], path.grid.t_nodes / (2 * eps), rtol=0, atol=1e-15)
    P = plane_local_time(path, 0, XGrid.single(0.0, eps))
    S, T = np.meshgrid(path.grid.s_nodes, path.grid.t_nodes, indexing="ij")
    assert np.allclose(P.samples[0], S * T / (2 * eps), rtol=0, atol=1e-15)


def test_fields_nonnegative_and_monotone(path):
    xg = XGrid(-1, 1, 9, 0.1)
    for F in (line_local_time(path, 1, 0.5, xg), line2_local_time(path, 1, 0.25, xg)):
        assert np.all(F.samples >= 0)
        assert np.all(np.diff(F.samples, axis=-1) >= 0)
    P = plane_local_time(path, 1, xg, s_stride=4, t_stride=8)
    assert np.all(np.diff(P.samples, axis=1) >= 0) and np.all(np.diff(P.samples, axis=2) >= 0)
    assert P.s_index[-1] == path.grid.m and P.t_index[-1] == path.grid.n


def test_degenerate_lines_rejected(path):
    xg = XGrid(-1, 1, 3, 0.1)
    with pytest.raises(GridError):
        line_local_time(path, 0, 0.0, xg)
    with pytest.raises(GridError):
        line2_local_time(path, 0, 0.0, xg)


def test_occupation_total_recovers_elapsed_time():
    p = lines_as_sheet(sample_lines([1.0], 2**14, 1, 5))
    top = np.abs(p.values).max() + 0.2
    eps = 0.05
    xg = XGrid(-top, top, int(round(2 * top / eps)), eps)
    assert xg.dx <= eps
    total = occupation_total(line_local_time(p, 0, 1.0, xg))
    assert abs(total[-1] - 1.0) < 0.02


def test_tanaka_trivial_cases(path):
    for x in (-0.3, 0.0, 0.4):
        assert tanaka_residual(path, 0, 0.5, x, 0.0, 0.1) == 0.0
    top = np.abs(path.values[..., 0]).max() + 1.0
    assert abs(tanaka_residual(path, 0, 0.5, top, 1.0, 0.1)) < 1e-14


def test_tanaka_terms_structure(path):
    t = tanaka_terms(path, 0, 1.0, 0.0, 1.0, 0.2)
    assert t["residual"] == t["lhs"] - t["rhs"]
    assert t["local_time"] >= 0


def test_tanaka_residual_shrinks_with_refinement():
    def mean_abs(n):
        return np.mean([abs(tanaka_residual(lines_as_sheet(sample_lines([1.0], n, 1, replica_seed(3, r))), 0, 1.0,
                                            0.0, 1.0, default_bandwidth(n))) for r in range(200)])

    assert mean_abs(2**14) < mean_abs(2**8)


def test_reversed_check_conventions(path):
    g = path.grid
    for s in (0.25, 1.0):
        assert reversed_lt_check(path, 0, s, 0.0, 1.0, 0.1) == 0.0
        assert reversed_lt_check(path, 0, s, 0.0, 0.0, 0.1) == 0.0
        for x in (-0.2, 0.0, 0.1):
            assert abs(reversed_lt_check(path, 0, s, x, 0.5, 0.1)) < 1e-12
            left = reversed_lt_check(path, 0, s, x, 0.5, 0.1, convention="left")
            assert abs(left) <= g.dt / (2 * 0.1) + 1e-15
    with pytest.raises(ValueError):
        reversed_lt_check(path, 0, 1.0, 0.0, 0.5, 0.1, convention="middle")


def test_slab_identity_small_grid():
    p = sample_sheet(GridSpec(256, 256), 1, 4)
    xg = XGrid(-1.0, 1.0, 5, 0.1)
    for route in ("line1", "line2"):
        num, den = slab_discrepancy(p, 0, xg, route=route)
        hit = den > 0
        assert np.all(num[~hit] == 0)
        assert np.all(num[hit] / den[hit] < 0.2)


def test_export_csv_and_sidecar(tmp_path, path):
    F = line_local_time(path, 0, 0.5, XGrid(-1, 1, 2, 0.1))
    c, j = F.export(tmp_path / "lt")
    lines = c.read_text().splitlines()
    assert lines[0] == "x,t,value"
    assert len(lines) == 1 + 2 * (path.grid.n + 1)
    meta = json.loads(j.read_text())
    assert meta["kind"] == "line1"
    P = plane_local_time(path, 0, XGrid(-1, 1, 2, 0.1), 16, 16)
    c2, _ = P.export(tmp_path / "plane")
    assert c2.read_text().splitlines()[0] == "x,t,s,value"
