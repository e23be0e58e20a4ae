import json

import numpy as np
import pytest

from sheetlab.io import MAGIC, canonical_json, csv_text, dump_path, load_path, path_from_bytes, path_to_bytes
from sheetlab.sheet import GridSpec, sample_sheet


def test_binary_round_trip(tmp_path):
    p = sample_sheet(GridSpec(5, 7), 2, seed=2**63 + 5)
    q = load_path(dump_path(p, tmp_path / "w.shtl"))
    assert q.grid == p.grid and q.dim == p.dim and q.seed == p.seed
    assert np.array_equal(q.values, p.values)


def test_header_layout():
    p = sample_sheet(GridSpec(2, 3), 1, seed=9)
    buf = path_to_bytes(p)
    assert buf[:4] == MAGIC
    assert len(buf) == 4 + 4 * 4 + 8 + 8 * 3 * 4


def test_corrupt_buffers_rejected():
    buf = path_to_bytes(sample_sheet(GridSpec(2, 2), 1, 1))
    with pytest.raises(ValueError, match="magic"):
        path_from_bytes(b"XXXX" + buf[4:])
    with pytest.raises(ValueError, match="payload"):
        path_from_bytes(buf[:-8])
    with pytest.raises(ValueError):
        path_from_bytes(b"SH")


def test_dump_reports_path_on_failure(tmp_path):
    p = sample_sheet(GridSpec(2, 2), 1, 1)
    with pytest.raises(OSError, match="missing"):
        dump_path(p, tmp_path / "missing" / "x.shtl")


def test_csv_text_is_deterministic():
    text = csv_text(["a", "b", "c"], [(0.1, True, 3), (np.float64(1e-300), False, np.int64(2))])
    assert text == "a,b,c\n0.1,true,3\n1e-300,false,2\n"


def test_canonical_json_sorts_keys():
    assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'
    assert json.loads(canonical_json({"x": 0.1})) == {"x": 0.1}
