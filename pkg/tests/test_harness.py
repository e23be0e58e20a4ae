import json
import math

import numpy as np
import pytest

from sheetlab.harness import (EXPERIMENTS, OUTPUT_ENV, ConfigError, ExperimentConfig, MCReport, Statistic, Table,
                              dump_config, emit_report, gate, load_config, output_dir_for, resolve_config,
                              run_experiment)
from sheetlab.stats import Moments, mc_aggregate

from small_configs import SMALL, small


def test_every_experiment_has_a_small_config():
    resolve_config(ExperimentConfig("counterexample"))
    assert set(SMALL) == set(EXPERIMENTS)


@pytest.mark.parametrize("bad", [
    dict(experiment="ito", replicas=0),
    dict(experiment="ito", n=-4),
    dict(experiment="no-such-thing"),
    dict(experiment="ito", params={"bogus": 1}),
    dict(experiment="ito", tolerances={"bogus": 1}),
    dict(experiment="ito", seed=-1),
])
def test_invalid_configs_rejected_before_sampling(bad):
    with pytest.raises(ConfigError):
        resolve_config(ExperimentConfig(**bad))


@pytest.mark.parametrize("data", [
    {"experiment": "ito", "colour": "red"},
    {"m": 4},
    {"experiment": "ito", "m": 2.5},
    {"experiment": "ito", "replicas": True},
    {"experiment": "ito", "params": [1, 2]},
    [1, 2, 3],
])
def test_from_dict_rejects_malformed(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_infeasible_grid_rejected():
    with pytest.raises(ConfigError):
        resolve_config(ExperimentConfig("davie-tail", n=6))
    with pytest.raises(ConfigError):
        resolve_config(ExperimentConfig("modulus", m=1000))


def test_config_yaml_round_trip(tmp_path):
    cfg = ExperimentConfig("lt-space", m=64, n=128, replicas=7, seed=3, params={"s": 0.5},
                           tolerances={"k_se": 2.0}, output_dir="out")
    path = tmp_path / "c.yaml"
    dump_config(cfg, path)
    assert load_config(path) == cfg
    (tmp_path / "broken.yaml").write_text("experiment: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "broken.yaml")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_hash_sensitivity():
    base = ExperimentConfig("ito", m=32, n=32, replicas=4, seed=1, params={"s": 1.0})
    variants = [
        ExperimentConfig("ito", m=64, n=32, replicas=4, seed=1, params={"s": 1.0}),
        ExperimentConfig("ito", m=32, n=32, replicas=5, seed=1, params={"s": 1.0}),
        ExperimentConfig("ito", m=32, n=32, replicas=4, seed=2, params={"s": 1.0}),
        ExperimentConfig("ito", m=32, n=32, replicas=4, seed=1, params={"s": 0.5}),
        ExperimentConfig("ito", m=32, n=32, replicas=4, seed=1, params={"s": 1.0}, tolerances={"k_se": 2.0}),
        ExperimentConfig("lt-space", m=32, n=32, replicas=4, seed=1, params={"s": 1.0}),
    ]
    hashes = {v.hash() for v in variants}
    assert len(hashes) == len(variants) and base.hash() not in hashes
    assert ExperimentConfig("ito", m=32, n=32, replicas=4, seed=1, params={"s": 1.0}, output_dir="x").hash() \
        == base.hash()


def test_mc_aggregate_examples():
    assert mc_aggregate([1.0, 2.0, 3.0]) == (2.0, pytest.approx(math.sqrt(1 / 3)), 3)
    mean, se, count = mc_aggregate([5.0])
    assert (mean, se, count) == (5.0, None, 1)
    mean, se, count = mc_aggregate([])
    assert math.isnan(mean) and se is None and count == 0
    x = np.random.default_rng(0).normal(1e8, 1.0, 100000)
    mean, se, count = mc_aggregate(x)
    assert mean == pytest.approx(np.mean(x), abs=1e-7) and se == pytest.approx(np.std(x, ddof=1) / np.sqrt(1e5))


def test_moments_merge_matches_single_pass():
    x = np.random.default_rng(1).normal(size=300)
    a = Moments()
    for v in x:
        a = a.push(float(v))
    b = Moments()
    for v in x[:100]:
        b = b.push(float(v))
    c = Moments()
    for v in x[100:]:
        c = c.push(float(v))
    m = b.merge(c)
    assert m.count == a.count and m.mean == pytest.approx(a.mean, abs=1e-14) and m.m2 == pytest.approx(a.m2)


def test_gate_comparators():
    assert gate("a", 0.5, "<", 1.0).passed
    assert not gate("a", 1.0, "<", 1.0).passed
    assert gate("a", 1.0, "<=", 1.0).passed
    assert gate("a", 1.0, "==", 1.0).passed
    assert gate("a", 2.0, ">", 1.0).passed and gate("a", 1.0, ">=", 1.0).passed
    assert gate("a", 0.2, "within_se", 3.0, se=0.1).passed
    assert not gate("a", 0.4, "within_se", 3.0, se=0.1).passed
    assert not gate("a", 0.0, "within_se", 3.0).passed
    assert not gate("a", float("nan"), "<", 1.0).passed
    assert gate("a", 1.0).passed is None
    with pytest.raises(ValueError):
        gate("a", 1.0, "~", 1.0)


def _report(stats=(), tables=None):
    cfg = ExperimentConfig("ito", m=1, n=1, replicas=1)
    return MCReport("ito", cfg.to_dict(), cfg.hash(), tuple(stats), tables or {}, 1.5)


def test_empty_report_emits_header_and_valid_json(tmp_path):
    rep = _report()
    emit_report(rep, tmp_path)
    assert (tmp_path / "ito.csv").read_text() == "name,estimate,se,count,comparator,threshold,passed\n"
    d = json.loads((tmp_path / "ito.json").read_text())
    assert d["statistics"] == [] and d["passed"] is True and d["schema_version"] == 1
    assert json.loads((tmp_path / "ito.timing.json").read_text())["wall_clock_s"] == 1.5


def test_report_json_round_trip():
    rep = _report([gate("x", 0.25, "<", 1.0, se=0.01, count=10), Statistic("y", 3.0)],
                  {"curve": Table.of(["a", "b"], [[1, 2.5], [2, np.float64(0.125)]])})
    back = MCReport.from_json(rep.to_json())
    assert back == rep and back.to_json() == rep.to_json()
    with pytest.raises(ValueError):
        MCReport.from_json(json.dumps({**json.loads(rep.to_json()), "schema_version": 99}))


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_report(_report(), tmp_path, ["xml"])


@pytest.mark.parametrize("name", sorted(SMALL))
def test_reruns_are_byte_identical(name, tmp_path):
    cfg = small(name)
    run_experiment(cfg, emit=True, out_dir=tmp_path / "a")
    run_experiment(cfg, emit=True, out_dir=tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert f"{name}.json" in files and f"{name}.csv" in files
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for f in files:
        if f.endswith(".timing.json"):
            continue
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_report_embeds_resolved_config():
    rep = run_experiment(small("counterexample"))
    assert rep.config["params"]["q_max"] == 1000 and rep.config["params"]["n_quad"] == 64
    assert rep.config_hash == resolve_config(small("counterexample")).hash()
    assert rep.wall_clock is not None and rep.passed


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = ExperimentConfig("counterexample", output_dir=str(tmp_path / "cfg"))
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    assert output_dir_for(cfg) == tmp_path / "cfg"
    assert output_dir_for(ExperimentConfig("counterexample")).name == "sheetlab-out"
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert output_dir_for(cfg) == tmp_path / "env"
    assert output_dir_for(cfg, tmp_path / "flag") == tmp_path / "flag"
    run_experiment(cfg, emit=True)
    assert (tmp_path / "env" / "counterexample.json").exists()
    assert not (tmp_path / "cfg").exists()


def test_doubling_replicas_is_consistent():
    a = run_experiment(small("lt-space", replicas=50)).statistic("mean_sum")
    b = run_experiment(small("lt-space", replicas=100, seed=1)).statistic("mean_sum")
    assert abs(a.estimate - b.estimate) <= 3 * math.hypot(a.se, b.se)
    assert b.count == 100 and a.count == 50
