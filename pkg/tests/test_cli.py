import json

import pytest

from sheetlab.cli import main, parse_grids
from sheetlab.harness import ConfigError, ExperimentConfig, dump_config


def test_parse_grids():
    assert parse_grids("2^8,2^10, 4096") == [256, 1024, 4096]
    for bad in ("", "2^x", "0", "a,b"):
        with pytest.raises(ConfigError):
            parse_grids(bad)


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for name in ("tanaka", "ito", "davie-tail", "counterexample", "modulus"):
        assert name in out


def test_demo_counterexample(capsys, tmp_path):
    assert main(["demo", "counterexample", "--q", "1000", "--output-dir", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out
    assert json.loads((tmp_path / "counterexample.json").read_text())["passed"] is True


def test_run_pass_and_fail_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.yaml"
    dump_config(ExperimentConfig("counterexample", params={"q_max": 1000}), good)
    assert main(["run", str(good), "--output-dir", str(tmp_path / "o"), "--format", "json"]) == 0
    assert (tmp_path / "o" / "counterexample.json").exists()
    assert not (tmp_path / "o" / "counterexample.csv").exists()
    strict = tmp_path / "strict.yaml"
    dump_config(ExperimentConfig("counterexample", params={"q_max": 1000}, tolerances={"limit_max": -1.0}), strict)
    assert main(["run", str(strict), "--output-dir", str(tmp_path / "o2")]) == 1


def test_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: ito\nreplicas: 0\n")
    assert main(["run", str(bad)]) == 2
    assert "replicas" in capsys.readouterr().err
    (tmp_path / "junk.yaml").write_text("experiment: nope\n")
    assert main(["run", str(tmp_path / "junk.yaml")]) == 2
    assert main(["run", str(tmp_path / "absent.yaml")]) == 2


def test_replicas_override(tmp_path):
    cfg = tmp_path / "c.yaml"
    dump_config(ExperimentConfig("regularization", n=1024, replicas=5), cfg)
    main(["run", str(cfg), "--replicas", "3", "--output-dir", str(tmp_path)])
    assert json.loads((tmp_path / "regularization.json").read_text())["config"]["replicas"] == 3


def test_convergence_command(tmp_path, capsys):
    code = main(["convergence", "lt-space", "--grids", "2^5,2^6", "--replicas", "3", "--output-dir", str(tmp_path)])
    assert code in (0, 1)
    root = tmp_path / "lt-space-convergence"
    for g in (32, 64):
        d = json.loads((root / f"grid_{g}" / "lt-space.json").read_text())
        assert d["config"]["m"] == g and d["config"]["n"] == g
    assert main(["convergence", "ito", "--grids", "2^x"]) == 2
