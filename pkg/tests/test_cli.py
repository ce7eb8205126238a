import csv
import json

import pytest

from fracmin.cli import ConfigError, main, parse_config
from fracmin.geometry import read_field


def test_flag_overrides_file():
    cfg = parse_config("s: 0.5\nM: 1\n", {"M": 2.0}, command="minimize")
    assert cfg.M == 2.0


def test_unknown_key():
    with pytest.raises(ConfigError, match="'mm'.*line 2"):
        parse_config("s: 0.5\nmm: 3\n", command="minimize")


def test_missing_s():
    with pytest.raises(ConfigError, match=r"s required in \(0,1\)"):
        parse_config("M: 1\n", command="minimize")


def test_bad_yaml_reports_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("s: 0.5\n\tM: 1\n", command="minimize")


def test_bad_value():
    with pytest.raises(ConfigError, match="field 'M'"):
        parse_config("s: 0.5\nM: abc\n", command="minimize")


def test_unknown_command():
    with pytest.raises(ConfigError):
        parse_config("s: 0.5\n", command="explode")


def test_config_file_and_command(tmp_path):
    (tmp_path / "c.yaml").write_text("s: 0.5\nM: 1.0\nh: 0.25\n")
    out = tmp_path / "m.json"
    assert main(["minimize", "--config", str(tmp_path / "c.yaml"), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["regime"] == "Sticky" and rep["optimal"]


def test_missing_config_file(tmp_path):
    assert main(["minimize", "--config", str(tmp_path / "nope.yaml")]) == 3


def test_config_error_exit_code():
    assert main(["minimize", "--M", "1"]) == 2


def test_sweep_csv(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--s", "0.5", "--M-values", "0.5", "1.0", "--out", str(out)]) == 0
    with open(out) as fh:
        recs = list(csv.reader(fh))
    assert len(recs) == 3 and recs[0][0] == "M"


def test_minimize_dump_round_trip(tmp_path):
    dump = tmp_path / "f.txt"
    assert main(["minimize", "--s", "0.5", "--M", "3", "--h", "0.25", "--trunc-radius", "2",
                 "--dump", str(dump), "--out", str(tmp_path / "m.json")]) == 0
    text = dump.read_text()
    fld = read_field(dump)
    from fracmin.geometry import dumps_field

    assert dumps_field(fld) == text
    assert main(["energy", "--field", str(dump), "--out", str(tmp_path / "e.json")]) == 0
    e = json.loads((tmp_path / "e.json").read_text())
    m = json.loads((tmp_path / "m.json").read_text())
    assert e["total"] == pytest.approx(m["energy"]["total"], rel=1e-12)


def test_nmc_command(tmp_path):
    out = tmp_path / "n.json"
    assert main(["nmc", "--s", "0.5", "--shape", "halfspace", "--out", str(out)]) == 0
    assert abs(json.loads(out.read_text())["value"]) < 1e-10


def test_verify_command(tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify", "--instances", "5", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["passed"]


def test_cache_env(tmp_path, monkeypatch):
    monkeypatch.setenv("FRACMIN_CACHE_DIR", str(tmp_path / "cache"))
    assert main(["minimize", "--s", "0.5", "--M", "0.5", "--h", "0.25", "--out", str(tmp_path / "m.json")]) == 0
    assert any((tmp_path / "cache").iterdir())


def test_deterministic_outputs(tmp_path):
    for k in (1, 2):
        main(["sweep", "--s", "0.5", "--M-values", "1.0", "3.0", "--out", str(tmp_path / f"{k}.csv")])
    strip = lambda p: [r[:-1] for r in csv.reader(open(p))]  # wall_clock differs
    assert strip(tmp_path / "1.csv") == strip(tmp_path / "2.csv")
