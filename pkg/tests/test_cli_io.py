import hashlib
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dwnls.cli_io import SCHEMAS, load_config, parse_range, read_csv, run, write_csv, write_json
from dwnls.errors import ValidationError


@settings(max_examples=50, deadline=None)
@given(vals=st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_csv_round_trip_is_bit_exact(tmp_path_factory, vals):
    path = tmp_path_factory.mktemp("csv") / "b.csv"
    rows = [{"rho0": v, "rho1": -v, "omega": v * 3, "mass": abs(v), "residual": 0.0} for v in vals]
    write_csv(path, rows, "branch")
    back = read_csv(path)
    for r, b in zip(rows, back):
        for k in r:
            assert b[k] == r[k] and math.copysign(1, b[k]) == math.copysign(1, r[k])


def test_header_carries_units(tmp_path):
    write_csv(tmp_path / "m.csv", [], "modulation")
    text = (tmp_path / "m.csv").read_text()
    assert text == "t[time],omega[energy],theta[rad],abs_z[1],f_norm_loc[1],interior_mass[1]\n"


def test_schema_mismatch_is_loud(tmp_path):
    with pytest.raises(KeyError):
        write_csv(tmp_path / "x.csv", [{"rho0": 1.0}], "branch")


def test_json_is_sorted_and_exact(tmp_path):
    write_json(tmp_path / "a.json", {"b": 0.1 + 0.2, "a": float("nan")})
    d = json.loads((tmp_path / "a.json").read_text())
    assert d["b"] == 0.1 + 0.2 and d["a"] == "nan"


def test_every_schema_has_units():
    for name, cols in SCHEMAS.items():
        assert len({c for c, _ in cols}) == len(cols), name


def test_config_rejects_unknown_keys(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[grid]\nx_max_len = 20\nspacing = 0.1\n")
    with pytest.raises(ValidationError, match="unknown key"):
        load_config(p)
    p.write_text("[mesh]\nx = 1\n")
    with pytest.raises(ValidationError, match="unknown section"):
        load_config(p)
    with pytest.raises(ValidationError, match="unknown config key"):
        load_config(None, {"grid.h": "0.1"})


def test_config_validates_values(tmp_path):
    with pytest.raises(ValidationError):
        load_config(None, {"grid.n_nodes": "4"})
    with pytest.raises(ValidationError):
        load_config(None, {"potential.sigma_len": "-1"})
    with pytest.raises(ValidationError):
        load_config(None, {"fdsim.masses": "0.1,-2"})
    with pytest.raises(ValidationError):
        load_config(None, {"nlssim.dt_time": "abc"})
    cfg = load_config(None, {"potential.separation_len": "4"})
    assert cfg.potential["L"] == 4.0


def test_config_hash_tracks_content():
    assert load_config().digest() == load_config().digest()
    assert load_config().digest() != load_config(None, {"grid.n_nodes": "999"}).digest()


def test_parse_range():
    key, vals = parse_range("L=2:0.5:5")
    assert key == "potential.separation_len"
    assert vals == [2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]
    assert parse_range("grid.n_nodes=999,1999")[1] == [999.0, 1999.0]
    for bad in ("L", "L=1:0:2", "L=a:b:c", "L=3:1:2"):
        with pytest.raises(ValidationError):
            parse_range(bad)


def test_missing_config_exit_1(tmp_path, capsys):
    assert run(["spectrum", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")]) == 1
    assert "nope.ini" in capsys.readouterr().err


def test_unknown_subcommand_exit_1():
    assert run(["frobnicate"]) == 1


def test_numerical_failure_exit_2(tmp_path, capsys):
    # a shallow well binds one state only
    rc = run(["hypotheses", "--set", "potential.depth_energy=-0.05", "--set", "grid.n_nodes=399", "--out", str(tmp_path)])
    assert rc == 2
    assert "H1ViolationError" in capsys.readouterr().err


def test_stage_writes_manifest_last(tmp_path):
    out = tmp_path / "stage"
    assert run(["spectrum", "--set", "grid.n_nodes=399", "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    listed = {f["path"] for f in man["files"]}
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert listed == on_disk
    for f in man["files"]:
        assert hashlib.sha256((out / f["path"]).read_bytes()).hexdigest() == f["sha256"]
    assert "total" in man["timings"]


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DWNLS_OUTPUT_ROOT", str(tmp_path))
    assert run(["hypotheses", "--set", "grid.n_nodes=399"]) == 0
    assert (tmp_path / "hypotheses" / "hypotheses.json").is_file()


def test_sweep_isolates_failures(tmp_path):
    out = tmp_path / "sw"
    rc = run(["sweep", "--param", "depth=-1,-0.05", "--stage", "hypotheses", "--set", "grid.n_nodes=399", "--out", str(out)])
    assert rc == 1
    idx = read_csv(out / "index.csv")
    assert [r["status"] for r in idx] == ["ok", "failed"]
    assert (out / "depth_energy=-1" / "manifest.json").is_file()
    assert (out / "manifest.json").is_file()


def test_sweep_parallel_matches_serial(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    common = ["--param", "L=2:1:3", "--stage", "bifurcate", "--set", "grid.n_nodes=599"]
    assert run(["sweep", *common, "--out", str(a)]) == 0
    assert run(["sweep", *common, "--workers", "2", "--out", str(b)]) == 0
    for cell in ("separation_len=2", "separation_len=3"):
        assert (a / cell / "bifurcation.json").read_bytes() == (b / cell / "bifurcation.json").read_bytes()


def test_repro_subset(tmp_path, capsys):
    assert run(["repro", "--criteria", "1,2", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "criteria.csv")
    assert {r["status"] for r in rows} == {"PASS"}
    assert "checks passed" in capsys.readouterr().out
