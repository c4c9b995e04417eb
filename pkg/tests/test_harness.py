import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfmimo.config import ConfigError, SystemConfig
from cfmimo.harness import ExperimentSpec, Table, default_grid, run_experiment, write_results
from cfmimo.harness.cli import main, parse_grid, parse_params
from cfmimo.harness.experiments import KINDS
from cfmimo.harness.output import format_value, read_csv

SMALL = {"M": 4, "K": 3, "N": 2, "tau_c": 20, "tau_p": 2, "velocities_kmh": 128}


@pytest.fixture
def small_cfg_file(tmp_path):
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps(SMALL))
    return f


def test_spec_invariants():
    with pytest.raises(ConfigError):
        ExperimentSpec("validate", grid=[]).validate()
    with pytest.raises(ConfigError):
        ExperimentSpec("validate", grid=["ideal"], trials=0).validate()
    with pytest.raises(ConfigError):
        ExperimentSpec("bogus", grid=[1]).validate()
    ExperimentSpec("sweep_tauc", grid=[10], trials=0).validate()  # closed form only
    for kind in KINDS:
        assert default_grid(kind, SystemConfig())


def test_validate_ideal_agrees():
    cfg = SystemConfig(M=4, K=3, tau_c=20, tau_p=2, velocities=128 / 3.6)
    t = run_experiment(ExperimentSpec("validate", grid=["ideal"], trials=10_000, seed=2), cfg)
    assert len(t) == 2 * 3
    assert max(abs(x) for x in t.column("rel_error")) <= 0.03


def test_sweep_instant_decreasing_at_high_speed():
    cfg = SystemConfig()
    t = run_experiment(ExperimentSpec("sweep_instant", params={"velocities_kmh": [212]}), cfg)
    for col in ("se_lsfd", "se_sld"):
        assert np.all(np.diff(t.column(col)) < 0)
    assert t.column("n")[0] == cfg.anchor


def test_term_breakdown_static_has_no_ca():
    cfg = SystemConfig(M=4, K=4, tau_c=20, tau_p=2)
    t = run_experiment(ExperimentSpec("term_breakdown", params={"velocities_kmh": [0] * 4}), cfg)
    assert all(x == 0 for x in t.column("CA"))
    t = run_experiment(ExperimentSpec("term_breakdown", grid=[3, 20]), cfg)
    fast = [r for r in t.rows if r["velocity_kmh"] == 212 and r["n"] == 20]
    assert all(r["CA"] > 0 for r in fast)


def test_power_sweep_ordering():
    cfg = SystemConfig(M=8, K=4, tau_c=20, tau_p=2)
    t = run_experiment(ExperimentSpec("sweep_power", grid=[10.0]), cfg)
    se = {r["variant"]: r["se_lsfd"] for r in t.rows}
    assert se["ideal"] > se["dynamic_aps"] and se["ideal"] > se["dynamic_antennas"]


def test_sweep_aps_uses_half_pilots():
    cfg = SystemConfig(tau_c=20)
    t = run_experiment(ExperimentSpec("sweep_aps", grid=[4, 8], params={"users": [4]}), cfg)
    assert t.column("M") == [4, 8] and t.column("variant") == ["K=4", "K=4"]
    assert t.rows[1]["se_lsfd"] > t.rows[0]["se_lsfd"]


def test_optimize_rows():
    cfg = SystemConfig(M=6, K=4, tau_c=20, tau_p=2, velocities=212 / 3.6)
    spec = ExperimentSpec("optimize", grid=[10.0], params={"n_opt": ["anchor", "per_instant"]})
    t = run_experiment(spec, cfg)
    rows = {(r["variant"], r["n_opt"]): r["se"] for r in t.rows}
    for mode in ("lsfd", "sld"):
        full = rows[(f"{mode}/full_power", "-")]
        assert rows[(f"{mode}/closed_form", "anchor")] >= full * (1 - 1e-9)
        assert rows[(f"{mode}/projected_gradient", "anchor")] >= full * (1 - 1e-9)


def test_threads_do_not_change_rows():
    cfg = SystemConfig(M=4, K=3, tau_c=30, tau_p=2)
    a = run_experiment(ExperimentSpec("sweep_tauc", grid=[10, 20, 30], threads=1), cfg)
    b = run_experiment(ExperimentSpec("sweep_tauc", grid=[10, 20, 30], threads=3), cfg)
    assert a.to_csv() == b.to_csv()


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def test_empty_table_header_only(tmp_path):
    t = Table(["experiment", "seed", "variant", "x", "y"])
    write_results(t, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "experiment,seed,variant,x,y\n"
    assert json.loads((tmp_path / "e.json").read_text()) == {"columns": t.columns, "rows": []}


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_round_trip_bit_exact(values):
    t = Table(["experiment", "seed", "variant", "i", "v"])
    for i, v in enumerate(values):
        t.add(experiment="x", seed=1, variant="a", i=i, v=v)
    header, rows = read_csv(t.to_csv())
    assert header == t.columns
    assert [float(r[4]) for r in rows] == values
    doc = json.loads(t.to_json())
    assert [r[4] for r in doc["rows"]] == values


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(np.float64(2.5)) == "2.5"
    assert format_value(np.int64(3)) == "3"
    assert format_value(True) == "1"
    assert format_value(math.inf) == "inf"


def test_row_must_match_columns():
    t = Table(["a", "b"])
    with pytest.raises(ValueError):
        t.add(a=1)
    with pytest.raises(ValueError):
        Table(["a", "a"])


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_byte_identical(tmp_path, small_cfg_file):
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.csv"
        rc = main(["validate", "--config", str(small_cfg_file), "--out", str(out), "--seed", "4",
                   "--trials", "2000", "--grid", "rf"])
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    header = outs[0].decode().splitlines()[0].split(",")
    assert header[:3] == ["experiment", "seed", "variant"]
    assert (tmp_path / "r0.json").exists()


@pytest.mark.parametrize("argv", [
    ["sweep", "tauc", "--grid", "10,20"],
    ["sweep", "instant", "--grid", "3,10"],
    ["sweep", "taup", "--grid", "1,2"],
    ["sweep", "antennas", "--grid", "1,2"],
    ["sweep", "aps", "--grid", "4", "--param", "users=[2]"],
    ["sweep", "power", "--grid", "0", "--param", "antennas=2"],
    ["terms", "--grid", "3"],
    ["optimize", "--grid", "10", "--param", 'methods=["closed_form"]'],
])
def test_cli_verbs(argv, small_cfg_file, capsys):
    assert main(argv + ["--config", str(small_cfg_file)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("experiment,seed,variant") and len(out) > 1


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_cli_config_error(tmp_path, capsys):
    f = tmp_path / "bad.json"
    f.write_text(json.dumps({"M": 2, "kappa_t": -1}))
    assert main(["sweep", "tauc", "--config", str(f)]) == 2
    e = _err(capsys)
    assert e["error"] == "config" and e["path"] == "kappa_t"


def test_cli_bad_grid_and_missing_file(capsys, small_cfg_file):
    assert main(["sweep", "tauc", "--config", str(small_cfg_file), "--grid", "1"]) == 2
    assert _err(capsys)["path"] == "tau_p"
    assert main(["sweep", "tauc", "--config", "/nonexistent/cfg.json"]) == 1
    assert _err(capsys)["error"] == "FileNotFoundError"
    assert main(["validate", "--config", str(small_cfg_file), "--trials", "0",
                 "--grid", "ideal"]) == 2
    assert _err(capsys)["path"] == "trials"


def test_parsers():
    assert parse_grid("1, 2.5,ideal") == [1, 2.5, "ideal"]
    assert parse_grid(None) == []
    with pytest.raises(ConfigError):
        parse_grid(",")
    assert parse_params(["a=[1,2]", "b=text"]) == {"a": [1, 2], "b": "text"}
    with pytest.raises(ConfigError):
        parse_params(["novalue"])
