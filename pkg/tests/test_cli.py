import csv
import io
import json
import math
from pathlib import Path

import pytest
import yaml

from swanmech.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main
from swanmech.config import ConfigError, SweepSpec, load_config, parse_real
from swanmech.sweep import fmt, render_csv, run_sweep, worker_count, write_atomic

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
MNIST = str(CONFIGS / "mnist.yaml")


def write_cfg(tmp_path, doc, name="c.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def base_doc(**over):
    doc = {
        "name": "tiny",
        "types": [{"data_size": 10, "cost": 0.5, "population": 2}, {"data_size": 40, "cost": 1.0, "population": 2}],
        "feature_dim": 1,
        "data_variance": 10.0,
        "utility": {"kind": "power", "scale": 5.0, "exponent": 2},
    }
    doc.update(over)
    return doc


def run_json(capsys, argv):
    code = main(argv)
    return code, json.loads(capsys.readouterr().out)


# -- config ---------------------------------------------------------------------


def test_load_mnist():
    cfg = load_config(MNIST)
    sc = cfg.scenario
    assert sc.data_sizes == (50, 120, 300)
    assert sc.costs == pytest.approx((0.1, 0.24, 0.6))
    assert sc.params.scale == pytest.approx(784 * 2.5)
    assert cfg.modified_fl_reward == 0.3
    assert cfg.sweep.variable == "unit_cost"


@pytest.mark.parametrize("bad", [
    {"types": []},
    {"feature_dim": 0},
    {"utility": {"kind": "cubic"}},
    {"eps_req": "soon"},
])
def test_schema_errors(tmp_path, bad):
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, base_doc(**bad)))


def test_missing_cost_without_unit_cost(tmp_path):
    doc = base_doc(types=[{"data_size": 10, "population": 2}])
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, doc))


def test_resort_warns(tmp_path):
    doc = base_doc(types=[{"data_size": 40, "cost": 1.0, "population": 2},
                          {"data_size": 10, "cost": 0.5, "population": 3}])
    with pytest.warns(UserWarning, match="re-sorted"):
        cfg = load_config(write_cfg(tmp_path, doc))
    assert cfg.scenario.data_sizes == (10, 40)
    assert cfg.scenario.populations == (3, 2)


def test_inf_string(tmp_path):
    assert math.isinf(load_config(write_cfg(tmp_path, base_doc(eps_req="inf"))).scenario.eps_req)


def test_sweep_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec("budget", (1.0,), ("swan",), (0,))
    with pytest.raises(ConfigError):
        SweepSpec("unit_cost", (1.0,), ("auction",), (0,))


# -- commands ------------------------------------------------------------------


def test_exit_config(tmp_path, capsys):
    assert main(["solve", "--config", write_cfg(tmp_path, base_doc(feature_dim=-1))]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_exit_missing_file(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_exit_infeasible(tmp_path, capsys):
    path = write_cfg(tmp_path, base_doc(eps_req=1e-6))
    assert main(["solve", "--config", path]) == EXIT_INFEASIBLE
    assert "infeasible" in capsys.readouterr().err


def test_solve_mnist(capsys):
    code, doc = run_json(capsys, ["solve", "--config", MNIST])
    assert code == EXIT_OK
    assert doc["k_star"] == [0, 5, 5]
    assert doc["b_star"] == [10, 0, 0]
    assert doc["w_star"] == pytest.approx(89.6262030779, rel=1e-10)
    assert doc["bruteforce_match"] is True
    assert doc["eps_req"] == "inf" or math.isinf(float(doc["eps_req"]))


def test_solve_to_file(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["solve", "--config", MNIST, "--out", str(out)]) == EXIT_OK
    assert capsys.readouterr().out == ""
    assert json.loads(out.read_text())["k_star"] == [0, 5, 5]


def test_equilibrium_swan(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    code, doc = run_json(capsys, ["equilibrium", "--config", MNIST, "--seed", "2",
                                  "--trace", "--trace-out", str(trace)])
    assert code == EXIT_OK
    assert doc["converged"] and doc["nash_verified"] and doc["reached_kstar"]
    assert doc["platform_cost"] == pytest.approx(0.0, abs=1e-9)
    assert doc["quote"]["branch"] == "low-heterogeneity"
    assert trace.read_text().startswith("round,client_id,type,old_strategy,new_strategy,potential_value\n")


def test_equilibrium_nonconverged_exit(capsys):
    code, doc = run_json(capsys, ["equilibrium", "--config", MNIST, "--max-rounds", "1"])
    assert code == 3
    assert doc["converged"] is False


def test_regions_iid_only_two_and_four(capsys):
    code, doc = run_json(capsys, ["regions", "--config", MNIST, "--scan"])
    assert code == EXIT_OK
    assert {t["region"] for t in doc["types"]} <= {"II", "IV"}
    assert doc["scan"]


def test_regions_empty_state_warns(capsys):
    with pytest.warns(UserWarning, match="empty coalition"):
        code, doc = run_json(capsys, ["regions", "--config", MNIST, "--state", "0,0,0"])
    assert doc["state"] == [0, 0, 1]


def test_regions_bad_state(capsys):
    assert main(["regions", "--config", MNIST, "--state", "1,2"]) == EXIT_CONFIG


def test_oracle_dump(tmp_path, capsys):
    out = tmp_path / "grid.csv"
    code, doc = run_json(capsys, ["oracle", "--config", MNIST, "--out", str(out)])
    assert code == EXIT_OK
    assert doc["states"] == 11 * 6 * 6
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["k_1", "k_2", "k_3", "eps", "welfare_mots", "welfare_fl"]
    assert len(rows) == 1 + doc["states"]
    assert rows[1][:4] == ["0", "0", "0", "inf"]


# -- sweep -----------------------------------------------------------------------


def sweep_text(tmp_path, monkeypatch, threads, name):
    monkeypatch.setenv("SWANMECH_THREADS", str(threads))
    out = tmp_path / name
    assert main(["sweep", "--config", MNIST, "--grid", "0.001,0.005,0.1", "--out", str(out)]) in (0, 3)
    return out.read_bytes()


def test_sweep_byte_identical(tmp_path, monkeypatch):
    one = sweep_text(tmp_path, monkeypatch, 1, "a.csv")
    again = sweep_text(tmp_path, monkeypatch, 1, "b.csv")
    many = sweep_text(tmp_path, monkeypatch, 3, "c.csv")
    assert one == again == many
    rows = list(csv.DictReader(io.StringIO(one.decode())))
    assert len(rows) == 3 * 3
    assert [r["mechanism"] for r in rows[:3]] == sorted(r["mechanism"] for r in rows[:3])


def test_sweep_infeasible_rows(tmp_path, capsys):
    cfg = CONFIGS / "cifar10.yaml"
    assert main(["sweep", "--config", str(cfg), "--grid", "0.85,inf", "--mechanisms", "swan"]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert rows[0]["status"] == "infeasible"
    assert rows[1]["status"] == "ok"


def test_sweep_needs_variable(tmp_path):
    doc = base_doc()
    assert main(["sweep", "--config", write_cfg(tmp_path, doc)]) == EXIT_CONFIG


def test_worker_count():
    assert worker_count(5, "2") == 2
    assert worker_count(1, "8") == 1
    assert worker_count(3, "0") == 1


def test_render_csv_rows():
    cfg = load_config(MNIST)
    rows = run_sweep(cfg.scenario, SweepSpec("unit_cost", (0.002,), ("swan",), (0,)), 0.3, workers=1)
    text = render_csv(rows, 3)
    assert text.endswith("\n") and "\r" not in text
    row = next(csv.DictReader(io.StringIO(text)))
    assert row["nash_verified"] == "true"
    assert row["k_star_1"] == "0" and row["k_eq_3"] == "5"


def test_fmt():
    assert fmt(math.inf) == "inf"
    assert fmt(-0.0) == "0"
    assert fmt(True) == "true"
    assert fmt(1 / 3) == "0.333333333333"


def test_write_atomic_replaces(tmp_path):
    path = tmp_path / "x.txt"
    path.write_text("old")
    write_atomic("new\n", path)
    assert path.read_text() == "new\n"
    assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]


def test_parse_real():
    assert parse_real("0.25") == 0.25
    assert parse_real("+inf") == math.inf
    assert parse_real(3) == 3.0
    with pytest.raises(ConfigError):
        parse_real("soon")
