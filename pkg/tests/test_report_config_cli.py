import json
from pathlib import Path

import numpy as np
import pytest

from orliczkit.cli import EXIT_ERROR, EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from orliczkit.config import ConfigError, build_config, load_config, parse_expression
from orliczkit.report import dumps, write_columns

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_dumps_is_deterministic_and_sorted():
    a = dumps({"b": 1.0, "a": [np.float64(0.1), 2], "c": {"z": True, "y": None}})
    b = dumps({"c": {"y": None, "z": True}, "a": [0.1, 2], "b": 1.0})
    assert a == b
    assert a.index('"a"') < a.index('"b"') < a.index('"c"')


def test_dumps_number_format():
    text = dumps({"x": 0.1, "one": 1.0, "nan": float("nan"), "inf": np.inf, "n": np.int64(3), "big": 1e300})
    data = json.loads(text)
    assert '"x": 0.10000000000000001' in text
    assert '"one": 1.0' in text
    assert data["nan"] is None and data["inf"] is None
    assert data["n"] == 3 and isinstance(data["n"], int)
    assert data["big"] == 1e300


def test_dumps_arrays_round_trip():
    arr = np.linspace(0, 1, 7)
    assert json.loads(dumps({"a": arr}))["a"] == arr.tolist()


def test_write_columns(tmp_path):
    write_columns(tmp_path / "c.csv", ["k", "v"], [[1.0, 2.0], [0.5, np.nan]])
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines == ["# k,v", "1.0,0.5", "2.0,nan"]


def test_config_error_names_field_path():
    with pytest.raises(ConfigError, match=r"params\.mesh\.nx"):
        build_config({"command": "solve", "params": {"mesh": {"nx": "many"}}})
    with pytest.raises(ConfigError, match=r"params\.bogus"):
        build_config({"command": "balance", "params": {"bogus": 1}})
    with pytest.raises(ConfigError, match="command"):
        build_config({"command": "launch"})
    with pytest.raises(ConfigError):
        build_config(["not", "a", "mapping"])


def test_config_defaults_filled():
    cfg = build_config({"command": "mollify"})
    assert cfg.params["mu"] == [10.0, 100.0, 1000.0]
    assert cfg.typed().family.params == {"p": 2.0}


def test_load_config_accepts_report(tmp_path):
    p = tmp_path / "r.json"
    p.write_text(json.dumps({"config": {"command": "verify", "params": {"suite": "envelope"}}, "passed": True}))
    assert load_config(p)["params"]["suite"] == "envelope"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_parse_expression():
    fn = parse_expression("exp(-pi**2*t)*sin(pi*x)")
    x = np.linspace(0, 1, 5)[:, None]
    assert np.allclose(fn(0.0, x), np.sin(np.pi * x[:, 0]))
    assert np.allclose(parse_expression(2.5)(np.zeros(5), x), 2.5)
    assert np.allclose(parse_expression("x1*x2")(0.0, np.array([[2.0, 3.0]])), [6.0])


@pytest.mark.parametrize("expr", ["__import__('os').system('true')", "open('f')", "np.sin(x)", "y + 1"])
def test_parse_expression_rejects_unknown_names(expr):
    with pytest.raises(ConfigError):
        parse_expression(expr)


def test_cli_balance_exit_codes(tmp_path, capsys):
    rep = tmp_path / "b.json"
    args = ["balance", "--family", "double_phase", "--p", "2", "--q", "2.6", "--report", str(rep)]
    assert main(args) == EXIT_FAIL
    assert json.loads(rep.read_text())["result"]["trend"]["verdict"] == "diverging-trend"
    assert main(["balance", "--family", "double_phase", "--p", "2", "--q", "2.2", "--report", str(rep)]) == EXIT_OK
    assert "passed" in capsys.readouterr().out
    iso = ["balance", "--family", "double_phase", "--p", "2", "--q", "2.2", "--c-sp", "2", "--report", str(rep)]
    assert main(iso) == EXIT_OK
    assert json.loads(rep.read_text())["result"]["isotropic"]["verdict"] == "bounded-trend"


def test_cli_usage_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("command: solve\nparams: {mesh: {nx: oops}}\n")
    with pytest.raises(SystemExit) as info:
        main(["solve", "--config", str(bad)])
    assert info.value.code == EXIT_USAGE
    assert "params.mesh.nx" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        main(["balance", "--config", str(CONFIGS / "heat.yaml")])
    assert info.value.code == EXIT_USAGE


def test_cli_module_error(capsys):
    assert main(["conjugate", "--family", "no_such_family"]) in (EXIT_USAGE, EXIT_ERROR)


def test_cli_heat_round_trip(tmp_path):
    r1 = tmp_path / "a.json"
    plots = tmp_path / "plots"
    assert main(["solve", "--config", str(CONFIGS / "heat.yaml"), "--report", str(r1),
                 "--emit-plots", str(plots)]) == EXIT_OK
    report = json.loads(r1.read_text())
    assert report["passed"]
    assert report["result"]["exact_l2_error"] < 5e-3
    assert (plots / "a_priori.csv").exists() and (plots / "u_final.csv").exists()
    # the report's config echo reproduces the run byte for byte
    first = r1.read_bytes()
    assert main(["solve", "--config", str(r1)]) == EXIT_OK
    assert r1.read_bytes() == first


def test_cli_spike_config(tmp_path):
    rep = tmp_path / "s.json"
    assert main(["solve", "--config", str(CONFIGS / "p3_spike.yaml"), "--report", str(rep)]) == EXIT_OK


def test_cli_verify_single_suite(tmp_path, capsys):
    assert main(["verify", "--suite", "envelope", "--seed", "3"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["passed"] and out["config"]["seed"] == 3


def test_cli_check_nfunction_and_conjugate(capsys):
    assert main(["check-nfunction", "--family", "power_p", "--p", "3"]) == EXIT_OK
    capsys.readouterr()
    assert main(["conjugate", "--family", "power_p", "--p", "3", "--N", "1"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["passed"]


def test_cli_mollify_csv_input(tmp_path, capsys):
    from orliczkit.fields import GridField, write_csv

    t = np.linspace(0, 1, 33)[:, None]
    x = np.linspace(0, 1, 9)[None, :]
    path = tmp_path / "phi.csv"
    write_csv(GridField(np.sin(4 * t) * x * (1 - x), (1 / 32, 1 / 8)), path)
    assert main(["mollify", "--input", str(path), "--mu", "10,100,1000"]) == EXIT_OK
