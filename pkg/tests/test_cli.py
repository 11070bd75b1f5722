"""Command line interface: exit codes, config handling, outputs."""
import json

import numpy as np
import pytest

from oscillachain.cli import main
from oscillachain.serialize import read_csv


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "equilibria" in capsys.readouterr().out


def test_unknown_subcommand_exits_two(capsys):
    assert main(["frobnicate"]) == 2


def test_missing_required_flag_exits_two(capsys):
    code = main(["equilibria", "--k", "0.5", "--delta", "1.0"])
    assert code == 2
    assert "usage error" in capsys.readouterr().err


def test_equilibria_output(tmp_path, capsys):
    out = tmp_path / "eq.json"
    code = main(["equilibria", "--n", "2", "--k", "0.5", "--delta", "1.0",
                 "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["N"] == 2 and payload["k"] == 0.5
    eqs = payload["equilibria"]
    assert len(eqs) == 4
    by_pattern = {e["pattern"]: e for e in eqs}
    assert by_pattern["00"]["stable"] is True
    assert by_pattern["00"]["nu_u"] == 0
    assert by_pattern["11"]["nu_u"] == 2
    # index identities hold in the exported record too
    for e in eqs:
        assert e["nu0"] == e["nu_s"] and e["nu_pi"] == e["nu_u"]
    assert payload["metadata"]["command"] == "equilibria"


def test_no_equilibria_exits_one(tmp_path, capsys):
    cfgfile = tmp_path / "cfg.json"
    cfgfile.write_text(json.dumps(
        {"model": {"omega_mode": [3.5, 3.5]}}))
    code = main(["equilibria", "--config", str(cfgfile), "--n", "2",
                 "--k", "0.5", "--delta", "1.0",
                 "--out", str(tmp_path / "eq.json")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_unknown_config_key_exits_two(tmp_path, capsys):
    cfgfile = tmp_path / "cfg.json"
    cfgfile.write_text(json.dumps({"model": {"coupling": 0.5}}))
    code = main(["equilibria", "--config", str(cfgfile), "--n", "2",
                 "--k", "0.5", "--delta", "1.0",
                 "--out", str(tmp_path / "eq.json")])
    assert code == 2
    assert "coupling" in capsys.readouterr().err


def test_flag_overrides_config(tmp_path, capsys):
    cfgfile = tmp_path / "cfg.json"
    cfgfile.write_text(json.dumps({"model": {"N": 2, "k": 0.3,
                                             "delta": 1.0}}))
    out = tmp_path / "eq.json"
    code = main(["equilibria", "--config", str(cfgfile), "--k", "0.5",
                 "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["k"] == 0.5
    assert payload["metadata"]["config"]["model"]["k"] == 0.5


def test_env_seed_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("OSCILLACHAIN_SEED", "123")
    out = tmp_path / "traj.csv"
    code = main(["simulate", "--n", "2", "--k", "-0.5", "--delta", "1.0",
                 "--t-end", "1.0", "--out", str(out), "--deterministic"])
    assert code == 0
    meta = json.loads((tmp_path / "traj.csv.meta.json").read_text())
    assert meta["config"]["seeds"]["seed"] == 123


def test_deterministic_reruns_byte_identical(tmp_path, capsys):
    out = tmp_path / "eq.json"
    outs = []
    for _ in range(2):
        assert main(["equilibria", "--n", "3", "--k", "-0.5",
                     "--delta", "1.19", "--out", str(out),
                     "--deterministic"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_simulate_csv_contents(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    code = main(["simulate", "--n", "2", "--k", "-0.5", "--delta", "1.0",
                 "--x0", "0.8,2.3", "--t-end", "10", "--out", str(out)])
    assert code == 0
    header, rows = read_csv(out)
    assert header == ["t", "x1", "x2", "E"]
    assert float(rows[0][0]) == 0.0
    assert float(rows[0][1]) == 0.8
    assert float(rows[-1][0]) == 10.0
    meta = json.loads((tmp_path / "traj.csv.meta.json").read_text())
    assert meta["x0"] == [0.8, 2.3]
    assert meta["t_end"] == 10.0


def test_validate_passes(capsys):
    assert main(["validate", "--deterministic"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3
    assert "3/3 suites passed" in out


def test_orbit_explicit_guess(tmp_path, capsys):
    out = tmp_path / "orbit.json"
    code = main(["orbit", "--n", "2", "--k", "-0.5", "--delta", "1.0",
                 "--anchor", "0.85,2.26", "--period", "13.3",
                 "--winding", "0,1", "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["period"] == pytest.approx(13.275605164039, abs=1e-6)
    assert payload["winding"] == [0, 1]
    assert payload["stable"] is True
