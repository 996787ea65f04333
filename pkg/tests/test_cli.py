import json
import math

import pytest

from intertwine.cli import dumps, main, validate
from intertwine.errors import ConfigInvalid


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_bound_gaussian_optimize(tmp_path):
    code, out = run(tmp_path, "b.json", "bound", "--potential", "gaussian", "--dim", "2",
                    "--weight", "epsilon", "--optimize", "--resolution", "121")
    assert code == 0
    data = json.loads(out.read_text())
    assert data["kind"] == "InfRho" and data["value"] >= math.sqrt(5) - 2 - 1e-6
    meta = json.loads((tmp_path / "b.json.meta.json").read_text())
    assert "timestamp" in meta and "timestamp" not in data


def test_output_is_byte_identical(tmp_path):
    args = ["bound", "--potential", "gen_cauchy", "--dim", "2", "--beta", "4", "--closed-form"]
    _, a = run(tmp_path, "a.json", *args)
    _, b = run(tmp_path, "b.json", *args)
    assert a.read_bytes() == b.read_bytes()


def test_gap_quartic(tmp_path):
    code, out = run(tmp_path, "g.json", "gap", "--potential", "coupled_quartic", "--beta", "0.1",
                    "--resolution", "201")
    assert code == 0
    data = json.loads(out.read_text())
    assert data["lambda1"] >= 0.120656
    assert set(data) >= {"lambda1", "residual", "n", "box"}


def test_malformed_config_exits_2_without_output(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "gap", "potential": {"name": "gaussian", "dim": 1},
                               "mystery": True}))
    code, out = run(tmp_path, "x.json", "gap", "--config", str(cfg))
    assert code == 2 and not out.exists()
    cfg.write_text("{not json")
    code, out = run(tmp_path, "y.json", "gap", "--config", str(cfg))
    assert code == 2 and not out.exists()
    code, out = run(tmp_path, "z.json", "bound", "--potential", "gen_cauchy", "--beta", "0.5")
    assert code == 2 and not out.exists()


def test_config_overrides_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"potential": {"name": "gaussian", "dim": 1},
                               "grid": {"resolution": 801, "box": [[-8, 8]]}}))
    code, out = run(tmp_path, "g.json", "gap", "--potential", "coupled_quartic", "--beta", "0.3",
                    "--config", str(cfg))
    assert code == 0
    data = json.loads(out.read_text())
    assert data["potential"]["name"] == "gaussian" and data["n"] == 801
    assert data["lambda1"] == pytest.approx(1.0, abs=1e-3)


def test_verify_exit_codes(tmp_path):
    code, out = run(tmp_path, "v.json", "verify", "--potential", "gaussian", "--dim", "2",
                    "--inequality", "gamma2", "--weight", "epsilon", "--epsilon", "0.2",
                    "--resolution", "64")
    assert code == 0
    reports = json.loads(out.read_text())
    assert len(reports) == 6 and all(r["pass"] for r in reports)
    code, _ = run(tmp_path, "p.json", "verify", "--potential", "gaussian", "--dim", "1",
                  "--inequality", "poincare", "--lambda", "1.5", "--resolution", "64")
    assert code == 1
    code, out = run(tmp_path, "c.json", "verify", "--potential", "gen_cauchy", "--beta", "4",
                    "--inequality", "cbl", "--resolution", "64")
    assert code == 1 and json.loads(out.read_text())["error"] == "KernelSingular"


def test_simulate_and_csv(tmp_path):
    code, out = run(tmp_path, "s.csv", "simulate", "--potential", "gaussian", "--dim", "2",
                    "--weight", "epsilon", "--epsilon", "0.1", "--paths", "2000", "--x0", "0.5,0",
                    "--format", "csv")
    assert code == 0
    header, row = out.read_text().strip().splitlines()
    assert "fk.mean" in header and "sub_intertwining.holds" in header
    code, _ = run(tmp_path, "bad.json", "simulate", "--potential", "coupled_quartic",
                  "--beta", "0.1", "--weight", "diagonal_quartic_Z")
    assert code == 2


def test_report_joins_outputs(tmp_path):
    _, b = run(tmp_path, "b.json", "bound", "--potential", "coupled_quartic", "--beta", "0.1",
               "--closed-form", "--resolution", "101")
    _, g = run(tmp_path, "g.json", "gap", "--potential", "coupled_quartic", "--beta", "0.1",
               "--resolution", "161")
    code, out = run(tmp_path, "r.csv", "report", str(b), str(g), "--format", "csv")
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 2 and lines[1].startswith("coupled_quartic") and lines[1].endswith("True")


def test_dumps_round_trips_floats():
    vals = [0.1, 1 / 3, math.pi * 1e-300, 2.0**60 + 0.5, -7.25e17]
    assert json.loads(dumps({"v": vals}))["v"] == vals
    assert json.loads(dumps({"x": float("nan")}))["x"] is None


def test_validate_rejects_unknown_block_keys():
    with pytest.raises(ConfigInvalid):
        validate({"command": "gap", "potential": {"name": "gaussian", "colour": 1}})
    with pytest.raises(ConfigInvalid):
        validate({"command": "verify", "potential": {"name": "gaussian"}, "inequality": "poincare"})
    cfg = validate({"command": "gap", "potential": {"name": "gaussian", "dim": 2}})
    assert cfg.command == "gap"
