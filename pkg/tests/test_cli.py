import csv
import json

import numpy as np
import pytest

from taskcons import cli, presets, sim
from taskcons.config import ScenarioConfig


def read_rows(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_trace_header_width():
    for n in (1, 2, 6):
        assert len(cli.trace_header(n)) == 1 + n * (2 + 2 + 2 + 2 + 2 + 2 + 3 + 2 + 1 + 1)


def test_run_default_preset(tmp_path, capsys):
    out = tmp_path / "d"
    assert cli.main(["run", "sec5a-consensus", "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} >= {"trace.csv", "report.csv", "config.json"}
    rep = read_rows(out / "report.csv")[0]
    assert rep["settled"] == "True"
    data = np.loadtxt(out / "trace.csv", delimiter=",", skiprows=1)
    assert data.shape == (12001, 1 + 6 * 19)
    assert "settled=True" in capsys.readouterr().out


def test_trace_columns_match_trace(tmp_path):
    cfg = presets.delayed_consensus().with_(t_end=0.1)
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    out = tmp_path / "o"
    assert cli.main(["run", str(p), "--out", str(out)]) == 0
    tr = sim.run_scenario(cfg)
    with open(out / "trace.csv") as f:
        header = f.readline().strip().split(",")
    data = np.loadtxt(out / "trace.csv", delimiter=",", skiprows=1)
    col = {h: k for k, h in enumerate(header)}
    assert np.allclose(data[:, col["a3_x_o2"]], tr.x_o[:, 3, 1], rtol=1e-9)
    assert np.allclose(data[:, col["a5_vartheta_hat3"]], tr.vartheta_hat[:, 5, 2], rtol=1e-9, atol=1e-12)
    assert np.allclose(data[:, col["a0_Vstar"]], tr.Vstar[:, 0], rtol=1e-9, atol=1e-12)


def test_overrides(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "sec5a-consensus", "--out", str(out), "--t-end", "0.05", "--dt", "0.01",
                     "--integrator", "euler", "--seed", "3"]) == 0
    cfg = json.loads((out / "config.json").read_text())
    assert (cfg["t_end"], cfg["dt"], cfg["integrator"], cfg["seed"]) == (0.05, 0.01, "euler", 3)
    assert len(np.loadtxt(out / "trace.csv", delimiter=",", skiprows=1)) == 6


def test_sweep_preset_writes_sweep(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "teleop-damping", "--out", str(out), "--jobs", "2"]) == 0
    rows = read_rows(out / "sweep.csv")
    d = [float(r["displacement"]) for r in rows]
    assert [float(r["kd_scale"]) for r in rows] == [1, 2, 4, 8]
    assert all(a > b for a, b in zip(d, d[1:]))


def test_missing_dt_names_field(tmp_path, capsys):
    p = tmp_path / "c.json"
    d = presets.delayed_consensus().to_dict()
    del d["dt"]
    p.write_text(json.dumps(d))
    assert cli.main(["run", str(p), "--out", str(tmp_path / "o")]) != 0
    assert "`dt`" in capsys.readouterr().err


def test_run_failure_reports_time(tmp_path, capsys):
    code = cli.main(["run", "sec5a-consensus", "--out", str(tmp_path / "o"), "--dt", "0.2",
                     "--integrator", "euler", "--t-end", "100"])
    assert code == 1
    err = capsys.readouterr().err
    assert "run failed" in err and "t=" in err


def test_unknown_target(tmp_path, capsys):
    assert cli.main(["run", "no-such-thing", "--out", str(tmp_path)]) == 2
    assert "neither a preset" in capsys.readouterr().err


def test_validate_ok(capsys):
    assert cli.main(["validate", "sec5a-consensus"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("ok") and "predicted consensus value: [1.842666667, 0.5093333333]" in out


@pytest.mark.parametrize(
    "patch, needle",
    [
        (lambda d: d["graph"].update(weights=np.zeros((6, 6)).tolist()), "spanning tree"),
        (lambda d: d["gains"].update(Lambda=[[1.0, 0.0], [0.0, -1.0]]), "Lambda"),
    ],
)
def test_validate_violations(tmp_path, capsys, patch, needle):
    d = presets.delayed_consensus().to_dict()
    patch(d)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(d))
    assert cli.main(["validate", str(p)]) == 1
    assert needle in capsys.readouterr().out


def test_emit_round_trip_is_bit_identical(tmp_path, capsys):
    cfg = presets.pi_servo_run(0.0, noise=True).with_(t_end=0.5, seed=11)
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    assert cli.main(["validate", str(p), "--emit"]) == 0
    out = capsys.readouterr().out
    emitted = out[out.index("{"):]
    again = ScenarioConfig.from_json(emitted)
    assert np.array_equal(sim.run_scenario(cfg).state, sim.run_scenario(again).state)


@pytest.mark.slow
def test_report_reproduces_alpha0_number(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "sec5b-alpha0", "--out", str(out)]) == 0
    rep = read_rows(out / "report.csv")[0]
    tr = sim.run_scenario(presets.get("sec5b-alpha0"))
    from taskcons import analysis
    assert float(rep["final_mean_x"]) == analysis.consensus_report(tr).final_plain[0]
    assert abs(float(rep["final_mean_x"]) - 2.6) <= 0.026
