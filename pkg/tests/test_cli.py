import csv
import json
import logging

import pytest

from slowosc.cli import RunSummary, main, parse_config
from slowosc.barriers import budget, generate_initial
from slowosc.nonlinearity import odd_sine_clipped, validate


def _summary(d):
    return json.loads((d / "summary.json").read_text())


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_minimal_simulate(tmp_path):
    cfg = parse_config({}, {"command": "simulate", "f": "atan-shifted", "eps": 0.3, "horizon": 10, "out_dir": str(tmp_path)})
    assert cfg.eps_requested == 0.3 and cfg.horizon == 10.0
    assert cfg.tol == 1e-8 and cfg.max_iter == 500 and cfg.seed == 0
    assert cfg.nonlinearity.kind == "atan-shifted"


def test_snapped_eps_recorded(tmp_path):
    code = main(["simulate", "--f", "atan-shifted", "--eps", "0.30", "--m", "3", "--horizon", "4", "--out-dir", str(tmp_path)])
    assert code == 0
    grid = _summary(tmp_path)["grid"]
    assert grid["eps"] == 0.3 and grid["eps_fraction"] == "3/10" and grid["dt"] == 0.05


def test_flag_overrides_file(tmp_path, caplog):
    conf = tmp_path / "run.yaml"
    conf.write_text("command: periodic\nf: atan-shifted\neps: 0.25\n")
    out = tmp_path / "out"
    with caplog.at_level(logging.WARNING, logger="slowosc"):
        code = main(["periodic", "--config", str(conf), "--eps", "0.3", "--out-dir", str(out)])
    assert code == 0
    assert _summary(out)["config"]["eps_requested"] == 0.3
    assert any("overrides" in r.getMessage() for r in caplog.records)


def test_unknown_key_and_missing_field(tmp_path, capsys):
    conf = tmp_path / "bad.yaml"
    conf.write_text("command: periodic\nf: atan-shifted\neps: 0.3\nbogus: 1\n")
    assert main(["periodic", "--config", str(conf)]) == 2
    assert "bogus" in capsys.readouterr().err
    assert main(["periodic", "--f", "atan-shifted", "--out-dir", str(tmp_path)]) == 2
    assert "missing required field: eps" in capsys.readouterr().err
    assert main(["periodic", "--f", "nope", "--eps", "0.3", "--out-dir", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_periodic_outputs(tmp_path):
    assert main(["periodic", "--f", "atan-shifted", "--eps", "0.3", "--out-dir", str(tmp_path)]) == 0
    orbit = json.loads((tmp_path / "orbit.json").read_text())
    assert 1.7 < orbit["period"] < 2.3
    rows = _rows(tmp_path / "orbit.csv")
    assert len(rows) > 100 and set(rows[0]) == {"t", "x"}
    s = _summary(tmp_path)
    assert s["status"] == "ok" and s["exit_code"] == 0 and s["context"] is None


def test_sweep_outputs(tmp_path):
    code = main(["sweep", "--f", "odd-sine-clipped", "--eps-list", "0.3,0.01", "--out-dir", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "sweep.csv")
    assert len(rows) == 2
    assert float(rows[1]["sup_error"]) < float(rows[0]["sup_error"])
    assert float(rows[1]["overshoot"]) > 0
    assert (tmp_path / "orbit_eps=0.3.csv").exists() and (tmp_path / "orbit_eps=0.01.csv").exists()


def test_eps0_prints(tmp_path, capsys):
    assert main(["eps0", "--fprime0", "-4", "--out-dir", str(tmp_path)]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(1.2067, abs=1e-4)
    assert main(["eps0", "--fprime0", "-1.5", "--out-dir", str(tmp_path)]) == 2
    assert _summary(tmp_path)["status"] == "usage-error"


def test_eigencheck_command(tmp_path, capsys):
    assert main(["eigencheck", "--eps", "0.25", "--fprime0", "-2.5", "--m", "50", "--out-dir", str(tmp_path)]) == 0
    assert float(capsys.readouterr().out) <= 1e-10


def test_failure_path_writes_summary(tmp_path):
    code = main(["periodic", "--f", "atan-shifted", "--eps", "0.3", "--max-iter", "2", "--out-dir", str(tmp_path)])
    assert code == 1
    s = _summary(tmp_path)
    assert s["exit_code"] == 1 and s["status"] == "non-convergence"
    assert "did not converge" in s["reason"]


def test_simulate_generator_deterministic(tmp_path):
    args = ["simulate", "--f", "odd-sine-clipped", "--eps", "0.2", "--horizon", "20",
            "--b0", "generator:tau=0.1,factor=2", "--seed", "5"]
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(args + ["--out-dir", str(a)]) == 0
    assert main(args + ["--out-dir", str(b)]) == 0
    assert main(args[:-1] + ["6", "--out-dir", str(c)]) == 0
    for name in ("trajectory.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "trajectory.csv").read_bytes() != (c / "trajectory.csv").read_bytes()
    s = _summary(a)
    assert s["results"]["slowly_oscillating"] and s["results"]["bounded_by_R"]


def test_membership_command(tmp_path):
    f = odd_sine_clipped()
    ctx = budget(validate(f), 0.2)
    b = generate_initial(ctx, 0.08, 1.5, seed=1)
    path = tmp_path / "b.csv"
    b.as_trajectory().to_csv(path)
    out = tmp_path / "out"
    assert main(["membership", "--f", "odd-sine-clipped", "--input", str(path), "--eps", "0.2", "--out-dir", str(out)]) == 0
    r = _summary(out)["results"]
    assert r["member"] and r["in_invariant_set"] and r["tau"] == pytest.approx(0.08, abs=1e-12)
    assert main(["membership", "--f", "odd-sine-clipped", "--input", str(path), "--eps", "0.2",
                 "--alpha", "10", "--out-dir", str(out)]) == 0
    assert not _summary(out)["results"]["member"]


def test_gurtin_command(tmp_path):
    assert main(["gurtin", "--alpha-ricker", "22.197951281441636", "--mu", "0.4", "--eps", "0.3", "--out-dir", str(tmp_path)]) == 0
    s = _summary(tmp_path)
    assert s["results"]["b_residual"] <= 1e-8 and s["results"]["birth_min"] > 0
    assert abs(s["results"]["kernel_check"] - 1.0) <= 1e-12
    assert s["warnings"]
    dens = sorted(tmp_path.glob("density_t=*.csv"))
    assert len(dens) == 2 and _rows(dens[0])[0].keys() == {"a", "u"}


def test_summary_round_trip(tmp_path):
    assert main(["validate", "--f", "odd-sine-clipped", "--out-dir", str(tmp_path)]) == 0
    s = RunSummary.load(tmp_path)
    assert s.wall_time is not None and s.results["passed"]
    assert RunSummary.from_dict(s.to_dict()) == s
    assert RunSummary.from_json(s.to_json(), wall_time=s.wall_time) == s
    assert s.to_json() == (tmp_path / "summary.json").read_text()
