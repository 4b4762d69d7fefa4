import json
import os
import shutil
from pathlib import Path

import numpy as np
import pytest

from densitysteer import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL_STEER = {
    "scenario": "steer", "seed": 5,
    "system": {"A": [[0, 1], [0, 0]], "B": [[0], [1]]},
    "horizon": 1.0,
    "diffeo": {"kind": "tanh", "alpha": 0.5, "space": "psihat"},
    "density": {"kind": "gaussian"},
    "ensemble_size": 40, "step": 0.02, "record_every": 5,
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _errors(cfg):
    with pytest.raises(cli.ConfigError) as e:
        cli.validate_config(json.dumps(cfg))
    return dict(e.value.errors)


def test_minimal_steer_config_accepted():
    cfg = cli.validate_config(json.dumps({
        "scenario": "steer", "system": {"A": [[0, 1], [0, 0]], "B": [[0], [1]]},
        "diffeo": {"kind": "identity"}, "ensemble_size": 10}))
    assert cfg.kind == "steer" and cfg.system.n == 2 and cfg.psi.name == "identity"


def test_rejections_carry_paths():
    bad_b = dict(SMALL_STEER, system={"A": [[0, 1], [0, 0]], "B": [[0], [1], [2]]})
    assert "$.system.B" in _errors(bad_b)
    assert "$.diffeo.kind" in _errors(dict(SMALL_STEER, diffeo={"kind": "spiral"}))
    reach = _errors({"scenario": "complexity", "manifold": {"intrinsic_dim": 2,
                     "ambient_dim": 3, "volume": 12.0, "reach": 1.0}, "r": 1.5})
    assert "reach" in reach["$.r"]
    assert "$.step" in _errors(dict(SMALL_STEER, step=0.5))
    assert "$.scenario" in _errors({"scenario": "teleport"})
    drift = _errors({"scenario": "benamou_brenier", "system": {"A": [[1.0]], "B": [[1.0]]},
                     "diffeo": {"kind": "identity"}, "ensemble_size": 3})
    assert "$.system" in drift
    with pytest.raises(cli.ConfigError):
        cli.validate_config("{not json")


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_validate(name):
    cli.validate_config((CONFIGS / name).read_text())


def test_run_writes_report_and_csv(tmp_path):
    rc = cli.main(["run", _write(tmp_path, SMALL_STEER), "--out", str(tmp_path / "o")])
    assert rc == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert list(rep)[:4] == ["scenario", "version", "seed", "config"]
    assert rep["passed"] and rep["endpoint"]["max"] < 1e-3
    lines = (tmp_path / "o" / "trajectories.csv").read_text().splitlines()
    assert lines[0] == "t,particle_id,x_0,x_1,u_0"
    assert len(lines) == 1 + 40 * 11
    data = np.loadtxt(lines[1:], delimiter=",")
    final = data[data[:, 0] == 1.0]
    assert final.shape == (40, 5) and np.array_equal(final[:, 1], np.arange(40))


def _strip(path):
    rep = json.loads(Path(path).read_text())
    rep.pop("wall_clock_s")
    return rep


def test_reruns_identical_across_threads_and_env(tmp_path, monkeypatch):
    cfg = _write(tmp_path, dict(SMALL_STEER, ensemble_size=70))
    cli.main(["run", cfg, "--out", str(tmp_path / "a"), "--threads", "1"])
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    cfg_obj = cli.validate_config(Path(cfg).read_text())
    assert cli._threads(None, cfg_obj.threads) == 3
    cli.main(["run", cfg, "--out", str(tmp_path / "b")])
    assert _strip(tmp_path / "a/report.json") == _strip(tmp_path / "b/report.json")
    assert (tmp_path / "a/trajectories.csv").read_bytes() == \
        (tmp_path / "b/trajectories.csv").read_bytes()


def test_seed_override(tmp_path):
    cfg = _write(tmp_path, SMALL_STEER)
    cli.main(["run", cfg, "--out", str(tmp_path / "a")])
    cli.main(["run", cfg, "--out", str(tmp_path / "b"), "--seed", "99"])
    a, b = _strip(tmp_path / "a/report.json"), _strip(tmp_path / "b/report.json")
    assert a["seed"] == 5 and b["seed"] == 99 and a["transport_cost"] != b["transport_cost"]


def test_failed_hard_check_sets_exit_status(tmp_path, capsys):
    cfg = _write(tmp_path, dict(SMALL_STEER, checks={"endpoint_tol": 1e-30}))
    assert cli.main(["run", cfg, "--out", str(tmp_path)]) == 1
    assert "FAIL endpoint_tolerance" in capsys.readouterr().out


def test_uncertified_psihat_is_soft(tmp_path):
    cfg = {"scenario": "diagnostic", "system": {"A": [[0, 0], [0, 0]], "B": [[1, 0], [0, 1]]},
           "horizon": 2.0, "diffeo": {"kind": "affine", "matrix": [[-1, 0], [0, -1]]},
           "diagnostic": {"probe_pairs": 500, "probe_times": 9}}
    with pytest.warns(UserWarning):
        rc = cli.main(["run", _write(tmp_path, cfg), "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rc == 0 and not rep["monotonicity"]["certified"]
    assert rep["injectivity"]["min_bilinear"] < 0


def test_partial_outputs_removed_on_failure(tmp_path, monkeypatch):
    real = cli._atomic_write

    def flaky(path, write):
        if path.endswith("report.json"):
            raise OSError("disk full")
        return real(path, write)

    monkeypatch.setattr(cli, "_atomic_write", flaky)
    out = tmp_path / "o"
    rc = cli.main(["run", _write(tmp_path, SMALL_STEER), "--out", str(out)])
    assert rc == 2
    assert not (out / "trajectories.csv").exists()
    assert not [f for f in os.listdir(out) if f.startswith(".tmp-")]


def test_complexity_and_bounds(tmp_path, capsys):
    assert cli.main(["run", str(CONFIGS / "complexity_s2.json"), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())["complexity"]
    assert rep["N_low"] == pytest.approx(3.125) and rep["k_low"] == pytest.approx(6.25)
    assert not (tmp_path / "trajectories.csv").exists()
    capsys.readouterr()
    assert cli.main(["bounds", "--manifold", "S2", "--r", "0.1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["N_high"] == pytest.approx(1973.92, abs=0.01)
    assert cli.main(["bounds", "--manifold", "S2", "--r", "2"]) == 2


def test_benamou_brenier_and_flow_scenarios(tmp_path):
    for name in ("benamou_brenier.json", "flow_program_circle.json"):
        out = tmp_path / name
        assert cli.main(["run", str(CONFIGS / name), "--out", str(out)]) == 0
    bb = json.loads((tmp_path / "benamou_brenier.json/report.json").read_text())
    assert bb["straight_line_deviation"] <= 1e-6
    assert bb["transport_cost"] == pytest.approx(bb["transport_cost_oracle"], rel=1e-3)
    fl = json.loads((tmp_path / "flow_program_circle.json/report.json").read_text())
    assert np.allclose(fl["flow_program"]["images"], [[-0.8], [0.2], [1.7]], atol=1e-9)


def test_validate_command(tmp_path, capsys):
    assert cli.main(["validate", str(CONFIGS / "steer_double_integrator.json")]) == 0
    bad = _write(tmp_path, dict(SMALL_STEER, ensemble_size=-1))
    assert cli.main(["validate", bad]) == 2
    assert "$.ensemble_size" in capsys.readouterr().err
