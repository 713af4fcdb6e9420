import json

import numpy as np
import pytest
import yaml

from seaqt import cli
from seaqt import config as cfgmod
from seaqt import fixtures as fx
from seaqt.config import ConfigError


def _write(tmp_path, data, name="scenario.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data), encoding="utf-8")
    return p


def _qutrit(**extra):
    base = {
        "system": {"H": cfgmod.matrix_to_config(fx.QUTRIT_D_H)},
        "initial_state": {"preset": "QUTRIT-D"},
        "run": {"method": "RK4", "dt": 0.05, "t_end": 1.0, "sample_every": 4},
    }
    return cfgmod._merge(base, extra)


# ---------------------------------------------------------------- config parsing

def test_matrix_roundtrip_complex():
    M = np.array([[1, 2 - 1j], [2 + 1j, -0.5]])
    assert np.allclose(cfgmod.parse_matrix(cfgmod.matrix_to_config(M), "m"), M)


@pytest.mark.parametrize("value, fragment", [
    ([[1, 2], [0, 1]], "not Hermitian"),
    ([[1, 2]], "square"),
    ([], "nonempty"),
    ([[1, "x"], [0, 1]], "entry"),
    ([[True, 0], [0, 1]], "boolean"),
])
def test_matrix_errors(value, fragment):
    with pytest.raises(ConfigError, match=fragment):
        cfgmod.parse_matrix(value, "system.H")


def test_field_path_reported():
    with pytest.raises(ConfigError) as exc:
        cfgmod.build(_qutrit(run={"dt": -1.0}))
    assert exc.value.field == "run.dt"


@pytest.mark.parametrize("patch, field", [
    ({"tau": {"policy": "bogus"}}, "tau.policy"),
    ({"run": {"method": "Euler"}}, "run.method"),
    ({"dynamics": "flawed"}, "dynamics"),
    ({"bogus": 1}, "bogus"),
    ({"output": {"format": "xml"}}, "output.format"),
    ({"initial_state": {"rho": [[0.5, 0], [0, 0.5]]}}, "initial_state"),
])
def test_build_rejects(patch, field):
    cfg = _qutrit()
    if "initial_state" in patch:
        cfg["initial_state"] = patch["initial_state"]
    else:
        cfg = cfgmod._merge(cfg, patch)
    with pytest.raises(ConfigError) as exc:
        cfgmod.build(cfg)
    assert exc.value.field.startswith(field)


def test_invalid_density_reported():
    cfg = _qutrit()
    cfg["initial_state"] = {"rho": [[1.2, 0, 0], [0, -0.2, 0], [0, 0, 0]]}
    with pytest.raises(ConfigError, match="valid density"):
        cfgmod.build(cfg)


def test_all_presets_build():
    for name in cfgmod.preset_names():
        sc = cfgmod.load(preset=name)
        assert abs(np.trace(sc.initial.rho) - 1) < 1e-12


def test_preset_override_merges():
    sc = cfgmod.load(preset="qubit-coherence", overrides={"tau": {"value": 2.5}})
    assert sc.system.policy.value == 2.5
    assert sc.run.dt == 0.01


def test_gibbs_initial_state():
    cfg = _qutrit()
    cfg["initial_state"] = {"gibbs": {"beta": 0.5}}
    sc = cfgmod.build(cfg)
    p = np.exp(-0.5 * np.diag(fx.QUTRIT_D_H).real)
    assert np.allclose(np.diag(sc.initial.rho).real, p / p.sum())


def test_pure_initial_state():
    cfg = _qutrit()
    cfg["initial_state"] = {"pure": [1, [0, 1], 0]}
    sc = cfgmod.build(cfg)
    assert sc.initial.rank == 1


def test_set_path():
    cfg = cfgmod.set_path({"tau": {"value": 1}}, "tau.value", 3)
    assert cfg["tau"]["value"] == 3
    assert cfgmod.set_path({}, "run.dt", 0.1) == {"run": {"dt": 0.1}}


def test_empty_file(tmp_path):
    p = tmp_path / "e.yaml"
    p.write_text("", encoding="utf-8")
    with pytest.raises(ConfigError, match="empty"):
        cfgmod.load_file(p)


# ---------------------------------------------------------------- CLI

def test_presets_list(capsys):
    assert cli.main(["presets", "list"]) == 0
    out = capsys.readouterr().out
    for name in cfgmod.preset_names():
        assert name in out


def test_presets_show(capsys):
    assert cli.main(["presets", "show", "gibbs"]) == 0
    data = yaml.safe_load(capsys.readouterr().out)
    assert data["initial_state"] == {"gibbs": {"beta": 0.5}}


def test_unknown_preset_exit_2(capsys):
    assert cli.main(["presets", "show", "nope"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and err["field"] == "preset"


def test_non_hermitian_exit_2(tmp_path, capsys):
    cfg = _qutrit()
    cfg["system"]["H"] = [[0, 1, 0], [0, 1, 0], [0, 0, 2]]
    assert cli.main(["run", "--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["field"] == "system.H"
    assert "Hermitian" in err["message"]


def test_missing_file_exit_2(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_run_csv_roundtrip(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(_write(tmp_path, _qutrit())), "--out", str(out)]) == 0
    cols, data = cli.read_trajectory_csv(out / "trajectory.csv")
    summary = json.loads((out / "summary.json").read_text())
    assert cols == summary["columns"]
    assert cols[:3] == ["t", "entropy", "energy"]
    assert data[0, 0] == 0.0 and data[-1, 0] == pytest.approx(1.0)
    assert np.all(np.diff(data[:, 1]) >= -1e-12)
    assert np.allclose(data[:, 2], 0.9, atol=1e-10)
    # 17 significant digits survive the round-trip exactly
    raw = (out / "trajectory.csv").read_text().splitlines()[2].split(",")
    assert all(cli.fmt(float(x)) == x for x in raw if x)
    assert summary["terminal_state"]["entropy"] == data[-1, 1]


def test_run_json_format(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(_write(tmp_path, _qutrit())), "--out", str(out), "--format", "json"]) == 0
    data = json.loads((out / "trajectory.json").read_text())
    assert data["columns"][0] == "t"
    assert len(data["rows"]) == json.loads((out / "summary.json").read_text())["samples"]


def test_out_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["run", "--config", str(_write(tmp_path, _qutrit()))]) == 0
    assert (tmp_path / "env" / "summary.json").exists()


def test_gibbs_preset_constant(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["run", "--preset", "gibbs", "--out", str(out)]) == 0
    _, data = cli.read_trajectory_csv(out / "trajectory.csv")
    assert np.ptp(data[:, 1]) < 1e-12
    assert np.max(data[:, cols_index(out, "trace_distance_to_attractor")]) < 1e-10


def cols_index(out, name):
    cols, _ = cli.read_trajectory_csv(out / "trajectory.csv")
    return cols.index(name)


def test_qubit_coherence_smoke(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["run", "--preset", "qubit-coherence", "--out", str(out)]) == 0
    cols, data = cli.read_trajectory_csv(out / "trajectory.csv")
    d = data[:, cols.index("trace_distance_to_attractor")]
    assert d[-1] < d[0]


def test_composite_run_columns(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = {"preset": "two-qubit-generic", "run": {"t_end": 0.5}}
    assert cli.main(["run", "--config", str(_write(tmp_path, cfg)), "--out", str(out)]) == 0
    cols, data = cli.read_trajectory_csv(out / "trajectory.csv")
    for c in ("sigma_AB", "energy_A", "energy_B", "tau_A", "tau_B"):
        assert c in cols
    assert np.ptp(data[:, cols.index("energy_A")]) < 1e-9
    assert np.all(np.isnan(data[:, cols.index("trace_distance_to_attractor")]))


def test_drift_breach_exit_1(tmp_path, capsys):
    cfg = _qutrit(tau={"value": 0.01}, run={"dt": 0.5, "t_end": 5.0, "max_drift": 1e-6})
    assert cli.main(["run", "--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "runtime" and "t" in err["diagnostic"]


def test_check_paper_and_flawed(capsys):
    assert cli.main(["check", "--preset", "two-qubit-generic", "--seed", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["flagged"] == []
    assert cli.main(["check", "--preset", "appendix-g-demo", "--seed", "3"]) == 0
    assert 6 in json.loads(capsys.readouterr().out)["flagged"]
    assert cli.main(["check", "--preset", "appendix-g-demo", "--seed", "3", "--strict"]) == 1


def test_onsager_command(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["onsager", "--preset", "qutrit-diagonal", "--out", str(out)]) == 0
    rep = json.loads((out / "onsager.json").read_text())
    assert json.loads(capsys.readouterr().out).keys() == rep.keys()


def test_onsager_orthogonal_extension_composite_exit_2(capsys):
    assert cli.main(["onsager", "--preset", "two-qubit-generic", "--basis", "orthogonal-extension"]) == 2


def test_sweep(tmp_path, capsys):
    out = tmp_path / "sw"
    cfg = _qutrit()
    code = cli.main(["sweep", "--config", str(_write(tmp_path, cfg)), "--param", "tau.value",
                     "--values", "0.5,1,2", "--workers", "3", "--out", str(out)])
    assert code == 0
    sweep = json.loads((out / "sweep.json").read_text())
    assert [r["status"] for r in sweep["runs"]] == ["ok"] * 3
    ent = [r["final_entropy"] for r in sweep["runs"]]
    # a shorter relaxation time gets further along the same path
    assert ent[0] > ent[1] > ent[2]
    for k in range(3):
        assert (out / f"run_{k:03d}" / "trajectory.csv").exists()


def test_sweep_block_in_config(tmp_path, capsys):
    cfg = _qutrit(sweep={"param": "run.dt", "values": [0.05, 0.025]})
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", str(_write(tmp_path, cfg)), "--out", str(out)]) == 0
    runs = json.loads((out / "sweep.json").read_text())["runs"]
    assert abs(runs[0]["final_entropy"] - runs[1]["final_entropy"]) < 1e-6


def test_sweep_without_param_exit_2(tmp_path, capsys):
    assert cli.main(["sweep", "--config", str(_write(tmp_path, _qutrit())), "--out", str(tmp_path)]) == 2
