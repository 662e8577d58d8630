"""End-to-end tests of the command-line interface and its exit codes."""

import json

import numpy as np
import pytest

from plapsim.cli import EXIT_BLOW_UP, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, main
from plapsim.config import parse_config_text, ConfigError, load_config
from plapsim.spatial import Grid, initial_from_csv

HEAT_CONFIG = """
# deterministic linear benchmark
grid.n_interior = 32
coeff.type = "linear"
coeff.p = 2.0
noise.enabled = false
pert.enabled = false
solver.n = 0
solver.dt = 0.0002
solver.t_end = 0.05
solver.record_every = 50
initial.type = "sine"
initial.amplitude = 1.0
run.paths = 1
"""


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


# -------------------------------------------------------------------- parsing


def test_parse_config_text_value_kinds():
    cfg = parse_config_text(
        'a.flag = true\nb.num = 3\nc.x = 2.5    # trailing comment\n'
        'd.name = "gaussian"\ne.bare = sine\nf.list = [4, 8, 16]\n')
    assert cfg == {"a.flag": True, "b.num": 3, "c.x": 2.5,
                   "d.name": "gaussian", "e.bare": "sine",
                   "f.list": [4, 8, 16]}


def test_parse_config_text_rejects_malformed_lines():
    with pytest.raises(ConfigError):
        parse_config_text("just words\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("a.b = 1\na.b = 2\n")
    with pytest.raises(ConfigError, match="unterminated"):
        parse_config_text("a.b = [1, 2\n")


def test_load_config_rejects_unknown_keys(tmp_path):
    path = write_config(tmp_path, "sigma.alpa = 0.5\n")
    with pytest.raises(ConfigError, match="sigma.alpa"):
        load_config(path)


# ------------------------------------------------------------------- regcheck


def test_regcheck_passes_and_writes_outputs(tmp_path):
    out = tmp_path / "out"
    code = main(["regcheck", "--out", str(out), "--n-list", "2,4"])
    assert code == EXIT_PASS
    report = json.loads((out / "report.json").read_text())
    assert report["pass"] is True
    assert len(report["levels"]) == 2
    lines = (out / "regcheck.csv").read_text().strip().splitlines()
    assert lines[0] == "n,measured_gap,gap_bound"
    assert len(lines) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["tool"] == "plapsim"
    assert manifest["config"]["regcheck.n_list"] == [2, 4]


def test_invalid_alpha_exits_config_error(tmp_path, capsys):
    path = write_config(tmp_path, "sigma.alpha = 1.5\n")
    code = main(["regcheck", "--config", str(path), "--out",
                 str(tmp_path / "out")])
    assert code == EXIT_CONFIG
    assert "sigma.alpha" in capsys.readouterr().err


def test_unknown_key_exits_config_error(tmp_path, capsys):
    path = write_config(tmp_path, "solver.dx = 0.1\n")
    code = main(["simulate", "--config", str(path), "--out",
                 str(tmp_path / "out")])
    assert code == EXIT_CONFIG
    assert "solver.dx" in capsys.readouterr().err


# ------------------------------------------------------------------- simulate


def test_simulate_heat_matches_exact_profile(tmp_path):
    path = write_config(tmp_path, HEAT_CONFIG)
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(path), "--out", str(out)]) \
        == EXIT_PASS
    grid = Grid(1, 32)
    final = initial_from_csv(grid, out / "final_state_000.csv")
    x = grid.nodes()[:, 0]
    exact = np.exp(-np.pi ** 2 * 0.05) * np.sin(np.pi * x)
    err = np.linalg.norm(final - exact) / np.linalg.norm(exact)
    assert err < 5e-3
    lines = (out / "trajectory_000.csv").read_text().strip().splitlines()
    assert lines[0] == "t,l2_sq,grad_lp_p,hm0_sq,wmq_q,newton_iters"
    assert len(lines) == 1 + 6   # t = 0 and five thinned snapshots


def test_simulate_is_deterministic_and_seed_sensitive(tmp_path):
    out1, out2, out3 = (tmp_path / d for d in ("a", "b", "c"))
    assert main(["simulate", "--out", str(out1), "--paths", "1"]) == EXIT_PASS
    assert main(["simulate", "--out", str(out2), "--paths", "1"]) == EXIT_PASS
    assert main(["simulate", "--out", str(out3), "--paths", "1",
                 "--seed", "99"]) == EXIT_PASS
    tr = "trajectory_000.csv"
    assert (out1 / tr).read_bytes() == (out2 / tr).read_bytes()
    assert (out1 / tr).read_bytes() != (out3 / tr).read_bytes()
    manifest = json.loads((out3 / "manifest.json").read_text())
    assert manifest["master_seed"] == 99
    assert manifest["config"]["run.seed"] == 99


def test_simulate_rerun_from_manifest_is_bitwise(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--out", str(out1), "--paths", "2"]) == EXIT_PASS
    assert main(["simulate", "--config", str(out1 / "manifest.json"),
                 "--out", str(out2)]) == EXIT_PASS
    for name in ("trajectory_000.csv", "trajectory_001.csv",
                 "final_state_000.csv", "report.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_simulate_blow_up_exits_three(tmp_path, capsys):
    path = write_config(tmp_path, """
coeff.p = 3.0
noise.enabled = false
pert.enabled = false
solver.n = 0
solver.scheme = "explicit"
solver.dt = 0.05
solver.t_end = 1.0
initial.amplitude = 2.0
grid.n_interior = 24
run.paths = 1
""")
    with pytest.warns(RuntimeWarning):
        code = main(["simulate", "--config", str(path), "--out",
                     str(tmp_path / "out")])
    assert code == EXIT_BLOW_UP
    assert "blow-up" in capsys.readouterr().err


def test_outputs_stay_inside_out_dir(tmp_path, monkeypatch):
    workdir = tmp_path / "cwd"
    workdir.mkdir()
    monkeypatch.chdir(workdir)
    out = tmp_path / "result"
    assert main(["simulate", "--out", str(out), "--paths", "1"]) == EXIT_PASS
    assert list(workdir.iterdir()) == []
    names = {p.name for p in out.iterdir()}
    assert names == {"manifest.json", "report.json", "trajectory_000.csv",
                     "final_state_000.csv"}


# --------------------------------------------------------------------- verify


def test_verify_desk_scale_passes(tmp_path):
    out = tmp_path / "out"
    code = main(["verify", "--out", str(out)])
    assert code == EXIT_PASS
    report = json.loads((out / "report.json").read_text())
    assert report["pass"] is True
    assert [s["name"] for s in report["studies"]] == [
        "energy_boundedness", "l1_contraction", "cauchy_in_level",
        "heat_oracle"]
    for name in ("energy_levels.csv", "contraction_curve.csv",
                 "cauchy_levels.csv", "heat_errors.csv"):
        assert (out / name).exists()


def test_verify_single_path_exits_config_error(tmp_path, capsys):
    code = main(["verify", "--out", str(tmp_path / "out"), "--paths", "1"])
    assert code == EXIT_CONFIG
    assert "run.paths" in capsys.readouterr().err


def test_verify_low_alpha_refused(tmp_path, capsys):
    path = write_config(tmp_path, "sigma.alpha = 0.3\n")
    code = main(["verify", "--config", str(path), "--out",
                 str(tmp_path / "out")])
    assert code == EXIT_CONFIG
    assert "alpha" in capsys.readouterr().err


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "--out", "/tmp/x"])
    assert exc.value.code == EXIT_CONFIG
