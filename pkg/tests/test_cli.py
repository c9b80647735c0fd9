import csv
import json

import pytest

from sieveflow.cli import build_parser, main
from sieveflow.config import RESOLVED_NAME, RunConfig


@pytest.fixture
def config_file(tmp_path, config_text):
    path = tmp_path / "run.ini"
    path.write_text(config_text)
    return path


def _run(command, config, out, *extra):
    return main([command, "--config", str(config), "--out", str(out), *extra])


def test_parser_rejects_unknown_command(config_file):
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["plot", "--config", str(config_file)])
    assert info.value.code == 2


def test_layout_command(tmp_path, config_file):
    out = tmp_path / "out"
    assert _run("layout", config_file, out) == 0
    layout = json.loads((out / "layout.json").read_text())
    assert len(layout["centers"]) == 9
    assert json.loads((out / "validation.json").read_text())["ok"] is True
    resolved = RunConfig.load(out / RESOLVED_NAME)
    assert resolved.config_hash() == RunConfig.load(config_file).config_hash()
    assert resolved.out_dir == out


def test_deterministic_flag_is_recorded(tmp_path, config_file):
    out = tmp_path / "out"
    assert _run("layout", config_file, out, "--deterministic", "--log-level", "WARNING") == 0
    resolved = RunConfig.load(out / RESOLVED_NAME)
    assert resolved.deterministic
    assert resolved.output_section.log_level == "WARNING"


def test_mesh_command(tmp_path, config_file):
    out = tmp_path / "out"
    assert _run("mesh", config_file, out) == 0
    assert (out / "mesh.txt").read_text().startswith("# sieveflow-mesh 1")
    assert not (out / "mesh.vtk").exists()
    quality = json.loads((out / "quality.json").read_text())
    assert quality["watertight"] is True
    assert quality["mesh"]["n_holes"] == 9


def test_solve_command(tmp_path, config_file):
    out = tmp_path / "out"
    assert _run("solve", config_file, out) == 0
    diagnostics = json.loads((out / "diagnostics.json").read_text())
    assert diagnostics["format"] == "sieveflow-diagnostics/1"
    assert diagnostics["config_hash"] == RunConfig.load(config_file).config_hash()
    assert diagnostics["state"]["converged"] is True
    assert abs(diagnostics["energy_identity_residual"]) < 1e-7
    assert diagnostics["trace_sigma"] > 0.0
    assert (out / "state" / "state.npz").exists()
    assert (out / "history.csv").read_text().startswith("iteration,residual,energy")


def test_constants_command(tmp_path, config_file):
    out = tmp_path / "out"
    assert _run("constants", config_file, out) == 0
    with (out / "constants.csv").open() as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 1
    assert float(rows[0]["epsilon"]) == 0.5
    assert float(rows[0]["trace_const"]) > 0.0


@pytest.mark.parametrize("text, kind", [
    ("[pipe]\nR = -1\n", "config"),
    ("[pipes]\nR = 1\n", "config"),
    ("[perforation]\nepsilon = 1.5\n", "parameter"),
    ("[flow]\nforce = sampled\nforce_file = nowhere.txt\n", "io"),
])
def test_errors_are_reported(tmp_path, capsys, text, kind):
    config = tmp_path / "bad.ini"
    config.write_text(text)
    out = tmp_path / "out"
    code = _run("solve", config, out)
    report = json.loads((out / "error.json").read_text())
    assert report["format"] == "sieveflow-error/1"
    assert report["kind"] == kind
    assert report["exit_code"] == code
    assert code == (4 if kind == "io" else 2)
    assert f"\"kind\": \"{kind}\"" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert _run("layout", tmp_path / "missing.ini", tmp_path / "out") == 4


def test_limit_rejects_sampled_force(tmp_path):
    config = tmp_path / "sampled.ini"
    config.write_text("[flow]\nforce = sampled\nforce_file = force.txt\n")
    out = tmp_path / "out"
    assert _run("limit", config, out) == 2
    assert json.loads((out / "error.json").read_text())["kind"] == "config"


def test_limit_command(tmp_path, config_file):
    out = tmp_path / "out"
    assert _run("limit", config_file, out) == 0
    limit = json.loads((out / "limit.json").read_text())
    assert limit["config_hash"] == RunConfig.load(config_file).config_hash()
    for name in ("minus", "plus"):
        assert limit[name]["state"]["converged"] is True
        assert limit[name]["energy"] ** 2 <= 1e-12
        assert (out / name / "state.npz").exists()


@pytest.mark.slow
def test_sweep_command(tmp_path, config_file):
    out = tmp_path / "out"
    assert _run("sweep", config_file, out) == 0
    with (out / "sweep.csv").open() as f:
        rows = list(csv.DictReader(f))
    assert [float(r["epsilon"]) for r in rows] == [0.6, 0.5]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["epsilons"] == [0.6, 0.5]
    assert summary["config_hash"] == RunConfig.load(config_file).config_hash()
    assert set(summary["uniform_bounds"]) == {"energy", "P_minus", "P_plus", "phi_minus", "phi_plus"}


@pytest.mark.slow
def test_deterministic_sweeps_are_identical(tmp_path, config_file):
    outputs = [tmp_path / "first", tmp_path / "second"]
    for out in outputs:
        assert _run("sweep", config_file, out, "--deterministic") == 0
    first, second = ((out / "sweep.csv").read_bytes() for out in outputs)
    assert first == second
    hashes = [json.loads((out / "summary.json").read_text())["config_hash"] for out in outputs]
    assert hashes[0] == hashes[1]
