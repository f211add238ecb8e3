"""Unit tests for the command-line interface."""

import json
import os
import tempfile

import numpy as np
import yaml
from click.testing import CliRunner

from camtomo import __version__
from camtomo.cli import EXIT_DIVERGENCE, EXIT_ERROR, EXIT_IO, EXIT_VALIDATION, exit_code, main
from camtomo.transform.cam_grid import CamGrid
from camtomo.transform.sinogram import Sinogram
from camtomo.utils.errors import ConditionViolation, ConfigError, StageError

from tests.fixtures.geometries import WIDE_CAM_GEOMETRY, small_experiment


def _json_block(output):
    """JSON document printed last; log lines may precede it."""
    lines = output.splitlines()
    start = lines.index("{")
    return json.loads("\n".join(lines[start:]))


def _write_config(directory, data):
    path = os.path.join(directory, "experiment.yaml")
    with open(path, "w") as f:
        yaml.safe_dump(data, f)
    return path


def test_version():
    result = CliRunner().invoke(main, ["version"])

    assert result.exit_code == 0
    assert __version__ in result.output


def test_presets_list_json():
    result = CliRunner().invoke(main, ["presets", "list", "--format", "json"])

    assert result.exit_code == 0
    assert "default_cap" in _json_block(result.output)["experiment"]


def test_presets_show_missing():
    result = CliRunner().invoke(main, ["presets", "show", "no_such_preset"])
    assert result.exit_code == EXIT_ERROR


def test_presets_show_yaml():
    result = CliRunner().invoke(main, ["presets", "show", "funk_hemisphere"])

    assert result.exit_code == 0
    assert yaml.safe_load(result.output)["geometry"]["cam"]["variant"] == "point"


def test_selftest_passes():
    result = CliRunner().invoke(main, ["selftest"])

    assert result.exit_code == 0, result.output
    assert "FAIL" not in result.output
    assert result.output.count("[ok  ]") == 5


def test_exit_codes():
    assert exit_code(StageError("validate", ConfigError("x"))) == EXIT_VALIDATION
    assert exit_code(ConditionViolation("E", "x")) == EXIT_VALIDATION
    assert exit_code(StageError("write", OSError("disk full"))) == EXIT_IO
    assert exit_code(FileNotFoundError("missing")) == EXIT_IO
    assert exit_code(StageError("project", ValueError("x"))) == EXIT_ERROR
    assert EXIT_DIVERGENCE == 3


def test_validate_wide_cam_exit_code():
    data = small_experiment(geometry=WIDE_CAM_GEOMETRY, sampling={"pairs": 256, "directions": 8, "qn_pairs": 1})
    with tempfile.TemporaryDirectory() as temp_dir:
        result = CliRunner().invoke(main, ["validate", _write_config(temp_dir, data), "--format", "json"])

    assert result.exit_code == EXIT_VALIDATION
    assert _json_block(result.output)["reports"]["E"]["status"] == "fail"


def test_invert_rejects_foreign_sinogram():
    """A sinogram tagged with another geometry is refused."""
    with tempfile.TemporaryDirectory() as temp_dir:
        config_path = _write_config(temp_dir, small_experiment())
        grid = CamGrid.build(2, (16, 32))
        sinogram_path = os.path.join(temp_dir, "sinogram.json")
        Sinogram(
            grid=grid,
            values=np.zeros(len(grid)),
            meta={"n": 2, "grids": {"cam": [16, 32], "cam_step": grid.step}, "hash": "other", "version": 1},
        ).save_json(sinogram_path)

        result = CliRunner().invoke(
            main, ["invert", config_path, sinogram_path, os.path.join(temp_dir, "report.json")]
        )

    assert result.exit_code == EXIT_ERROR
    assert "does not match" in result.output


def test_missing_sinogram_is_io_error():
    with tempfile.TemporaryDirectory() as temp_dir:
        config_path = _write_config(temp_dir, small_experiment())
        result = CliRunner().invoke(
            main, ["invert", config_path, os.path.join(temp_dir, "none.json"), os.path.join(temp_dir, "r.json")]
        )

    assert result.exit_code == EXIT_IO


def test_project_zero_phantom(tmp_path):
    data = small_experiment(phantom={"kind": "radial_bump", "center": [0.0, 0.0], "amplitude": 0.0})
    config_path = _write_config(str(tmp_path), data)
    sinogram_path = str(tmp_path / "sinogram.json")

    result = CliRunner().invoke(main, ["project", config_path, sinogram_path, "--csv", str(tmp_path / "s.csv")])

    assert result.exit_code == 0, result.output
    loaded = Sinogram.load_json(sinogram_path)
    assert loaded.grid.resolution == (16, 32)
    assert np.all(loaded.values == 0.0)
    assert (tmp_path / "s.csv").exists()


def test_unknown_preset_name_fails():
    result = CliRunner().invoke(main, ["validate", "no_such_preset"])
    assert result.exit_code == EXIT_ERROR
