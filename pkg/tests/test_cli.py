import subprocess
import sys

import numpy as np
import pytest

from pbe_majorant.cli import EXIT_INVALID, EXIT_OK, EXIT_USAGE, main, read_config
from pbe_majorant.mesh import rectangle
from pbe_majorant.vtk import read_vtk_counts, write_vtk


def test_run_trivial(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "trivial", "--output", str(out)]) == EXIT_OK
    csv = (out / "report.csv").read_text().splitlines()
    assert len(csv) == 2
    row = dict(zip(csv[0].split(","), csv[1].split(",")))
    assert row["elements"] == "128" and row["marked"] == "0" and float(row["two_M2"]) == 0.0
    assert row["I_CEN_low"] == ""
    manifest = (out / "manifest.txt").read_text()
    assert "preset = trivial" in manifest and "reference = closed-form solution" in manifest
    assert read_vtk_counts(out / "level_00.vtk") == (81, 128)


def test_unknown_preset_and_invalid_settings(tmp_path, capsys):
    assert main(["run", "nope", "--output", str(tmp_path)]) == EXIT_USAGE
    assert main(["run", "trivial", "--bulk", "1.5", "--output", str(tmp_path)]) == EXIT_INVALID
    assert main(["run", "trivial", "--quad-order", "4", "--output", str(tmp_path)]) == EXIT_INVALID
    assert "invalid setting" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# campaign\nmarking = greedy\nbulk = 0.3\nstop = 900\nvtk = no\n")
    assert read_config(cfg) == {"marking": "greedy", "bulk": 0.3, "stop": 900, "vtk": "no"}
    out = tmp_path / "run"
    assert main(["run", "manufactured", "--config", str(cfg), "--bulk", "0.6", "--output", str(out)]) == EXIT_OK
    manifest = (out / "manifest.txt").read_text()
    assert "marking = greedy" in manifest and "bulk = 0.6" in manifest and "stop = 900" in manifest
    assert not list(out.glob("*.vtk"))
    bad = tmp_path / "bad.txt"
    bad.write_text("colour = blue\n")
    assert main(["run", "trivial", "--config", str(bad), "--output", str(out)]) == EXIT_INVALID


def test_verify_scalar_and_list(capsys):
    assert main(["verify", "scalar"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3 and all(line.startswith("PASS") for line in lines)
    assert main(["list"]) == EXIT_OK
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert {"example1_2d", "case_b_2d", "trivial"} <= set(names)


def test_console_entry_point_module():
    res = subprocess.run([sys.executable, "-m", "pbe_majorant", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "manufactured" in res.stdout


def test_vtk_writer(tmp_path):
    mesh = rectangle(2, 3)
    path = write_vtk(tmp_path / "m.vtk", mesh, {"u": np.arange(mesh.n_vertices, dtype=float)},
                     {"eta2": np.ones(mesh.n_triangles), "g": np.zeros((mesh.n_triangles, 2))})
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert read_vtk_counts(path) == (mesh.n_vertices, mesh.n_triangles)
    assert "SCALARS eta2 double 1" in text and "VECTORS g double" in text
    assert f"CELL_TYPES {mesh.n_triangles}\n5\n" in text
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "x.vtk", mesh, {"bad name": np.zeros(mesh.n_vertices)})
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "x.vtk", mesh, {"u": np.zeros(3)})
