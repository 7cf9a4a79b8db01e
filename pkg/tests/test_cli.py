import csv
import json
import math
import shutil

import pytest

from gpcrack import cli
from gpcrack.cli import EXIT_DENSITY, EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, EXIT_VALIDATION, main


def run(*argv):
    return main([str(a) for a in argv])


def assert_same(a, b, path="report"):
    """Structural equality; floats compared to 1e-9 relative."""
    if isinstance(a, dict):
        assert isinstance(b, dict) and sorted(a) == sorted(b), path
        for k in a:
            assert_same(a[k], b[k], f"{path}.{k}")
    elif isinstance(a, list):
        assert isinstance(b, list) and len(a) == len(b), path
        for i, (x, y) in enumerate(zip(a, b)):
            assert_same(x, y, f"{path}[{i}]")
    elif isinstance(a, float) and not isinstance(b, bool):
        assert b == pytest.approx(a, rel=1e-9, abs=1e-12), path
    else:
        assert a == b, path


# -- exit codes --------------------------------------------------------------------------------

@pytest.mark.parametrize("mesh, code", [("cube.mesh", EXIT_OK), ("bar.mesh", EXIT_OK),
                                        ("inverted.mesh", EXIT_VALIDATION), ("missing.mesh", EXIT_IO)])
def test_validate_exit_codes(data_dir, tmp_path, mesh, code, capsys):
    assert run("validate", data_dir / mesh, "--out", tmp_path) == code
    if mesh == "inverted.mesh":
        assert "tet 0 " in capsys.readouterr().err


def test_validate_report(data_dir, tmp_path):
    assert run("validate", data_dir / "bar.mesh", "--out", tmp_path) == EXIT_OK
    rep = json.loads((tmp_path / "validate.json").read_text())
    assert rep["tets"] == 12 and rep["candidate_faces"] == 2
    assert rep["volume"] == pytest.approx(2.0)


@pytest.mark.parametrize("cfg, code", [("density_ok.json", EXIT_OK), ("density_p2.json", EXIT_DENSITY),
                                       ("density_concave.json", EXIT_DENSITY)])
def test_check_density_exit_codes(data_dir, tmp_path, cfg, code):
    assert run("check-density", "--config", data_dir / cfg, "--out", tmp_path) == code
    rep = json.loads((tmp_path / "density_check.json").read_text())
    assert rep["passed"] is (code == EXIT_OK)
    assert rep["density_label"]
    assert all(c["passed"] for c in rep["checks"]) is (code == EXIT_OK)


def test_p2_lists_violated_inequality(data_dir, tmp_path):
    run("check-density", "--config", data_dir / "density_p2.json", "--out", tmp_path)
    exps = json.loads((tmp_path / "density_check.json").read_text())["checks"][0]
    assert [c["name"] for c in exps["details"]["checks"] if not c["passed"]] == ["p > 2"]


def test_concave_density_reports_location(data_dir, tmp_path):
    run("check-density", "--config", data_dir / "density_concave.json", "--out", tmp_path)
    rep = json.loads((tmp_path / "density_check.json").read_text())
    failed = [c for c in rep["checks"] if not c["passed"]]
    assert [c["name"] for c in failed] == ["coercivity", "delta_convexity"]
    for c in failed:
        assert c["margin"] < 0 and c["location"]


@pytest.mark.parametrize("surf, code", [("disc.surf", EXIT_OK), ("sphere.surf", EXIT_OK),
                                        ("square2.surf", EXIT_OK), ("junction.surf", EXIT_VALIDATION)])
def test_varifold_exit_codes(data_dir, tmp_path, surf, code):
    assert run("varifold", data_dir / surf, "--out", tmp_path) == code
    rep = json.loads((tmp_path / "varifold.json").read_text())
    if surf == "square2.surf":
        assert rep["mass"] == pytest.approx(2.0)
    if surf == "sphere.surf":
        assert rep["boundary_mass"] == 0.0
    if surf == "disc.surf":
        e = rep["crack_energy"]
        assert e["mass"] == pytest.approx(math.pi, rel=0.01)
        assert e["curvature"] <= 1e-20
        assert e["boundary"] == pytest.approx(2 * math.pi, rel=0.01)
    if code == EXIT_VALIDATION:
        assert rep["nonmanifold"] and len(rep["junction_edges"]) == 1


def test_config_errors(data_dir, tmp_path):
    assert run("minimize", "--config", tmp_path / "nope.json") == EXIT_IO
    (tmp_path / "bad.json").write_text("{not json")
    assert run("minimize", "--config", tmp_path / "bad.json") == EXIT_VALIDATION
    (tmp_path / "extra.json").write_text(json.dumps({"mesh": str(data_dir / "cube.mesh"), "colour": 1}))
    assert run("minimize", "--config", tmp_path / "extra.json") == EXIT_VALIDATION
    (tmp_path / "nomesh.json").write_text(json.dumps({"mesh": "absent.mesh"}))
    assert run("minimize", "--config", tmp_path / "nomesh.json") == EXIT_IO
    (tmp_path / "badp.json").write_text(json.dumps({"mesh": str(data_dir / "cube.mesh"), "params": {"p": 1}}))
    assert run("minimize", "--config", tmp_path / "badp.json", "--out", tmp_path) == EXIT_DENSITY


# -- minimize ---------------------------------------------------------------------------------

@pytest.mark.parametrize("cfg, code, selected", [
    ("bar.json", EXIT_OK, "-"),
    ("bar_stretched.json", EXIT_OK, "0,1"),
    ("bar_small_K.json", EXIT_INFEASIBLE, None),
])
def test_minimize_exit_codes(data_dir, tmp_path, cfg, code, selected):
    assert run("minimize", "--config", data_dir / cfg, "--out", tmp_path) == code
    rep = json.loads((tmp_path / "report.json").read_text())
    if selected is None:
        assert rep["status"] == "no feasible candidate"
        assert rep["candidates"] and all(c["failed_items"] == [2] for c in rep["candidates"])
    else:
        sel = rep["candidates"][rep["selected"]]
        assert sel["face_set_id"] == selected


def test_overlap_check_flag(data_dir, tmp_path):
    cfg = data_dir / "bar_compressed.json"
    assert run("minimize", "--config", cfg, "--out", tmp_path / "on") == EXIT_OK
    assert run("minimize", "--config", cfg, "--out", tmp_path / "off", "--no-interpenetration-check") == EXIT_OK
    on = json.loads((tmp_path / "on" / "report.json").read_text())
    off = json.loads((tmp_path / "off" / "report.json").read_text())
    assert on["config"]["noninterpenetration"] and not off["config"]["noninterpenetration"]
    full_on = next(c for c in on["candidates"] if c["face_set_id"] == "0,1")
    assert full_on["failed_items"] == ["noninterpenetration"]
    assert on["candidates"][on["selected"]]["face_set_id"] != "0,1"
    assert off["candidates"][off["selected"]]["face_set_id"] == "0,1"


def test_golden_cube_report(data_dir, tmp_path):
    assert run("minimize", "--config", data_dir / "cube.json", "--out", tmp_path) == EXIT_OK
    golden = json.loads((data_dir / "golden_cube_report.json").read_text())
    assert_same(golden, json.loads((tmp_path / "report.json").read_text()))


def test_output_files(data_dir, tmp_path):
    assert run("minimize", "--config", data_dir / "bar_stretched.json", "--out", tmp_path) == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert {"config", "seed", "status", "selected", "selected_faces", "candidates"} <= set(rep)
    assert rep["density_label"].startswith("minimal representative")
    assert "wall_clock" not in json.dumps(rep)
    timing = json.loads((tmp_path / "timing.json").read_text())
    assert timing["wall_clock_seconds"] > 0

    rows = list(csv.DictReader(open(tmp_path / "candidates.csv")))
    assert [r["face_set_id"] for r in rows] == [c["face_set_id"] for c in rep["candidates"]]
    assert sum(r["selected"] == "True" for r in rows) == 1
    for r, c in zip(rows, rep["candidates"]):
        assert float(r["total"]) == c["total"]

    traces = list(csv.DictReader(open(tmp_path / "traces.csv")))
    for i in {r["index"] for r in traces}:
        e = [float(r["energy"]) for r in traces if r["index"] == i]
        assert all(b < a for a, b in zip(e, e[1:]))

    vtk = (tmp_path / "deformed.vtk").read_text()
    for name in ("det", "cof_norm", "grad_det_norm"):
        assert f"SCALARS {name} double 1" in vtk
    crack = (tmp_path / "crack.vtk").read_text()
    assert "SCALARS multiplicity" in crack and "SCALARS curvature_norm" in crack
    assert "CELLS 2 " in crack


def test_config_round_trip(data_dir, tmp_path):
    """The echoed config reproduces the same report when fed back in."""
    assert run("minimize", "--config", data_dir / "bar_stretched.json", "--out", tmp_path / "a") == EXIT_OK
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    shutil.copy(data_dir / "bar_stretched.mesh", tmp_path)
    (tmp_path / "echo.json").write_text(json.dumps(rep["config"]))
    assert run("minimize", "--config", tmp_path / "echo.json", "--out", tmp_path / "b") == EXIT_OK
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_reports_are_byte_identical_across_runs_and_threads(data_dir, tmp_path):
    cfg = data_dir / "bar_stretched.json"
    run("minimize", "--config", cfg, "--out", tmp_path / "a")
    run("minimize", "--config", cfg, "--out", tmp_path / "b")
    run("minimize", "--config", cfg, "--out", tmp_path / "c", "--threads", 3)
    a = (tmp_path / "a" / "report.json").read_bytes()
    assert a == (tmp_path / "b" / "report.json").read_bytes() == (tmp_path / "c" / "report.json").read_bytes()


def test_seed_flag_overrides_config(data_dir, tmp_path):
    run("minimize", "--config", data_dir / "cube.json", "--out", tmp_path, "--seed", 7)
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["seed"] == 7 and rep["config"]["minimizer"]["seed"] == 7


def test_thread_env_var(monkeypatch):
    parser = cli.build_parser()
    monkeypatch.setenv(cli.THREADS_ENV, "4")
    assert cli._threads(parser.parse_args(["minimize"])) == 4
    assert cli._threads(parser.parse_args(["minimize", "--threads", "2"])) == 2
    monkeypatch.delenv(cli.THREADS_ENV)
    assert cli._threads(parser.parse_args(["minimize"])) == 1


def test_varifold_only(data_dir, tmp_path):
    cfg = json.loads((data_dir / "bar_stretched.json").read_text())
    cfg.update(mesh=str(data_dir / "bar_stretched.mesh"), varifold_only=True)
    (tmp_path / "v.json").write_text(json.dumps(cfg))
    assert run("minimize", "--config", tmp_path / "v.json", "--out", tmp_path) == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["status"] == "varifold only"
    assert rep["candidate_surface"]["mass"] == pytest.approx(4.0)
    assert not (tmp_path / "deformed.vtk").exists()
    assert math.isfinite(rep["candidate_surface"]["boundary_mass"])
