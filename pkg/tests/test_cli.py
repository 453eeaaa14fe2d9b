import json
import os

import pytest

from fbindex.cli import main
from fbindex.pipeline import RunConfig, build_surface, run_suite
from fbindex.errors import ConfigError


def _json(path):
    with open(path) as fh:
        return json.load(fh)


def test_gen_cylinder(tmp_path, capsys):
    assert main(["gen", "--surface", "cylinder", "--r", "1", "--L", "4", "--res", "12", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "cylinder.off").read_text().startswith("NOFF")
    d = _json(tmp_path / "cylinder.json")
    assert d["container"] == {"type": "slab", "lower": 0.0, "upper": 4.0}
    assert d["topology"] == {"g": 0, "k": 2}


def test_gen_hemisphere_records_deviation(tmp_path):
    assert main(["gen", "--surface", "hemisphere", "--r", "1", "--res", "2", "--out", str(tmp_path)]) == 0
    assert _json(tmp_path / "hemisphere.json")["free_boundary_deviation"] < 1e-10


def test_gen_unknown_surface(tmp_path, capsys):
    assert main(["gen", "--surface", "unknown", "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and err["exit_code"] == 2
    assert _json(tmp_path / "error.json")["exit_code"] == 2


@pytest.mark.parametrize("argv", [["frobnicate"], ["analyze", "--surface", "disk", "--res", "x"],
                                  ["gen", "--surface", "disk", "--L", "3"]])
def test_bad_arguments_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] != "frobnicate" else argv) == 2


def test_tilted_disk_exit_3(tmp_path, capsys):
    assert main(["analyze", "--surface", "disk", "--res", "6", "--tilt", "0.1", "--out", str(tmp_path)]) == 3
    assert "free-boundary" in _json(tmp_path / "error.json")["message"]


def test_analyze_cylinder(tmp_path, capsys):
    rc = main(["analyze", "--surface", "cylinder", "--L", "4", "--res", "48", "--out", str(tmp_path)])
    assert rc == 0
    rep = _json(tmp_path / "report.json")
    assert (rep["index_fem"], rep["index_bound"], rep["verdict"]) == (1, 0, "PASS")
    for name in ("jacobi_spectrum.csv", "hodge_spectrum.csv", "lemma_residuals.csv", "spectra.svg"):
        assert (tmp_path / name).stat().st_size > 0
    out = capsys.readouterr().out
    assert "verdict\tPASS" in out and "index_fem\t1" in out


def test_analyze_disk_flags_zero_modes(tmp_path):
    assert main(["analyze", "--surface", "disk", "--res", "8", "--no-figures", "--out", str(tmp_path)]) == 0
    rep = _json(tmp_path / "report.json")
    assert rep["index_fem"] == 0
    # rigid translations parallel to the disk: two analytic zero modes
    assert len(rep["lemma_residuals"]["numerical_zeros"]) == 2


def test_analyze_from_generated_files(tmp_path):
    gen = tmp_path / "gen"
    assert main(["gen", "--surface", "cylinder", "--L", "4", "--res", "24", "--out", str(gen)]) == 0
    out = tmp_path / "an"
    rc = main(["analyze", "--mesh", str(gen / "cylinder.off"), "--container", str(gen / "cylinder.json"),
               "--no-figures", "--out", str(out)])
    assert rc == 0 and _json(out / "report.json")["index_fem"] == 1


def test_missing_mesh_exit_4(tmp_path):
    assert main(["analyze", "--mesh", str(tmp_path / "nope.off"), "--out", str(tmp_path)]) == 4


def test_unwritable_output_exit_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["gen", "--surface", "disk", "--res", "3", "--out", str(blocker / "sub")]) == 4


def test_config_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"surface": "cylinder", "params": {"L": 2.0, "res": 12}, "figures": False}))
    out = tmp_path / "o"
    assert main(["analyze", "--surface", "disk", "--config", str(cfg), "--out", str(out)]) == 0
    rep = _json(out / "report.json")
    assert rep["surface"] == "cylinder" and rep["index_fem"] == 0
    assert not (out / "spectra.svg").exists()


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"surfce": "disk"}))
    assert main(["analyze", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("FBINDEX_OUT", str(tmp_path / "env"))
    assert main(["gen", "--surface", "disk", "--res", "3"]) == 0
    assert (tmp_path / "env" / "disk.off").exists()


def test_analyze_is_idempotent(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["analyze", "--surface", "hemisphere", "--res", "2", "--out", str(d)]) == 0
    ra, rb = _json(a / "report.json"), _json(b / "report.json")
    assert ra.pop("timestamp") and rb.pop("timestamp")
    assert ra == rb
    for name in ("jacobi_spectrum.csv", "hodge_spectrum.csv", "lemma_residuals.csv", "spectra.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_compare_from_files(tmp_path, capsys):
    jac, hod = tmp_path / "j.txt", tmp_path / "h.csv"
    jac.write_text("-3.5\n-1.0\n0.5\n")
    hod.write_text("n,eigenvalue\n" + "".join(f"{i},{0.5 * i}\n" for i in range(1, 20)))
    rc = main(["compare", "--jacobi", str(jac), "--hodge", str(hod), "--H", "1.0", "--ambient", "sphere",
               "--out", str(tmp_path)])
    assert rc == 0
    rows = _json(tmp_path / "comparison.json")
    first = [r for r in rows if r["alpha"] == 1 and r["variant"] == "minimal"][0]
    assert first["rhs"] == pytest.approx(-4.0 + 0.5)
    assert [r["m_alpha"] for r in rows if r["variant"] == "minimal"] == [1, 9, 17]


def test_classify_prints_discrepancy(capsys):
    assert main(["classify", "--ambient", "sphere"]) == 0
    assert "DISCREPANCY sphere: (0, 5)" in capsys.readouterr().out


def test_build_surface_rejects_unknown_parameter():
    with pytest.raises(ConfigError):
        build_surface("disk", {"L": 3})
    with pytest.raises(ConfigError):
        build_surface("cylinder", {"L": 3.141592653589793})


def test_small_suite(tmp_path):
    cases = [{"name": "cyl", "surface": "cylinder", "params": {"L": 4.0}, "levels": [12, 24]},
             {"name": "ann", "surface": "annulus", "levels": [16]},
             {"name": "bad", "surface": "cylinder", "params": {"L": 3.141592653589793}, "levels": [12]}]
    cfg = RunConfig(command="suite", out=str(tmp_path), cases=cases, figures=True)
    rows, path = run_suite(cfg)
    assert [r["case"] for r in rows] == ["cyl", "cyl", "ann", "bad"]
    assert rows[0]["verdict"] == rows[1]["verdict"] == rows[2]["verdict"] == "PASS"
    assert rows[3]["verdict"] == "FAIL" and "ConfigError" in rows[3]["status"]
    assert 1.5 < rows[1]["lambda1_J_order"] < 2.5
    assert os.path.exists(path) and (tmp_path / "convergence.svg").exists()
    assert _json(tmp_path / "bad_res12" / "error.json")["exit_code"] == 2
