import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from curvetmp import GraphCurve, HyperbolicCurve, monomial_curve, synth_moments
from curvetmp.cli import dumps, parse_and_run, parse_curve, problem_dict
from curvetmp.core import AtomicMeasure2D, DEFAULT_TOLERANCES, InvalidInput

from _gen import PARABOLA_NO, from_gamma


def write(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def run(argv, capsys):
    code = parse_and_run([str(a) for a in argv])
    return code, capsys.readouterr().out


@pytest.fixture
def parab(tmp_path):
    return write(tmp_path / "parab.json", problem_dict(monomial_curve(2), from_gamma(PARABOLA_NO, 4)))


@pytest.fixture
def cubic6(tmp_path):
    curve = monomial_curve(3)
    mu = AtomicMeasure2D(((0.0, 0.0), (1.0, 1.0), (-1.0, -1.0)), (1.0, 1.0, 1.0), curve)
    return write(tmp_path / "cubic6.json", problem_dict(curve, synth_moments(mu, 6)))


def test_solve_no_case(parab, tmp_path, capsys):
    out = tmp_path / "report.json"
    code, _ = run(["solve", "--input", parab, "--out", out], capsys)
    report = json.loads(out.read_text())
    assert code == 2 and report["status"] == "NoMeasure" and report["measure"] is None
    assert report["diagnostics"]["rank_corner"] == 3 and report["diagnostics"]["rank_moment_matrix"] == 4


def test_synth_then_solve(tmp_path, capsys):
    m = write(tmp_path / "m.json", {"atoms": [[-1, 1], [0.5, 0.25], [2, 4]], "densities": [0.25, 0.5, 0.25]})
    prob, rep = tmp_path / "p.json", tmp_path / "r.json"
    assert run(["synth", "--measure", m, "--degree", 4, "--curve", "y=x^2", "--out", prob], capsys)[0] == 0
    code, _ = run(["solve", "--input", prob, "--out", rep], capsys)
    report = json.loads(rep.read_text())
    assert code == 0 and report["status"] == "MeasureFound" and report["residual"] < 1e-8
    got = sorted(zip(report["measure"]["atoms"], report["measure"]["densities"]))
    expected = [([-1, 1], 0.25), ([0.5, 0.25], 0.5), ([2, 4], 0.25)]
    for (a, r), (ea, er) in zip(got, expected):
        assert np.allclose(a, ea, atol=1e-8) and r == pytest.approx(er, abs=1e-8)
    code, text = run(["verify", "--input", prob, "--measure", rep], capsys)
    assert code == 0 and json.loads(text)["represents"] is True


def test_export_sdpa(cubic6, tmp_path, capsys):
    code, text = run(["export-sdpa", "--input", cubic6], capsys)
    assert code == 0
    info = json.loads(text)
    assert info["unknowns"] == 3 and info["block_size"] == 11
    lines = (tmp_path / "cubic6.dat-s").read_text().splitlines()
    assert lines[1].split()[0] == "3" and lines[3].split()[0] == "11"


def test_output_is_byte_identical(cubic6, tmp_path, capsys):
    outs = []
    for name in ("a.json", "b.json"):
        run(["solve", "--input", cubic6, "--out", tmp_path / name], capsys)
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_tolerances_are_echoed(cubic6, tmp_path, capsys):
    data = json.loads(open(cubic6).read())
    data["tolerances"] = {"psd_tol": 1e-10}
    path = write(tmp_path / "t.json", data)
    _, text = run(["check", "--input", path, "--rank-tol", "1e-11"], capsys)
    tol = json.loads(text)["tolerances"]
    assert tol["psd_tol"] == 1e-10 and tol["rank_tol"] == 1e-11
    assert tol["max_iter"] == DEFAULT_TOLERANCES.max_iter


@pytest.mark.parametrize("argv", [
    ["solve"],
    ["solve", "--input", "/nonexistent.json"],
    ["frobnicate"],
    ["synth", "--measure", "MEASURE", "--degree", 3, "--curve", "y=sin(x)"],
])
def test_errors_exit_one_with_json(argv, tmp_path, capsys):
    m = write(tmp_path / "m.json", {"atoms": [[1, 1]], "densities": [1]})
    code, text = run([m if a == "MEASURE" else a for a in argv], capsys)
    err = json.loads(text)
    assert code == 1 and isinstance(err, dict) and err["error"]


def test_malformed_problem(tmp_path, capsys):
    path = write(tmp_path / "bad.json", {"curve": "y=x^2", "degree": 2, "moments": [[0, 0, 1], [0, 0, 2]]})
    code, text = run(["solve", "--input", path], capsys)
    assert code == 1 and "twice" in json.loads(text)["message"]


def test_check_reports_relations(tmp_path, capsys):
    beta = from_gamma(PARABOLA_NO, 4)
    vals = problem_dict(monomial_curve(2), beta)
    for entry in vals["moments"]:
        if entry[:2] == [0, 1]:
            entry[2] += 0.5
    code, text = run(["check", "--input", write(tmp_path / "c.json", vals)], capsys)
    out = json.loads(text)
    assert code == 2 and out["relations_hold"] is False and [0, 1] in out["relations_violated"]


def test_curve_parsing():
    assert parse_curve("y=x^3") == GraphCurve((0.0, 0.0, 0.0, 1.0))
    assert parse_curve("y * x^2 = 1") == HyperbolicCurve(2)
    assert parse_curve([1, 0, 2]) == GraphCurve((1.0, 0.0, 2.0))
    assert parse_curve("[1, 0, 2]") == GraphCurve((1.0, 0.0, 2.0))
    assert parse_curve({"hyperbolic": 3}) == HyperbolicCurve(3)
    for bad in ("y=x^2+__import__('os')", "x=y^2", [], {"graph": "y"}, "y=x^-1"):
        with pytest.raises(InvalidInput):
            parse_curve(bad)


def test_numbers_keep_seventeen_digits():
    text = dumps({"v": 0.1, "w": [1 / 3], "n": float("nan")})
    data = json.loads(text)
    assert data["v"] == 0.1 and data["w"][0] == 1 / 3 and data["n"] is None
    assert "0.10000000000000001" in text


def test_console_entry_point(parab):
    proc = subprocess.run([sys.executable, "-m", "curvetmp.cli", "solve", "--input", parab],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 2 and json.loads(proc.stdout)["status"] == "NoMeasure"


def test_files_match_shipped_schemas(parab, cubic6, tmp_path, capsys):
    jsonschema = pytest.importorskip("jsonschema")
    referencing = pytest.importorskip("referencing")
    docs = Path(__file__).parent.parent / "docs"
    schemas = {name: json.loads((docs / f"{name}.schema.json").read_text())
               for name in ("problem", "measure", "report", "error")}
    registry = referencing.Registry().with_resources(
        (f"{name}.schema.json", referencing.Resource.from_contents(s)) for name, s in schemas.items())

    def check(name, payload):
        jsonschema.Draft202012Validator(schemas[name], registry=registry).validate(payload)

    for path in (parab, cubic6):
        check("problem", json.loads(open(path).read()))
        run(["solve", "--input", path, "--out", tmp_path / "r.json"], capsys)
        check("report", json.loads((tmp_path / "r.json").read_text()))
    check("measure", {"atoms": [[1, 1], 2.0], "densities": [0.5, 0.5], "curve": "y=x^2"})
    _, text = run(["solve", "--input", tmp_path / "missing.json"], capsys)
    check("error", json.loads(text))
