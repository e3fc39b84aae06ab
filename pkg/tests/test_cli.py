import hashlib
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from separable.cli import (
    ConfigError,
    emit_plot_data,
    main,
    param_value,
    read_plot_data,
    resolve,
)


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--generator", "borehole", "--n-samples", "1500",
                 "--out", str(root / "data")]) == 0
    return root


def test_fit_and_invert_pipeline(pipeline, capsys):
    data = pipeline / "data" / "data.csv"
    before = digest(data)
    assert main(["fit", "--data", str(data), "--rank", "2", "--resolution", "3",
                 "--out", str(pipeline / "fit")]) == 0
    rep = json.loads((pipeline / "fit" / "report.json").read_text())
    assert rep["results"]["parameter_count"] == 2 * 8 * 6
    assert rep["results"]["test_r2"] > 0.99
    assert "wall_time_s" not in rep["results"] and "wall_time_s" in rep["volatile"]
    assert digest(data) == before

    assert main(["invert", "--model", str(pipeline / "fit" / "model.json"), "--target", "0.4",
                 "--n-seeds", "16", "--out", str(pipeline / "inv")]) == 0
    rep = json.loads((pipeline / "inv" / "report.json").read_text())
    assert rep["results"]["n_converged"] > 0
    cols, rows = read_plot_data(pipeline / "inv" / "inversion_ensemble.tsv")
    assert cols[:4] == ["seed", "converged", "iterations", "residual"] and len(cols) == 12
    assert len(rows) == 16
    assert "summary" not in capsys.readouterr().err


def test_reports_are_reproducible(pipeline):
    data = str(pipeline / "data" / "data.csv")
    payloads = []
    for k in range(2):
        out = pipeline / f"rep{k}"
        assert main(["fit", "--data", data, "--rank", "1", "--resolution", "2", "--seed", "7",
                     "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        rep.pop("volatile")
        payloads.append(json.dumps(rep, sort_keys=True))
        assert (out / "model.json").exists()
    assert payloads[0] == payloads[1]
    assert (pipeline / "rep0" / "model.json").read_bytes() == (pipeline / "rep1" / "model.json").read_bytes()


def test_missing_input_is_a_config_error(tmp_path, capsys):
    missing = tmp_path / "nowhere.csv"
    assert main(["fit", "--data", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_runtime_failure_exit_code(tmp_path, capsys):
    assert main(["solve-pde", "--rank", "0", "--out", str(tmp_path)]) == 1
    assert "rank and resolution must be >= 1" in capsys.readouterr().err


def test_bad_values_and_config_files(tmp_path):
    assert main(["fit", "--rank", "two", "--data", "x"]) == 2
    assert main(["benchmark", "--suite", "nope", "--out", str(tmp_path)]) == 2
    assert main(["scaling", "--config", str(tmp_path / "missing.ini")]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[scaling]\nfrobnicate = 3\n")
    assert main(["scaling", "--config", str(bad)]) == 2
    garbled = tmp_path / "garbled.ini"
    garbled.write_text("no section header\n")
    assert main(["scaling", "--config", str(garbled)]) == 2


def test_precedence_file_env_flag(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nseed = 5\nout = from-file\n[scaling]\nranks = 1,3\nresolutions = 4\n"
                   "omega = pi/3\n")
    v = resolve("scaling", {}, str(cfg), environ={})
    assert (v["seed"], v["out"], v["ranks"], v["resolutions"]) == (5, "from-file", [1, 3], [4])
    assert v["omega"] == pytest.approx(math.pi / 3)
    v = resolve("scaling", {}, str(cfg), environ={"SNA_SEED": "9", "SNA_RANKS": "2"})
    assert (v["seed"], v["ranks"]) == (9, [2])
    v = resolve("scaling", {"seed": "11"}, str(cfg), environ={"SNA_SEED": "9"})
    assert v["seed"] == 11
    assert resolve("scaling", {}, None, environ={})["out"].endswith("scaling")
    with pytest.raises(ConfigError):
        resolve("scaling", {}, None, environ={"SNA_WARM_START": "maybe"})


@pytest.mark.parametrize("raw,want", [("0.25", 0.25), ("pi", math.pi), ("pi/4", math.pi / 4),
                                      ("2*pi/3", 2 * math.pi / 3), ("free", None), (1, 1.0)])
def test_param_value(raw, want):
    got = param_value(raw)
    assert got == (None if want is None else pytest.approx(want))


def test_scaling_command_slopes_match_emitted_table(tmp_path):
    out = tmp_path / "sc"
    assert main(["scaling", "--ranks", "1,2,4", "--resolutions", "4,8", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    cols, rows = read_plot_data(out / "scaling_table.tsv")
    assert cols == ["R", "C", "N", "error", "wall_time_s", "status"]
    assert len(rows) == 6 and all(r[5] == "ok" for r in rows)
    # isoline slopes recomputed from the file
    for R in (1, 2, 4):
        pts = sorted((r[1], r[3]) for r in rows if r[0] == R)
        slope = np.log(pts[1][1] / pts[0][1]) / np.log(pts[1][0] / pts[0][0])
        assert rep["results"]["isoline_slopes"][str(R)] == pytest.approx(slope, rel=1e-12)
    fcols, front = read_plot_data(out / "scaling_frontier.tsv")
    assert fcols == ["N", "error", "R", "C"]
    n, e = np.array([f[0] for f in front], float), np.array([f[1] for f in front])
    assert rep["results"]["frontier_slope"] == pytest.approx(np.polyfit(np.log(n), np.log(e), 1)[0],
                                                             rel=1e-12)


def test_burgers_solve_emits_error_field(tmp_path):
    out = tmp_path / "bg"
    assert main(["solve-pde", "--kind", "burgers_1d", "--nx", "16", "--nt", "8", "--t-end", "0.3",
                 "--method", "gauss_newton", "--max-iters", "30", "--grid", "16", "--out", str(out)]) == 0
    cols, rows = read_plot_data(out / "burgers_error.tsv")
    assert cols == ["x", "t", "u", "reference", "abs_error"] and len(rows) == 256
    rep = json.loads((out / "report.json").read_text())
    assert rep["results"]["max_abs_error"] == pytest.approx(max(r[4] for r in rows))


def test_benchmark_borehole_report(tmp_path):
    out = tmp_path / "bh"
    assert main(["benchmark", "--suite", "borehole", "--n-samples", "4000", "--out", str(out)]) == 0
    res = json.loads((out / "report.json").read_text())["results"]
    assert res["parameter_count"] == 240
    assert res["test_r2"] > 0.99


def test_empty_scaling_table_is_header_only(tmp_path):
    report = {"series": {"scaling_frontier": {"columns": ["N", "error", "R", "C"], "rows": []}}}
    (path,) = emit_plot_data(report, tmp_path)
    assert path.read_text() == "N\terror\tR\tC\n"


def test_wrong_columns_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_plot_data({"series": {"scaling_frontier": {"columns": ["C", "N"], "rows": []}}}, tmp_path)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 10 ** 6), st.floats(allow_nan=False, allow_infinity=False),
                          st.integers(1, 64), st.integers(1, 64)), max_size=20))
def test_plot_data_round_trip(tmp_path_factory, rows):
    out = tmp_path_factory.mktemp("rt")
    report = {"series": {"scaling_frontier": {"columns": ["N", "error", "R", "C"],
                                              "rows": [list(r) for r in rows]}}}
    (path,) = emit_plot_data(report, out)
    cols, back = read_plot_data(path)
    assert cols == ["N", "error", "R", "C"]
    assert len(back) == len(rows)
    for b, r in zip(back, rows):
        assert b[0] == r[0] and b[2:] == list(r[2:])
        assert float(b[1]) == r[1]
