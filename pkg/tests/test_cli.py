import json

import numpy as np
import pytest

from glinfer.cli import main


@pytest.fixture
def golden(tmp_path):
    y = tmp_path / "y.csv"
    y.write_text("y\n0\n0\n1\n1\n")
    trace = tmp_path / "trace.json"
    assert main(["path", "--input", str(y), "--penalty", "d1", "--max-steps", "10", "--out", str(trace)]) == 0
    return tmp_path, trace


def test_path_writes_trace(golden):
    _, trace = golden
    d = json.loads(trace.read_text())
    assert d["knots"] == pytest.approx([1.0, 0.0])
    assert d["steps"][0]["boundary"] == [2]
    assert d["penalty"] == {"kind": "diff1", "n": 4}


def test_infer_golden(golden):
    tmp, trace = golden
    out = tmp / "res.json"
    code = main(["infer", "--trace", str(trace), "--contrast", "segment", "--location", "2",
                 "--sigma", "1", "--alpha", "0.05", "--out", str(out)])
    assert code == 0
    res = json.loads(out.read_text())
    assert res["p_one"] == pytest.approx(0.3173, abs=1e-4)
    assert res["vup"] == float("inf")
    assert res["ci"][0] < 1.0 < res["ci"][1]
    assert res["v"] == pytest.approx([-0.5, -0.5, 0.5, 0.5])


def test_infer_custom_contrast_file(golden):
    tmp, trace = golden
    v = tmp / "v.csv"
    v.write_text("-0.5\n-0.5\n0.5\n0.5\n")
    out = tmp / "res.json"
    assert main(["infer", "--trace", str(trace), "--contrast-file", str(v), "--sigma", "1", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["p_one"] == pytest.approx(0.3173, abs=1e-4)


def test_stepsign_formats(golden, capsys):
    tmp, trace = golden
    assert main(["stepsign", "--trace", str(trace), "--step", "1", "--format", "txt"]) == 0
    assert capsys.readouterr().out == "location\tsign\n2\t+1\n"
    svg = tmp / "p.svg"
    assert main(["stepsign", "--trace", str(trace), "--format", "svg", "--out", str(svg)]) == 0
    text = svg.read_text()
    assert text.startswith("<svg") and "stroke-dasharray" in text
    assert main(["stepsign", "--trace", str(trace), "--format", "ascii"]) == 0
    assert "|" in capsys.readouterr().out


def test_stepsign_ignores_scale(tmp_path, capsys):
    rng = np.random.default_rng(0)
    y = rng.standard_normal(20)
    outs = []
    for c in (1.0, 37.0):
        f = tmp_path / f"y{c}.csv"
        f.write_text("\n".join(repr(float(v)) for v in c * y))
        t = tmp_path / f"t{c}.json"
        assert main(["path", "--input", str(f), "--max-steps", "4", "--out", str(t)]) == 0
        capsys.readouterr()
        assert main(["stepsign", "--trace", str(t), "--format", "txt"]) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    assert outs[0].count("\n") == 5


def test_graph_path_and_infer(tmp_path):
    y = tmp_path / "y.csv"
    y.write_text("0\n0.1\n-0.2\n3\n3.1\n2.9\n")
    e = tmp_path / "e.csv"
    e.write_text("i,j\n1,2\n2,3\n3,4\n4,5\n5,6\n1,3\n4,6\n")
    t = tmp_path / "t.json"
    assert main(["path", "--input", str(y), "--penalty", "graph", "--edges", str(e), "--max-steps", "1", "--out", str(t)]) == 0
    loc = json.loads(t.read_text())["steps"][0]["coord"]
    assert loc == 3
    out = tmp_path / "r.json"
    assert main(["infer", "--trace", str(t), "--contrast", "segment", "--location", str(loc), "--sigma", "1", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["v"] == pytest.approx([-1 / 3] * 3 + [1 / 3] * 3)


def test_simulate_outputs(tmp_path):
    csv_path, js = tmp_path / "r.csv", tmp_path / "s.json"
    args = ["simulate", "--scenario", "one_jump", "--param", "n=20", "--param", "loc=10", "--param", "delta=2",
            "--reps", "15", "--seed", "2", "--require", "10", "--out-csv", str(csv_path), "--out-json", str(js)]
    assert main(args) == 0
    first = csv_path.read_text()
    assert main(args) == 0
    assert csv_path.read_text() == first
    summary = json.loads(js.read_text())
    assert summary["reps"] == 15 and summary["config"]["require"] == [10]


def test_simulate_from_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "one_jump", "params": {"n": 20, "loc": 10}, "reps": 5, "seed": 1,
                               "stop": {"penalty": "bic", "q": 2}}))
    js = tmp_path / "s.json"
    assert main(["simulate", "--config", str(cfg), "--out-json", str(js)]) == 0
    assert json.loads(js.read_text())["config"]["stop"]["penalty"] == "bic"


def test_estimate_sigma(tmp_path):
    f = tmp_path / "y.csv"
    f.write_text("\n".join(["0"] * 20 + ["3"] * 20))
    out = tmp_path / "s.json"
    assert main(["estimate-sigma", "--input", str(f), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["sigma"] < 1e-8


@pytest.mark.parametrize(
    "argv",
    [
        ["path", "--input", "/nonexistent.csv"],
        ["bogus"],
        ["infer", "--trace", "/nonexistent.json", "--sigma", "1"],
    ],
)
def test_input_errors_exit_2(argv):
    assert main(argv) == 2


def test_bad_location_and_sigma_exit_2(golden):
    _, trace = golden
    assert main(["infer", "--trace", str(trace), "--contrast", "spike", "--location", "3", "--sigma", "1"]) == 2
    assert main(["infer", "--trace", str(trace), "--contrast", "spike", "--location", "2", "--sigma", "-1"]) == 2
    assert main(["infer", "--trace", str(trace), "--sigma", "1"]) == 2


def test_tampered_trace_exit_2(golden):
    _, trace = golden
    d = json.loads(trace.read_text())
    d["steps"][0]["boundary"] = [1]
    trace.write_text(json.dumps(d))
    assert main(["infer", "--trace", str(trace), "--contrast", "spike", "--location", "1", "--sigma", "1"]) == 2


def test_degenerate_exit_3(tmp_path):
    f = tmp_path / "y.csv"
    f.write_text("2\n2\n2\n")
    assert main(["path", "--input", str(f), "--out", str(tmp_path / "t.json")]) == 3
    assert main(["stepsign", "--trace", str(tmp_path / "t.json")]) == 3


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


def test_infer_with_ic_stop(tmp_path):
    rng = np.random.default_rng(4)
    y = np.r_[np.zeros(10), 3 * np.ones(10)] + rng.standard_normal(20)
    f = tmp_path / "y.csv"
    f.write_text("\n".join(repr(float(v)) for v in y))
    t = tmp_path / "t.json"
    assert main(["path", "--input", str(f), "--max-steps", "1", "--out", str(t)]) == 0
    loc = json.loads(t.read_text())["steps"][0]["coord"]
    out = tmp_path / "r.json"
    code = main(["infer", "--trace", str(t), "--stop", "bic", "--q", "2", "--contrast", "segment",
                 "--location", str(loc), "--sigma", "1", "--out", str(out)])
    assert code == 0
    res = json.loads(out.read_text())
    assert res["ic"]["khat"] == res["step"] >= 1
    assert 0 <= res["p_one"] <= 1
