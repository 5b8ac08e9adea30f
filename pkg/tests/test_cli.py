import json
import math
import os
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from grushin.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, EXIT_SOLVER, RunReport, main, to_json

BN = """
[run]
command = brezis-nirenberg
seed = 3
[params]
m = 1
n = 1
gamma = 1
p = 2
[domain]
lower = -1, -1
upper = 1, 1
cells = 24, 24
[problem]
q = 3
lambda = 1
[sobolev]
estimate = 1.35
"""

INEQ = """
[run]
command = inequality-check
[inequality]
samples = 2000
"""

STALLED = """
[run]
command = best-constant
[params]
m = 1
n = 1
gamma = 1
p = 2
[grid]
radius = 6
cells = 16, 32
levels = 1
[solver]
max_iters = 2
"""

EXPANSION = """
[run]
command = expansion
[params]
m = 1
n = 1
gamma = 1
p = 2
[grid]
radius = 10
cells = 32, 64
levels = 1
[expansion]
cells = 32, 256
q = 2.5
eps = 0.4, 0.3
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def load_report(d):
    return json.loads((d / "report.json").read_text())


def test_report_schema_and_artifacts(tmp_path):
    out = tmp_path / "run"
    assert main(["brezis-nirenberg", "--config", write(tmp_path, "bn.ini", BN), "--out", str(out)]) == EXIT_OK
    rep = load_report(out)
    assert list(rep) == ["schema_version", "command", "status", "config", "results", "artifacts", "error",
                         "wall_time_s"]
    assert rep["status"] == "ok" and rep["error"] is None and rep["schema_version"] == 1
    assert rep["config"]["run"]["seed"] == 3
    assert rep["config"]["solver"]["max_iters"] == 3000
    res = rep["results"]
    assert res["c_lambda"] > 0
    assert res["threshold"] == pytest.approx(1.35**1.5 / 3, rel=1e-14)
    for name in rep["artifacts"]["fields"] + rep["artifacts"]["plots"]:
        assert (out / name).is_file()


def test_runs_are_deterministic(tmp_path):
    cfg = write(tmp_path, "bn.ini", BN)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["brezis-nirenberg", "--config", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["brezis-nirenberg", "--config", cfg, "--out", str(b)]) == EXIT_OK
    ra, rb = load_report(a), load_report(b)
    ra.pop("wall_time_s"), rb.pop("wall_time_s")
    assert ra == rb
    for name in ra["artifacts"]["fields"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    out = tmp_path / "s"
    assert main(["inequality-check", "--config", write(tmp_path, "i.ini", INEQ), "--out", str(out),
                 "--seed", "11"]) == EXIT_OK
    rep = load_report(out)
    assert rep["config"]["run"]["seed"] == 11
    assert rep["config"]["inequality"]["seeds"] == [11, 12]


def test_validation_error_exit_code(tmp_path, capsys):
    bad = write(tmp_path, "bad.ini", BN.replace("q = 3", "q = 7"))
    assert main(["brezis-nirenberg", "--config", bad, "--out", str(tmp_path / "x")]) == EXIT_INVALID
    assert "admissible range" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_missing_config_is_io_error(tmp_path):
    assert main(["decay", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "x")]) == EXIT_IO


def test_solver_failure_writes_report(tmp_path):
    out = tmp_path / "f"
    assert main(["best-constant", "--config", write(tmp_path, "f.ini", STALLED), "--out", str(out)]) == EXIT_SOLVER
    rep = load_report(out)
    assert rep["status"] == "solver_error"
    assert rep["error"]["trace"]
    assert "last_iterate.field" in rep["artifacts"]["fields"]


def test_expansion_csv_columns(tmp_path):
    out = tmp_path / "e"
    assert main(["expansion", "--config", write(tmp_path, "e.ini", EXPANSION), "--out", str(out)]) == EXIT_OK
    lines = (out / "expansion.csv").read_text().splitlines()
    assert lines[0] == "eps,grad_p_energy,crit_norm_pstar,lower_norm_p,lower_norm_q"
    assert [float(line.split(",")[0]) for line in lines[1:]] == [0.4, 0.3]


def test_batch_runs_use_distinct_directories(tmp_path):
    cfgs = [write(tmp_path, "one.ini", INEQ), write(tmp_path, "two.ini", INEQ.replace("[run]", "[run]\nseed = 9"))]
    out = tmp_path / "batch"
    argv = ["inequality-check", "--out", str(out), "--jobs", "2"]
    for c in cfgs:
        argv += ["--config", c]
    assert main(argv) == EXIT_OK
    assert load_report(out / "one")["config"]["run"]["seed"] == 0
    assert load_report(out / "two")["config"]["run"]["seed"] == 9


def test_batch_rejects_clashing_names(tmp_path):
    (tmp_path / "a").mkdir(), (tmp_path / "b").mkdir()
    c1, c2 = write(tmp_path / "a", "same.ini", INEQ), write(tmp_path / "b", "same.ini", INEQ)
    assert main(["inequality-check", "--config", c1, "--config", c2, "--out", str(tmp_path)]) == EXIT_INVALID


def test_console_entry_point(tmp_path):
    env = dict(os.environ, GRUSHIN_THREADS="1")
    cfg = write(tmp_path, "i.ini", INEQ)
    proc = subprocess.run([sys.executable, "-m", "grushin.cli", "inequality-check", "--config", cfg,
                           "--out", str(tmp_path / "o")], env=env, capture_output=True, text=True)
    assert proc.returncode == EXIT_OK, proc.stderr
    assert (tmp_path / "o" / "report.json").is_file()


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(st.dictionaries(st.text(max_size=5), st.one_of(finite, st.lists(finite, max_size=4), st.integers(), st.none())))
def test_json_roundtrip_is_lossless(d):
    assert json.loads(to_json(d)) == d


def test_json_special_values():
    text = to_json({"a": math.nan, "b": math.inf, "c": 2.0, "d": 0.1})
    back = json.loads(text)
    assert math.isnan(back["a"]) and back["b"] == math.inf
    assert '"c": 2.0' in text and '"d": 0.10000000000000001' in text


def test_report_text_roundtrip():
    rep = RunReport("decay", {"run": {"seed": 1}}, {"slope": -0.97712345678901234})
    assert RunReport.from_text(rep.to_text()) == rep


@pytest.mark.parametrize("argv", [["decay"], ["bogus", "--config", "x"]])
def test_bad_arguments_exit(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2
