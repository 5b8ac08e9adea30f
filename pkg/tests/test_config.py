import pytest
from hypothesis import given
from hypothesis import strategies as st

from grushin.config import COMMANDS, SCHEMA, ConfigError, parse_config

MINIMAL_BN = """
[run]
command = brezis-nirenberg
[params]
m = 1
n = 1
gamma = 1
p = 2
[domain]
lower = -1, -1
upper = 1, 1
cells = 32, 32
[problem]
q = 3
lambda = 1
"""


def errors_of(text, command=None):
    with pytest.raises(ConfigError) as info:
        parse_config(text, command)
    return info.value.errors


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL_BN)
    assert cfg.command == "brezis-nirenberg" and cfg.seed == 0
    assert cfg.params.N_gamma == 3
    s = cfg.section("solver")
    assert s["max_iters"] == 3000 and s["grad_tol"] == 1e-6 and s["memory"] == 8
    assert cfg.section("domain")["shape"] == "box"
    assert cfg.section("sobolev")["estimate"] is None
    assert cfg.section("output")["dump_fields"] is True


def test_echo_roundtrip():
    cfg = parse_config(MINIMAL_BN)
    again = parse_config(cfg.to_text())
    assert again.echo() == cfg.echo()


def test_seed_override_and_command_mismatch():
    assert parse_config(MINIMAL_BN, seed=7).seed == 7
    errs = errors_of(MINIMAL_BN, "eigenvalue")
    assert any("brezis-nirenberg" in e for e in errs)


def test_p_at_or_above_dimension_rejected():
    errs = errors_of(MINIMAL_BN.replace("p = 2", "p = 3.5"))
    assert any(e.startswith("params:") and "p must be < N_gamma" in e for e in errs)


def test_q_outside_range_reports_interval():
    errs = errors_of(MINIMAL_BN.replace("q = 3", "q = 7"))
    assert errs == ["problem.q: 7 outside the admissible range [p, p*_gamma) = [2, 6)"]


@pytest.mark.parametrize("lam", ["0", "-1"])
def test_q_equals_p_needs_positive_lambda(lam):
    text = MINIMAL_BN.replace("q = 3", "q = 2").replace("lambda = 1", f"lambda = {lam}")
    assert any("lambda" in e and "(0, lambda_1)" in e for e in errors_of(text))


def test_errors_are_exhaustive():
    text = MINIMAL_BN.replace("q = 3", "q = 9").replace("cells = 32, 32", "cells = 32, x")
    text += "\n[solver]\nmemory = 0\nbogus = 1\n[extra]\na = 1\n"
    errs = errors_of(text)
    joined = "\n".join(errs)
    for piece in ("problem.q", "domain.cells", "solver.memory", "solver.bogus", "[extra]"):
        assert piece in joined
    assert len(errs) == 5


def test_lambda_and_factor_are_exclusive():
    text = MINIMAL_BN.replace("lambda = 1", "lambda = 1\nlambda_factor = 0.5")
    assert any("not both" in e for e in errors_of(text))
    text = MINIMAL_BN.replace("lambda = 1", "")
    assert any("one of" in e for e in errors_of(text))


def test_missing_required_keys():
    errs = errors_of("[run]\ncommand = decay\n[params]\nm = 1\n")
    assert {"params.n: missing required key", "params.gamma: missing required key", "params.p: missing required key",
            "grid.cells: missing required key"} <= set(errs)


def test_unknown_or_missing_command():
    assert errors_of("[params]\nm = 1\n") == ["run.command: missing (give it in [run] or on the command line)"]
    assert "is not one of" in errors_of("[run]\ncommand = fly\n")[0]


def test_eigenvalue_accepts_p_equal_dimension():
    text = MINIMAL_BN.replace("brezis-nirenberg", "eigenvalue").replace("gamma = 1", "gamma = 0")
    text = text.split("[problem]")[0]
    cfg = parse_config(text)
    assert cfg.params.p == 2 and cfg.params.N_gamma == 2


def test_inequality_seeds_default_distinct():
    cfg = parse_config("[run]\ncommand = inequality-check\nseed = 4\n")
    assert cfg.section("inequality")["seeds"] == [4, 5]
    assert "distinct" in errors_of("[run]\ncommand = inequality-check\n[inequality]\nseeds = 3, 3\n")[0]


def test_syntax_error_is_config_error():
    assert errors_of("[run\ncommand = decay")[0].startswith("syntax:")


def test_every_command_has_schema():
    assert set(COMMANDS) == set(SCHEMA)


@given(st.floats(1e-300, 1e300))
def test_float_values_roundtrip_exactly(x):
    cfg = parse_config(MINIMAL_BN.replace("lambda = 1", f"lambda = {x!r}"))
    assert parse_config(cfg.to_text()).section("problem")["lambda"] == x
