"""Experiment configuration: a strict INI schema with exhaustive validation.

A config is a set of ``[section]`` blocks of ``key = value`` lines.  Lists
are comma separated, booleans are ``true``/``false``.  Every section and key
is checked against the schema of the command being run; all problems are
collected and reported together, before any computation starts.

Sections per command (``*`` marks required keys)::

    [run]           command, seed
    [params]        m*, n*, gamma*, p*                       (all but inequality-check)
    [solver]        max_iters, grad_tol, step_init, armijo_c, armijo_shrink,
                    delta_reg, memory, recenter_every
    [output]        dump_fields
    [grid]          radius, cells*, levels, pin_radius, extremal
                    (best-constant, decay, concentration, expansion)
    [domain]        lower*, upper*, cells*, shape, ball_radius
                    (eigenvalue, brezis-nirenberg)
    [problem]       q*, lambda | lambda_factor                (brezis-nirenberg)
    [sobolev]       estimate, radius, cells                   (brezis-nirenberg)
    [decay]         r_min, r_max, n_annuli, quantile
    [concentration] rhos, n_rhos
    [expansion]     cells*, q*, eps, R_cut, profile_radius, quadrature
    [inequality]    p, samples, seeds, dim
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .geometry import GrushinParams

COMMANDS = (
    "best-constant",
    "eigenvalue",
    "brezis-nirenberg",
    "decay",
    "expansion",
    "concentration",
    "inequality-check",
)

_REQUIRED = object()


@dataclass(frozen=True)
class Key:
    kind: str  # int, float, bool, str, ints, floats, choice
    default: object = _REQUIRED
    choices: tuple = ()
    positive: bool = False

    @property
    def required(self) -> bool:
        return self.default is _REQUIRED


_RUN = {"command": Key("choice", None, COMMANDS), "seed": Key("int", 0)}
_PARAMS = {"m": Key("int"), "n": Key("int"), "gamma": Key("float"), "p": Key("float")}
_SOLVER = {
    "max_iters": Key("int", 3000, positive=True),
    "grad_tol": Key("float", 1e-6, positive=True),
    "step_init": Key("float", 1.0, positive=True),
    "armijo_c": Key("float", 1e-4, positive=True),
    "armijo_shrink": Key("float", 0.5, positive=True),
    "delta_reg": Key("float", 0.0),
    "memory": Key("int", 8, positive=True),
    "recenter_every": Key("int", 50),
}
_OUTPUT = {"dump_fields": Key("bool", True)}
_GRID = {
    "radius": Key("float", 10.0, positive=True),
    "cells": Key("ints"),
    "levels": Key("int", 2, positive=True),
    "pin_radius": Key("float", None, positive=True),
    "extremal": Key("str", None),
}
_DOMAIN = {
    "lower": Key("floats"),
    "upper": Key("floats"),
    "cells": Key("ints"),
    "shape": Key("choice", "box", ("box", "gauge_ball")),
    "ball_radius": Key("float", None, positive=True),
}
_PROBLEM = {
    "q": Key("float"),
    "lambda": Key("float", None),
    "lambda_factor": Key("float", None),
}
_SOBOLEV = {
    "estimate": Key("float", None, positive=True),
    "radius": Key("float", 10.0, positive=True),
    "cells": Key("ints", None),
}
_DECAY = {
    "r_min": Key("float", 5.0, positive=True),
    "r_max": Key("float", 20.0, positive=True),
    "n_annuli": Key("int", 8, positive=True),
    "quantile": Key("float", 0.1, positive=True),
}
_CONCENTRATION = {"rhos": Key("floats", None), "n_rhos": Key("int", 24, positive=True)}
_EXPANSION = {
    "cells": Key("ints"),
    "q": Key("float"),
    "eps": Key("floats", (0.4, 0.28, 0.2, 0.14, 0.1)),
    "R_cut": Key("float", 1.0, positive=True),
    "profile_radius": Key("float", 0.25, positive=True),
    "quadrature": Key("choice", "radial", ("radial", "cartesian")),
}
_INEQUALITY = {
    "p": Key("floats", (1.5, 2.0, 3.0)),
    "samples": Key("int", 100_000, positive=True),
    "seeds": Key("ints", None),
    "dim": Key("int", 2, positive=True),
}

_COMMON = {"run": _RUN, "solver": _SOLVER, "output": _OUTPUT}
SCHEMA = {
    "best-constant": {**_COMMON, "params": _PARAMS, "grid": _GRID},
    "decay": {**_COMMON, "params": _PARAMS, "grid": _GRID, "decay": _DECAY},
    "concentration": {**_COMMON, "params": _PARAMS, "grid": _GRID, "concentration": _CONCENTRATION},
    "expansion": {**_COMMON, "params": _PARAMS, "grid": _GRID, "expansion": _EXPANSION},
    "eigenvalue": {**_COMMON, "params": _PARAMS, "domain": _DOMAIN},
    "brezis-nirenberg": {**_COMMON, "params": _PARAMS, "domain": _DOMAIN, "problem": _PROBLEM,
                         "sobolev": _SOBOLEV},
    "inequality-check": {**_COMMON, "inequality": _INEQUALITY},
}


class ConfigError(ValueError):
    """All validation problems of one config."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class ExperimentConfig:
    command: str
    seed: int
    params: GrushinParams | None
    sections: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.sections[name]

    def echo(self) -> dict:
        """The effective config, defaults resolved, in section order."""
        out = {"run": {"command": self.command, "seed": self.seed}}
        for name, values in self.sections.items():
            if name != "run":
                out[name] = dict(values)
        return out

    def to_text(self) -> str:
        """INI text that parses back to this config."""
        lines = []
        for name, values in self.echo().items():
            lines.append(f"[{name}]")
            for k, v in values.items():
                if v is None:
                    continue
                lines.append(f"{k} = {_format_value(v)}")
            lines.append("")
        return "\n".join(lines)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (list, tuple)):
        return ", ".join(_format_value(x) for x in v)
    return str(v)


def _convert(key: Key, raw: str, where: str, errors: list):
    raw = raw.strip()
    try:
        if key.kind == "int":
            value = int(raw)
        elif key.kind == "float":
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError
        elif key.kind == "bool":
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError
            value = low == "true"
        elif key.kind == "ints":
            value = [int(x) for x in raw.split(",")]
        elif key.kind == "floats":
            value = [float(x) for x in raw.split(",")]
            if not all(math.isfinite(x) for x in value):
                raise ValueError
        elif key.kind == "choice":
            if raw not in key.choices:
                errors.append(f"{where}: {raw!r} is not one of {', '.join(key.choices)}")
                return None
            value = raw
        else:
            value = raw
    except ValueError:
        errors.append(f"{where}: cannot read {raw!r} as {key.kind}")
        return None
    if key.positive:
        items = value if isinstance(value, list) else [value]
        if any(not x > 0 for x in items):
            errors.append(f"{where}: must be positive, got {raw}")
            return None
    return value


def _read_ini(text: str):
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), strict=True, default_section="__defaults__"
    )
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}".replace("\n", " ")]) from exc
    return {s: dict(parser.items(s)) for s in parser.sections()}


def parse_config(text: str, command: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Validate INI text against the schema of ``command``.

    ``command`` (from the command line) and ``[run] command`` must agree when
    both are given; ``seed`` overrides ``[run] seed``.  Raises ConfigError
    listing every problem found.
    """
    raw = _read_ini(text)
    errors: list[str] = []
    given = raw.get("run", {}).get("command", "").strip() or None
    if command is not None and given is not None and given != command:
        errors.append(f"run.command: config is for {given!r} but {command!r} was invoked")
    command = command or given
    if command is None:
        raise ConfigError(["run.command: missing (give it in [run] or on the command line)"])
    if command not in SCHEMA:
        raise ConfigError([f"run.command: {command!r} is not one of {', '.join(COMMANDS)}"])
    schema = SCHEMA[command]

    for name in raw:
        if name not in schema:
            errors.append(f"[{name}]: unknown section for {command}")
    sections: dict[str, dict] = {}
    for name, keys in schema.items():
        given_keys = raw.get(name, {})
        for k in given_keys:
            if k not in keys:
                errors.append(f"{name}.{k}: unknown key")
        values = {}
        for k, key in keys.items():
            where = f"{name}.{k}"
            if k in given_keys:
                values[k] = _convert(key, given_keys[k], where, errors)
            elif key.required:
                errors.append(f"{where}: missing required key")
                values[k] = None
            else:
                d = key.default
                values[k] = list(d) if isinstance(d, tuple) else d
        sections[name] = values
    sections["run"]["command"] = command
    if seed is not None:
        sections["run"]["seed"] = int(seed)

    params = None
    if "params" in schema:
        params = _check_params(sections["params"], errors, supercritical=command == "eigenvalue")
    _CHECKS[command](sections, params, errors)
    _check_solver(sections["solver"], errors)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(command, sections["run"]["seed"], params, sections)


def _check_params(values: dict, errors: list, supercritical: bool = False) -> GrushinParams | None:
    if any(values[k] is None for k in ("m", "n", "gamma", "p")):
        return None
    try:
        return GrushinParams(values["m"], values["n"], values["gamma"], values["p"], supercritical)
    except ValueError as exc:
        errors.append(f"params: {exc}")
        return None


def _check_solver(values: dict, errors: list) -> None:
    for k in ("armijo_c", "armijo_shrink"):
        v = values.get(k)
        if v is not None and not v < 1:
            errors.append(f"solver.{k}: must lie in (0, 1), got {v:g}")
    if values.get("delta_reg") is not None and values["delta_reg"] < 0:
        errors.append("solver.delta_reg: must be >= 0")
    if values.get("recenter_every") is not None and values["recenter_every"] < 0:
        errors.append("solver.recenter_every: must be >= 0")


def _check_cells(where: str, cells, params, errors: list) -> None:
    if cells is None or params is None:
        return
    if len(cells) != params.dim:
        errors.append(f"{where}: need {params.dim} entries (one per axis), got {len(cells)}")
    elif min(cells) < 4:
        errors.append(f"{where}: need at least 4 cells per axis")


def _check_grid(sections, params, errors) -> None:
    g = sections["grid"]
    _check_cells("grid.cells", g["cells"], params, errors)
    if g["levels"] is not None and g["levels"] < 1:
        errors.append("grid.levels: must be >= 1")
    if g["pin_radius"] is None and g["radius"] is not None:
        g["pin_radius"] = g["radius"] / 5.0
    if g["pin_radius"] is not None and g["radius"] is not None and g["pin_radius"] >= g["radius"]:
        errors.append("grid.pin_radius: must be smaller than grid.radius")


def _check_domain(sections, params, errors) -> None:
    d = sections["domain"]
    _check_cells("domain.cells", d["cells"], params, errors)
    lo, hi = d["lower"], d["upper"]
    if params is not None:
        for name, v in (("lower", lo), ("upper", hi)):
            if v is not None and len(v) != params.dim:
                errors.append(f"domain.{name}: need {params.dim} entries, got {len(v)}")
    if lo is not None and hi is not None and len(lo) == len(hi):
        if any(not a < b for a, b in zip(lo, hi)):
            errors.append("domain: every lower bound must be below its upper bound")
        if params is not None and len(lo) == params.dim:
            xs = list(zip(lo, hi))[: params.m]
            if any(not a <= 0 <= b for a, b in xs):
                errors.append("domain: the box must meet the degeneration set {x = 0}")
    if d["shape"] == "gauge_ball" and d["ball_radius"] is None:
        errors.append("domain.ball_radius: required when shape = gauge_ball")


def _best_constant(sections, params, errors):
    _check_grid(sections, params, errors)


def _decay(sections, params, errors):
    _check_grid(sections, params, errors)
    d, g = sections["decay"], sections["grid"]
    if None not in (d["r_min"], d["r_max"]) and not d["r_min"] < d["r_max"]:
        errors.append("decay: r_min must be below r_max")
    if d["r_max"] is not None and g["radius"] is not None and d["r_max"] > g["radius"]:
        errors.append(f"decay.r_max: {d['r_max']:g} exceeds grid.radius = {g['radius']:g}")
    if d["quantile"] is not None and not d["quantile"] < 1:
        errors.append("decay.quantile: must lie in (0, 1)")
    if d["n_annuli"] is not None and d["n_annuli"] < 2:
        errors.append("decay.n_annuli: need at least 2 annuli for a slope")


def _concentration(sections, params, errors):
    _check_grid(sections, params, errors)
    c = sections["concentration"]
    if c["rhos"] is not None:
        if any(not r > 0 for r in c["rhos"]):
            errors.append("concentration.rhos: radii must be positive")
        if any(b <= a for a, b in zip(c["rhos"], c["rhos"][1:])):
            errors.append("concentration.rhos: radii must be strictly increasing")


def _expansion(sections, params, errors):
    _check_grid(sections, params, errors)
    e = sections["expansion"]
    radial = e["quadrature"] == "radial"
    if radial:
        if e["cells"] is not None and len(e["cells"]) != 2:
            errors.append(f"expansion.cells: radial quadrature needs 2 entries (r, s), got {len(e['cells'])}")
    else:
        _check_cells("expansion.cells", e["cells"], params, errors)
    eps = e["eps"]
    if eps is not None:
        if len(eps) < 2:
            errors.append("expansion.eps: need at least two values")
        if any(not 0 < x <= 1 for x in eps):
            errors.append("expansion.eps: values must lie in (0, 1]")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            errors.append("expansion.eps: values must be strictly decreasing")
    if params is not None and e["q"] is not None and not 1 <= e["q"] < params.p_star:
        errors.append(f"expansion.q: {e['q']:g} outside the admissible range [1, p*_gamma) = [1, {params.p_star:g})")
    if params is None or None in (eps, e["cells"], e["R_cut"]) or not eps:
        return
    # the finest eps must pass the resolution guard of the test-function builder
    from .geometry import gauge_box

    box = gauge_box(params, e["R_cut"])
    if radial:
        if len(e["cells"]) != 2:
            return
        span = [box[0][1], box[-1][1]]
    else:
        if len(e["cells"]) != params.dim:
            return
        span = [hi - lo for lo, hi in box]
    h = max(a / c for a, c in zip(span, e["cells"]))
    floor = 4.0 * h / e["R_cut"]
    if min(eps) < floor * (1.0 - 1e-12):
        errors.append(f"expansion.eps: {min(eps):g} below the resolution guard {floor:.4g} of expansion.cells")


def _eigenvalue(sections, params, errors):
    _check_domain(sections, params, errors)


def _brezis_nirenberg(sections, params, errors):
    _check_domain(sections, params, errors)
    pr = sections["problem"]
    q, lam, fac = pr["q"], pr["lambda"], pr["lambda_factor"]
    if lam is not None and fac is not None:
        errors.append("problem: give lambda or lambda_factor, not both")
    elif lam is None and fac is None:
        errors.append("problem: one of lambda, lambda_factor is required")
    if params is not None and q is not None:
        p, ps = params.p, params.p_star
        if not p <= q < ps:
            errors.append(f"problem.q: {q:g} outside the admissible range [p, p*_gamma) = [{p:g}, {ps:g})")
        elif q == p:
            if lam is not None and not lam > 0:
                errors.append("problem.lambda: must lie in (0, lambda_1) when q = p")
            if fac is not None and not 0 < fac < 1:
                errors.append("problem.lambda_factor: must lie in (0, 1) when q = p")
        else:
            if lam is not None and lam < 0:
                errors.append("problem.lambda: must be >= 0")
            if fac is not None and fac < 0:
                errors.append("problem.lambda_factor: must be >= 0")
    _check_cells("sobolev.cells", sections["sobolev"]["cells"], params, errors)


def _inequality(sections, params, errors):
    iq = sections["inequality"]
    if iq["p"] is not None and any(not x > 1 for x in iq["p"]):
        errors.append("inequality.p: exponents must exceed 1")
    if iq["seeds"] is None:
        s = sections["run"]["seed"] or 0
        iq["seeds"] = [s, s + 1]
    elif len(set(iq["seeds"])) < 2:
        errors.append("inequality.seeds: need at least two distinct seeds")


_CHECKS = {
    "best-constant": _best_constant,
    "decay": _decay,
    "concentration": _concentration,
    "expansion": _expansion,
    "eigenvalue": _eigenvalue,
    "brezis-nirenberg": _brezis_nirenberg,
    "inequality-check": _inequality,
}
