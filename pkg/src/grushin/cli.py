"""Command-line runner: ``grushin <command> --config FILE [--out DIR] [--jobs N] [--seed S]``.

Each run writes into its output directory

* ``report.json``: the RunReport (schema below),
* ``*.field``: field dumps in the mesh text format,
* ``*.dat``: plot data, one series per file, whitespace separated with a
  ``#`` header naming the columns,
* ``expansion.csv`` for the expansion command.

Report schema (``schema_version`` 1), a JSON object with keys
``schema_version``, ``command``, ``status`` ("ok" or "solver_error"),
``config`` (the effective config, defaults resolved), ``results``,
``artifacts`` (paths relative to the output directory), ``error`` (null or
message plus partial trace) and ``wall_time_s``.  Floats carry 17
significant digits, so reloading is lossless.  Apart from ``wall_time_s``,
the report depends only on the config and seed.

Exit codes: 0 success, 2 validation error, 3 solver non-convergence,
4 I/O error.  ``GRUSHIN_THREADS`` caps the thread count of the numeric
libraries; it is applied when the package is first imported.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis as an
from .config import COMMANDS, ConfigError, ExperimentConfig, parse_config
from .geometry import gauge_box
from .mesh import DomainMask, build_grid, dump_field, load_field, weak_lebesgue_seminorm
from .operators import whole_space_power
from .solvers import (
    SolverConfig,
    SolverError,
    compactness_threshold,
    default_sobolev_estimate,
    first_eigenvalue,
    minimize_with_continuation,
    sobolev_quotient,
    solve_brezis_nirenberg,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("grushin")


# ---------------------------------------------------------------- report


@dataclass
class RunReport:
    command: str
    config: dict
    results: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=lambda: {"fields": [], "plots": [], "tables": []})
    status: str = "ok"
    error: dict | None = None
    wall_time_s: float = 0.0
    schema_version: int = SCHEMA_VERSION

    def as_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "command": self.command,
            "status": self.status,
            "config": self.config,
            "results": self.results,
            "artifacts": self.artifacts,
            "error": self.error,
            "wall_time_s": self.wall_time_s,
        }

    def to_text(self) -> str:
        return to_json(self.as_dict()) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunReport":
        import json

        d = json.loads(text)
        return cls(d["command"], d["config"], d["results"], d["artifacts"], d["status"], d["error"],
                   d["wall_time_s"], d["schema_version"])


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    return s if any(c in s for c in ".en") else s + ".0"


def to_json(obj, indent: int = 0) -> str:
    """Deterministic JSON with 17-significant-digit floats."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{inner}{to_json(str(k))}: {to_json(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(to_json(v, indent + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(inner + to_json(v, indent + 1) for v in seq) + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class _Outputs:
    """Writes artifacts into one run directory and records their relative paths."""

    def __init__(self, root: Path, report: RunReport, dump_fields: bool):
        self.root, self.report, self.dump_fields = root, report, dump_fields

    def field(self, name: str, u) -> None:
        if not self.dump_fields:
            return
        dump_field(u, self.root / name)
        self.report.artifacts["fields"].append(name)

    def series(self, name: str, columns, data) -> None:
        arr = np.column_stack([np.asarray(c, dtype=float) for c in data])
        np.savetxt(self.root / name, arr, fmt="%.17g", header=" ".join(columns))
        self.report.artifacts["plots"].append(name)

    def table(self, name: str, writer) -> None:
        writer(self.root / name)
        self.report.artifacts["tables"].append(name)


# -------------------------------------------------------------- commands


def _solver_config(cfg: ExperimentConfig) -> SolverConfig:
    s = cfg.section("solver")
    return SolverConfig(
        max_iters=s["max_iters"], grad_tol=s["grad_tol"], step_init=s["step_init"], armijo_c=s["armijo_c"],
        armijo_shrink=s["armijo_shrink"], delta_reg=s["delta_reg"], seed=cfg.seed, memory=s["memory"],
        recenter_every=s["recenter_every"],
    )


def _trace_series(out: _Outputs, name: str, trace) -> None:
    if trace:
        it, val = zip(*trace)
        out.series(name, ("iteration", "value"), (it, val))


def _extremal(cfg: ExperimentConfig, out: _Outputs, res: dict):
    """Computed (or loaded) quotient minimizer on the [grid] gauge box."""
    g = cfg.section("grid")
    params = cfg.params
    if g["extremal"]:
        u = load_field(g["extremal"])
        if u.grid.params != params:
            raise ConfigError([f"grid.extremal: {g['extremal']} was computed for {u.grid.params}, not {params}"])
        res["extremal"] = {"source": "loaded", "value": sobolev_quotient(u)}
        return u
    grid = build_grid(gauge_box(params, g["radius"]), g["cells"], params)
    r = minimize_with_continuation(grid, _solver_config(cfg), g["pin_radius"], g["levels"])
    res["extremal"] = {
        "source": "computed", "value": r.value, "residual": r.residual, "iters": r.iters,
        "warnings": list(r.warnings), "shifts": [list(map(float, np.atleast_1d(s))) for s in r.shifts],
    }
    _trace_series(out, "trace.dat", r.trace)
    out.field("extremal.field", r.minimizer)
    return r.minimizer


def run_best_constant(cfg, out, res):
    u = _extremal(cfg, out, res)
    p = cfg.params
    S = res["extremal"]["value"]
    res["value"] = S
    res["threshold"] = compactness_threshold(S, p)
    if p.gamma == 0 and p.p < p.dim:
        ref = an.talenti_constant(p.dim, p.p)
        res["oracle"] = {"name": "talenti", "value": ref, "relative_error": (S - ref) / ref}
    del u


def run_decay(cfg, out, res):
    u = _extremal(cfg, out, res)
    d = cfg.section("decay")
    target = -cfg.params.decay_alpha
    fit = an.decay_fit(u, d["r_min"], d["r_max"], d["n_annuli"])
    low = an.decay_fit(u, d["r_min"], d["r_max"], d["n_annuli"], statistic=d["quantile"])
    res["target_slope"] = target
    for key, f in (("mean_fit", fit), ("quantile_fit", low)):
        res[key] = {"slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared,
                    "annuli": [list(a) for a in f.annuli]}
    q0 = cfg.params.q0_weak
    res["weak_lebesgue"] = {"exponent": q0, "seminorm": weak_lebesgue_seminorm(u, q0)}
    for name, f in (("decay_mean.dat", fit), ("decay_quantile.dat", low)):
        a = np.array(f.annuli)
        out.series(name, ("mean_log_d", "log_u"), (a[:, 3], a[:, 2]))


def run_concentration(cfg, out, res):
    u = _extremal(cfg, out, res)
    c = cfg.section("concentration")
    u = u * (1.0 / whole_space_power(u, cfg.params.p_star) ** (1.0 / cfg.params.p_star))
    rhos = c["rhos"]
    if rhos is None:
        h = 2.0 * max(u.grid.spacing)
        rhos = list(np.geomspace(h, cfg.section("grid")["radius"], c["n_rhos"]))
    prof = an.concentration_profile(u, rhos)
    e, rho, v = an.concentration_normalize(u)
    res["profile"] = {"rhos": prof.rhos, "q_values": prof.q_values, "half_rho": prof.half_rho,
                      "center": list(map(float, prof.center))}
    res["normalized"] = {"center": list(map(float, e)), "rho_half": rho,
                         "unit_ball_mass": an.concentration_function(v, 1.0, [np.zeros(cfg.params.n)])}
    out.series("concentration.dat", ("rho", "Q"), (prof.rhos, prof.q_values))
    out.field("normalized.field", v)


def run_expansion(cfg, out, res):
    U = _extremal(cfg, out, res)
    e = cfg.section("expansion")
    params = cfg.params
    U = an.place_profile(U, e["profile_radius"] * e["R_cut"])
    if e["quadrature"] == "radial":
        grid = an.radial_grid(params, e["R_cut"], e["cells"])
    else:
        grid = build_grid(gauge_box(params, e["R_cut"]), e["cells"], params)
    rep = an.expansion_study(U, grid, e["eps"], e["q"], R_cut=e["R_cut"])
    res["case_label"] = rep.case_label
    res["fitted_exponents"] = rep.fitted_exponents
    res["log_correction_detected"] = rep.log_correction_detected
    res["model_residuals"] = rep.model_residuals
    res["reference"] = rep.reference
    res["norms"] = rep.norms
    out.table("expansion.csv", rep.write_csv)
    for col in rep.COLUMNS[1:]:
        out.series(f"expansion_{col}.dat", ("eps", col), (rep.epsilons, rep.column(col)))


def _mask(cfg) -> DomainMask:
    d = cfg.section("domain")
    grid = build_grid(list(zip(d["lower"], d["upper"])), d["cells"], cfg.params)
    if d["shape"] == "gauge_ball":
        return DomainMask.gauge_ball(grid, d["ball_radius"])
    return DomainMask.full(grid)


def run_eigenvalue(cfg, out, res):
    mask = _mask(cfg)
    lam, u = first_eigenvalue(mask, _solver_config(cfg))
    res["lambda1"] = lam
    d = cfg.section("domain")
    p = cfg.params
    if p.gamma == 0 and p.p == 2 and d["shape"] == "box":
        ref = sum((math.pi / (b - a)) ** 2 for a, b in zip(d["lower"], d["upper"]))
        res["oracle"] = {"name": "dirichlet_box_laplacian", "value": ref, "relative_error": (lam - ref) / ref}
    out.field("eigenfunction.field", u)


def run_brezis_nirenberg(cfg, out, res):
    mask = _mask(cfg)
    scfg = _solver_config(cfg)
    pr, sob = cfg.section("problem"), cfg.section("sobolev")
    q = pr["q"]
    lam1 = None
    if q == cfg.params.p or pr["lambda_factor"] is not None:
        lam1, _ = first_eigenvalue(mask, scfg)
        res["lambda1"] = lam1
    lam = pr["lambda"] if pr["lambda"] is not None else pr["lambda_factor"] * lam1
    if q == cfg.params.p and not lam < lam1:
        raise ConfigError([f"problem.lambda: {lam:g} is not below lambda_1 = {lam1:.6g}"])
    S = sob["estimate"]
    if S is None:
        S = default_sobolev_estimate(cfg.params, scfg, sob["radius"], sob["cells"])
    r = solve_brezis_nirenberg(mask, lam, q, scfg, sobolev_estimate=S, lambda1=lam1)
    res.update({
        "lambda": lam, "q": q, "c_lambda": r.c_lambda, "threshold": r.threshold,
        "below_threshold": r.below_threshold, "residual": r.residual, "nehari_defect": r.nehari_defect,
        "nehari_t": r.nehari_t, "iters": r.iters, "sobolev_estimate": r.sobolev_estimate,
        "concentration_radius": an.concentration_radius(r.solution),
    })
    _trace_series(out, "trace.dat", r.trace)
    out.field("solution.field", r.solution)


def run_inequality(cfg, out, res):
    iq = cfg.section("inequality")
    rows = []
    for p in iq["p"]:
        per_seed = [an.empirical_log_gradient_constant(p, iq["samples"], s, iq["dim"]) for s in iq["seeds"]]
        consts = [c for _, c in per_seed]
        rows.append({
            "p": p,
            "min_defect": min(m for m, _ in per_seed),
            "constants": consts,
            "constant_spread": (max(consts) - min(consts)) / min(consts),
            "equality_set_defect": max(an.equality_set_defect(p, iq["samples"], s, iq["dim"]) for s in iq["seeds"]),
        })
    res["per_p"] = rows
    cols = ([r["p"] for r in rows], [min(r["constants"]) for r in rows])
    out.series("log_gradient_constants.dat", ("p", "C_p"), cols)


RUNNERS = {
    "best-constant": run_best_constant,
    "decay": run_decay,
    "concentration": run_concentration,
    "expansion": run_expansion,
    "eigenvalue": run_eigenvalue,
    "brezis-nirenberg": run_brezis_nirenberg,
    "inequality-check": run_inequality,
}


def run(cfg: ExperimentConfig, out_dir) -> RunReport:
    """Execute one validated config and write its artifacts and report into out_dir.

    SolverError is recorded in the report (status "solver_error", with the
    partial trace) and re-raised after the report is written.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    report = RunReport(cfg.command, cfg.echo())
    out = _Outputs(root, report, cfg.section("output")["dump_fields"])
    start = time.perf_counter()
    failure = None
    try:
        RUNNERS[cfg.command](cfg, out, report.results)
    except SolverError as exc:
        failure = exc
        report.status = "solver_error"
        diag = {k: v for k, v in exc.diagnostics.items() if k != "field"}
        report.error = {"message": str(exc), "diagnostics": diag, "trace": [list(t) for t in exc.trace]}
        if exc.diagnostics.get("field") is not None:
            out.field("last_iterate.field", exc.diagnostics["field"])
    report.wall_time_s = time.perf_counter() - start
    (root / "report.json").write_text(report.to_text())
    if failure is not None:
        raise failure
    return report


# ------------------------------------------------------------------ main


def _run_one(command: str, config_path: str, out_dir: str, seed: int | None) -> tuple[int, str]:
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        return EXIT_IO, f"{config_path}: cannot read config: {exc}"
    try:
        cfg = parse_config(text, command=command, seed=seed)
    except ConfigError as exc:
        return EXIT_INVALID, f"{config_path}: {exc}"
    try:
        rep = run(cfg, out_dir)
    except ConfigError as exc:
        return EXIT_INVALID, f"{config_path}: {exc}"
    except SolverError as exc:
        return EXIT_SOLVER, f"{config_path}: solver did not converge: {exc}"
    except OSError as exc:
        return EXIT_IO, f"{config_path}: I/O error: {exc}"
    return EXIT_OK, f"{config_path}: ok ({rep.wall_time_s:.1f} s) -> {out_dir}"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="grushin", description="Grushin p-Laplacian experiments")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", action="append", required=True,
                    help="INI config file; repeat for a batch of independent runs")
    ap.add_argument("--out", default=None, help="output directory (default runs/<command>)")
    ap.add_argument("--jobs", type=int, default=1, help="concurrent runs in batch mode")
    ap.add_argument("--seed", type=int, default=None, help="override [run] seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("--jobs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out or os.path.join("runs", args.command))
    configs = args.config
    if len(configs) == 1:
        jobs = [(args.command, configs[0], str(out), args.seed)]
    else:
        stems = [Path(c).stem for c in configs]
        if len(set(stems)) != len(stems):
            print("batch configs need distinct file names (they name the output directories)", file=sys.stderr)
            return EXIT_INVALID
        jobs = [(args.command, c, str(out / s), args.seed) for c, s in zip(configs, stems)]
    if args.jobs == 1 or len(jobs) == 1:
        results = [_run_one(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    code = EXIT_OK
    for rc, msg in results:
        print(msg, file=sys.stderr if rc else sys.stdout)
        code = max(code, rc)
    return code


if __name__ == "__main__":
    sys.exit(main())
