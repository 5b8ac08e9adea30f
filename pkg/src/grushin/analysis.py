"""Verification instruments: decay fits, test-function expansions, concentration.

Everything here is a pure function of fields already computed by the
solvers.  Annulus statistics take the mean of ln u over the nodes of each
gauge annulus, so a multiplicative law u ~ C(theta) d^-beta with non-radial
C still gives slope -beta.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import GrushinParams, gauge_box, gauge_from_norms, sphere_area
from .mesh import (
    DIRICHLET,
    FREE,
    Field,
    Grid,
    build_grid,
    cell_slabs,
    gauss_values,
    interpolate,
    lp_power,
    rescale_exact,
    rescale_field,
)
from .operators import dirichlet_p_energy, whole_space_energy, whole_space_power

CASE_GT = "Ngamma_gt_p2"
CASE_EQ = "Ngamma_eq_p2"
CASE_LT = "Ngamma_lt_p2"
LOG_GAIN = 0.2  # required relative residual improvement of the logarithmic model


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r_squared: float
    annuli: list  # (r_inner, r_outer, mean_log_u, mean_log_d)


@dataclass
class ExpansionReport:
    epsilons: list
    norms: list  # rows: dict with COLUMNS keys
    fitted_exponents: dict
    case_label: str
    log_correction_detected: bool
    reference: dict = field(default_factory=dict)
    model_residuals: dict = field(default_factory=dict)

    COLUMNS = ("eps", "grad_p_energy", "crit_norm_pstar", "lower_norm_p", "lower_norm_q")

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.norms])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.norms:
                w.writerow([f"{row[c]:.17g}" for c in self.COLUMNS])


@dataclass(frozen=True)
class ConcentrationProfile:
    rhos: list
    q_values: list
    half_rho: float
    center: np.ndarray


# ---------------------------------------------------------------- decay


def _annulus_edges(r_min: float, r_max: float, n_annuli: int) -> np.ndarray:
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    if n_annuli < 2:
        raise ValueError("a slope needs at least two annuli")
    return np.geomspace(r_min, r_max, n_annuli + 1)


def _check_ball_inside(grid: Grid, radius: float) -> None:
    for (a, b), (lo, hi) in zip(grid.box, gauge_box(grid.params, radius)):
        if a > lo or b < hi:
            raise ValueError(f"gauge ball of radius {radius:g} is not inside the grid box")


def decay_fit(u: Field, r_min: float, r_max: float, n_annuli: int, statistic="mean") -> DecayFit:
    """Least-squares line through (mean ln d, stat ln u) over geometric gauge annuli.

    ``statistic`` is "mean" or a quantile level in (0, 1); a low quantile
    tracks the lower envelope of u, the side of a two-sided decay bound.
    """
    grid = u.grid
    _check_ball_inside(grid, r_max)
    edges = _annulus_edges(r_min, r_max, n_annuli)
    d = grid.gauge().ravel()
    vals = u.values.ravel()
    annuli, xs, ys = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (d >= lo) & (d < hi)
        if not np.any(sel):
            raise ValueError(f"annulus [{lo:.4g}, {hi:.4g}) contains no grid nodes")
        a = vals[sel]
        if np.any(a <= 0):
            raise ValueError(f"field is not positive on the annulus [{lo:.4g}, {hi:.4g})")
        lu = np.log(a)
        stat = float(np.mean(lu)) if statistic == "mean" else float(np.quantile(lu, float(statistic)))
        ld = float(np.mean(np.log(d[sel])))
        annuli.append((float(lo), float(hi), stat, ld))
        xs.append(ld)
        ys.append(stat)
    xs, ys = np.array(xs), np.array(ys)
    slope, intercept = np.polyfit(xs, ys, 1)
    fit = slope * xs + intercept
    ss_res = float(np.sum((ys - fit) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)), annuli)


# ------------------------------------------------------- test functions


def cutoff(d: np.ndarray, R_cut: float) -> np.ndarray:
    """C^2 blend in the gauge: 1 on d <= R/2, 0 on d >= R."""
    s = np.clip((d - 0.5 * R_cut) / (0.5 * R_cut), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def build_test_function(U: Field, eps: float, R_cut: float, target: Grid) -> Field:
    """phi(z) eps^(-(N_gamma-p)/p) U(delta_{1/eps} z) on ``target``, zero outside B_{R_cut}."""
    _check_test_function(U, eps, R_cut, target.spacing)
    _check_ball_inside(target, R_cut)
    if target.params != U.grid.params:
        raise ValueError("profile and target grid carry different parameters")
    scaled = rescale_field(U, None, 1.0 / eps, target)
    vals = scaled.values * cutoff(target.gauge(), R_cut)
    vals[target.boundary_mask()] = 0.0
    return Field(target, vals, DIRICHLET)


def _check_test_function(U: Field, eps: float, R_cut: float, spacing) -> None:
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if not R_cut > 0:
        raise ValueError("R_cut must be positive")
    floor = 4.0 * max(spacing) / R_cut
    if eps < floor * (1.0 - 1e-12):
        raise ValueError(f"eps = {eps:g} below the resolution guard {floor:.4g}")


# --------------------------------------------------- block-radial quadrature


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid in (r, s) = (|x|, |y|) on [0, R] x [0, R^k/k].

    For profiles radial in each block every integral over R^N reduces to a
    weighted planar integral with weight |S^{m-1}| r^{m-1} |S^{n-1}| s^{n-1}.
    ``plane`` carries the parameters of the m = n = 1 reduction so that the
    gauge and the weight |x|^gamma are evaluated exactly as in N dimensions.
    """

    params: GrushinParams
    plane: Grid

    @property
    def spacing(self):
        return self.plane.spacing

    def weight(self, r, s):
        m, n = self.params.m, self.params.n
        return sphere_area(m) * sphere_area(n) * r ** (m - 1) * s ** (n - 1)


def radial_grid(params: GrushinParams, R: float, cells) -> RadialGrid:
    k = params.gamma + 1.0
    plane_params = GrushinParams(1, 1, params.gamma, params.p, allow_supercritical=True)
    return RadialGrid(params, build_grid([(0.0, R), (0.0, R**k / k)], cells, plane_params))


def _radial_sample(U: Field, rg: RadialGrid, eps: float) -> np.ndarray:
    """eps^(-(N_gamma-p)/p) U(r/eps e_1, s/eps^k e_1) at the plane nodes."""
    params = rg.params
    m, k = params.m, params.gamma + 1.0
    r = rg.plane.axis(0) / eps
    s = rg.plane.axis(1) / eps**k
    outside = "zero" if U.boundary_kind == DIRICHLET else "homogeneous"
    out = np.empty(rg.plane.shape)
    for i, ri in enumerate(r):
        pts = np.zeros((s.size, params.dim))
        pts[:, 0] = ri
        pts[:, m] = s
        out[i] = interpolate(U.grid, U.values, pts, outside=outside)
    return out * eps ** (-params.scaling_exponent)


def radial_test_values(U: Field, eps: float, R_cut: float, rg: RadialGrid) -> np.ndarray:
    """The test function u_eps of build_test_function, sampled on the (r, s) plane."""
    if rg.params != U.grid.params:
        raise ValueError("profile and radial grid carry different parameters")
    _check_test_function(U, eps, R_cut, rg.spacing)
    k = rg.params.gamma + 1.0
    (_, R), (_, Y) = rg.plane.box
    if R < R_cut or Y < R_cut**k / k * (1.0 - 1e-12):
        raise ValueError(f"gauge ball of radius {R_cut:g} is not inside the radial grid")
    vals = _radial_sample(U, rg, eps) * cutoff(rg.plane.gauge(), R_cut)
    vals[-1, :] = 0.0
    vals[:, -1] = 0.0
    return vals


def radial_energy(values: np.ndarray, rg: RadialGrid) -> float:
    """Corner-sample p-energy of a block-radial profile, weighted by the sphere measures."""
    p, gamma = rg.params.p, rg.params.gamma
    hr, hs = rg.spacing
    rc = rg.plane.cell_axis(0)[:, None]
    sc = rg.plane.cell_axis(1)[None, :]
    total = 0.0
    for a, b in cell_slabs(values.shape):
        v = values[a : b + 1]
        dr = np.diff(v, axis=0) / hr
        ds = np.diff(v, axis=1) / hs
        wy = rc[a:b] ** gamma if gamma else 1.0
        w = rg.weight(rc[a:b], sc)
        nr, ns = b - a, values.shape[1] - 1
        acc = 0.0
        for i in (0, 1):
            for j in (0, 1):
                sq = dr[:, j : j + ns] ** 2 + (wy * ds[i : i + nr, :]) ** 2
                acc = acc + sq ** (p / 2.0)
        total += float(np.sum(acc * w))
    return total * hr * hs / 4.0


def radial_power(values: np.ndarray, rg: RadialGrid, s: float) -> float:
    """Gauss-rule integral of |u|^s for a block-radial profile."""
    r = np.broadcast_to(rg.plane.axis(0)[:, None], values.shape)
    t = np.broadcast_to(rg.plane.axis(1)[None, :], values.shape)
    total = 0.0
    for a, b in cell_slabs(values.shape):
        G = gauss_values(values[a : b + 1])
        # the Gauss nodes of the coordinates themselves are exact (they are linear)
        W = rg.weight(gauss_values(r[a : b + 1]), gauss_values(t[a : b + 1]))
        total += float(np.sum(np.abs(G) ** s * W))
    hr, hs = rg.spacing
    return total * hr * hs / 4.0


def _case_label(params: GrushinParams) -> str:
    N, p2 = params.N_gamma, params.p**2
    if math.isclose(N, p2, rel_tol=1e-12):
        return CASE_EQ
    return CASE_GT if N > p2 else CASE_LT


def _slope(eps: np.ndarray, vals: np.ndarray) -> float:
    vals = np.abs(vals)
    if np.any(vals <= 0):
        return float("nan")
    return float(np.polyfit(np.log(eps), np.log(vals), 1)[0])


def log_model_residuals(eps: np.ndarray, vals: np.ndarray, p: float) -> tuple[float, float]:
    """(rss of eps^p (C |ln eps| + D), rss of the best pure power), both in log space."""
    le = np.log(eps)
    ly = np.log(vals)
    coef = np.polyfit(le, ly, 1)
    rss_power = float(np.sum((ly - np.polyval(coef, le)) ** 2))
    X = np.stack([np.abs(le), np.ones_like(le)], axis=1) * (eps**p)[:, None]
    cd, *_ = np.linalg.lstsq(X, vals, rcond=None)
    model = X @ cd
    if np.any(model <= 0):
        return float("inf"), rss_power
    rss_log = float(np.sum((ly - np.log(model)) ** 2))
    return rss_log, rss_power


def expansion_study(U: Field, grid, eps_list, q: float, R_cut: float | None = None) -> ExpansionReport:
    """Norms of the concentrating test functions u_eps and their fitted rates.

    U is rescaled to the normalization of a solution of the critical
    equation, grad energy = critical mass = S^(N_gamma/p); the references
    of the energy and mass columns are those whole-space values.  ``grid`` is
    either a Cartesian Grid or a RadialGrid; the latter assumes U radial in
    x and in y and resolves the anisotropic core at a planar cost.
    """
    params = grid.params
    p, ps = params.p, params.p_star
    if not 1 <= q < ps:
        raise ValueError(f"q = {q:g} outside [1, p*) = [1, {ps:g})")
    eps = [float(e) for e in eps_list]
    if len(eps) < 2 or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be strictly decreasing with at least two entries")
    radial = isinstance(grid, RadialGrid)
    k = params.gamma + 1.0
    if R_cut is None:
        if radial:
            (_, R), (_, Y) = grid.plane.box
            R_cut = min(R, (k * Y) ** (1.0 / k))
        else:
            half = [min(-a, b) for a, b in grid.box]
            R_cut = min(min(half[: params.m]), min((k * h) ** (1.0 / k) for h in half[params.m :]))
    E, M = whole_space_energy(U), whole_space_power(U, ps)
    c = (E / M) ** (1.0 / (ps - p))
    U = U * c
    E0, M0 = c**p * E, c**ps * M
    rows = []
    for e in eps:
        if radial:
            v = radial_test_values(U, e, R_cut, grid)
            energy = lambda: radial_energy(v, grid)  # noqa: E731
            power = lambda s: radial_power(v, grid, s)  # noqa: E731
        else:
            u = build_test_function(U, e, R_cut, grid)
            energy = lambda: dirichlet_p_energy(u)  # noqa: E731
            power = lambda s: lp_power(u, s, rule="gauss")  # noqa: E731
        rows.append({
            "eps": e,
            "grad_p_energy": energy(),
            "crit_norm_pstar": power(ps),
            "lower_norm_p": power(p),
            "lower_norm_q": power(q),
        })
    e_arr = np.array(eps)
    col = {k: np.array([r[k] for r in rows]) for k in ExpansionReport.COLUMNS}
    fitted = {
        "grad_p_energy": _slope(e_arr, col["grad_p_energy"] - E0),
        "crit_norm_pstar": _slope(e_arr, M0 - col["crit_norm_pstar"]),
        "lower_norm_p": _slope(e_arr, col["lower_norm_p"]),
        "lower_norm_q": _slope(e_arr, col["lower_norm_q"]),
    }
    label = _case_label(params)
    rss_log, rss_pow = log_model_residuals(e_arr, col["lower_norm_p"], p)
    detected = label == CASE_EQ and rss_log <= (1.0 - LOG_GAIN) * rss_pow
    alpha = params.decay_alpha
    excess = (col["grad_p_energy"] - E0) / e_arr**alpha
    return ExpansionReport(
        epsilons=eps,
        norms=rows,
        fitted_exponents=fitted,
        case_label=label,
        log_correction_detected=bool(detected),
        reference={"S_est": E0 ** (p / params.N_gamma), "energy_ref": E0, "mass_ref": M0, "R_cut": R_cut,
                   "energy_excess_constants": [float(x) for x in excess]},
        model_residuals={"log_model": rss_log, "power_model": rss_pow},
    )


def q_lambda(u: Field, lam: float) -> float:
    """(||grad u||_p^p - lam ||u||_p^p) / ||u||_{p*}^p; the p-norm is taken over the box."""
    params = u.grid.params
    p, ps = params.p, params.p_star
    den = whole_space_power(u, ps) ** (p / ps)
    return (whole_space_energy(u) - lam * lp_power(u, p, rule="gauss")) / den


# --------------------------------------------------------- concentration


class _CenterTable:
    """Sorted gauge distances and cumulative critical mass for each center."""

    def __init__(self, u: Field, centers):
        grid = u.grid
        params = grid.params
        self.grid = grid
        ps = params.p_star
        wfull = grid.trapezoid_weights() * grid.cell_measure * np.abs(u.values) ** ps
        self.centers = _centers(grid, centers, wfull)
        w = wfull.ravel()
        xn, _ = grid.block_norms()
        xn = np.broadcast_to(xn, grid.shape).ravel()
        ys = [np.broadcast_to(grid._broadcast(grid.axis(j), j), grid.shape).ravel() for j in range(params.m, grid.ndim)]
        self.dist, self.cum = [], []
        for e in self.centers:
            yn = np.sqrt(sum((y - ej) ** 2 for y, ej in zip(ys, e)))
            d = gauge_from_norms(params.gamma, xn, yn)
            order = np.argsort(d, kind="stable")
            self.dist.append(d[order])
            self.cum.append(np.cumsum(w[order]))
        self.total = float(np.sum(w))

    def mass(self, rho: float) -> np.ndarray:
        out = np.empty(len(self.centers))
        empty = True
        for i, (d, c) in enumerate(zip(self.dist, self.cum)):
            k = int(np.searchsorted(d, rho, side="left"))
            empty &= k == 0
            out[i] = c[k - 1] if k > 0 else 0.0
        if empty:
            raise ValueError(f"gauge ball of radius {rho:g} contains no grid nodes")
        return out

    def half_radius(self, target: float) -> tuple[float, int]:
        """Smallest radius whose best center reaches ``target`` mass."""
        best, arg = math.inf, 0
        for i, (d, c) in enumerate(zip(self.dist, self.cum)):
            k = int(np.searchsorted(c, target, side="left"))
            if k >= c.size:
                continue
            # linear interpolation between the two shells around the crossing
            if k == 0:
                r = d[0]
            else:
                c0, c1 = c[k - 1], c[k]
                r = d[k - 1] + (d[k] - d[k - 1]) * (target - c0) / (c1 - c0) if c1 > c0 else d[k]
            if r < best:
                best, arg = float(r), i
        if not math.isfinite(best):
            raise ValueError("concentration function never reaches half the mass")
        return best, arg


def _centers(grid: Grid, centers, mass: np.ndarray):
    params = grid.params
    if centers is not None:
        out = [np.atleast_1d(np.asarray(e, dtype=float)).reshape(params.n) for e in centers]
        if not out:
            raise ValueError("empty center list")
        return out
    # y-lattice with spacing of two cells, over the y-range carrying the central
    # 99% of the mass of each y-marginal (a ball centered further out cannot win)
    axes = []
    for j in range(params.m, grid.ndim):
        ax = grid.axis(j)
        marginal = np.sum(mass, axis=tuple(a for a in range(grid.ndim) if a != j))
        cdf = np.cumsum(marginal) / max(marginal.sum(), 1e-300)
        lo = ax[min(int(np.searchsorted(cdf, 0.005)), ax.size - 1)]
        hi = ax[min(int(np.searchsorted(cdf, 0.995)), ax.size - 1)]
        mid = int(np.argmin(np.abs(ax)))
        lattice = np.unique(np.r_[ax[mid::-2][::-1], ax[mid::2]])
        keep = lattice[(lattice >= lo) & (lattice <= hi)]
        axes.append(keep if keep.size else lattice[[int(np.argmin(np.abs(lattice)))]])
    mesh = np.meshgrid(*axes, indexing="ij")
    return [np.array(v) for v in zip(*[m.ravel() for m in mesh])]


def concentration_function(u: Field, rho: float, centers=None) -> float:
    """max over centers (0, e) of the critical mass in the gauge ball B_rho((0, e))."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    return float(np.max(_CenterTable(u, centers).mass(rho)))


def concentration_profile(u: Field, rhos, centers=None) -> ConcentrationProfile:
    table = _CenterTable(u, centers)
    rhos = sorted(float(r) for r in rhos)
    if not rhos or rhos[0] <= 0:
        raise ValueError("radii must be positive")
    qs = [float(np.max(table.mass(r))) for r in rhos]
    half, arg = table.half_radius(0.5 * table.total)
    return ConcentrationProfile(rhos, qs, half, table.centers[arg])


def concentration_normalize(u: Field, centers=None):
    """(e, rho_half, v) with v = u^{e, rho_half} carrying half the mass in B_1(0).

    The target is half of the mass on the grid box, which is 1/2 for a
    field normalized in the critical norm.
    """
    table = _CenterTable(u, centers)
    if not table.total > 0:
        raise ValueError("zero field has no concentration scale")
    rho, arg = table.half_radius(0.5 * table.total)
    e = table.centers[arg]
    return e, rho, rescale_field(u, e, rho)


def concentration_radius(u: Field) -> float:
    """Half-mass gauge radius about the best center on the degeneration set."""
    table = _CenterTable(u, None)
    if not table.total > 0:
        return 0.0
    return table.half_radius(0.5 * table.total)[0]


def place_profile(U: Field, radius: float) -> Field:
    """Exact rescaling of U that puts half of its critical mass in the gauge ball B_radius(0).

    The grid box is dilated rather than resampled, so no resolution is lost.
    """
    ps = U.grid.params.p_star
    unit = U * (1.0 / whole_space_power(U, ps) ** (1.0 / ps))
    _, rho, _ = concentration_normalize(unit, [np.zeros(U.grid.params.n)])
    return rescale_exact(U, rho / radius)


# ------------------------------------------------------------ defects


def brezis_lieb_defect(u_seq, u_limit: Field, s: float) -> list:
    """| ||u_k||_s^s - ||u_k - u||_s^s - ||u||_s^s | for each member of the sequence.

    The three integrals are combined into one Gauss-rule integrand, so cells
    where u vanishes contribute exactly zero however large u_k is there.
    """
    if not s > 1:
        raise ValueError("exponent must exceed 1")
    grid = u_limit.grid
    w = grid.cell_measure / 2**grid.ndim
    U = gauss_values(u_limit.values)
    base = np.abs(U) ** s
    out = []
    for uk in u_seq:
        if uk.grid != grid:
            raise ValueError("sequence member lives on a different grid")
        K = gauss_values(uk.values)
        integrand = np.abs(K) ** s - np.abs(K - U) ** s - base
        out.append(abs(float(np.sum(integrand)) * w))
    return out


def _pmag(g: np.ndarray, p: float) -> np.ndarray:
    n = np.linalg.norm(g, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(n > 0, n ** (p - 2.0), 0.0)


def _check_log_inputs(u_val, v_val, p):
    u_val = np.asarray(u_val, dtype=float)
    v_val = np.asarray(v_val, dtype=float)
    if np.any(u_val <= 0) or np.any(v_val <= 0):
        raise ValueError("function values must be positive")
    if not p > 1:
        raise ValueError("p must exceed 1")
    return u_val, v_val


def log_gradient_defect_direct(u_val, v_val, gu, gv, p: float):
    """Left side of the two-function log-gradient inequality, term by term.

    |gu|^(p-2) gu . grad(u - v^p u^(1-p)) + |gv|^(p-2) gv . grad(v - u^p v^(1-p))
    with grad u = gu, grad v = gv.  Broadcasts over leading axes; loses
    accuracy near the equality set, where large terms cancel.
    """
    u_val, v_val = _check_log_inputs(u_val, v_val, p)
    gu = np.asarray(gu, dtype=float)
    gv = np.asarray(gv, dtype=float)
    r = v_val / u_val
    r1 = (r ** (p - 1.0))[..., None]
    rp = (r**p)[..., None]
    ir1 = (r ** (1.0 - p))[..., None]
    irp = (r ** (-p))[..., None]
    # gradients of u - v^p u^(1-p) and of v - u^p v^(1-p)
    du = gu * (1.0 + (p - 1.0) * rp) - p * r1 * gv
    dv = gv * (1.0 + (p - 1.0) * irp) - p * ir1 * gu
    out = _pmag(gu, p) * np.sum(gu * du, axis=-1) + _pmag(gv, p) * np.sum(gv * dv, axis=-1)
    return float(out) if out.ndim == 0 else out


def _bregman(a, b, p):
    """|a|^p - |b|^p - p |b|^(p-2) b . (a - b), exactly zero when a == b."""
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    return na**p - nb**p - p * _pmag(b, p) * np.sum(b * (a - b), axis=-1)


def log_gradient_defect(u_val, v_val, gu, gv, p: float):
    """The same left side, evaluated through the log-gradients a = gu/u, b = gv/v.

    Expanding the two products gives u^p B(a, b) + v^p B(b, a) with B
    the Bregman remainder of |.|^p, which is nonnegative by convexity and
    vanishes exactly on a = b, so no cancellation occurs there.
    """
    u_val, v_val = _check_log_inputs(u_val, v_val, p)
    a = np.asarray(gu, dtype=float) / u_val[..., None]
    b = np.asarray(gv, dtype=float) / v_val[..., None]
    out = u_val**p * _bregman(a, b, p) + v_val**p * _bregman(b, a, p)
    return float(out) if out.ndim == 0 else out


def log_gradient_bound(u_val, v_val, gu, gv, p: float):
    """Right side without the constant: (u^p+v^p)|a-b|^p, or its p < 2 form."""
    u_val = np.asarray(u_val, dtype=float)
    v_val = np.asarray(v_val, dtype=float)
    a = np.asarray(gu, dtype=float) / u_val[..., None]
    b = np.asarray(gv, dtype=float) / v_val[..., None]
    diff = np.linalg.norm(a - b, axis=-1)
    mass = u_val**p + v_val**p
    if p >= 2:
        out = mass * diff**p
    else:
        tot = np.linalg.norm(a, axis=-1) + np.linalg.norm(b, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(tot > 0, mass * diff**2 / tot ** (2.0 - p), 0.0)
    return float(out) if out.ndim == 0 else out


def random_log_gradient_samples(rng: np.random.Generator, count: int, dim: int = 2, proportional: bool = False):
    """Positive values with log-normal spread and Gaussian gradients.

    With ``proportional`` the samples lie on the equality set gv/v = gu/u.
    """
    u = np.exp(rng.normal(0.0, 1.0, count))
    v = np.exp(rng.normal(0.0, 1.0, count))
    gu = rng.normal(0.0, 1.0, (count, dim))
    gv = gu / u[:, None] * v[:, None] if proportional else rng.normal(0.0, 1.0, (count, dim))
    return u, v, gu, gv


def empirical_log_gradient_constant(p: float, count: int, seed: int, dim: int = 2) -> tuple[float, float]:
    """(min defect, min defect/bound) over random samples."""
    rng = np.random.default_rng(seed)
    u, v, gu, gv = random_log_gradient_samples(rng, count, dim)
    lhs = log_gradient_defect(u, v, gu, gv, p)
    rhs = log_gradient_bound(u, v, gu, gv, p)
    ok = rhs > 0
    return float(np.min(lhs)), float(np.min(lhs[ok] / rhs[ok]))


def log_gradient_scale(u_val, v_val, gu, gv, p: float):
    """|gu|^p + |gv|^p, the size of the terms that cancel in the defect."""
    return np.linalg.norm(gu, axis=-1) ** p + np.linalg.norm(gv, axis=-1) ** p


def equality_set_defect(p: float, count: int, seed: int, dim: int = 2) -> float:
    """max |defect| / (|gu|^p + |gv|^p) over random samples with gu/u = gv/v."""
    rng = np.random.default_rng(seed)
    u, v, gu, gv = random_log_gradient_samples(rng, count, dim, proportional=True)
    d = log_gradient_defect(u, v, gu, gv, p)
    return float(np.max(np.abs(d) / log_gradient_scale(u, v, gu, gv, p)))


# ------------------------------------------------------------- oracles


def talenti_constant(N: int, p: float) -> float:
    """Best Euclidean constant S in ||grad u||_p^p >= S ||u||_{p*}^p on R^N, 1 < p < N."""
    if not 1 < p < N:
        raise ValueError("need 1 < p < N")
    lg = math.lgamma
    ratio = math.exp(lg(N / p) + lg(1.0 + N - N / p) - lg(N) - lg(1.0 + N / 2.0))
    return math.pi ** (p / 2.0) * N * ((N - p) / (p - 1.0)) ** (p - 1.0) * ratio ** (p / N)


def fundamental_residual(params: GrushinParams, cells, r_in: float = 1.0, r_out: float = 2.0,
                         radius: float | None = None) -> float:
    """Sup over nodes with r_in <= d <= r_out of the strong-form discrete p-Laplacian of Gamma_p.

    The weak residual is divided by the nodal cell measure.  The origin
    node, if present, gets value 0; it lies outside every stencil touching
    the annulus once the grid resolves d = r_in.
    """
    from .geometry import profile_from_gauge
    from .operators import p_laplacian_apply

    radius = 1.25 * r_out if radius is None else radius
    grid = build_grid(gauge_box(params, radius), cells, params)
    d = grid.gauge()
    vals = profile_from_gauge(params, np.where(d > 0, d, 1.0))
    vals[d == 0] = 0.0
    res = p_laplacian_apply(Field(grid, vals, FREE)).values / grid.cell_measure
    ring = (d >= r_in) & (d <= r_out)
    return float(np.max(np.abs(res[ring])))


def bubble_sequence(u_limit: Field, bubble: Field, base_scale: float, count: int) -> list:
    """u_limit + rescale_field(bubble, 0, base_scale 2^k) for k = 0 .. count-1, as free fields."""
    out = []
    for k in range(count):
        b = rescale_field(bubble, None, base_scale * 2.0**k, u_limit.grid)
        out.append(Field(u_limit.grid, u_limit.values + b.values, FREE))
    return out
