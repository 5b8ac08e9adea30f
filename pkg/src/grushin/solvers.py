"""Quotient minimization, Nehari fibering and the critical Brezis-Nirenberg solver.

All three minimizations share one engine: a descent on a degree-zero
homogeneous objective over nonnegative Dirichlet fields, preconditioned by
the p = 2 Grushin stiffness matrix (a Sobolev gradient), with Armijo
backtracking and renormalization after every accepted step.  Search
directions come from limited-memory BFGS in the preconditioned metric; a
direction that fails to descend is replaced by the plain Sobolev gradient.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .geometry import GrushinParams, gauge_box, gauge_from_norms
from .mesh import (
    DIRICHLET,
    FREE,
    MIN_CELLS,
    DomainMask,
    Field,
    Grid,
    build_grid,
    gauss_adjoint,
    gauss_values,
    resample_mapped,
)
from .operators import (
    _p_laplacian_values,
    bn_energy,
    exterior_closure,
    stiffness_matrix,
    whole_space_energy,
    whole_space_power,
)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when a descent fails; carries the trace accumulated so far."""

    def __init__(self, message: str, trace=None, diagnostics=None):
        super().__init__(message)
        self.trace = list(trace or [])
        self.diagnostics = dict(diagnostics or {})


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 3000
    grad_tol: float = 1e-6
    step_init: float = 1.0
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    delta_reg: float = 0.0
    seed: int = 0
    memory: int = 8
    recenter_every: int = 50
    init_scale: float | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        for name in ("grad_tol", "step_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("armijo_c", "armijo_shrink"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.delta_reg < 0:
            raise ValueError("delta_reg must be >= 0")


@dataclass
class QuotientResult:
    value: float
    minimizer: Field
    iters: int
    residual: float
    trace: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    shifts: list = field(default_factory=list)


@dataclass
class MountainPassResult:
    c_lambda: float
    threshold: float
    below_threshold: bool
    solution: Field
    nehari_t: float
    residual: float
    nehari_defect: float = 0.0
    iters: int = 0
    trace: list = field(default_factory=list)
    sobolev_estimate: float = float("nan")


class _Problem:
    """Unknowns, energy and masses of one discrete problem.

    A Dirichlet problem has the mask's interior nodes as unknowns.  A free
    problem has every node as unknown and adds the homogeneous exterior tail
    to energies and critical masses.
    """

    def __init__(self, grid: Grid, inside: np.ndarray, kind: str = DIRICHLET, delta: float = 0.0):
        self.grid = grid
        self.kind = kind
        self.delta = delta
        self.mask = inside.copy()
        if kind == DIRICHLET:
            self.mask[grid.boundary_mask()] = False
            self.closure = None
        else:
            self.closure = exterior_closure(grid)
        self.flat = self.mask.ravel()
        self._solver = None

    @property
    def solver(self) -> "StiffnessSolver":
        if self._solver is None:
            A = stiffness_matrix(self.grid)
            if self.closure is not None:
                A = A + self.closure.stiffness()
            self._solver = StiffnessSolver(A, self.flat, self.grid.ndim)
        return self._solver

    def field(self, vec: np.ndarray) -> Field:
        vals = np.zeros(self.grid.node_count)
        vals[self.flat] = vec
        return Field(self.grid, vals.reshape(self.grid.shape), self.kind)

    def vec(self, arr: np.ndarray) -> np.ndarray:
        return np.asarray(arr).ravel()[self.flat]

    def full(self, vec: np.ndarray) -> np.ndarray:
        vals = np.zeros(self.grid.node_count)
        vals[self.flat] = vec
        return vals.reshape(self.grid.shape)

    def energy(self, vec: np.ndarray):
        """(p-energy, its gradient) in unknown coordinates."""
        p = self.grid.params.p
        vals = self.full(vec)
        lap, e = _p_laplacian_values(self.grid, vals, self.delta, want_energy=True)
        if self.closure is not None:
            lap_ext, e_ext = self.closure.energy_and_lap(vals, self.delta)
            lap, e = lap + lap_ext, e + e_ext
        return e, p * self.vec(lap)

    def power(self, vec: np.ndarray, s: float, cells: np.ndarray | None = None):
        """(Gauss-rule integral of |u|^s, its gradient), tail included for free problems.

        With a boolean cell mask ``cells`` the integral restricted to those
        cells (no tail) and its gradient are returned as well.
        """
        vals = self.full(vec)
        G = gauss_values(vals)
        w = self.grid.cell_measure / 2**self.grid.ndim
        A = np.abs(G)
        A1 = A ** (s - 1.0)
        P = A1 * A
        D = np.copysign(A1, G) * (s * w)
        val = float(np.sum(P) * w)
        grad = gauss_adjoint(D)
        if self.closure is not None:
            val += self.closure.power(vals, s)
            grad = grad + s * self.closure.power_derivative(vals, s)
        if cells is None:
            return val, self.vec(grad)
        inner = float(np.sum(P * cells) * w)
        return val, self.vec(grad), inner, self.vec(gauss_adjoint(D * cells))


class StiffnessSolver:
    """Direct (2D) or algebraic-multigrid (3D/4D) solves with the p = 2 matrix."""

    def __init__(self, A, free: np.ndarray, ndim: int):
        self.A = A[free][:, free].tocsc()
        if ndim <= 2:
            self._lu = spla.splu(self.A)
            self._ml = None
        else:
            import pyamg

            self._lu = None
            self._ml = pyamg.ruge_stuben_solver(self.A.tocsr())

    def solve(self, r: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(r)
        return self._ml.solve(r, tol=1e-7, accel="cg", maxiter=100)

    def dual_norm(self, r: np.ndarray) -> float:
        return math.sqrt(max(float(r @ self.solve(r)), 0.0))


def initial_profile(grid: Grid, scale: float | None = None) -> np.ndarray:
    """(1 + (d/s)^(p/(p-1)))^(-(N_gamma - p)/p), the bubble-shaped start."""
    params = grid.params
    if scale is None:
        scale = _box_gauge_radius(grid) / 6.0
    d = grid.gauge() / scale
    p = params.p
    expo = (params.N_gamma - p) / p if p < params.N_gamma else 1.0
    return (1.0 + d ** (p / (p - 1.0))) ** (-expo)


def _box_gauge_radius(grid: Grid) -> float:
    params = grid.params
    k = params.gamma + 1.0
    rx = min(min(-a, b) for a, b in grid.box[: params.m])
    ry = min(min(-a, b) for a, b in grid.box[params.m :])
    return float(min(rx, (k * max(ry, 0.0)) ** (1.0 / k)))


def _lbfgs_direction(g, S, Y, PY, precond):
    q = g.copy()
    alphas = []
    for s, y in reversed(list(zip(S, Y))):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((rho, a, s, y))
        q -= a * y
    r = precond(q)
    if S:
        r *= float(S[-1] @ Y[-1]) / float(Y[-1] @ PY[-1])
    for rho, a, s, y in reversed(alphas):
        b = rho * float(y @ r)
        r += (a - b) * s
    return -r


class _Pin:
    """Constraint c(u) = mass(B_rho)/mass - 1/2 fixing the dilation gauge."""

    def __init__(self, problem: _Problem, radius: float, s: float):
        self.problem = problem
        self.s = s
        grid = problem.grid
        xn, yn = grid.block_norms(centers=True)
        self.cells = gauge_from_norms(grid.params.gamma, xn, yn) < radius

    def __call__(self, vec):
        total, dtotal, inner, dinner = self.problem.power(vec, self.s, self.cells)
        return inner / total - 0.5, (dinner - (inner / total) * dtotal) / total


class _State:
    """An iterate with its value, gradient and preconditioned projections."""

    def __init__(self, u, val, g, ref, solver, pin):
        self.u, self.val, self.g, self.ref = u, val, g, ref
        self.ref_norm = None
        Pg = solver.solve(g)
        if pin is None:
            self.gc = self.Pc = None
            self.gt, self.Pgt = g, Pg
        else:
            _, self.gc = pin(u)
            self.Pc = solver.solve(self.gc)
            mu = float(self.gc @ Pg) / float(self.gc @ self.Pc)
            self.gt, self.Pgt = g - mu * self.gc, Pg - mu * self.Pc
        self.gnorm = math.sqrt(max(float(self.gt @ self.Pgt), 0.0))

    def project(self, d):
        if self.Pc is None:
            return d
        return d - float(self.gc @ d) / float(self.gc @ self.Pc) * self.Pc


def _homogeneous_descent(objective, problem: _Problem, u0, config: SolverConfig, normalize, what: str,
                         recenter=None, pin: _Pin | None = None):
    """Minimize a degree-zero homogeneous objective over nonnegative fields.

    ``objective(vec) -> (value, gradient, reference)``; the reported residual
    is the dual norm of the gradient (projected onto the pin's tangent space
    when a pin is given) relative to the dual norm of ``reference``.
    """
    solver = problem.solver

    def restore(v, direction):
        if pin is None:
            return v
        for _ in range(30):
            c, gc = pin(v)
            if abs(c) <= 1e-13:
                return v
            slope = float(gc @ direction)
            if slope == 0:
                break
            v = normalize(np.abs(v - c / slope * direction))
        raise SolverError(f"{what}: could not restore the dilation pin", [])

    def state(v):
        val, g, ref = objective(v)
        return _State(v, val, g, ref, solver, pin)

    def residual(st, exact=False):
        if exact or st.ref_norm is None:
            st.ref_norm = solver.dual_norm(st.ref)
        return st.gnorm / max(st.ref_norm, 1e-300)

    if pin is not None:
        u = normalize(np.abs(u0))
        _, gc = pin(u)
        u = restore(u, solver.solve(gc))
    else:
        u = normalize(np.abs(u0))
    cur = state(u)
    res = residual(cur)
    trace = [(0, cur.val)]
    S, Y, PY = [], [], []
    step = config.step_init
    shifts = []
    for it in range(1, config.max_iters + 1):
        if res <= config.grad_tol:
            res = residual(cur, exact=True)
            if res <= config.grad_tol:
                return cur.u, cur.val, res, it - 1, trace, shifts
        d = cur.project(_lbfgs_direction(cur.gt, S, Y, PY, solver.solve)) if S else -cur.Pgt
        slope = float(cur.g @ d)
        if not slope < 0:
            S.clear(), Y.clear(), PY.clear()
            d = -cur.Pgt
            slope = float(cur.g @ d)
        # unit steps for quasi-Newton directions, the last accepted length otherwise
        t = 1.0 if S else step
        accepted = False
        for _ in range(60):
            trial = restore(normalize(np.abs(cur.u + t * d)), cur.Pc)
            tval = objective(trial)[0]
            if tval <= cur.val + config.armijo_c * t * slope:
                accepted = True
                break
            # minimizer of the quadratic through (0, val), slope and (t, tval)
            curv = tval - cur.val - slope * t
            t_q = -slope * t * t / (2.0 * curv) if curv > 0 else config.armijo_shrink * t
            t = min(max(t_q, 0.1 * t), config.armijo_shrink * t)
        if not accepted or not tval <= cur.val:
            if S:
                S.clear(), Y.clear(), PY.clear()
                continue
            raise SolverError(f"{what}: line search failed at iteration {it}", trace, {"field": problem.field(cur.u)})
        new = state(trial)
        s_vec, y_vec = new.u - cur.u, new.gt - cur.gt
        if float(s_vec @ y_vec) > 1e-12 * float(np.linalg.norm(s_vec) * np.linalg.norm(y_vec)):
            S.append(s_vec), Y.append(y_vec), PY.append(new.Pgt - cur.Pgt)
            if len(S) > config.memory:
                S.pop(0), Y.pop(0), PY.pop(0)
        # the reference norm changes slowly; refresh it every few iterations
        new.ref_norm = cur.ref_norm if it % 10 else None
        cur = new
        res = residual(cur)
        trace.append((it, cur.val))
        log.debug("%s it %d value %.12g residual %.3e step %.3g", what, it, cur.val, res, t)
        if not S or len(S) == 1:
            step = t
        if recenter is not None and config.recenter_every and it % config.recenter_every == 0:
            shifted, shift = recenter(cur.u)
            if shift:
                shifts.append((it, shift))
                cur = state(normalize(shifted))
                cur.ref_norm = None
                res = residual(cur)
                S.clear(), Y.clear(), PY.clear()
    res = residual(cur, exact=True)
    if res <= config.grad_tol:
        return cur.u, cur.val, res, config.max_iters, trace, shifts
    raise SolverError(f"{what}: no convergence in {config.max_iters} iterations (residual {res:.3e})", trace,
                      {"field": problem.field(cur.u), "residual": res})


def _assert_descent(trace) -> None:
    vals = [v for _, v in trace]
    if any(b > a for a, b in zip(vals, vals[1:])):
        raise SolverError("objective increased along the descent", trace)


def _recenter_y(problem: _Problem, ps: float):
    """Integer-node y shift moving the p*-mass median to y = 0 (exact, no interpolation)."""
    grid = problem.grid
    m = grid.params.m

    def recenter(vec):
        vals = problem.full(vec)
        shift = []
        moved = vals
        for j in range(m, grid.ndim):
            axes = tuple(a for a in range(grid.ndim) if a != j)
            mass = np.sum(np.abs(vals) ** ps, axis=axes)
            cdf = np.cumsum(mass) / mass.sum()
            med = int(np.searchsorted(cdf, 0.5))
            k = grid.cells[j] // 2 - med
            shift.append(k)
            if k:
                moved = np.roll(moved, k, axis=j)
                idx = [slice(None)] * grid.ndim
                idx[j] = slice(0, k) if k > 0 else slice(k, None)
                moved[tuple(idx)] = 0.0
        if not any(shift):
            return vec, None
        return problem.vec(moved), tuple(shift)

    return recenter


def sobolev_quotient(u: Field, delta: float = 0.0) -> float:
    """Critical quotient; free fields include their homogeneous exterior tail."""
    p = u.grid.params
    return whole_space_energy(u, delta) / whole_space_power(u, p.p_star) ** (p.p / p.p_star)


def _quotient_objective(problem: _Problem, s: float):
    """Objective E(u) / (int |u|^s)^(p/s) with its gradient."""
    p = problem.grid.params.p

    def obj(vec):
        energy, lap = problem.energy(vec)
        mass, dmass = problem.power(vec, s)
        den = mass ** (p / s)
        grad = (lap - (p / s) * (energy / mass) * dmass) / den
        return energy / den, grad, lap / den

    return obj


def _sphere_normalizer(problem: _Problem, s: float):
    def normalize(vec):
        mass, _ = problem.power(vec, s)
        if not mass > 0:
            raise SolverError("iterate collapsed to the zero field")
        return vec / mass ** (1.0 / s)

    return normalize


def _boundary_mass_warning(u: Field) -> list:
    grid = u.grid
    ps = grid.params.p_star
    mass = np.abs(u.values) ** ps * grid.trapezoid_weights()
    near = np.zeros(grid.shape, dtype=bool)
    for i, c in enumerate(grid.cells):
        k = max(1, int(round(0.1 * c)))
        idx = [slice(None)] * grid.ndim
        idx[i] = slice(0, k)
        near[tuple(idx)] = True
        idx[i] = slice(c + 1 - k, None)
        near[tuple(idx)] = True
    frac = float(mass[near].sum() / mass.sum())
    if frac > 1e-3:
        return [f"{frac:.3e} of the critical mass lies within 10% of the box boundary"]
    return []


def minimize_sobolev_quotient(grid: Grid, config: SolverConfig = SolverConfig(), init: Field | None = None,
                              pin_radius: float | None = None, kind: str = FREE) -> QuotientResult:
    """Estimate S_{gamma,p} and an extremal on the grid box.

    ``kind = "free"`` continues the field beyond the box by its homogeneous
    tail; ``"dirichlet_zero"`` truncates.  The dilation invariance is fixed by
    holding half of the critical mass inside the gauge ball of radius
    ``pin_radius`` (default: a fifth of the box gauge radius).
    """
    params = grid.params
    ps = params.p_star
    problem = _Problem(grid, np.ones(grid.shape, dtype=bool), kind, config.delta_reg)
    if pin_radius is None:
        pin_radius = _box_gauge_radius(grid) / 5.0
    if not pin_radius > 0:
        raise ValueError("pin_radius must be positive")
    if init is not None:
        u0 = problem.vec(init.values)
    else:
        u0 = problem.vec(initial_profile(grid, config.init_scale or pin_radius))
    obj = _quotient_objective(problem, ps)
    recenter = _recenter_y(problem, ps) if kind == DIRICHLET else None
    u, val, res, iters, trace, shifts = _homogeneous_descent(
        obj, problem, u0, config, _sphere_normalizer(problem, ps), "sobolev quotient",
        recenter=recenter, pin=_Pin(problem, pin_radius, ps),
    )
    _assert_descent(trace)
    minimizer = problem.field(u)
    warnings = _boundary_mass_warning(minimizer) if kind == DIRICHLET else []
    return QuotientResult(val, minimizer, iters, res, trace, warnings, shifts)


def _resolves_pin(grid: Grid, radius: float, per_axis: float = 2.0) -> bool:
    """Whether the pin ball spans at least ``per_axis`` cells along every axis."""
    ext = gauge_box(grid.params, radius)
    return all((b - a) >= 2 * per_axis * h for (a, b), h in zip(ext, grid.spacing))


def minimize_with_continuation(grid: Grid, config: SolverConfig = SolverConfig(), pin_radius: float | None = None,
                               levels: int = 2, kind: str = FREE) -> QuotientResult:
    """minimize_sobolev_quotient, started from the interpolated solution on coarser grids.

    Each coarser level halves the cell counts; the iteration counts of all
    levels are summed in the result.
    """
    if pin_radius is None:
        pin_radius = _box_gauge_radius(grid) / 5.0
    chain = [grid]
    for _ in range(levels):
        cells = tuple(max(MIN_CELLS, c // 2) for c in chain[-1].cells)
        coarse = build_grid(grid.box, cells, grid.params)
        if cells == chain[-1].cells or not _resolves_pin(coarse, pin_radius):
            break
        chain.append(coarse)
    init, iters = None, 0
    for g in reversed(chain):
        if init is not None:
            init = resample_mapped(init, g, lambda pts: pts, 1.0)
        res = minimize_sobolev_quotient(g, config, init, pin_radius, kind)
        init, iters = res.minimizer, iters + res.iters
    res.iters = iters
    return res


def first_eigenvalue(mask: DomainMask, config: SolverConfig = SolverConfig(), init: Field | None = None):
    """(lambda_1 estimate, eigenfield with unit L^p norm), by quotient descent."""
    grid = mask.grid
    p = grid.params.p
    problem = _Problem(grid, mask.inside, DIRICHLET, config.delta_reg)
    if not problem.flat.any():
        raise ValueError("domain mask has no interior nodes")
    u0 = problem.vec(init.values if init is not None else _bump(grid, mask))
    obj = _quotient_objective(problem, p)
    u, val, res, iters, trace, _ = _homogeneous_descent(
        obj, problem, u0, config, _sphere_normalizer(problem, p), "first eigenvalue"
    )
    _assert_descent(trace)
    return val, problem.field(u)


def _bump(grid: Grid, mask: DomainMask) -> np.ndarray:
    """Positive start: product of sines over the box, restricted to the mask."""
    out = np.ones(grid.shape)
    for i, (a, b) in enumerate(grid.box):
        out = out * grid._broadcast(np.sin(np.pi * (grid.axis(i) - a) / (b - a)), i)
    return np.where(mask.inside, out + 1e-3, 0.0)


def compactness_threshold(S_estimate: float, params: GrushinParams) -> float:
    if not S_estimate > 0:
        raise ValueError("Sobolev constant estimate must be positive")
    return S_estimate ** (params.N_gamma / params.p) / params.N_gamma


def _fibering_root(a: float, b: float, c: float, lam: float, p: float, q: float, ps: float) -> float:
    """Unique t > 0 with a = lam b t^(q-p) + c t^(p*-p)."""
    if lam == 0 or b == 0:
        return (a / c) ** (1.0 / (ps - p))
    head = a - (lam * b if q == p else 0.0)
    if not head > 0 or not c > 0:
        raise ValueError("fibering map has no positive critical point (lambda too large for q = p?)")

    def psi(t):
        return head - (lam * b * t ** (q - p) if q > p else 0.0) - c * t ** (ps - p)

    # bracket in t: psi is strictly decreasing on (0, inf)
    lo, hi = 0.0, (head / c) ** (1.0 / (ps - p))
    while psi(hi) > 0:
        lo, hi = hi, 2.0 * hi
    t = hi
    for _ in range(100):
        dpsi = -(lam * b * (q - p) * t ** (q - p - 1) if q > p else 0.0) - c * (ps - p) * t ** (ps - p - 1)
        f = psi(t)
        if abs(f) <= 1e-15 * head:
            break
        if f > 0:
            lo = max(lo, t)
        else:
            hi = min(hi, t)
        newton = t - f / dpsi
        t = newton if lo < newton < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * hi:
            break
    return t


def nehari_scale(u: Field, lam: float, q: float, delta: float = 0.0) -> float:
    """The t > 0 maximizing J_lambda(t u) along the ray through u."""
    params = u.grid.params
    if not np.any(u.values):
        raise ValueError("fibering map of the zero field is degenerate")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    e = bn_energy(u, lam, q, delta)
    return _fibering_root(e.dirichlet_p, e.lower_order_q, e.critical_term, lam, params.p, q, params.p_star)


def _reduced_objective(problem: _Problem, lam: float, q: float):
    """u -> J_lambda(t(u) u) with gradient t J'(t u) (envelope theorem)."""
    params = problem.grid.params
    p, ps = params.p, params.p_star

    def obj(vec):
        a, lap = problem.energy(vec)
        b, db = problem.power(vec, q)
        c, dc = problem.power(vec, ps)
        try:
            t = _fibering_root(a, b, c, lam, p, q, ps)
        except ValueError as exc:
            raise SolverError(str(exc)) from exc
        val = a * t**p / p - lam * b * t**q / q - c * t**ps / ps
        # gradient of J(t u) in u at fixed t (t is stationary)
        lap_t = lap * t**p / p
        grad = lap_t - lam * db * t**q / q - dc * t**ps / ps
        return val, grad, lap_t

    return obj


def solve_brezis_nirenberg(mask: DomainMask, lam: float, q: float, config: SolverConfig = SolverConfig(),
                           sobolev_estimate: float | None = None, lambda1: float | None = None,
                           init: Field | None = None) -> MountainPassResult:
    """Ground state on the Nehari manifold of J_lambda over the masked domain."""
    grid = mask.grid
    params = grid.params
    p, ps = params.p, params.p_star
    if not (p <= q < ps):
        raise ValueError(f"q = {q:g} outside [p, p*) = [{p:g}, {ps:g})")
    if not mask.intersects_degeneration:
        raise ValueError("domain must intersect the degeneration set {x = 0}")
    if q == p:
        if lambda1 is None:
            lambda1, _ = first_eigenvalue(mask, config)
        if not 0 < lam < lambda1:
            raise ValueError(f"for q = p need 0 < lambda < lambda_1 = {lambda1:.6g}")
    elif lam < 0:
        raise ValueError("lambda must be >= 0")
    if sobolev_estimate is None:
        sobolev_estimate = default_sobolev_estimate(params, config)
    problem = _Problem(grid, mask.inside, DIRICHLET, config.delta_reg)
    u0 = problem.vec(init.values if init is not None else _bump(grid, mask))
    obj = _reduced_objective(problem, lam, q)
    try:
        u, val, res, iters, trace, _ = _homogeneous_descent(
            obj, problem, u0, config, _sphere_normalizer(problem, ps), "brezis-nirenberg"
        )
    except SolverError as exc:
        from .analysis import concentration_radius

        last = exc.diagnostics.get("field")
        if last is not None:
            exc.diagnostics["concentration_radius"] = concentration_radius(last)
        raise
    _assert_descent(trace)
    f = problem.field(u)
    t = nehari_scale(f, lam, q, config.delta_reg)
    w = f * t
    e = bn_energy(w, lam, q, config.delta_reg)
    nehari_defect = abs(e.dirichlet_p - lam * e.lower_order_q - e.critical_term) / e.dirichlet_p
    wv = problem.vec(w.values)
    _, lap = problem.energy(wv)
    _, db = problem.power(wv, q)
    _, dc = problem.power(wv, ps)
    residual = problem.solver.dual_norm(lap / p - lam * db / q - dc / ps) / problem.solver.dual_norm(lap / p)
    threshold = compactness_threshold(sobolev_estimate, params)
    return MountainPassResult(
        c_lambda=e.total_J,
        threshold=threshold,
        below_threshold=bool(e.total_J < threshold),
        solution=w,
        nehari_t=t,
        residual=residual,
        nehari_defect=nehari_defect,
        iters=iters,
        trace=trace,
        sobolev_estimate=float(sobolev_estimate),
    )


def default_cells(params: GrushinParams) -> list[int]:
    """Cell counts for a gauge box of radius 10: more cells along y, whose box side grows like R^(1+gamma)."""
    nx = {2: 256, 3: 48, 4: 16}.get(params.dim, 12)
    ny = nx if params.gamma == 0 else (4 * nx if params.dim == 2 else 2 * nx)
    return [nx] * params.m + [ny] * params.n


def default_sobolev_estimate(params: GrushinParams, config: SolverConfig = SolverConfig(),
                             radius: float = 10.0, cells=None) -> float:
    """S estimate from a continuation quotient minimization on a gauge box."""
    cells = default_cells(params) if cells is None else list(cells)
    grid = build_grid(gauge_box(params, radius), cells, params)
    return minimize_with_continuation(grid, config).value
