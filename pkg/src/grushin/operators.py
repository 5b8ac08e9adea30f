"""Discrete Grushin gradient, regularized p-Dirichlet energy and weak residuals.

Each cell carries 2^N gradient samples, one per cell corner, built from the
N cell edges meeting at that corner.  The weight |x|^gamma of the y
components is taken at the cell center, so it is never evaluated on the
degeneration set when grid lines sit on {x = 0}.  Energy and residual are
assembled from the same corner samples, hence the residual is the exact
gradient of the energy.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import DIRICHLET, Field, Grid, cell_slabs, gauss_power, gauss_power_derivative, lp_power


@dataclass(frozen=True)
class GradientField:
    """Corner samples of the weighted gradient, shape (2^N, N, *cells)."""

    grid: Grid
    components: np.ndarray

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.components**2, axis=1))


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet_p: float
    lower_order_q: float
    critical_term: float
    total_J: float
    lam: float
    q: float


def _corners(ndim: int):
    return list(itertools.product((0, 1), repeat=ndim))


def _corner_slice(grid: Grid, corner, axis: int):
    return tuple(slice(None) if j == axis else slice(c, c + grid.cells[j]) for j, c in enumerate(corner))


@lru_cache(maxsize=32)
def _axis_weights(grid: Grid):
    """Per-axis multiplier of the derivative: 1 for x, |x_c|^gamma for y."""
    xn, _ = grid.block_norms(centers=True)
    wy = xn**grid.params.gamma if grid.params.gamma != 0 else None
    return tuple(None if i < grid.params.m else wy for i in range(grid.ndim))


def _edge_diffs(grid: Grid, values: np.ndarray):
    return [np.diff(values, axis=i) / h for i, h in enumerate(grid.spacing)]


def _corner_gradient(grid: Grid, diffs, weights, corner):
    comps = []
    for i in range(grid.ndim):
        g = diffs[i][_corner_slice(grid, corner, i)]
        comps.append(g if weights[i] is None else weights[i] * g)
    return comps


def grushin_gradient(u: Field) -> GradientField:
    grid = u.grid
    diffs = _edge_diffs(grid, u.values)
    weights = _axis_weights(grid)
    samples = [np.stack(np.broadcast_arrays(*_corner_gradient(grid, diffs, weights, c))) for c in _corners(grid.ndim)]
    return GradientField(grid, np.stack(samples))


def _slab_weights(weights, a: int, b: int):
    return tuple(None if w is None else (w[a:b] if w.shape[0] > 1 else w) for w in weights)


def dirichlet_p_energy(u: Field, delta: float = 0.0) -> float:
    """Sum over corner samples of (|grad u|^2 + delta^2)^(p/2), cell-measure weighted."""
    grid, p = u.grid, u.grid.params.p
    weights = _axis_weights(grid)
    total = 0.0
    # slabs along the first axis keep the temporaries small on 3D/4D grids
    for a, b in cell_slabs(grid.shape):
        diffs = _edge_diffs(grid, u.values[a : b + 1])
        w = _slab_weights(weights, a, b)
        cells = (b - a,) + grid.cells[1:]
        for corner in _corners(grid.ndim):
            sq = 0.0
            for i in range(grid.ndim):
                g = diffs[i][tuple(slice(None) if j == i else slice(c, c + cells[j]) for j, c in enumerate(corner))]
                g = g if w[i] is None else w[i] * g
                sq = sq + g * g
            total += float(np.sum((sq + delta * delta) ** (p / 2.0)))
    return total * grid.cell_measure / 2**grid.ndim


def _p_laplacian_values(grid: Grid, values: np.ndarray, delta: float, want_energy: bool = False):
    p = grid.params.p
    diffs = _edge_diffs(grid, values)
    weights = _axis_weights(grid)
    flux = [np.zeros_like(d) for d in diffs]
    energy = 0.0
    for corner in _corners(grid.ndim):
        comps = _corner_gradient(grid, diffs, weights, corner)
        sq = sum(g * g for g in comps) + delta * delta
        if want_energy:
            energy += float(np.sum(sq ** (p / 2.0)))
        if p == 2:
            coef = 1.0
        elif p < 2:
            # the flux |g|^(p-2) g vanishes with g; avoid 0 ** negative
            coef = np.where(sq > 0, np.where(sq > 0, sq, 1.0) ** ((p - 2.0) / 2.0), 0.0)
        else:
            coef = sq ** ((p - 2.0) / 2.0)
        for i, g in enumerate(comps):
            f = coef * g if weights[i] is None else coef * weights[i] * g
            flux[i][_corner_slice(grid, corner, i)] += f
    out = np.zeros_like(values)
    for i, (f, h) in enumerate(zip(flux, grid.spacing)):
        lo = [slice(None)] * grid.ndim
        hi = [slice(None)] * grid.ndim
        lo[i] = slice(0, -1)
        hi[i] = slice(1, None)
        out[tuple(lo)] -= f / h
        out[tuple(hi)] += f / h
    scale = grid.cell_measure / 2**grid.ndim
    return out * scale, energy * scale


def p_laplacian_apply(u: Field, delta: float = 0.0) -> Field:
    """Nodal gradient of dirichlet_p_energy / p: the weak form of -Delta_{gamma,p} u."""
    r, _ = _p_laplacian_values(u.grid, u.values, delta)
    if u.boundary_kind == DIRICHLET:
        r[u.grid.boundary_mask()] = 0.0
    return u.with_values(r)


def _check_q(grid: Grid, q: float) -> None:
    p, ps = grid.params.p, grid.params.p_star
    if not (p <= q < ps):
        raise ValueError(f"q = {q:g} outside the admissible range [p, p*) = [{p:g}, {ps:g})")


def bn_energy(u: Field, lam: float, q: float, delta: float = 0.0) -> EnergyBreakdown:
    """J_lambda(u) split into its three parts, on the same quadrature the solvers use."""
    grid = u.grid
    _check_q(grid, q)
    p, ps = grid.params.p, grid.params.p_star
    dp = whole_space_energy(u, delta)
    lower = whole_space_power(u, q)
    crit = whole_space_power(u, ps)
    total = dp / p - lam * lower / q - crit / ps
    return EnergyBreakdown(dp, lower, crit, total, float(lam), float(q))


def power_derivative(u: Field, s: float) -> np.ndarray:
    """Nodal gradient of whole_space_power(u, s) / s."""
    g = gauss_power_derivative(u.values, u.grid.spacing, s)
    if u.boundary_kind != DIRICHLET:
        g = g + exterior_closure(u.grid).power_derivative(u.values, s)
    return g


def weak_residual_bn(u: Field, lam: float, q: float, delta: float = 0.0) -> Field:
    """Nodal gradient of bn_energy; vanishes at discrete weak solutions."""
    grid = u.grid
    _check_q(grid, q)
    r, _ = _p_laplacian_values(grid, u.values, delta)
    if u.boundary_kind != DIRICHLET:
        r = r + exterior_closure(grid).energy_and_lap(u.values, delta)[0]
    r = r - lam * power_derivative(u, q) - power_derivative(u, grid.params.p_star)
    if u.boundary_kind == DIRICHLET:
        r[grid.boundary_mask()] = 0.0
    return u.with_values(r)


def _kron_diff(grid: Grid, axis: int) -> sp.csr_matrix:
    ops = []
    for j, n in enumerate(grid.shape):
        if j == axis:
            c = grid.cells[j]
            ops.append(sp.diags([-np.ones(c), np.ones(c)], [0, 1], shape=(c, c + 1)))
        else:
            ops.append(sp.identity(n))
    out = ops[0]
    for o in ops[1:]:
        out = sp.kron(out, o, format="csr")
    return sp.csr_matrix(out)


def edge_weights(grid: Grid):
    """Effective quadratic weight of each edge difference for p = 2."""
    weights = _axis_weights(grid)
    out = []
    for i in range(grid.ndim):
        shape = list(grid.shape)
        shape[i] = grid.cells[i]
        ew = np.zeros(shape)
        w2 = np.ones(grid.cells) if weights[i] is None else np.broadcast_to(weights[i] ** 2, grid.cells)
        for corner in _corners(grid.ndim):
            ew[_corner_slice(grid, corner, i)] += w2
        out.append(ew / 2**grid.ndim)
    return out


def stiffness_matrix(grid: Grid) -> sp.csr_matrix:
    """Matrix of the p = 2 energy: u^T A u equals dirichlet_p_energy at p = 2."""
    A = None
    for i, (ew, h) in enumerate(zip(edge_weights(grid), grid.spacing)):
        D = _kron_diff(grid, i)
        term = D.T @ sp.diags(ew.ravel() * grid.cell_measure / h**2) @ D
        A = term if A is None else A + term
    return sp.csr_matrix(A)


class ExteriorClosure:
    """Homogeneous continuation of a free field beyond the grid box.

    Outside the box a free field is continued by u(delta_t z_b) = t^-alpha u(z_b),
    z_b on the box boundary, t > 1, alpha the extremal decay exponent.  The box
    is star-shaped for the dilations, so exterior integrals reduce to face
    integrals with exact t-integrals; the normal derivative at a face follows
    from Euler's relation sum x_i d_i u + (gamma+1) sum y_j d_j u = -alpha u.
    """

    def __init__(self, grid: Grid):
        params = grid.params
        for a, b in grid.box:
            if not a < 0 < b:
                raise ValueError("exterior closure needs a box with the origin in its interior")
        self.grid = grid
        self.alpha = params.decay_alpha
        self.energy_rate = (self.alpha + 1.0) * params.p - params.N_gamma
        self._build()

    def _build(self):
        grid = self.grid
        params = grid.params
        N, m, k1 = grid.ndim, params.m, params.gamma + 1.0
        axes = [grid.axis(i) for i in range(N)]
        comps = [[] for _ in range(N)]
        omega = []
        self._faces = []
        for k in range(N):
            for side in (0, 1):
                bound = grid.box[k][side]
                gk = bound if k < m else k1 * bound
                face_axes = [j for j in range(N) if j != k]
                fcells = [grid.cells[j] for j in face_axes]
                dS = float(np.prod([grid.spacing[j] for j in face_axes]))
                fixed = 0 if side == 0 else grid.cells[k]
                fidx = np.indices(fcells).reshape(len(face_axes), -1)
                ncell = fidx.shape[1]
                # weight at the face-cell center
                xsq = np.zeros(ncell)
                for j in range(m):
                    if j == k:
                        xsq += bound**2
                    else:
                        col = face_axes.index(j)
                        xsq += grid.cell_axis(j)[fidx[col]] ** 2
                wy = np.sqrt(xsq) ** params.gamma
                for corner in itertools.product((0, 1), repeat=N - 1):
                    node = [None] * N
                    node[k] = np.full(ncell, fixed)
                    for col, j in enumerate(face_axes):
                        node[j] = fidx[col] + corner[col]
                    base = np.ravel_multi_index(node, grid.shape)
                    rows = np.arange(ncell)
                    value = sp.csr_matrix((np.ones(ncell), (rows, base)), shape=(ncell, grid.node_count))
                    tang = {}
                    gen = {}
                    for col, j in enumerate(face_axes):
                        lo = list(node)
                        hi = list(node)
                        lo[j] = fidx[col]
                        hi[j] = fidx[col] + 1
                        ilo = np.ravel_multi_index(lo, grid.shape)
                        ihi = np.ravel_multi_index(hi, grid.shape)
                        h = grid.spacing[j]
                        tang[j] = sp.csr_matrix(
                            (np.r_[-np.ones(ncell), np.ones(ncell)] / h, (np.r_[rows, rows], np.r_[ilo, ihi])),
                            shape=(ncell, grid.node_count),
                        )
                        coord = axes[j][node[j]]
                        gen[j] = coord if j < m else k1 * coord
                    normal = -self.alpha * value
                    for j in face_axes:
                        normal = normal - sp.diags(gen[j]) @ tang[j]
                    normal = normal / gk
                    for j in range(N):
                        mat = normal if j == k else tang[j]
                        if j >= m and params.gamma != 0:
                            mat = sp.diags(wy) @ mat
                        comps[j].append(sp.csr_matrix(mat))
                    omega.append(np.full(ncell, abs(gk) * dS / 2 ** (N - 1) / self.energy_rate))
                self._faces.append((k, fixed, [grid.spacing[j] for j in face_axes], abs(gk)))
        self._comps = [sp.vstack(c, format="csr") for c in comps]
        self._omega = np.concatenate(omega)

    def energy(self, values: np.ndarray, delta: float = 0.0) -> float:
        return self.energy_and_lap(values, delta)[1]

    def energy_and_lap(self, values: np.ndarray, delta: float = 0.0):
        """Exterior p-energy and its nodal gradient divided by p."""
        p = self.grid.params.p
        v = values.ravel()
        rs = [c @ v for c in self._comps]
        sq = sum(r * r for r in rs) + delta * delta
        energy = float(np.sum(self._omega * sq ** (p / 2.0)))
        coef = self._omega * (sq ** ((p - 2.0) / 2.0) if p != 2 else 1.0)
        if p < 2:
            coef = np.where(sq > 0, coef, 0.0)
        lap = sum(c.T @ (coef * r) for c, r in zip(self._comps, rs))
        return lap.reshape(self.grid.shape), energy

    def _power_rate(self, s: float) -> float:
        rate = self.alpha * s - self.grid.params.N_gamma
        if not rate > 0:
            raise ValueError(f"homogeneous tail is not L^{s:g}-integrable")
        return rate

    def _face(self, values, k, fixed):
        return np.take(values, fixed, axis=k)

    def power(self, values: np.ndarray, s: float) -> float:
        rate = self._power_rate(s)
        return sum(g * gauss_power(self._face(values, k, f), h, s) for k, f, h, g in self._faces) / rate

    def power_derivative(self, values: np.ndarray, s: float) -> np.ndarray:
        """Nodal gradient of the exterior integral of |u|^s, divided by s."""
        rate = self._power_rate(s)
        out = np.zeros_like(values, dtype=float)
        for k, f, h, g in self._faces:
            idx = [slice(None)] * values.ndim
            idx[k] = f
            out[tuple(idx)] += g * gauss_power_derivative(self._face(values, k, f), h, s) / rate
        return out

    def stiffness(self) -> sp.csr_matrix:
        W = sp.diags(self._omega)
        return sp.csr_matrix(sum(c.T @ W @ c for c in self._comps))


@lru_cache(maxsize=8)
def exterior_closure(grid: Grid) -> ExteriorClosure:
    return ExteriorClosure(grid)


def whole_space_energy(u: Field, delta: float = 0.0) -> float:
    """p-energy of a free field including its homogeneous exterior tail."""
    e = dirichlet_p_energy(u, delta)
    if u.boundary_kind == DIRICHLET:
        return e
    return e + exterior_closure(u.grid).energy(u.values, delta)


def whole_space_power(u: Field, s: float) -> float:
    """Gauss-rule integral of |u|^s, plus the exterior tail for free fields."""
    val = lp_power(u, s, rule="gauss")
    if u.boundary_kind == DIRICHLET:
        return val
    return val + exterior_closure(u.grid).power(u.values, s)
