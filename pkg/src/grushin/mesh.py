"""Tensor-product grids, nodal fields, trapezoidal norms and resampling.

Node values are stored as an ndarray of shape ``grid.shape`` (row-major,
C order).  Norms use trapezoidal weights: interior nodes carry weight 1,
every boundary face halves it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import GrushinParams, Point, gauge_from_norms

DIRICHLET = "dirichlet_zero"
FREE = "free"
BOUNDARY_KINDS = (DIRICHLET, FREE)
MIN_CELLS = 4
FIELD_MAGIC = "GRUSHIN-FIELD"
FIELD_VERSION = "v1"


@dataclass(frozen=True)
class Grid:
    box: tuple[tuple[float, float], ...]
    cells: tuple[int, ...]
    params: GrushinParams

    def __post_init__(self):
        box = tuple((float(a), float(b)) for a, b in self.box)
        cells = tuple(int(c) for c in self.cells)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "cells", cells)
        if len(box) != self.params.dim or len(cells) != self.params.dim:
            raise ValueError(f"grid needs {self.params.dim} axes, got box {len(box)}, cells {len(cells)}")
        if self.params.dim > 4:
            raise ValueError("grids are limited to m + n <= 4")
        for (a, b), c in zip(box, cells):
            if not (np.isfinite(a) and np.isfinite(b) and b > a):
                raise ValueError(f"degenerate box interval [{a}, {b}]")
            if c < MIN_CELLS:
                raise ValueError(f"need at least {MIN_CELLS} cells per axis, got {c}")

    @property
    def ndim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.cells)

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / c for (a, b), c in zip(self.box, self.cells))

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, i: int) -> np.ndarray:
        a, b = self.box[i]
        return np.linspace(a, b, self.cells[i] + 1)

    def cell_axis(self, i: int) -> np.ndarray:
        a, _ = self.box[i]
        return a + (np.arange(self.cells[i]) + 0.5) * self.spacing[i]

    def _broadcast(self, vec: np.ndarray, i: int) -> np.ndarray:
        shape = [1] * self.ndim
        shape[i] = vec.size
        return vec.reshape(shape)

    def block_norms(self, centers: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """|x| and |y| at nodes (or cell centers), broadcastable to the grid."""
        get = self.cell_axis if centers else self.axis
        m = self.params.m
        xsq = sum(self._broadcast(get(i) ** 2, i) for i in range(m))
        ysq = sum(self._broadcast(get(i) ** 2, i) for i in range(m, self.ndim))
        return np.sqrt(xsq), np.sqrt(ysq)

    def gauge(self, center_y=None) -> np.ndarray:
        """Gauge d(z - (0, e)) at every node, full array."""
        m = self.params.m
        xn, _ = self.block_norms()
        if center_y is None:
            center_y = np.zeros(self.params.n)
        ysq = sum(self._broadcast((self.axis(i) - center_y[i - m]) ** 2, i) for i in range(m, self.ndim))
        return np.broadcast_to(gauge_from_norms(self.params.gamma, xn, np.sqrt(ysq)), self.shape)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.ones(self.shape)
        for i, c in enumerate(self.cells):
            wi = np.ones(c + 1)
            wi[0] = wi[-1] = 0.5
            w = w * self._broadcast(wi, i)
        return w

    def boundary_mask(self) -> np.ndarray:
        b = np.zeros(self.shape, dtype=bool)
        for i in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[i] = 0
            b[tuple(idx)] = True
            idx[i] = -1
            b[tuple(idx)] = True
        return b

    def points(self) -> np.ndarray:
        """All node coordinates, shape (node_count, N); only for small grids."""
        mesh = np.meshgrid(*[self.axis(i) for i in range(self.ndim)], indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=-1)

    def contains(self, pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(pts)
        ok = np.ones(pts.shape[0], dtype=bool)
        for i, (a, b) in enumerate(self.box):
            slack = tol * (b - a)
            ok &= (pts[:, i] >= a - slack) & (pts[:, i] <= b + slack)
        return ok

    def spec_strings(self) -> tuple[str, str]:
        boxspec = ",".join(f"{a!r}:{b!r}" for a, b in self.box)
        cellspec = ",".join(str(c) for c in self.cells)
        return boxspec, cellspec


def build_grid(box, cells, params: GrushinParams) -> Grid:
    return Grid(tuple(tuple(b) for b in box), tuple(cells), params)


def dilate_grid(grid: Grid, rho: float) -> Grid:
    """Image of the grid box under the dilation delta_rho, same cell counts."""
    if not rho > 0:
        raise ValueError("dilation factor must be positive")
    m, k = grid.params.m, grid.params.gamma + 1.0
    box = [(a * rho, b * rho) if i < m else (a * rho**k, b * rho**k) for i, (a, b) in enumerate(grid.box)]
    return Grid(tuple(box), grid.cells, grid.params)


@dataclass(frozen=True)
class Field:
    grid: Grid
    values: np.ndarray = field(repr=False)
    boundary_kind: str = DIRICHLET

    def __post_init__(self):
        if self.boundary_kind not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary kind {self.boundary_kind!r}")
        vals = np.array(self.values, dtype=float)
        if vals.size != self.grid.node_count:
            raise ValueError(f"field has {vals.size} values, grid has {self.grid.node_count} nodes")
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        if self.boundary_kind == DIRICHLET and np.any(vals[self.grid.boundary_mask()] != 0):
            raise ValueError("dirichlet_zero field must vanish on the grid boundary")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid, fn, boundary_kind: str = DIRICHLET) -> "Field":
        """Sample ``fn(x, y)`` with x, y lists of broadcastable axis arrays."""
        m = grid.params.m
        axes = [grid._broadcast(grid.axis(i), i) for i in range(grid.ndim)]
        vals = np.broadcast_to(np.asarray(fn(axes[:m], axes[m:]), dtype=float), grid.shape).copy()
        if boundary_kind == DIRICHLET:
            vals[grid.boundary_mask()] = 0.0
        return cls(grid, vals, boundary_kind)

    @classmethod
    def zeros(cls, grid: Grid, boundary_kind: str = DIRICHLET) -> "Field":
        return cls(grid, np.zeros(grid.shape), boundary_kind)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values, self.boundary_kind)

    def __mul__(self, c: float) -> "Field":
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def __add__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return self.with_values(self.values - other.values)

    def __abs__(self) -> "Field":
        return self.with_values(np.abs(self.values))


def _check_same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


@dataclass(frozen=True)
class DomainMask:
    grid: Grid
    inside: np.ndarray = field(repr=False)

    def __post_init__(self):
        inside = np.asarray(self.inside, dtype=bool).reshape(self.grid.shape).copy()
        inside[self.grid.boundary_mask()] = False
        inside.setflags(write=False)
        object.__setattr__(self, "inside", inside)

    @property
    def intersects_degeneration(self) -> bool:
        xn, _ = self.grid.block_norms()
        h = max(self.grid.spacing[: self.grid.params.m])
        near = np.broadcast_to(xn <= h * (1 + 1e-12), self.grid.shape)
        return bool(np.any(near & self.inside))

    @classmethod
    def full(cls, grid: Grid) -> "DomainMask":
        return cls(grid, np.ones(grid.shape, dtype=bool))

    @classmethod
    def gauge_ball(cls, grid: Grid, radius: float) -> "DomainMask":
        return cls(grid, grid.gauge() < radius)


def lp_norm(u: Field, s: float) -> float:
    if not s >= 1:
        raise ValueError(f"Lebesgue exponent must be >= 1, got {s}")
    return float(lp_power(u, s) ** (1.0 / s))


def lp_power(u: Field, s: float, rule: str = "trapezoid") -> float:
    """Integral of |u|^s (the s-th power of the norm).

    ``rule="trapezoid"`` lumps at the nodes; ``rule="gauss"`` integrates the
    multilinear interpolant with two Gauss points per axis and cell, which
    does not overweight one-node spikes.
    """
    if rule == "gauss":
        return gauss_power(u.values, u.grid.spacing, s)
    if rule != "trapezoid":
        raise ValueError(f"unknown quadrature rule {rule!r}")
    integrand = u.grid.trapezoid_weights() * np.abs(u.values) ** s
    return float(np.sum(integrand) * u.grid.cell_measure)


_G_NEAR = 0.5 + 0.5 / np.sqrt(3.0)
_G_FAR = 1.0 - _G_NEAR


def gauss_values(values: np.ndarray) -> np.ndarray:
    """Multilinear interpolant at the 2^N Gauss points of every cell, shape (2^N, *cells)."""
    X = values[None]
    for i in range(values.ndim):
        lo = [slice(None)] * X.ndim
        hi = [slice(None)] * X.ndim
        lo[i + 1] = slice(0, -1)
        hi[i + 1] = slice(1, None)
        a, b = X[tuple(lo)], X[tuple(hi)]
        diff = b - a
        X = np.concatenate([a + _G_FAR * diff, a + _G_NEAR * diff])
    return X


def gauss_adjoint(D: np.ndarray) -> np.ndarray:
    """Transpose of gauss_values applied to Gauss-point data D."""
    ndim = D.ndim - 1
    for i in reversed(range(ndim)):
        half = D.shape[0] // 2
        a, b = D[:half], D[half:]
        shape = list(a.shape)
        shape[i + 1] += 1
        out = np.zeros(shape)
        lo = [slice(None)] * (ndim + 1)
        hi = [slice(None)] * (ndim + 1)
        lo[i + 1] = slice(0, -1)
        hi[i + 1] = slice(1, None)
        total = a + b
        far = _G_FAR * a + _G_NEAR * b
        out[tuple(lo)] += total - far
        out[tuple(hi)] += far
        D = out
    return D[0]


SLAB_NODES = 1 << 21


def cell_slabs(shape, max_nodes: int | None = None):
    """Ranges [a, b) of cells along axis 0 whose node slabs hold at most ~max_nodes nodes."""
    max_nodes = SLAB_NODES if max_nodes is None else max_nodes
    per_layer = int(np.prod(shape[1:]))
    step = max(1, max_nodes // max(per_layer, 1) - 1)
    cells = shape[0] - 1
    return [(a, min(a + step, cells)) for a in range(0, cells, step)]


def gauss_power(values: np.ndarray, spacing, s: float) -> float:
    w = float(np.prod(spacing)) / 2 ** values.ndim
    total = 0.0
    for a, b in cell_slabs(values.shape):
        total += float(np.sum(np.abs(gauss_values(values[a : b + 1])) ** s))
    return total * w


def gauss_power_derivative(values: np.ndarray, spacing, s: float) -> np.ndarray:
    """Nodal gradient of gauss_power divided by s."""
    w = float(np.prod(spacing)) / 2 ** values.ndim
    out = np.zeros(values.shape)
    for a, b in cell_slabs(values.shape):
        G = gauss_values(values[a : b + 1])
        out[a : b + 1] += gauss_adjoint(np.sign(G) * np.abs(G) ** (s - 1.0) * w)
    return out


def weak_lebesgue_seminorm(u: Field, s: float) -> float:
    """sup_t t * mu(|u| >= t)^(1/s) over the distinct nodal levels of |u|.

    Between two consecutive levels t * mu(|u| > t) increases towards the
    upper level, so the supremum is the value at a level with the level set
    counted as included.
    """
    if not s > 0:
        raise ValueError(f"exponent must be positive, got {s}")
    a = np.abs(u.values).ravel()
    w = (u.grid.trapezoid_weights() * u.grid.cell_measure).ravel()
    order = np.argsort(-a, kind="stable")
    a, w = a[order], w[order]
    keep = a > 0
    if not np.any(keep):
        return 0.0
    a, w = a[keep], w[keep]
    measure = np.cumsum(w)
    # last index of each run of equal levels
    last = np.r_[a[1:] != a[:-1], True]
    return float(np.max(a[last] * measure[last] ** (1.0 / s)))


def interpolate(grid: Grid, values: np.ndarray, pts: np.ndarray, outside: str = "zero") -> np.ndarray:
    """Multilinear interpolation of nodal values at points of shape (K, N)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    inside = grid.contains(pts)
    if outside == "raise" and not np.all(inside):
        raise ValueError("sample point outside the grid box")
    if outside == "homogeneous":
        return _interpolate_homogeneous(grid, values, pts, inside)
    if outside not in ("zero", "raise"):
        raise ValueError(f"unknown outside policy {outside!r}")
    base, frac = [], []
    for i, ((a, _), h, c) in enumerate(zip(grid.box, grid.spacing, grid.cells)):
        t = (pts[:, i] - a) / h
        k = np.clip(np.floor(t), 0, c - 1).astype(np.intp)
        base.append(k)
        frac.append(np.clip(t - k, 0.0, 1.0))
    out = np.zeros(pts.shape[0])
    for corner in itertools.product((0, 1), repeat=grid.ndim):
        wgt = np.ones(pts.shape[0])
        idx = []
        for i, c in enumerate(corner):
            wgt = wgt * (frac[i] if c else 1.0 - frac[i])
            idx.append(base[i] + c)
        out += wgt * values[tuple(idx)]
    out[~inside] = 0.0
    return out


def dilation_exit(grid: Grid, pts: np.ndarray) -> np.ndarray:
    """Smallest t >= 1 with delta_{1/t}(z) in the box (the box must contain the origin)."""
    k = grid.params.gamma + 1.0
    t = np.ones(pts.shape[0])
    for i, (a, b) in enumerate(grid.box):
        if not a < 0 < b:
            raise ValueError("homogeneous extension needs the origin inside the box")
        c = pts[:, i]
        ratio = np.where(c > 0, c / b, c / a)
        if i >= grid.params.m:
            ratio = np.maximum(ratio, 0.0) ** (1.0 / k)
        t = np.maximum(t, ratio)
    return t


def _interpolate_homogeneous(grid: Grid, values: np.ndarray, pts: np.ndarray, inside) -> np.ndarray:
    """Interpolation continued outside the box by u(delta_t z_b) = t^-alpha u(z_b)."""
    if np.all(inside):
        return interpolate(grid, values, pts, outside="raise")
    m, k = grid.params.m, grid.params.gamma + 1.0
    t = np.ones(pts.shape[0])
    t[~inside] = dilation_exit(grid, pts[~inside])
    back = pts.copy()
    back[:, :m] /= t[:, None]
    back[:, m:] /= (t**k)[:, None]
    for i, (a, b) in enumerate(grid.box):
        back[:, i] = np.clip(back[:, i], a, b)
    return interpolate(grid, values, back, outside="raise") * t ** (-grid.params.decay_alpha)


def sample(u: Field, z) -> float:
    """Value at z; outside the box 0 for Dirichlet fields, the homogeneous tail for free ones."""
    pts = z.as_array() if isinstance(z, Point) else np.asarray(z, dtype=float)
    outside = "zero" if u.boundary_kind == DIRICHLET else "homogeneous"
    vals = interpolate(u.grid, u.values, pts.reshape(-1, u.grid.ndim), outside=outside)
    return float(vals[0]) if pts.ndim == 1 else vals


def _chunked_nodes(grid: Grid, chunk: int = 1 << 20):
    """Yield (flat slice, node coordinates) over the grid in C order."""
    total = grid.node_count
    axes = [grid.axis(i) for i in range(grid.ndim)]
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(flat, grid.shape)
        yield slice(start, start + flat.size), np.stack([ax[j] for ax, j in zip(axes, idx)], axis=-1)


def resample_mapped(u: Field, target: Grid, mapping, factor: float, boundary_kind: str | None = None) -> Field:
    """Field on ``target`` with values factor * u(mapping(z)).

    Dirichlet sources are zero-extended, free sources continue by their
    homogeneous tail.
    """
    outside = "zero" if u.boundary_kind == DIRICHLET else "homogeneous"
    out = np.empty(target.node_count)
    for sl, pts in _chunked_nodes(target):
        out[sl] = interpolate(u.grid, u.values, mapping(pts), outside=outside)
    out = factor * out.reshape(target.shape)
    kind = boundary_kind or u.boundary_kind
    if kind == DIRICHLET:
        out[target.boundary_mask()] = 0.0
    return Field(target, out, kind)


def rescale_field(u: Field, e, rho: float, target: Grid | None = None) -> Field:
    """Sampling of rho^((N_gamma-p)/p) u(rho x, rho^(1+gamma) y + e) on ``target``."""
    if not rho > 0:
        raise ValueError("rescaling factor must be positive")
    params = u.grid.params
    target = target or u.grid
    m = params.m
    e = np.zeros(params.n) if e is None else np.asarray(e, dtype=float).reshape(params.n)
    ky = rho ** (params.gamma + 1.0)

    def mapping(pts):
        src = np.empty_like(pts)
        src[:, :m] = rho * pts[:, :m]
        src[:, m:] = ky * pts[:, m:] + e
        return src

    return resample_mapped(u, target, mapping, rho**params.scaling_exponent)


def rescale_exact(u: Field, rho: float) -> Field:
    """rho^((N_gamma-p)/p) u(delta_rho z) without resampling: the grid box is dilated by 1/rho."""
    grid = dilate_grid(u.grid, 1.0 / rho)
    return Field(grid, u.values * rho**u.grid.params.scaling_exponent, u.boundary_kind)


def dump_field(u: Field, path) -> None:
    p = u.grid.params
    boxspec, cellspec = u.grid.spec_strings()
    header = f"{FIELD_MAGIC} {FIELD_VERSION} {p.m} {p.n} {p.gamma!r} {p.p!r} {boxspec} {cellspec} {u.boundary_kind}"
    body = "\n".join(f"{v:.17g}" for v in u.values.ravel())
    Path(path).write_text(header + "\n" + body + "\n")


def load_field(path) -> Field:
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if len(head) != 9 or head[0] != FIELD_MAGIC or head[1] != FIELD_VERSION:
        raise ValueError(f"not a {FIELD_MAGIC} {FIELD_VERSION} file: {path}")
    m, n = int(head[2]), int(head[3])
    gamma, p = float(head[4]), float(head[5])
    box = [tuple(float(v) for v in part.split(":")) for part in head[6].split(",")]
    cells = [int(c) for c in head[7].split(",")]
    params = GrushinParams(m, n, gamma, p, allow_supercritical=not p < m + (1 + gamma) * n)
    grid = Grid(tuple(box), tuple(cells), params)
    vals = np.array([float(v) for v in lines[1:] if v.strip()])
    if vals.size != grid.node_count:
        raise ValueError(f"field file has {vals.size} values, header implies {grid.node_count}")
    return Field(grid, vals.reshape(grid.shape), head[8])
