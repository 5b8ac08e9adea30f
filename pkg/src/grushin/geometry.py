"""Closed-form Grushin geometry: exponents, gauge, dilations, fundamental profile.

Points in R^N = R^m x R^n are split as z = (x, y).  Every function here is
pure; the only cached quantity is the measure of the unit gauge ball.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GrushinParams:
    """Structural constants (m, n, gamma, p) of the Grushin p-Laplacian.

    ``allow_supercritical`` relaxes the ``p < N_gamma`` bound for
    computations that never touch the critical exponent (eigenvalues).
    """

    m: int
    n: int
    gamma: float
    p: float
    allow_supercritical: bool = False

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not self.p > 1:
            raise ValueError(f"p must be > 1, got {self.p}")
        if not self.allow_supercritical and not self.p < self.N_gamma:
            raise ValueError(f"p must be < N_gamma = {self.N_gamma:g}, got p = {self.p:g}")

    @property
    def dim(self) -> int:
        return self.m + self.n

    @property
    def N_gamma(self) -> float:
        return self.m + (1.0 + self.gamma) * self.n

    @property
    def p_star(self) -> float:
        if not self.p < self.N_gamma:
            raise ValueError("critical exponent undefined for p >= N_gamma")
        return self.p * self.N_gamma / (self.N_gamma - self.p)

    @property
    def decay_alpha(self) -> float:
        """Exponent (N_gamma - p)/(p - 1) of the extremal tail d^-alpha."""
        return (self.N_gamma - self.p) / (self.p - 1.0)

    @property
    def q0_weak(self) -> float:
        """Sharp weak-Lebesgue exponent p*(p-1)/p of extremals."""
        return self.p_star * (self.p - 1.0) / self.p

    @property
    def scaling_exponent(self) -> float:
        """Exponent (N_gamma - p)/p in the norm-preserving rescaling."""
        return (self.N_gamma - self.p) / self.p

    def with_p(self, p: float) -> "GrushinParams":
        return GrushinParams(self.m, self.n, self.gamma, p, self.allow_supercritical)


@dataclass(frozen=True)
class Point:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))

    def check(self, params: GrushinParams) -> None:
        if self.x.shape[-1] != params.m or self.y.shape[-1] != params.n:
            raise ValueError(
                f"point has block sizes ({self.x.shape[-1]}, {self.y.shape[-1]}),"
                f" expected ({params.m}, {params.n})"
            )

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.y], axis=-1)


def homogeneous_dimension(params: GrushinParams) -> float:
    return params.N_gamma


def critical_exponent(params: GrushinParams) -> float:
    return params.p_star


def gauge_from_norms(gamma: float, xnorm, ynorm):
    """Gauge from the block norms |x| and |y|; broadcasts over arrays."""
    k = gamma + 1.0
    xnorm = np.asarray(xnorm, dtype=float)
    ynorm = np.asarray(ynorm, dtype=float)
    if gamma == 0:
        return np.hypot(xnorm, ynorm)
    return (xnorm ** (2 * k) + (k * ynorm) ** 2) ** (1.0 / (2 * k))


def gauge(params: GrushinParams, z: Point) -> float:
    z.check(params)
    d = gauge_from_norms(params.gamma, np.linalg.norm(z.x, axis=-1), np.linalg.norm(z.y, axis=-1))
    return float(d) if np.ndim(d) == 0 else d


def dilate(params: GrushinParams, rho: float, z: Point) -> Point:
    if not rho > 0:
        raise ValueError(f"dilation factor must be positive, got {rho}")
    z.check(params)
    return Point(rho * z.x, rho ** (params.gamma + 1.0) * z.y)


def profile_from_gauge(params: GrushinParams, d):
    """Fundamental profile as a function of the gauge value d > 0."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("fundamental profile is singular at the origin")
    if params.p == params.N_gamma:
        return -np.log(d)
    return d ** ((params.p - params.N_gamma) / (params.p - 1.0))


def fundamental_profile(params: GrushinParams, z: Point) -> float:
    val = profile_from_gauge(params, gauge(params, z))
    return float(val) if np.ndim(val) == 0 else val


def sphere_area(k: int) -> float:
    """Surface measure of the unit sphere in R^k (k = 1 gives two points)."""
    return 2.0 * math.pi ** (k / 2.0) / math.gamma(k / 2.0)


@functools.lru_cache(maxsize=None)
def unit_ball_volume(m: int, n: int, gamma: float, resolution: int = 512) -> float:
    """|B_1| by tensor quadrature in block-radial coordinates (r, s) = (|x|, |y|).

    The indicator of {d < 1} is smoothed over one cell; the estimate on the
    given resolution is Richardson-extrapolated against half resolution.
    """
    return _richardson_ball_volume(m, n, gamma, resolution)[0]


def _ball_volume_at(m: int, n: int, gamma: float, cells: int) -> float:
    k = gamma + 1.0
    s_max = 1.0 / k
    hr, hs = 1.0 / cells, s_max / cells
    r = (np.arange(cells) + 0.5) * hr
    s = (np.arange(cells) + 0.5) * hs
    R, Sg = np.meshgrid(r, s, indexing="ij")
    d = gauge_from_norms(gamma, R, Sg)
    # Gauge gradient bounded near the sphere: a ramp of one cell width.
    width = max(hr, hs)
    weight = np.clip(0.5 + (1.0 - d) / width, 0.0, 1.0)
    jac = R ** (m - 1) * Sg ** (n - 1)
    return float(sphere_area(m) * sphere_area(n) * np.sum(weight * jac) * hr * hs)


def _richardson_ball_volume(m: int, n: int, gamma: float, cells: int) -> tuple[float, float]:
    fine = _ball_volume_at(m, n, gamma, cells)
    coarse = _ball_volume_at(m, n, gamma, cells // 2)
    extrapolated = fine + (fine - coarse) / 3.0
    return extrapolated, abs(extrapolated - fine)


def gauge_ball_volume(params: GrushinParams, R: float) -> float:
    if not R > 0:
        raise ValueError(f"radius must be positive, got {R}")
    return unit_ball_volume(params.m, params.n, float(params.gamma)) * R**params.N_gamma


def gauge_box(params: GrushinParams, radius: float) -> list[tuple[float, float]]:
    """Smallest coordinate box containing the gauge ball B_radius."""
    hx = radius
    hy = radius ** (params.gamma + 1.0) / (params.gamma + 1.0)
    return [(-hx, hx)] * params.m + [(-hy, hy)] * params.n
