import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from grushin.geometry import (
    GrushinParams,
    Point,
    critical_exponent,
    dilate,
    fundamental_profile,
    gauge,
    gauge_ball_volume,
    gauge_box,
    homogeneous_dimension,
    unit_ball_volume,
)

# |B_1| for m = n = gamma = 1 is the area of {x^4 + 4y^2 < 1}, i.e. B(1/4, 3/2)/2
BALL_M1N1G1 = 1.7480383695280794

params_st = st.builds(
    lambda m, n, g, frac: GrushinParams(m, n, g, 1.0 + frac * (m + (1 + g) * n - 1.0)),
    st.integers(1, 3),
    st.integers(1, 2),
    st.floats(0.0, 3.0),
    st.floats(0.05, 0.95),
)


def _point(params, rng):
    return Point(rng.normal(size=params.m), rng.normal(size=params.n))


@pytest.mark.parametrize("m,n,gamma,expected", [(1, 1, 1.0, 3.0), (1, 1, 0.0, 2.0), (3, 1, 2.0, 6.0), (2, 2, 0.5, 5.0)])
def test_homogeneous_dimension(m, n, gamma, expected):
    assert homogeneous_dimension(GrushinParams(m, n, gamma, 1.5)) == expected


@pytest.mark.parametrize("m,n,gamma,p,expected", [(1, 1, 1.0, 2.0, 6.0), (1, 1, 1.0, 1.5, 3.0), (2, 1, 0.0, 2.0, 6.0)])
def test_critical_exponent(m, n, gamma, p, expected):
    assert critical_exponent(GrushinParams(m, n, gamma, p)) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("N,p", [(3, 2.0), (3, 1.5), (4, 3.0)])
def test_critical_exponent_euclidean(N, p):
    params = GrushinParams(N - 1, 1, 0.0, p)
    assert critical_exponent(params) == pytest.approx(N * p / (N - p))


@pytest.mark.parametrize("p", [3.0, 3.5])
def test_params_reject_p_at_or_above_dimension(p):
    with pytest.raises(ValueError, match="p must be < N_gamma"):
        GrushinParams(1, 1, 1.0, p)


def test_params_supercritical_only_when_flagged():
    params = GrushinParams(1, 1, 0.0, 2.0, allow_supercritical=True)
    assert params.N_gamma == 2.0
    with pytest.raises(ValueError):
        params.p_star


@pytest.mark.parametrize("bad", [dict(m=0), dict(n=0), dict(gamma=-0.5), dict(p=1.0), dict(m=1.5)])
def test_params_reject_invalid_fields(bad):
    kw = dict(m=1, n=1, gamma=1.0, p=2.0) | bad
    with pytest.raises(ValueError):
        GrushinParams(**kw)


@given(params_st)
def test_exponent_ordering(params):
    assert params.p_star > params.p
    assert params.decay_alpha > 0
    assert params.p - 1 < params.q0_weak < params.p_star


def test_derived_exponents_heisenberg_like(heisenberg_like):
    assert heisenberg_like.decay_alpha == 1.0
    assert heisenberg_like.q0_weak == 3.0
    assert heisenberg_like.scaling_exponent == 0.5


def test_gauge_on_y_axis(heisenberg_like):
    assert gauge(heisenberg_like, Point([0.0], [2.0])) == pytest.approx(2.0, rel=1e-15)


def test_gauge_zero_only_at_origin(heisenberg_like):
    assert gauge(heisenberg_like, Point([0.0], [0.0])) == 0.0
    assert gauge(heisenberg_like, Point([1e-8], [0.0])) > 0


def test_gauge_is_euclidean_for_gamma_zero(rng):
    params = GrushinParams(2, 1, 0.0, 2.0)
    for _ in range(20):
        z = _point(params, rng)
        assert gauge(params, z) == pytest.approx(np.linalg.norm(z.as_array()), rel=1e-14)


def test_point_block_sizes_checked(heisenberg_like):
    with pytest.raises(ValueError, match="block sizes"):
        gauge(heisenberg_like, Point([0.0, 1.0], [1.0]))


@given(params_st, st.floats(0.01, 100.0), st.integers(0, 2**32 - 1))
def test_gauge_homogeneity(params, rho, seed):
    z = _point(params, np.random.default_rng(seed))
    lhs = gauge(params, dilate(params, rho, z))
    assert lhs == pytest.approx(rho * gauge(params, z), rel=8 * np.finfo(float).eps * 4)


def test_gauge_homogeneity_rho_three_ulps(rng):
    params = GrushinParams(1, 1, 1.0, 2.0)
    for _ in range(200):
        z = _point(params, rng)
        a, b = gauge(params, dilate(params, 3.0, z)), 3.0 * gauge(params, z)
        assert abs(a - b) <= 8 * np.spacing(b)


def test_dilate_example():
    params = GrushinParams(1, 1, 1.0, 2.0)
    z = dilate(params, 2.0, Point([1.0], [1.0]))
    assert z.x[0] == 2.0 and z.y[0] == 4.0


@given(params_st, st.floats(0.05, 20.0), st.integers(0, 2**32 - 1))
def test_dilate_group_property(params, rho, seed):
    z = _point(params, np.random.default_rng(seed))
    back = dilate(params, rho, dilate(params, 1.0 / rho, z))
    np.testing.assert_allclose(back.as_array(), z.as_array(), rtol=1e-13, atol=1e-15)
    same = dilate(params, 1.0, z)
    np.testing.assert_array_equal(same.as_array(), z.as_array())


@pytest.mark.parametrize("rho", [0.0, -1.0])
def test_dilate_rejects_nonpositive(rho, heisenberg_like):
    with pytest.raises(ValueError):
        dilate(heisenberg_like, rho, Point([1.0], [1.0]))


def test_fundamental_profile_example(heisenberg_like):
    assert fundamental_profile(heisenberg_like, Point([0.0], [2.0])) == pytest.approx(0.5)


def test_fundamental_profile_log_branch():
    params = GrushinParams(1, 1, 1.0, 3.0, allow_supercritical=True)
    assert fundamental_profile(params, Point([1.0], [0.0])) == 0.0
    assert fundamental_profile(params, Point([0.0], [2.0])) == pytest.approx(-math.log(2.0))


def test_fundamental_profile_rejects_origin(heisenberg_like):
    with pytest.raises(ValueError, match="singular"):
        fundamental_profile(heisenberg_like, Point([0.0], [0.0]))


def test_disk_volume():
    params = GrushinParams(1, 1, 0.0, 1.5)
    assert gauge_ball_volume(params, 1.0) == pytest.approx(math.pi, rel=1e-4)
    assert gauge_ball_volume(params, 3.0) == pytest.approx(9 * math.pi, rel=1e-4)


def test_euclidean_ball_volume_3d():
    assert unit_ball_volume(2, 1, 0.0) == pytest.approx(4 * math.pi / 3, rel=1e-4)


def test_ball_volume_closed_form_m1n1g1():
    assert unit_ball_volume(1, 1, 1.0) == pytest.approx(BALL_M1N1G1, rel=1e-4)


def test_ball_volume_monte_carlo(rng):
    n = 400_000
    x = rng.uniform(-1, 1, n)
    y = rng.uniform(-0.5, 0.5, n)  # gauge_box of radius 1
    frac = np.mean(x**4 + 4 * y**2 < 1)
    est, sigma = 2.0 * frac, 2.0 * math.sqrt(frac * (1 - frac) / n)
    assert abs(unit_ball_volume(1, 1, 1.0) - est) <= 3 * sigma


@pytest.mark.parametrize("m,n,gamma", [(1, 1, 1.0), (1, 1, 2.0), (2, 1, 1.0)])
def test_ball_volume_scaling(m, n, gamma):
    params = GrushinParams(m, n, gamma, 1.5)
    v1 = gauge_ball_volume(params, 1.0)
    assert gauge_ball_volume(params, 2.0) / v1 == pytest.approx(2**params.N_gamma, rel=1e-12)
    for R in (0.5, 1.0, 2.0, 4.0):
        assert gauge_ball_volume(params, R) / R**params.N_gamma == pytest.approx(v1, rel=1e-12)


def test_ball_volume_rejects_nonpositive(heisenberg_like):
    with pytest.raises(ValueError):
        gauge_ball_volume(heisenberg_like, 0.0)


@given(params_st, st.floats(0.1, 10.0))
def test_gauge_box_contains_ball(params, R):
    box = gauge_box(params, R)
    k = params.gamma + 1
    # extreme points of the ball on each axis lie on the box faces
    assert box[0][1] == pytest.approx(R)
    assert box[params.m][1] == pytest.approx(R**k / k)
    assert gauge(params, Point([R] + [0.0] * (params.m - 1), [0.0] * params.n)) == pytest.approx(R)
    assert gauge(params, Point([0.0] * params.m, [R**k / k] + [0.0] * (params.n - 1))) == pytest.approx(R)
