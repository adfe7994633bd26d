import math

import numpy as np
import pytest

from cdanse.analysis import (
    ErrorReport,
    convergence_rates,
    dual_norm_estimate,
    error_vs_exact,
    h1_distance,
    norms,
    pressure_mean,
)
from cdanse.mesh import build_rect_mesh
from cdanse.mms import builtin_paper_solution, homogeneous_solution
from cdanse.spaces import build_taylor_hood, interpolate_function


@pytest.fixture(scope="module")
def space():
    return build_taylor_hood(build_rect_mesh(8, 8))


def test_norms_of_linear_field(space):
    f = interpolate_function(space, lambda x, y: (x, 0 * x))
    n = norms(f)
    assert n.l2 == pytest.approx(math.sqrt(1 / 3), abs=1e-13)
    assert n.h1_seminorm == pytest.approx(1.0, abs=1e-13)
    assert n.divergence_l2 == pytest.approx(1.0, abs=1e-13)


def test_norm_homogeneity(space):
    rng = np.random.default_rng(0)
    f = space.field(rng.standard_normal(space.velocity_dof_count))
    a, b = norms(f), norms(f * -3.5)
    for x, y in zip((a.l2, a.h1_seminorm, a.divergence_l2), (b.l2, b.h1_seminorm, b.divergence_l2)):
        assert y == pytest.approx(3.5 * x, rel=1e-12)


def test_zero_field_errors(space):
    zero = homogeneous_solution(0.0)
    rep = error_vs_exact(space.zero_field(), zero)
    assert rep.e_L2_u == [0.0] and rep.e_H1_u == [0.0]
    # the exact pressure of this solution is nonzero, so only velocity errors vanish
    assert rep.e_L2_p[0] > 0


def test_error_of_interpolant_is_small(space):
    sol = builtin_paper_solution()
    f = interpolate_function(space, sol.velocity, sol.pressure)
    rep = error_vs_exact(f, sol)
    assert rep.e_L2_u[0] < 1e-3 and rep.e_H1_u[0] < 0.1 and rep.e_L2_p[0] == pytest.approx(0.0, abs=1e-15)


def test_pressure_error_ignores_constants(space):
    sol = homogeneous_solution()
    f = interpolate_function(space, sol.velocity, lambda x, y: sol.pressure(x, y) + 7.0)
    g = interpolate_function(space, sol.velocity, sol.pressure)
    assert error_vs_exact(f, sol).e_L2_p[0] == pytest.approx(error_vs_exact(g, sol).e_L2_p[0], abs=1e-12)


def test_pressure_mean(space):
    f = interpolate_function(space, None, lambda x, y: x + 2.0)
    assert pressure_mean(f) == pytest.approx(2.5, abs=1e-14)


def test_h1_distance_space_mismatch(space):
    other = build_taylor_hood(build_rect_mesh(2, 2))
    with pytest.raises(ValueError):
        h1_distance(space.zero_field(), other.zero_field())


def test_convergence_rates():
    assert convergence_rates([0.5, 0.25, 0.125], [4.0, 1.0, 0.25]) == [2.0, 2.0]
    assert math.isnan(convergence_rates([0.5, 0.25], [0.0, 1.0])[0])


def test_error_report_rows():
    rep = ErrorReport([0.5], [4.0], [2.0], [1.0], [0.1]).extend(ErrorReport([0.25], [0.5], [1.0], [0.25], [0.05]))
    rows = rep.rows()
    assert rows[0]["rate_L2_u"] is None
    assert rows[1]["rate_L2_u"] == pytest.approx(3.0)
    assert rows[1]["rate_H1_u"] == pytest.approx(1.0)
    assert rows[1]["rate_L2_p"] == pytest.approx(2.0)


def test_dual_norm_zero(space):
    d = dual_norm_estimate(lambda x, y: (0 * x, 0 * x), space)
    assert d.minus_one == 0 and d.star == 0


def test_dual_norm_subspace_inequality(space):
    rng = np.random.default_rng(1)
    for _ in range(10):
        c = rng.standard_normal(12)

        def f(x, y, c=c):
            return (
                c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * x**2 + c[5] * y**2,
                c[6] + c[7] * x + c[8] * y + c[9] * x * y + c[10] * x**2 + c[11] * y**2,
            )

        d = dual_norm_estimate(f, space)
        assert d.star <= d.minus_one * (1 + 1e-12)


def test_dual_norm_gradient_forcing_has_zero_star_norm(space):
    # a gradient forcing is invisible to divergence-free test fields
    d = dual_norm_estimate(lambda x, y: (2 * x + 0 * y, 0 * x + 1.0), space)
    assert d.minus_one > 0.1 and d.star <= 1e-10


def test_dual_norm_of_laplacian():
    # f = -lap g with g = (x(1-x) y(1-y), 0); ||grad g||^2 = 2 * (1/3) * (1/30) = 1/45
    f = lambda x, y: (2 * y * (1 - y) + 2 * x * (1 - x), 0 * x)
    space = build_taylor_hood(build_rect_mesh(32, 32))
    d = dual_norm_estimate(f, space)
    assert d.minus_one == pytest.approx(math.sqrt(1 / 45), rel=0.02)


def test_minus_one_norm_monotone_under_refinement():
    # polynomial forcing keeps the load quadrature exact, so only the nested sup remains
    f = lambda x, y: (1 + x * y - 2 * y**2, x**2 - 3 * y)
    values = [dual_norm_estimate(f, build_taylor_hood(build_rect_mesh(n, n))).minus_one for n in (2, 4, 8, 16)]
    assert all(b >= a - 1e-10 for a, b in zip(values, values[1:]))


@pytest.mark.xfail(strict=True, reason="discretely divergence-free Taylor-Hood spaces are not nested")
def test_star_norm_monotone_under_refinement():
    f = lambda x, y: (np.sin(3 * x) * y, np.cos(2 * y) * x * x)
    values = [dual_norm_estimate(f, build_taylor_hood(build_rect_mesh(n, n))).star for n in (4, 8, 16)]
    assert all(b >= a - 1e-10 for a, b in zip(values, values[1:]))
