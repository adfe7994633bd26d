import math

import numpy as np
import pytest

from cdanse.mesh import build_rect_mesh
from cdanse.mms import builtin_paper_solution, forcing_from_solution
from cdanse.observation import build_observation, estimate_CI
from cdanse.solver import SolveConfig, solve_cda_nse, solve_nse
from cdanse.spaces import build_taylor_hood, interpolate_function
from cdanse.theory import (
    H_max_2d,
    H_max_general,
    TheoryConstants,
    compute_alpha,
    discrete_CI,
    lambda_value,
    mu_min,
    proof_chain_check,
    theorem_bounds,
)

NOMINAL = TheoryConstants()


@pytest.mark.parametrize("nu, f, M, alpha", [(1.0, 0.5, 1.0, 0.5), (1 / 3000, 1.0, 1.0, 9e6), (0.7, 0.0, 2.0, 0.0)])
def test_compute_alpha_examples(nu, f, M, alpha):
    assert compute_alpha(nu, f, M) == pytest.approx(alpha, rel=1e-14)


@pytest.mark.parametrize("args", [(0.0, 1.0, 1.0), (-1.0, 1.0, 1.0), (1.0, 1.0, 0.0), (1.0, -0.1, 1.0)])
def test_compute_alpha_invalid(args):
    with pytest.raises(ValueError):
        compute_alpha(*args)


def test_alpha_scaling_law():
    for c in (0.1, 0.5, 3.0, 17.0):
        assert compute_alpha(c * 0.02, 4.0) == pytest.approx(compute_alpha(0.02, 4.0) / c**2, rel=1e-13)


def test_theorem_bounds_examples():
    rep = theorem_bounds(NOMINAL, 1.0, 1.0, 0.25, 10.0)
    assert rep.H_max_general == pytest.approx(2 / (3 * math.sqrt(3)), rel=1e-15)
    assert rep.H_max_general == pytest.approx(0.3849, abs=5e-5)
    assert rep.H_max_2d == 0.5
    assert mu_min(1.0, 1.0, 0.5) == 1.0
    assert theorem_bounds(NOMINAL, 1.0, 1.0, 0.5, 3.0).mu_min == 1.0


def test_report_invariants():
    c = TheoryConstants(M=2.0, M1=1.5, M2=0.5, C_I=0.25)
    rep = theorem_bounds(c, 4.0, 0.01, 0.125, 0.5, f_dual_norm=2e-4)
    assert rep.alpha == 4.0
    assert rep.lambda_ == min(0.01 / (4 * 0.25**2 * 0.125**2), 0.5)
    assert rep.H_max_general == pytest.approx(2 * 4 / (3 * math.sqrt(3) * 0.25 * 2.25 * 16))
    assert rep.H_max_2d == pytest.approx(2 / (2 * 0.25 * 0.5 * 4))
    assert not rep.small_data


def test_small_data_never_restricts():
    for alpha in (0.0, 0.3, 0.999999):
        rep = theorem_bounds(NOMINAL, alpha, 1.0, 10.0, 0.0)
        assert rep.small_data
        assert rep.condition_satisfied_general and rep.condition_satisfied_2d
        assert math.isinf(rep.H_max_general) and math.isinf(rep.H_max_2d)
        d = rep.as_dict()
        assert d["H_max_general"] == "inf" and d["H_max_2d"] == "inf"
        assert "lambda" in d and "lambda_" not in d
    assert not theorem_bounds(NOMINAL, 1.0, 1.0, 0.1, 1e9).small_data


def test_alpha_zero_bounds_are_infinite():
    assert math.isinf(H_max_general(0.0, NOMINAL)) and math.isinf(H_max_2d(0.0, NOMINAL))


def test_large_data_flags():
    nu, alpha = 1e-3, 2.0
    hg, h2 = H_max_general(alpha, NOMINAL), H_max_2d(alpha, NOMINAL)
    assert hg < h2
    H = 0.5 * hg
    ok = theorem_bounds(NOMINAL, alpha, nu, H, 2 * mu_min(nu, 1.0, H))
    assert ok.condition_satisfied_general and ok.condition_satisfied_2d
    low_mu = theorem_bounds(NOMINAL, alpha, nu, H, 0.5 * mu_min(nu, 1.0, H))
    assert not low_mu.condition_satisfied_general and not low_mu.condition_satisfied_2d
    between = theorem_bounds(NOMINAL, alpha, nu, 0.5 * (hg + h2), 1e12)
    assert not between.condition_satisfied_general and between.condition_satisfied_2d
    coarse = theorem_bounds(NOMINAL, alpha, nu, 2 * h2, 1e12)
    assert not coarse.condition_satisfied_2d


def test_monotonicity():
    alphas = np.linspace(1.0, 50.0, 40)
    hg = [H_max_general(a, NOMINAL) for a in alphas]
    assert all(b < a for a, b in zip(hg, hg[1:]))
    Hs = np.linspace(0.01, 1.0, 40)
    mm = [mu_min(0.01, 0.3, H) for H in Hs]
    assert all(b < a for a, b in zip(mm, mm[1:]))


def test_lambda_value():
    assert lambda_value(1.0, 1.0, 0.5, 0.25) == 0.25
    assert lambda_value(1.0, 1.0, 0.5, 4.0) == 1.0


@pytest.mark.parametrize("kwargs", [{"M": 0.0}, {"M1": -1.0}, {"C_I": float("inf")}])
def test_invalid_constants(kwargs):
    with pytest.raises(ValueError):
        TheoryConstants(**kwargs)


@pytest.mark.parametrize("args", [(-1.0, 1.0, 0.5, 1.0), (1.0, 0.0, 0.5, 1.0), (1.0, 1.0, 0.0, 1.0), (1.0, 1.0, 0.5, -1.0)])
def test_theorem_bounds_invalid(args):
    with pytest.raises(ValueError):
        theorem_bounds(NOMINAL, *args)


# --- proof chain -------------------------------------------------------------

@pytest.fixture(scope="module")
def setup():
    space = build_taylor_hood(build_rect_mesh(6, 6))
    op = build_observation(build_rect_mesh(2, 2), space)
    return space, op


def test_discrete_ci_bounds_probe_estimate(setup):
    _, op = setup
    assert discrete_CI(op) >= estimate_CI(op) - 1e-12


def test_proof_chain_equal_fields(setup):
    space, op = setup
    sol = builtin_paper_solution()
    u = interpolate_function(space, sol.velocity)
    rec = proof_chain_check(u, u, NOMINAL, 1.0, 10.0, op)
    for value in (rec.viscous, rec.nudging, rec.convective, rec.middle, rec.lower, rec.lhs):
        assert value == 0.0
    assert rec.identity_gap == 0.0 and rec.lower_bound_slack == 0.0


def test_proof_chain_random_pairs(setup):
    space, op = setup
    c = TheoryConstants(C_I=discrete_CI(op))
    rng = np.random.default_rng(2024)
    interior = np.setdiff1d(np.arange(space.velocity_dof_count), space.boundary_velocity_dofs)
    for k in range(20):
        u = rng.standard_normal(space.velocity_dof_count)
        w = u.copy()
        w[interior] += rng.standard_normal(len(interior)) * 10.0 ** rng.uniform(-3, 1)
        nu = 10.0 ** rng.uniform(-3, 0)
        mu = 10.0 ** rng.uniform(-2, 4)
        rec = proof_chain_check(w, u, c, nu, mu, op)
        scale = max(rec.lhs, 1e-300)
        assert rec.middle_slack >= -1e-10 * scale, k
        assert rec.lower_bound_slack >= -1e-10 * scale, k
        assert rec.nudging == pytest.approx(mu * rec.IH_e_sq, rel=1e-10)


def test_proof_chain_identity_on_small_data_run():
    space = build_taylor_hood(build_rect_mesh(8, 8))
    op = build_observation(build_rect_mesh(4, 4), space)
    sol = builtin_paper_solution()
    f = forcing_from_solution(sol, 1.0)
    u, ru = solve_nse(space, SolveConfig(nu=1.0), f, sol.velocity)
    w, rw = solve_cda_nse(space, SolveConfig(nu=1.0, mu=100.0, initial_guess="stokes"), f, u_obs=u, op=op, boundary=sol.velocity)
    assert ru.converged and rw.converged
    rec = proof_chain_check(w, u, TheoryConstants(C_I=estimate_CI(op)), 1.0, 100.0, op)
    # ||grad u||^2 is O(10) here and the two fields agree to solver tolerance
    assert abs(rec.identity_gap) <= 1e-8
    assert rec.lower_bound_slack >= -1e-10


def test_proof_chain_space_mismatch(setup):
    space, op = setup
    other = build_taylor_hood(build_rect_mesh(3, 3))
    with pytest.raises(ValueError):
        proof_chain_check(other.zero_field(), other.zero_field(), NOMINAL, 1.0, 1.0, op)
    with pytest.raises(ValueError):
        proof_chain_check(np.zeros(4), np.zeros(4), NOMINAL, 1.0, 1.0, op)
