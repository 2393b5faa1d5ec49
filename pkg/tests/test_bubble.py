"""The concentrating profile, its mass law, projection, and matching maps."""

import math

import numpy as np
import pytest

from warpgreen import (
    BubbleParams,
    Grid,
    ResolutionError,
    U_deriv,
    U_deriv2,
    U_eval,
    bubble_mass,
    eps_from_lambda,
    exp_U,
    match_eps_to_p,
    match_lambda_to_eps,
    project,
)
from warpgreen.core import quad_periodic
from warpgreen.operators import assemble

SQRT2 = math.sqrt(2.0)
H00 = 0.5813  # representative diagonal value used by the matching tests


def test_bubble_params_validation():
    with pytest.raises(ValueError):
        BubbleParams(eps=0.0, s=0.5)
    with pytest.raises(ValueError):
        BubbleParams(eps=0.05, s=0.0)
    with pytest.raises(ValueError):
        BubbleParams(eps=0.05, s=1.0)


def test_profile_peaks_at_s_with_log_height():
    bp = BubbleParams(eps=0.02, s=0.37)
    r = np.linspace(0.0, 1.0, 20001)
    u = U_eval(bp, r)
    assert r[np.argmax(u)] == pytest.approx(0.37, abs=1e-4)
    assert U_eval(bp, bp.s) == pytest.approx(math.log(1.0 / bp.eps ** 2), rel=1e-12)


def test_profile_is_even_around_s():
    bp = BubbleParams(eps=0.05, s=0.5)
    d = np.array([0.01, 0.07, 0.2])
    np.testing.assert_allclose(U_eval(bp, 0.5 + d), U_eval(bp, 0.5 - d), rtol=1e-13)


def test_profile_solves_its_ode_by_finite_differences():
    """U'' + e^U = 0 checked on the evaluated profile, not on the formulas."""
    bp = BubbleParams(eps=0.05, s=0.5)
    r = np.linspace(0.3, 0.7, 41)
    d = 1e-5
    u2 = (U_eval(bp, r + d) - 2.0 * U_eval(bp, r) + U_eval(bp, r - d)) / (d * d)
    assert np.max(np.abs(u2 + exp_U(bp, r))) < 1e-3 * np.max(exp_U(bp, r))


def test_profile_derivative_formulas_match_finite_differences():
    bp = BubbleParams(eps=0.05, s=0.5)
    r = np.linspace(0.35, 0.65, 31)
    d = 1e-6
    fd1 = (U_eval(bp, r + d) - U_eval(bp, r - d)) / (2 * d)
    np.testing.assert_allclose(U_deriv(bp, r), fd1, rtol=1e-6, atol=1e-6)
    np.testing.assert_array_equal(U_deriv2(bp, r), -exp_U(bp, r))


def test_profile_evaluation_is_overflow_safe():
    bp = BubbleParams(eps=1e-3, s=0.5)
    r = np.linspace(0.0, 1.0, 101)  # |xi| reaches ~700 at the ends
    u = U_eval(bp, r)
    e = exp_U(bp, r)
    assert np.all(np.isfinite(u))
    assert np.all(np.isfinite(e)) and np.all(e >= 0.0)
    assert float(exp_U(bp, 0.0)) == pytest.approx(0.0, abs=1e-200)


@pytest.mark.parametrize("eps", [0.05, 0.01, 1e-3])
def test_mass_closed_form_matches_quadrature(eps):
    bp = BubbleParams(eps=eps, s=0.5)
    n = 1 << 16
    r = np.arange(n) / n
    quad = quad_periodic(exp_U(bp, r))
    assert bubble_mass(bp) == pytest.approx(quad, rel=1e-9)


def test_scaled_mass_approaches_the_universal_constant():
    bp = BubbleParams(eps=1e-3, s=0.5)
    assert bp.eps * bubble_mass(bp) == pytest.approx(2.0 * SQRT2, rel=1e-6)


def test_project_refuses_unresolvable_scale(running_model):
    with pytest.raises(ResolutionError):
        project(running_model, Grid(64), BubbleParams(eps=0.01, s=0.5))


def test_projection_solves_the_linear_problem(running_model):
    grid = Grid(512)
    bp = BubbleParams(eps=0.05, s=0.5)
    prof = project(running_model, grid, bp)
    assert prof.U.shape == (512,) and prof.PU.shape == (512,)
    opr = assemble(running_model, grid)
    rhs = opr.a_nodes * exp_U(bp, grid.nodes)
    defect = np.max(np.abs(opr.apply(prof.PU) - rhs))
    assert defect < 1e-9 * np.max(np.abs(rhs))


def test_projection_far_field_follows_the_kernel_column(running_model, tables_1024):
    grid = Grid(1024)
    bp = BubbleParams(eps=0.01, s=0.5)
    prof = project(running_model, grid, bp)
    g_col = tables_1024.g_column_at(0.5)
    far = np.abs(grid.nodes - 0.5) >= 0.2
    rel = np.abs(bp.eps * prof.PU[far] - 2.0 * SQRT2 * g_col[far]) / (
        2.0 * SQRT2 * np.abs(g_col[far])
    )
    assert np.max(rel) < 0.05


def test_match_eps_to_p_formula_and_validation():
    eps, rho = match_eps_to_p(H00, 40.0)
    assert eps == pytest.approx(2.0 * SQRT2 * H00 / 40.0, rel=1e-14)
    assert rho == pytest.approx(0.025, rel=1e-14)
    with pytest.raises(ValueError):
        match_eps_to_p(0.0, 40.0)
    with pytest.raises(ValueError):
        match_eps_to_p(H00, 1.0)


def test_lambda_matching_is_increasing_below_the_fold():
    eps = np.linspace(0.005, SQRT2 * H00 * 0.99, 50)
    lam = np.array([match_lambda_to_eps(H00, e) for e in eps])
    assert np.all(np.diff(lam) > 0.0)


@pytest.mark.parametrize("eps", [0.005, 0.01, 0.03, 0.1, 0.5])
def test_lambda_inversion_roundtrip(eps):
    lam = match_lambda_to_eps(H00, eps)
    assert eps_from_lambda(H00, lam) == pytest.approx(eps, rel=1e-10)


def test_lambda_inversion_rejects_beyond_branch():
    lam_fold = match_lambda_to_eps(H00, SQRT2 * H00)
    with pytest.raises(ValueError):
        eps_from_lambda(H00, 2.0 * lam_fold)
    with pytest.raises(ValueError):
        eps_from_lambda(H00, 0.0)
    with pytest.raises(ValueError):
        eps_from_lambda(0.0, 1e-3)
