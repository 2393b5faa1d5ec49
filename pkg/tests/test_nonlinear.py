"""Newton solves, branch continuation, and the concentration diagnostics."""

import math

import numpy as np
import pytest

from warpgreen import (
    ConstantV,
    Grid,
    NonPositiveIterate,
    OperatorModel,
    SolverConfig,
    continue_branch,
    exp_lambda_schedule,
    fit_eps_from_peak,
    jacobian_apply,
    match_lambda_to_eps,
    newton_solve,
    parse_fn_spec,
    pick_anchor,
    residual_exp,
    residual_power,
)
from warpgreen.nonlinear import NoConvergence, _branch_peak_guard
from warpgreen.operators import assemble

SQRT2 = math.sqrt(2.0)
SEED = 20260816


def _model(kappa="const:1"):
    return OperatorModel(parse_fn_spec("trig:2,1"), parse_fn_spec(kappa), 1)


def _cfg(n, tol=1e-10, **kw):
    return SolverConfig(grid_N=n, newton_tol=tol, **kw)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(grid_N=128, newton_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(grid_N=128, max_iter=0)
    with pytest.raises(ValueError):
        SolverConfig(grid_N=128, max_halvings=-1)


def test_problem_descriptor_validation():
    model = _model()
    with pytest.raises(ValueError):
        newton_solve(model, np.zeros(128), ("cubic", 3.0), _cfg(128))
    with pytest.raises(ValueError):
        newton_solve(model, np.zeros(128), ("power", 1.0), _cfg(128))
    with pytest.raises(ValueError):
        newton_solve(model, np.zeros(128), ("exp", -0.5), _cfg(128))


def test_residual_power_rejects_nonpositive_state():
    with pytest.raises(NonPositiveIterate):
        residual_power(_model(), -np.ones(128), 7.0)


def test_constant_state_is_an_exact_power_solution():
    # kappa = 1 makes v = 1 satisfy the weighted equation identically
    res = residual_power(_model(), np.ones(256), 11.0)
    assert np.max(np.abs(res)) < 1e-12


def test_constant_state_solves_exponential_at_matched_weight():
    c = 0.25
    lam = c * math.exp(-c)
    res = residual_exp(_model(), np.full(256, c), lam)
    assert np.max(np.abs(res)) < 1e-12


@pytest.mark.parametrize("problem", [("exp", 0.2), ("power", 7.0)])
def test_jacobian_matches_directional_difference(problem):
    model = _model(kappa="trig:1,0.3")
    grid = Grid(128)
    opr = assemble(model, grid)
    r = grid.nodes
    v = 0.3 + 0.1 * np.cos(2 * np.pi * r)
    rng = np.random.default_rng(SEED)
    res_fn = residual_exp if problem[0] == "exp" else residual_power
    for _ in range(3):
        w = rng.standard_normal(128)
        w /= np.max(np.abs(w))
        d = 1e-6
        fd = (res_fn(model, v + d * w, problem[1]) - res_fn(model, v - d * w, problem[1])) / (
            2 * d
        )
        jw = jacobian_apply(opr, v, problem, w)
        assert np.max(np.abs(jw - fd)) < 1e-6 * np.max(np.abs(jw))


def test_newton_converges_quadratically_from_zero_seed():
    model = _model(kappa="trig:1,0.3")
    v, iters, res = newton_solve(
        model, np.zeros(256), ("exp", 0.2), _cfg(256, tol=1e-12), full_output=True
    )
    assert iters <= 8
    assert res < 1e-10
    assert v.max() - v.min() > 1e-3  # genuinely nonconstant potential, nonflat state


def test_newton_power_solution_is_positive():
    model = _model(kappa="trig:1,0.3")
    v = newton_solve(model, np.ones(256), ("power", 7.0), _cfg(256, tol=1e-12))
    assert v.min() > 0.0
    res = residual_power(model, v, 7.0)
    assert np.max(np.abs(res)) < 1e-10


def test_newton_rejects_bad_seed_shape():
    with pytest.raises(ValueError):
        newton_solve(_model(), np.zeros(100), ("exp", 0.1), _cfg(128))


def test_newton_raises_no_convergence_when_starved():
    model = _model(kappa="trig:1,0.3")
    with pytest.raises(NoConvergence):
        newton_solve(model, np.zeros(128), ("exp", 0.2), _cfg(128, max_iter=1))


def test_exp_lambda_schedule_shape_and_monotonicity():
    sched = exp_lambda_schedule(0.58, 0.03, 6, ratio=0.5)
    assert len(sched) == 6
    assert sched[0] == pytest.approx(match_lambda_to_eps(0.58, 0.03), rel=1e-14)
    assert all(b == pytest.approx(0.5 * a, rel=1e-14) for a, b in zip(sched, sched[1:]))
    with pytest.raises(ValueError):
        exp_lambda_schedule(0.58, 0.03, 0)
    with pytest.raises(ValueError):
        exp_lambda_schedule(0.58, 0.03, 3, ratio=1.5)


@pytest.mark.parametrize("eps", [0.02, 0.05, 0.1])
def test_fit_eps_from_peak_inverts_the_height_law(eps):
    h00 = 0.5813
    peak = 2.0 * SQRT2 * h00 / eps - 2.0 * math.log(eps)
    assert fit_eps_from_peak(h00, peak) == pytest.approx(eps, rel=1e-9)


def test_pick_anchor_prefers_the_point_away_from_the_seam(tables_512):
    r0 = pick_anchor(tables_512)
    assert abs(r0 - 0.5) < 0.01


def test_pick_anchor_requires_a_nondegenerate_point(tables_512):
    with pytest.raises(ConstantV):
        pick_anchor(tables_512, nd_threshold=1e6)


def test_branch_guard_rejects_flat_power_iterates():
    with pytest.raises(NoConvergence):
        _branch_peak_guard("power", 40.0, 0.58, np.ones(64), spread_pred=0.8)


def test_branch_guard_rejects_wrong_scale_exp_iterates():
    lam = match_lambda_to_eps(0.58, 0.03)
    v = np.full(64, 2.0)  # right branch peaks near 2 sqrt(2) H00 / eps ~ 55
    with pytest.raises(NoConvergence):
        _branch_peak_guard("exp", lam, 0.58, v, spread_pred=0.8)


def test_branch_guard_accepts_on_branch_profiles():
    peak = 2.0 * SQRT2 * 0.58 / 0.03
    v = np.zeros(64)
    v[32] = peak
    _branch_peak_guard("exp", match_lambda_to_eps(0.58, 0.03), 0.58, v, spread_pred=0.8)

    w = np.ones(64)
    w[32] = 1.1
    _branch_peak_guard("power", 40.0, 0.58, w, spread_pred=0.12)


def test_continue_branch_validates_inputs(tables_512):
    model = _model()
    with pytest.raises(ValueError):
        continue_branch(model, "cubic", _cfg(512, schedule=[1.0]))
    with pytest.raises(ValueError):
        continue_branch(model, "exp", _cfg(512))
    with pytest.raises(ValueError):
        continue_branch(model, "power", _cfg(512, schedule=[80.0, 40.0]))
    with pytest.raises(ValueError):
        continue_branch(model, "exp", _cfg(512, schedule=[1e-9, 1e-8]))
    with pytest.raises(ValueError):
        continue_branch(model, "exp", _cfg(256, schedule=[1e-9]), tables=tables_512)


def test_exp_branch_follows_the_limit_profile(running_model, tables_512):
    h00 = float(tables_512.h_diag_at(0.5))
    sched = exp_lambda_schedule(h00, 0.03, 3, ratio=0.5)
    cfg = _cfg(512, schedule=sched, max_iter=60)
    branch = continue_branch(running_model, "exp", cfg, tables=tables_512)
    assert not branch.truncated
    assert len(branch.steps) == 3
    errs = [s.limit_error for s in branch.steps]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    for s in branch.steps:
        assert abs(s.s_fit - branch.r0) < 0.02
        assert s.eps_fit == pytest.approx(s.eps_formula, rel=0.25)


def test_power_branch_approaches_the_normalized_column(running_model, tables_512):
    cfg = _cfg(512, schedule=[40.0, 80.0], max_iter=60)
    branch = continue_branch(running_model, "power", cfg, tables=tables_512)
    assert not branch.truncated
    errs = [s.limit_error for s in branch.steps]
    assert errs[0] > errs[1]
    g_col = tables_512.g_column_at(branch.r0)
    target = g_col / branch.H00
    last = branch.steps[-1].v
    assert np.max(np.abs(last - target)) < 0.1


def test_branch_truncates_on_unreachable_start(running_model, tables_512):
    # an ansatz far outside the Newton basin cannot seed the branch
    sched = exp_lambda_schedule(float(tables_512.h_diag_at(0.5)), 0.3, 1)
    cfg = _cfg(512, schedule=sched, max_iter=12)
    branch = continue_branch(running_model, "exp", cfg, tables=tables_512)
    assert branch.truncated
    assert branch.failure is not None
    assert "param" in branch.failure


def test_branch_serialization_roundtrip(running_model, tables_512):
    sched = exp_lambda_schedule(float(tables_512.h_diag_at(0.5)), 0.03, 1)
    branch = continue_branch(running_model, "exp", _cfg(512, schedule=sched), tables=tables_512)
    payload = branch.as_dict(with_solutions=False)
    assert payload["kind"] == "exp"
    assert payload["grid_N"] == 512
    assert len(payload["steps"]) == 1
    assert "v" not in payload["steps"][0]
    with_v = branch.as_dict(with_solutions=True)
    assert len(with_v["steps"][0]["v"]) == 512
