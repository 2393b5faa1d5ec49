"""Damped Newton continuation for the two concentrating nonlinear problems.

Both problems share the linear part L v = -v'' - n (f'/f) v' + kappa v on the
circle and differ in the nonlinearity:

    power:        L v = v^p,          v > 0
    exponential:  L v = lam * e^v

In the weighted discrete form the residual is F(v) = A v - a N(v) with a =
f^n; the Newton correction solves (A - a diag(N'(v))) dv = -F(v), which keeps
the cyclic tridiagonal structure, so every iteration costs one banded solve.
Steps are damped by residual backtracking.

Branches are continued in the natural parameter: a schedule of increasing p
or decreasing lam, the first step seeded by the projected bubble ansatz at
the located concentration point, later steps seeded by the previous solution
(falling back to a fresh ansatz seed once before giving up). Each accepted
step records concentration diagnostics: the fitted peak location, the
concentration scale recovered from the peak height, the scale implied by
inverting the parameter matching, and the sup-norm distance to the predicted
limit profile (the kernel column at the concentration point, scaled).

The peak-height fit inverts peak = 2 sqrt(2) H00 / eps - 2 ln eps, the
profile height plus the regular-part contribution of the projection; for the
power problem the same relation holds for p * peak since the amplitude is
1/p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .bubble import (
    BubbleParams,
    ResolutionError,
    eps_from_lambda,
    match_eps_to_p,
    match_lambda_to_eps,
    project,
)
from .core import Grid, GridFn
from .greens import GreensTables, greens_matrix
from .locator import ConstantV, locate_critical
from .operators import DiscreteOperator, OperatorModel, assemble, solve_cyclic

__all__ = [
    "SolverConfig",
    "BranchStep",
    "SolutionBranch",
    "NoConvergence",
    "NonPositiveIterate",
    "JacobianSingular",
    "residual_power",
    "residual_exp",
    "jacobian_apply",
    "newton_solve",
    "continue_branch",
    "exp_lambda_schedule",
    "fit_eps_from_peak",
    "pick_anchor",
]

POSITIVITY_FLOOR = 1e-14
MAX_CLIP_FRACTION = 0.01


class NoConvergence(RuntimeError):
    """Newton ran out of iterations or damping without meeting tolerance."""


class NonPositiveIterate(RuntimeError):
    """A power-problem iterate lost positivity on too many nodes."""


class JacobianSingular(RuntimeError):
    """The Newton correction system was numerically singular."""


@dataclass(frozen=True)
class SolverConfig:
    """Newton and continuation parameters.

    newton_tol is the sup-norm residual tolerance; acceptance measures it
    relative to sup|a N(v)| whenever that forcing magnitude exceeds one, so
    strongly concentrated iterates are graded against their own scale.
    schedule is the sequence of continuation parameter values (p for the
    power family, lam for the exponential family); it may be None for plain
    newton_solve use.
    """

    grid_N: int
    newton_tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 30
    schedule: Optional[Sequence[float]] = None

    def __post_init__(self):
        if not self.newton_tol > 0.0:
            raise ValueError(f"newton_tol must be positive, got {self.newton_tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.max_halvings < 0:
            raise ValueError(f"max_halvings must be nonnegative, got {self.max_halvings}")


def _check_problem(problem) -> tuple[str, float]:
    try:
        kind, value = problem
    except (TypeError, ValueError):
        raise ValueError(
            f"problem must be ('power', p) or ('exp', lam), got {problem!r}"
        ) from None
    if kind not in ("power", "exp"):
        raise ValueError(f"unknown problem kind {kind!r}")
    value = float(value)
    if kind == "power" and value <= 1.0:
        raise ValueError(f"power exponent must exceed 1, got {value}")
    if kind == "exp" and value <= 0.0:
        raise ValueError(f"exponential weight must be positive, got {value}")
    return kind, value


def _nonlinearity(kind: str, value: float, v: np.ndarray):
    """Pointwise N(v) and N'(v); power iterates are clipped at the positivity
    floor, and the clip fraction is policed by the caller."""
    if kind == "power":
        vc = np.clip(v, POSITIVITY_FLOOR, None)
        nv = vc ** value
        dnv = value * vc ** (value - 1.0)
    else:
        with np.errstate(over="ignore"):
            ev = np.exp(v)
        nv = value * ev
        dnv = value * ev
    return nv, dnv


def _clip_fraction(v: np.ndarray) -> float:
    return float(np.mean(v < POSITIVITY_FLOOR))


def _residual(opr: DiscreteOperator, v: np.ndarray, kind: str, value: float) -> np.ndarray:
    nv, _ = _nonlinearity(kind, value, v)
    return opr.apply(v) - opr.a_nodes * nv


def residual_power(model: OperatorModel, v: GridFn, p: float) -> GridFn:
    """Weighted residual A v - a v^p; raises if v is non-positive on more
    than the tolerated fraction of nodes."""
    v = np.asarray(v, dtype=float)
    opr = assemble(model, Grid(v.size))
    if _clip_fraction(v) > MAX_CLIP_FRACTION:
        raise NonPositiveIterate(
            f"{100 * _clip_fraction(v):.1f}% of nodes at or below the positivity floor"
        )
    return _residual(opr, v, "power", float(p))


def residual_exp(model: OperatorModel, v: GridFn, lam: float) -> GridFn:
    """Weighted residual A v - a lam e^v."""
    v = np.asarray(v, dtype=float)
    opr = assemble(model, Grid(v.size))
    return _residual(opr, v, "exp", float(lam))


def jacobian_apply(
    opr: DiscreteOperator, v: np.ndarray, problem, w: np.ndarray
) -> np.ndarray:
    """Action of the Newton Jacobian at v on a direction w."""
    kind, value = _check_problem(problem)
    _, dnv = _nonlinearity(kind, value, np.asarray(v, dtype=float))
    w = np.asarray(w, dtype=float)
    return opr.apply(w) - opr.a_nodes * dnv * w


def _sup(x: np.ndarray) -> float:
    x = np.abs(x)
    return float(np.max(x)) if np.all(np.isfinite(x)) else float("inf")


def _accept_tol(
    opr: DiscreteOperator, v: np.ndarray, kind: str, value: float, tol: float
) -> float:
    """Effective residual tolerance at the current iterate.

    The representable-residual floor of the discrete equation grows with the
    size of the balanced terms: for concentrated iterates the forcing a N(v)
    reaches sup ~ 4/eps^2 and no double-precision vector can push the
    sup-norm defect below roughly eps_mach * ||v|| * ||A||. Measuring the
    tolerance relative to sup|a N(v)| whenever that exceeds one keeps the
    acceptance criterion meaningful across scales while reducing to the
    plain absolute test for order-one solutions.
    """
    nv, _ = _nonlinearity(kind, value, v)
    return tol * max(1.0, _sup(opr.a_nodes * nv))


def _stall_floor(opr: DiscreteOperator, v: np.ndarray) -> float:
    """Smallest residual representable for this iterate in double precision.

    Rounding v by one ulp perturbs A v by about eps * |v_i| * (absolute row
    sum), so no float vector near v can push the defect below this level.
    A damped step that cannot decrease the residual any further is accepted
    when it already sits under the floor; stalling above it is a genuine
    convergence failure.
    """
    rowsum = np.abs(opr.diag) + np.abs(opr.off) + np.abs(np.roll(opr.off, 1))
    return float(np.finfo(float).eps * np.max(np.abs(v) * rowsum))


def _newton(
    opr: DiscreteOperator, seed: np.ndarray, kind: str, value: float, cfg: SolverConfig
) -> tuple[np.ndarray, int, float]:
    v = np.asarray(seed, dtype=float).copy()
    if v.shape != (opr.grid.n,):
        raise ValueError(f"seed has shape {v.shape}, expected ({opr.grid.n},)")
    if kind == "power" and _clip_fraction(v) > MAX_CLIP_FRACTION:
        raise NonPositiveIterate("seed violates positivity")

    res = _sup(_residual(opr, v, kind, value))
    for it in range(cfg.max_iter):
        if res < _accept_tol(opr, v, kind, value, cfg.newton_tol):
            return v, it, res
        _, dnv = _nonlinearity(kind, value, v)
        diag_mod = opr.diag - opr.a_nodes * dnv
        f_val = _residual(opr, v, kind, value)
        try:
            dv = solve_cyclic(diag_mod, opr.off, -f_val)
        except np.linalg.LinAlgError as exc:
            raise JacobianSingular(str(exc)) from exc

        step = 1.0
        accepted = False
        for _ in range(cfg.max_halvings + 1):
            trial = v + step * dv
            if kind == "power" and _clip_fraction(trial) > MAX_CLIP_FRACTION:
                step *= 0.5
                continue
            trial_res = _sup(_residual(opr, trial, kind, value))
            # Sufficient decrease scaled by the damping factor: a heavily
            # damped step may legitimately shave off only a sliver, while
            # ulp-level creep at full step should register as a stall.
            if trial_res < res * (1.0 - 1e-4 * step):
                v, res, accepted = trial, trial_res, True
                break
            step *= 0.5
        if not accepted:
            if res < _stall_floor(opr, v):
                return v, it + 1, res
            raise NoConvergence(
                f"damping exhausted at residual {res:.3e} (tol {cfg.newton_tol:g})"
            )

    if res < _accept_tol(opr, v, kind, value, cfg.newton_tol) or res < _stall_floor(opr, v):
        return v, cfg.max_iter, res
    raise NoConvergence(
        f"no convergence in {cfg.max_iter} iterations, residual {res:.3e}"
    )


def newton_solve(
    model: OperatorModel,
    seed: GridFn,
    problem,
    cfg: SolverConfig,
    full_output: bool = False,
):
    """Damped Newton iteration from seed; returns the converged GridFn.

    With full_output=True returns (v, iterations, residual) instead. The
    power problem additionally requires the accepted solution to be strictly
    positive.
    """
    kind, value = _check_problem(problem)
    opr = assemble(model, Grid(cfg.grid_N))
    v, iters, res = _newton(opr, seed, kind, value, cfg)
    if kind == "power" and float(np.min(v)) <= 0.0:
        raise NonPositiveIterate("converged iterate is not strictly positive")
    if full_output:
        return v, iters, res
    return v


def fit_eps_from_peak(H00: float, target: float) -> float:
    """Solve 2 sqrt(2) H00 / e - 2 ln e = target for the concentration scale.

    The left side is strictly decreasing in e, so the root is unique; the
    bracket grows geometrically until it straddles the target.
    """
    if not H00 > 0.0:
        raise ValueError(f"H00 must be positive, got {H00}")
    c = 2.0 * math.sqrt(2.0) * H00

    def gap(e: float) -> float:
        return c / e - 2.0 * math.log(e) - target

    lo, hi = 1e-10, 1.0
    while gap(hi) > 0.0:
        hi *= 10.0
        if hi > 1e6:
            raise ValueError(f"peak target {target:g} out of fit range")
    return float(brentq(gap, lo, hi, xtol=1e-15))


def _peak_location(v: np.ndarray, grid: Grid) -> float:
    """Sub-grid peak estimate: parabola through the maximal node and its
    periodic neighbours."""
    j = int(np.argmax(v))
    left = v[(j - 1) % grid.n]
    mid = v[j]
    right = v[(j + 1) % grid.n]
    denom = left - 2.0 * mid + right
    shift = 0.0 if denom == 0.0 else 0.5 * (left - right) / denom
    return float((grid.nodes[j] + shift * grid.h) % 1.0)


@dataclass(frozen=True)
class BranchStep:
    """One accepted continuation step with concentration diagnostics.

    eps_formula inverts the parameter matching at this step's parameter;
    eps_fit recovers the scale from the measured peak height (it carries an
    O(eps) bias from the regular-part curvature, so it serves as a cross
    check rather than the headline scale). limit_error is the sup distance
    to the predicted limit profile, using eps_formula where a scale is
    needed; limit_error_alt repeats it with eps_fit (exponential family
    only, None for power).
    """

    param: float
    v: np.ndarray
    iterations: int
    residual: float
    s_fit: float
    eps_formula: float
    eps_fit: float
    limit_error: float
    limit_error_alt: Optional[float]

    def as_dict(self, with_solution: bool = False) -> dict:
        out = {
            "param": self.param,
            "iterations": self.iterations,
            "residual": self.residual,
            "s_fit": self.s_fit,
            "eps_formula": self.eps_formula,
            "eps_fit": self.eps_fit,
            "limit_error": self.limit_error,
            "limit_error_alt": self.limit_error_alt,
        }
        if with_solution:
            out["v"] = self.v.tolist()
        return out


@dataclass
class SolutionBranch:
    """A continuation run: accepted steps plus failure bookkeeping."""

    kind: str
    r0: float
    H00: float
    grid_N: int
    lambda_min: float
    steps: list = field(default_factory=list)
    truncated: bool = False
    failure: Optional[str] = None

    def params(self) -> list:
        return [s.param for s in self.steps]

    def as_dict(self, with_solutions: bool = True) -> dict:
        return {
            "kind": self.kind,
            "r0": self.r0,
            "H00": self.H00,
            "grid_N": self.grid_N,
            "lambda_min": self.lambda_min,
            "truncated": self.truncated,
            "failure": self.failure,
            "steps": [s.as_dict(with_solution=with_solutions) for s in self.steps],
        }


def exp_lambda_schedule(H00: float, eps0: float, steps: int, ratio: float = 0.5) -> list:
    """Geometric lambda schedule started from a concentration scale eps0."""
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    lam0 = match_lambda_to_eps(H00, eps0)
    return [lam0 * ratio ** k for k in range(steps)]


def pick_anchor(tables: GreensTables, nd_threshold: float = 1e-3) -> float:
    """The nondegenerate critical point farthest from the grid seam.

    Staying clear of r = 0 keeps the bubble away from the wrap row of the
    tables, where interpolation is weakest.
    """
    reports = locate_critical(tables, nd_threshold=nd_threshold)
    good = [rep for rep in reports if rep.nondegenerate]
    if not good:
        raise ConstantV(
            "no nondegenerate critical point available to anchor the branch"
        )
    return max(good, key=lambda rep: min(rep.r0, 1.0 - rep.r0)).r0


# Failures that make one continuation step unusable without poisoning the
# branch; the step machinery may still rescue them by sub-stepping.
_STEP_FAILURES = (
    NoConvergence,
    NonPositiveIterate,
    JacobianSingular,
    ResolutionError,
    np.linalg.LinAlgError,
)

MAX_SUBSTEP_DEPTH = 5


def _branch_peak_guard(
    family: str, param: float, H00: float, v: np.ndarray, spread_pred: float
) -> None:
    """Reject converged iterates that fell onto a different solution branch.

    Both nonlinear problems admit other solutions (low-amplitude ones, and
    for kappa constant even exact constants); Newton can converge to one of
    those with a perfectly small residual when the seed leaves the basin of
    the concentrated branch. The tracked branch is recognizable: its peak
    sits near a predictable height (one for the power family,
    2 sqrt(2) H00 / eps for the exponential family) and, in the power case,
    its profile spread is comparable to the spread of the limit profile,
    which a constant solution entirely lacks.
    """
    peak = float(np.max(v))
    if family == "power":
        predicted = 1.0
        spread = float(np.max(v) - np.min(v))
        if spread < 0.25 * spread_pred:
            raise NoConvergence(
                f"iterate left the concentrated branch at param {param:g}: "
                f"profile spread {spread:.4g}, expected near {spread_pred:.4g}"
            )
    else:
        predicted = 2.0 * math.sqrt(2.0) * H00 / eps_from_lambda(H00, param)
    if not 0.5 * predicted < peak < 2.0 * predicted:
        raise NoConvergence(
            f"iterate left the concentrated branch at param {param:g}: "
            f"peak {peak:.4g}, expected near {predicted:.4g}"
        )


def _ansatz_seed(
    model: OperatorModel, grid: Grid, kind: str, value: float, r0: float, H00: float
) -> np.ndarray:
    if kind == "power":
        eps, rho = match_eps_to_p(H00, value)
        bp = BubbleParams(eps=eps, s=r0, p=value)
        return rho * project(model, grid, bp).PU
    eps = eps_from_lambda(H00, value)
    bp = BubbleParams(eps=eps, s=r0, lam=value)
    return project(model, grid, bp).PU


def continue_branch(
    model: OperatorModel,
    family: str,
    cfg: SolverConfig,
    tables: Optional[GreensTables] = None,
    r0: Optional[float] = None,
    nd_threshold: float = 1e-3,
) -> SolutionBranch:
    """Run the continuation schedule and collect per-step diagnostics.

    family is "power" or "exp". The schedule must be monotone in the
    direction of concentration (p increasing, lam decreasing). The branch is
    truncated, not discarded, at the first failing step.
    """
    if family not in ("power", "exp"):
        raise ValueError(f"family must be 'power' or 'exp', got {family!r}")
    if not cfg.schedule:
        raise ValueError("continuation requires a nonempty schedule")
    schedule = [float(x) for x in cfg.schedule]
    diffs = np.diff(schedule)
    if family == "power" and not np.all(diffs > 0.0):
        raise ValueError("power schedule must be strictly increasing")
    if family == "exp" and not np.all(diffs < 0.0):
        raise ValueError("exponential schedule must be strictly decreasing")

    grid = Grid(cfg.grid_N)
    if tables is None:
        tables = greens_matrix(model, grid)
    if tables.grid.n != grid.n:
        raise ValueError(
            f"tables were built at N={tables.grid.n}, config says N={grid.n}"
        )
    if r0 is None:
        r0 = pick_anchor(tables, nd_threshold)
    r0 = float(r0)
    H00 = float(tables.h_diag_at(r0))
    g_col = tables.g_column_at(r0)
    spread_pred = float(np.max(g_col) - np.min(g_col)) / H00

    branch = SolutionBranch(
        kind=family,
        r0=r0,
        H00=H00,
        grid_N=grid.n,
        lambda_min=tables.lambda_min,
    )

    def advance(prev_param, param, seed, depth=0):
        """Solve at param from seed, bisecting the parameter gap on failure.

        Bisection is geometric (parameters are positive for both families)
        and bounded in depth; every intermediate solution must pass the
        branch guard so a silent fall onto another solution branch is
        treated as a failed step.
        """
        try:
            v, iters, res = newton_solve(model, seed, (family, param), cfg,
                                          full_output=True)
            _branch_peak_guard(family, param, H00, v, spread_pred)
            return v, iters, res
        except _STEP_FAILURES:
            if depth >= MAX_SUBSTEP_DEPTH or prev_param is None:
                raise
            mid = math.sqrt(prev_param * param)
            v_mid, _, _ = advance(prev_param, mid, seed, depth + 1)
            return advance(mid, param, v_mid, depth + 1)

    prev: Optional[np.ndarray] = None
    prev_param: Optional[float] = None
    for param in schedule:
        try:
            if prev is None:
                seed = _ansatz_seed(model, grid, family, param, r0, H00)
                solved = advance(None, param, seed)
            else:
                solved = advance(prev_param, param, prev)
        except _STEP_FAILURES:
            try:
                seed = _ansatz_seed(model, grid, family, param, r0, H00)
                solved = advance(None, param, seed)
            except _STEP_FAILURES as exc:
                branch.truncated = True
                branch.failure = f"{type(exc).__name__} at param {param:g}: {exc}"
                break

        v, iters, res = solved
        peak = float(np.max(v))
        if family == "power":
            eps_formula, rho = match_eps_to_p(H00, param)
            eps_fit = fit_eps_from_peak(H00, peak / rho)
            limit_error = _sup(v - g_col / H00)
            limit_alt = None
        else:
            eps_formula = eps_from_lambda(H00, param)
            eps_fit = fit_eps_from_peak(H00, peak)
            limit_error = _sup(eps_formula * v - 2.0 * math.sqrt(2.0) * g_col)
            limit_alt = _sup(eps_fit * v - 2.0 * math.sqrt(2.0) * g_col)

        branch.steps.append(
            BranchStep(
                param=param,
                v=v,
                iterations=iters,
                residual=res,
                s_fit=_peak_location(v, grid),
                eps_formula=eps_formula,
                eps_fit=eps_fit,
                limit_error=limit_error,
                limit_error_alt=limit_alt,
            )
        )
        prev, prev_param = v, param

    return branch
