"""Critical points of the concentration curve and genericity experiments.

The scalar curve of interest is V(r) = H(r, r) / a(r) with a = f^n. Its
derivative satisfies the exact relation

    V'(r) = 2 (d_r H(r, r) - 1/2) / a(r),

so critical points of V are exactly the roots of B(r) = d_r H(r, r) - 1/2,
and root-finding on B avoids differentiating the quotient by a. A critical
point is nondegenerate when the diagonal second form d_rr H + d_rs H is
bounded away from zero there; V''(r0) = 2 * second_form / a(r0) at roots.

Roots are reported on the half-open circle [0, 1): a symmetric model can pin
a critical point exactly on the seam r = 0, and dropping it would lose an
extremum of V.

The kappa-direction sensitivity of the kernel column H(., rbar) is computed
as a central finite difference of point-load solves; the singular part does
not depend on kappa, so differencing G columns gives the H derivative
directly.

genericity_sweep draws random trigonometric perturbations scaled into a
prescribed ball in the C^2-type norm (sup of |value| + |first| + |second|),
rebuilds the tables, and records whether every critical point found is
nondegenerate. Trials that break positivity of f or coercivity are marked
inadmissible and excluded from the summary fraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import Grid, GridFn, PeriodicFn, fourier_fn, min_value, p_norm
from .greens import GreensTables, greens_matrix, point_source_column
from .operators import CoercivityFailure, OperatorModel, assemble, coercivity_check

__all__ = [
    "ConstantV",
    "CriticalPointReport",
    "GenericitySample",
    "V_eval",
    "locate_critical",
    "frechet_dH_kappa",
    "frechet_residual",
    "genericity_sweep",
    "sweep_fraction",
]

PERTURB_MODES = 6


class ConstantV(RuntimeError):
    """The concentration curve is flat within tolerance: no isolated critical
    points exist (translation-invariant or otherwise degenerate model)."""


@dataclass(frozen=True)
class CriticalPointReport:
    """One located critical point of V with its classification diagnostics.

    tol_used bounds |d_r H - 1/2| at acceptance time; nd_threshold is the
    cutoff on |second_form| deciding nondegeneracy. Both are recorded so the
    classification is auditable.
    """

    r0: float
    V_value: float
    Hr_at_diag: float
    second_form: float
    nondegenerate: bool
    tol_used: float
    nd_threshold: float
    grid_N: int

    def as_dict(self) -> dict:
        return {
            "r0": self.r0,
            "V_value": self.V_value,
            "Hr_at_diag": self.Hr_at_diag,
            "second_form": self.second_form,
            "nondegenerate": self.nondegenerate,
            "tol_used": self.tol_used,
            "nd_threshold": self.nd_threshold,
            "grid_N": self.grid_N,
        }


def V_eval(t: GreensTables, r) -> float:
    """The concentration curve H(r, r)/a(r), interpolated off-grid."""
    out = t.v_at(r)
    if np.ndim(r) == 0:
        return float(out)
    return out


def default_tol(grid: Grid) -> float:
    return max(10.0 * grid.h * grid.h, 1e-6)


def locate_critical(
    t: GreensTables,
    tol: Optional[float] = None,
    nd_threshold: float = 1e-3,
) -> list[CriticalPointReport]:
    """All roots of B(r) = d_r H(r, r) - 1/2 on the circle, classified.

    Node values of B bracket sign changes; each bracket is refined on the
    interpolated diagonal sequence by a bisection/secant hybrid. Raises
    ConstantV when max |B| over the nodes is below tol, i.e. when V is flat
    to the resolution of the tables.
    """
    if tol is None:
        tol = default_tol(t.grid)
    if not tol > 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")

    grid = t.grid
    n = grid.n
    big_v = t.Hr_diag - 0.5
    if float(np.max(np.abs(big_v))) < tol:
        raise ConstantV(
            f"diagonal derivative is 1/2 within {tol:g} everywhere; "
            "the concentration curve is constant at this resolution"
        )

    def b_fn(r):
        return float(t.hr_diag_at(r) - 0.5)

    sign = np.where(big_v >= 0.0, 1.0, -1.0)
    roots = []
    for i in range(n):
        j = (i + 1) % n
        if sign[i] * sign[j] > 0.0:
            continue
        lo = grid.nodes[i]
        hi = lo + grid.h
        if b_fn(lo) == 0.0:
            roots.append(lo % 1.0)
            continue
        if b_fn(lo) * b_fn(hi) > 0.0:
            continue
        root = brentq(b_fn, lo, hi, xtol=1e-13)
        roots.append(root % 1.0)

    # A root landing exactly on a node can be reported by both adjacent
    # brackets; merge anything closer than a quarter cell on the circle.
    deduped: list[float] = []
    for r in sorted(roots):
        if any(min(abs(r - q), 1.0 - abs(r - q)) < 0.25 * grid.h for q in deduped):
            continue
        deduped.append(r)

    reports = []
    for r0 in deduped:
        second = float(t.second_form_at(r0))
        reports.append(
            CriticalPointReport(
                r0=float(r0),
                V_value=float(t.v_at(r0)),
                Hr_at_diag=float(t.hr_diag_at(r0)),
                second_form=second,
                nondegenerate=bool(abs(second) > nd_threshold),
                tol_used=float(tol),
                nd_threshold=float(nd_threshold),
                grid_N=n,
            )
        )
    return reports


def frechet_dH_kappa(
    model: OperatorModel,
    grid: Grid,
    rbar: float,
    theta: PeriodicFn,
    delta: float = 1e-5,
) -> GridFn:
    """Directional derivative of H(., rbar) in the potential, direction theta.

    Central difference of the two point-load columns for kappa +- delta*theta.
    The singular part has no kappa dependence, so the G-column difference is
    already the H derivative. The result z solves, up to O(delta^2) and the
    grid floor, the linear problem L z = -G(., rbar) * theta with periodic
    boundary conditions.
    """
    if not 0.0 < rbar < 1.0:
        raise ValueError(f"rbar must lie in (0, 1), got {rbar}")
    if not delta > 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    plus = OperatorModel(model.f, model.kappa + delta * theta, model.n)
    minus = OperatorModel(model.f, model.kappa + (-delta) * theta, model.n)
    opr_plus = assemble(plus, grid)
    opr_minus = assemble(minus, grid)
    opr_plus.ensure_coercive()
    opr_minus.ensure_coercive()
    col_plus = point_source_column(opr_plus, rbar)
    col_minus = point_source_column(opr_minus, rbar)
    return (col_plus - col_minus) / (2.0 * delta)


def frechet_residual(
    model: OperatorModel,
    grid: Grid,
    rbar: float,
    theta: PeriodicFn,
    delta: float = 1e-5,
) -> float:
    """Sup-norm defect of the derivative column in its defining linear problem.

    Measures ||L z + G(., rbar) * theta||_inf with the unperturbed operator,
    by applying the weighted matrix and unweighting: expected O(delta^2) plus
    the solve floor divided by delta.
    """
    z = frechet_dH_kappa(model, grid, rbar, theta, delta)
    opr = assemble(model, grid)
    g_col = point_source_column(opr, rbar)
    lhs = opr.apply(z) / opr.a_nodes
    return float(np.max(np.abs(lhs + theta(grid.nodes) * g_col)))


@dataclass(frozen=True)
class GenericitySample:
    """Outcome of one perturbation trial.

    trial is the per-trial seed component; fn_label identifies the perturbed
    function; admissible records whether the perturbed model stayed inside
    the positive/coercive class. constant_v marks trials whose curve came out
    flat (counted as degenerate).
    """

    trial: int
    perturbed: str
    fn_label: str
    norm_drawn: float
    admissible: bool
    constant_v: bool
    reports: tuple
    all_nondegenerate: bool
    min_second_form: float

    def as_dict(self) -> dict:
        return {
            "trial": self.trial,
            "perturbed": self.perturbed,
            "fn_label": self.fn_label,
            "norm_drawn": self.norm_drawn,
            "admissible": self.admissible,
            "constant_v": self.constant_v,
            "n_critical": len(self.reports),
            "all_nondegenerate": self.all_nondegenerate,
            "min_second_form": self.min_second_form,
        }


def random_perturbation(rng: np.random.Generator, rho: float) -> tuple[PeriodicFn, float]:
    """Truncated Fourier draw rescaled to a norm uniform in (0, rho].

    Coefficients are uniform in (-1, 1) over PERTURB_MODES harmonics plus the
    constant; the norm used for the rescaling is the scanned sup of
    |value| + |first derivative| + |second derivative|.
    """
    coeffs = rng.uniform(-1.0, 1.0, size=2 * PERTURB_MODES + 1)
    raw = fourier_fn(coeffs)
    target = rho * (1.0 - rng.random())  # in (0, rho]
    base_norm = p_norm(raw)
    if base_norm == 0.0:
        return fourier_fn([target]), target
    return (target / base_norm) * raw, target


def genericity_sweep(
    base_model: OperatorModel,
    perturb: str,
    rho: float,
    trials: int,
    seed: int,
    grid: Optional[Grid] = None,
    tol: Optional[float] = None,
    nd_threshold: float = 1e-3,
) -> list[GenericitySample]:
    """Random-perturbation study of nondegeneracy around a base model.

    perturb selects which coefficient is perturbed ("f" or "kappa"). Each
    trial draws an independent perturbation inside the rho-ball, rebuilds the
    kernel tables on the given grid, and classifies every critical point
    found. Trials are seeded as (seed, trial) so results are independent of
    execution order.
    """
    if perturb not in ("f", "kappa"):
        raise ValueError(f"perturb must be 'f' or 'kappa', got {perturb!r}")
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    if trials < 0:
        raise ValueError(f"trials must be nonnegative, got {trials}")
    if grid is None:
        grid = Grid(256)

    samples = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        theta, drawn = random_perturbation(rng, rho)

        admissible = True
        constant_v = False
        reports: tuple = ()
        all_nd = False
        min_second = float("inf")
        label = theta.label

        try:
            if perturb == "f":
                new_f = base_model.f + theta
                if min_value(new_f) <= 0.0:
                    raise ValueError("perturbed warping lost positivity")
                model = OperatorModel(new_f, base_model.kappa, base_model.n)
            else:
                model = OperatorModel(base_model.f, base_model.kappa + theta, base_model.n)
            ok, _ = coercivity_check(model, grid)
            if not ok:
                raise CoercivityFailure("perturbed potential lost coercivity")
        except (ValueError, CoercivityFailure):
            admissible = False
            model = None

        if admissible:
            tables = greens_matrix(model, grid)
            try:
                found = locate_critical(tables, tol=tol, nd_threshold=nd_threshold)
                reports = tuple(found)
                if reports:
                    all_nd = all(rep.nondegenerate for rep in reports)
                    min_second = min(abs(rep.second_form) for rep in reports)
            except ConstantV:
                constant_v = True

        samples.append(
            GenericitySample(
                trial=trial,
                perturbed=perturb,
                fn_label=label,
                norm_drawn=float(drawn),
                admissible=admissible,
                constant_v=constant_v,
                reports=reports,
                all_nondegenerate=bool(all_nd),
                min_second_form=float(min_second),
            )
        )
    return samples


def sweep_fraction(samples: Sequence[GenericitySample]) -> float:
    """Fraction of admissible trials whose critical points are all
    nondegenerate; NaN when no trial was admissible."""
    admissible = [s for s in samples if s.admissible]
    if not admissible:
        return float("nan")
    good = sum(1 for s in admissible if s.all_nondegenerate)
    return good / len(admissible)
