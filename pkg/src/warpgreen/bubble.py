"""Concentrating limit profile, its periodic projection, parameter matching.

The profile

    U(r) = ln( (4/eps^2) * e^xi / (1 + e^xi)^2 ),    xi = sqrt(2) (r - s) / eps,

solves -U'' = e^U on the whole line, peaks at r = s with height ln(1/eps^2),
and carries total nonlinear mass integral e^U = 2*sqrt(2)/eps. It is a line
profile, not a periodic one; the periodic objects are built from it by the
linear solve PU = L^{-1} e^U with periodic boundary conditions.

Matching rules tie the concentration scale eps to the nonlinearity
parameters: for the power problem eps * p = 2*sqrt(2)*H00 with amplitude
rho = 1/p, and for the exponential problem
lambda = (4/eps^2) * exp(-2*sqrt(2)*H00/eps), where H00 is the regular part
of the kernel on the diagonal at the concentration point. The lambda map is
strictly increasing in eps, so it inverts numerically without trouble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .core import Grid, GridFn
from .operators import OperatorModel, assemble

__all__ = [
    "BubbleParams",
    "ProfileFn",
    "ResolutionError",
    "U_eval",
    "U_deriv",
    "U_deriv2",
    "exp_U",
    "bubble_mass",
    "project",
    "match_eps_to_p",
    "match_lambda_to_eps",
    "eps_from_lambda",
]

SQRT2 = math.sqrt(2.0)

# Minimum number of grid cells across one concentration width eps that the
# projection requires before it trusts grid quadrature of e^U.
MIN_CELLS_PER_EPS = 8.0


class ResolutionError(ValueError):
    """The grid is too coarse to resolve the requested concentration scale."""


@dataclass(frozen=True)
class BubbleParams:
    """Concentration scale and point, optionally tagged with the matched
    nonlinearity parameter (power exponent p or exponential weight lam)."""

    eps: float
    s: float
    p: Optional[float] = None
    lam: Optional[float] = None

    def __post_init__(self):
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"concentration point must lie in (0, 1), got {self.s}")


@dataclass(frozen=True)
class ProfileFn:
    """Grid samples of the profile and of its periodic projection."""

    grid: Grid
    bp: BubbleParams
    U: GridFn
    PU: GridFn


def _xi(bp: BubbleParams, r) -> np.ndarray:
    return SQRT2 * (np.asarray(r, dtype=float) - bp.s) / bp.eps


def U_eval(bp: BubbleParams, r):
    """Profile value, in the overflow-safe log-sum-exp arrangement."""
    xi = _xi(bp, r)
    out = math.log(4.0 / (bp.eps * bp.eps)) + xi - 2.0 * np.logaddexp(0.0, xi)
    if np.ndim(r) == 0:
        return float(out)
    return out


def U_deriv(bp: BubbleParams, r):
    """First derivative sqrt(2)/eps * (1 - 2 sigma(xi))."""
    xi = _xi(bp, r)
    out = (SQRT2 / bp.eps) * (1.0 - 2.0 * expit(xi))
    if np.ndim(r) == 0:
        return float(out)
    return out


def U_deriv2(bp: BubbleParams, r):
    """Second derivative; equals -e^U identically."""
    out = -exp_U(bp, r)
    if np.ndim(r) == 0:
        return float(out)
    return out


def exp_U(bp: BubbleParams, r):
    """e^U evaluated as (4/eps^2) sigma(xi) sigma(-xi), safe for |xi| ~ 1e3."""
    xi = _xi(bp, r)
    out = (4.0 / (bp.eps * bp.eps)) * expit(xi) * expit(-xi)
    if np.ndim(r) == 0:
        return float(out)
    return out


def bubble_mass(bp: BubbleParams) -> float:
    """Integral of e^U over [0, 1], in closed form.

    The substitution u = xi reduces the integrand to the logistic density:
    integral e^U = (2 sqrt(2)/eps) [sigma(xi)] evaluated between the ends.
    Approaches 2 sqrt(2)/eps with an exponentially small endpoint defect.
    """
    hi = expit(SQRT2 * (1.0 - bp.s) / bp.eps)
    lo = expit(SQRT2 * (0.0 - bp.s) / bp.eps)
    return (2.0 * SQRT2 / bp.eps) * (hi - lo)


def project(model: OperatorModel, grid: Grid, bp: BubbleParams) -> ProfileFn:
    """Periodic projection PU: the linear solve L PU = e^U on the grid.

    Refuses when eps spans fewer than MIN_CELLS_PER_EPS cells, since the grid
    then cannot represent the source. Coercivity is certified before solving.
    """
    if bp.eps < MIN_CELLS_PER_EPS * grid.h:
        raise ResolutionError(
            f"eps = {bp.eps:g} needs at least {MIN_CELLS_PER_EPS:g} cells, "
            f"grid spacing is {grid.h:g} (n = {grid.n})"
        )
    opr = assemble(model, grid)
    opr.ensure_coercive()
    u = U_eval(bp, grid.nodes)
    pu = opr.solve(opr.a_nodes * exp_U(bp, grid.nodes))
    return ProfileFn(grid=grid, bp=bp, U=u, PU=pu)


def match_eps_to_p(H00: float, p: float) -> tuple[float, float]:
    """Concentration scale and amplitude for the power problem at exponent p.

    Returns (eps, rho) with eps = 2 sqrt(2) H00 / p and rho = 1/p.
    """
    if not H00 > 0.0:
        raise ValueError(f"H00 must be positive, got {H00}")
    if not p > 1.0:
        raise ValueError(f"power exponent must exceed 1, got {p}")
    return 2.0 * SQRT2 * H00 / p, 1.0 / p


def match_lambda_to_eps(H00: float, eps: float) -> float:
    """Exponential-problem weight matched to a concentration scale."""
    if not H00 > 0.0:
        raise ValueError(f"H00 must be positive, got {H00}")
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    return (4.0 / (eps * eps)) * math.exp(-2.0 * SQRT2 * H00 / eps)


def eps_from_lambda(H00: float, lam: float) -> float:
    """Invert the lambda matching on its increasing branch.

    The map eps -> lambda is strictly increasing for eps < sqrt(2) H00 and
    tends to 0 as eps -> 0, so one bracketed root-find recovers eps.
    """
    if not H00 > 0.0:
        raise ValueError(f"H00 must be positive, got {H00}")
    if not lam > 0.0:
        raise ValueError(f"lambda must be positive, got {lam}")
    hi = SQRT2 * H00
    lam_hi = match_lambda_to_eps(H00, hi)
    if lam >= lam_hi:
        raise ValueError(
            f"lambda = {lam:g} is beyond the increasing branch (max {lam_hi:g})"
        )

    log_lam = math.log(lam)

    def gap(e: float) -> float:
        # log of the matching law written analytically so tiny eps cannot
        # underflow the exponential
        return log_lam - (math.log(4.0) - 2.0 * math.log(e) - 2.0 * SQRT2 * H00 / e)

    lo = hi
    while gap(lo) < 0.0:
        lo *= 0.5
        if lo < 1e-12:
            raise ValueError(f"lambda = {lam:g} too small to invert")
    return float(brentq(gap, lo, hi, xtol=1e-15))
