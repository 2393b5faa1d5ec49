"""Periodic grids, smooth 1-periodic function families, quadrature, differencing.

Everything downstream lives on the unit circle: functions are 1-periodic on
[0, 1], grids are uniform with modular index arithmetic, and quadrature of
grid data is the trapezoid rule, which coincides with the rectangle rule on
periodic samples and is spectrally accurate for smooth integrands.

Segment integrals over [s, r] are always evaluated on the continuous
integrand (adaptive or fixed-order Gauss panels), never on grid samples, so
kernels built from them do not inherit grid error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "PeriodicFn",
    "Grid",
    "GridFn",
    "constant_fn",
    "fourier_fn",
    "exp_trig_fn",
    "sampled_fn",
    "parse_fn_spec",
    "p_norm",
    "min_value",
    "quad_periodic",
    "quad_segment",
    "gauss_segment",
    "cumulative_inverse_table",
    "diff_periodic",
]

TWO_PI = 2.0 * math.pi

# Samples on [0, 1) used when a property of a continuous function (sup norm,
# positivity) has to be certified by scanning.
DEFAULT_SCAN = 4096


def wrap_unit(r):
    """Map coordinates to the fundamental domain [0, 1)."""
    return np.mod(np.asarray(r, dtype=float), 1.0)


@dataclass(frozen=True)
class PeriodicFn:
    """A twice differentiable 1-periodic scalar function.

    value, deriv and deriv2 are vectorized callables; evaluation always goes
    through the wrapped coordinate so ``fn(r)`` and ``fn(r + 1)`` agree to
    machine precision regardless of how the callables were written.
    """

    value: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    deriv2: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, r):
        return self.value(wrap_unit(r))

    def d1(self, r):
        return self.deriv(wrap_unit(r))

    def d2(self, r):
        return self.deriv2(wrap_unit(r))

    def __add__(self, other):
        if not isinstance(other, PeriodicFn):
            return NotImplemented
        return PeriodicFn(
            value=lambda r: self.value(r) + other.value(r),
            deriv=lambda r: self.deriv(r) + other.deriv(r),
            deriv2=lambda r: self.deriv2(r) + other.deriv2(r),
            label=f"({self.label})+({other.label})",
        )

    def __mul__(self, scalar):
        if not isinstance(scalar, (int, float)):
            return NotImplemented
        c = float(scalar)
        return PeriodicFn(
            value=lambda r: c * self.value(r),
            deriv=lambda r: c * self.deriv(r),
            deriv2=lambda r: c * self.deriv2(r),
            label=f"{c}*({self.label})",
        )

    __rmul__ = __mul__


def constant_fn(c: float) -> PeriodicFn:
    c = float(c)
    return PeriodicFn(
        value=lambda r: np.full_like(np.asarray(r, dtype=float), c),
        deriv=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        deriv2=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        label=f"const:{c:g}",
    )


def fourier_fn(coeffs: Sequence[float]) -> PeriodicFn:
    """Truncated Fourier series a0 + sum_k (a_k cos 2 pi k r + b_k sin 2 pi k r).

    coeffs is the flat list (a0, a1, b1, a2, b2, ...); a trailing cosine
    coefficient without its sine partner is allowed and treated as b_k = 0.
    """
    coeffs = [float(c) for c in coeffs]
    if not coeffs:
        raise ValueError("fourier_fn needs at least the constant coefficient")
    a0 = coeffs[0]
    rest = coeffs[1:]
    if len(rest) % 2:
        rest = rest + [0.0]
    ak = np.asarray(rest[0::2], dtype=float)
    bk = np.asarray(rest[1::2], dtype=float)
    k = np.arange(1, ak.size + 1, dtype=float)
    w = TWO_PI * k

    def value(r):
        r = np.asarray(r, dtype=float)
        ang = np.multiply.outer(r, w)
        return a0 + np.cos(ang) @ ak + np.sin(ang) @ bk

    def deriv(r):
        r = np.asarray(r, dtype=float)
        ang = np.multiply.outer(r, w)
        return -np.sin(ang) @ (w * ak) + np.cos(ang) @ (w * bk)

    def deriv2(r):
        r = np.asarray(r, dtype=float)
        ang = np.multiply.outer(r, w)
        return -np.cos(ang) @ (w * w * ak) - np.sin(ang) @ (w * w * bk)

    label = "trig:" + ",".join(f"{c:g}" for c in coeffs)
    return PeriodicFn(value=value, deriv=deriv, deriv2=deriv2, label=label)


def exp_trig_fn(a: float, b: float) -> PeriodicFn:
    """The positive analytic family a * exp(b * cos(2 pi r))."""
    a = float(a)
    b = float(b)

    def value(r):
        return a * np.exp(b * np.cos(TWO_PI * np.asarray(r, dtype=float)))

    def deriv(r):
        r = np.asarray(r, dtype=float)
        return value(r) * (-TWO_PI * b * np.sin(TWO_PI * r))

    def deriv2(r):
        r = np.asarray(r, dtype=float)
        g1 = -TWO_PI * b * np.sin(TWO_PI * r)
        g2 = -(TWO_PI ** 2) * b * np.cos(TWO_PI * r)
        return value(r) * (g1 * g1 + g2)

    return PeriodicFn(value=value, deriv=deriv, deriv2=deriv2, label=f"exptrig:{a:g},{b:g}")


def sampled_fn(values: Sequence[float]) -> PeriodicFn:
    """Periodic interpolant of uniform samples on [0, 1).

    Derivatives come from the periodic cubic spline, so they carry the usual
    finite-difference accuracy of the sample spacing rather than being exact.
    """
    from scipy.interpolate import CubicSpline

    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 8:
        raise ValueError("sampled_fn expects at least 8 uniform samples")
    x = np.linspace(0.0, 1.0, v.size + 1)
    spl = CubicSpline(x, np.append(v, v[0]), bc_type="periodic")
    d1 = spl.derivative(1)
    d2 = spl.derivative(2)
    return PeriodicFn(value=spl, deriv=d1, deriv2=d2, label=f"sampled:{v.size}")


def parse_fn_spec(spec: str) -> PeriodicFn:
    """Build a PeriodicFn from a family spec string.

    Recognized families:
      const:c            constant c
      trig:a0,a1,b1,...  truncated Fourier series
      exptrig:a,b        a * exp(b * cos(2 pi r))
    """
    if not isinstance(spec, str) or ":" not in spec:
        raise ValueError(f"malformed function spec {spec!r}, expected family:args")
    family, _, argstr = spec.partition(":")
    family = family.strip().lower()
    try:
        args = [float(tok) for tok in argstr.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ValueError(f"non-numeric coefficient in function spec {spec!r}") from exc
    if family == "const":
        if len(args) != 1:
            raise ValueError(f"const spec takes one value, got {spec!r}")
        return constant_fn(args[0])
    if family == "trig":
        if not args:
            raise ValueError(f"trig spec needs coefficients, got {spec!r}")
        return fourier_fn(args)
    if family == "exptrig":
        if len(args) != 2:
            raise ValueError(f"exptrig spec takes two values, got {spec!r}")
        return exp_trig_fn(args[0], args[1])
    raise ValueError(f"unknown function family {family!r} in spec {spec!r}")


def p_norm(fn: PeriodicFn, scan_n: int = DEFAULT_SCAN) -> float:
    """sup over [0, 1) of |fn| + |fn'| + |fn''|, certified on a fine scan."""
    r = np.arange(scan_n) / scan_n
    return float(np.max(np.abs(fn(r)) + np.abs(fn.d1(r)) + np.abs(fn.d2(r))))


def min_value(fn: PeriodicFn, scan_n: int = DEFAULT_SCAN) -> float:
    r = np.arange(scan_n) / scan_n
    return float(np.min(fn(r)))


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid r_i = i/n on [0, 1); node n is node 0 again."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 16:
            raise ValueError(f"grid needs at least 16 points, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def index_of(self, r: float) -> int:
        """Nearest node index, modular."""
        return int(round(float(r) * self.n)) % self.n


# Grid functions are plain float arrays whose length matches the grid.
GridFn = np.ndarray


def grid_fn(values, grid: Grid) -> GridFn:
    v = np.asarray(values, dtype=float)
    if v.shape != (grid.n,):
        raise ValueError(f"grid function has shape {v.shape}, expected ({grid.n},)")
    if not np.all(np.isfinite(v)):
        raise ValueError("grid function contains non-finite samples")
    return v


def quad_periodic(v: GridFn) -> float:
    """Integral over one period of uniform periodic samples.

    Trapezoid and rectangle rules coincide here, so this is just the mean.
    """
    v = np.asarray(v, dtype=float)
    return float(v.mean())


def quad_segment(integrand: Callable[[float], float], s: float, r: float) -> float:
    """Signed integral of a continuous integrand from s to r (r < s allowed)."""
    s = float(s)
    r = float(r)
    if s == r:
        return 0.0
    val, _ = integrate.quad(integrand, s, r, epsabs=1e-13, epsrel=1e-13, limit=200)
    return float(val)


_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(12)


def gauss_segment(fn: Callable, a: float, b: float) -> float:
    """Fixed 12-point Gauss panel on [a, b]; signed, exact for smooth fn at
    panel widths of one grid cell."""
    if a == b:
        return 0.0
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return float(half * np.dot(_GAUSS_W, np.asarray(fn(mid + half * _GAUSS_X), dtype=float)))


def cumulative_inverse_table(weight: Callable, grid: Grid):
    """Antiderivative W(r_i) = int_0^{r_i} dt / weight(t) at the nodes.

    Returns (W, W1) with W[0] = 0 and W1 = W(1), computed by one Gauss panel
    per cell on the continuous integrand; for the smooth positive weights used
    here the panel error is far below solver tolerance.
    """
    nodes = grid.nodes
    h = grid.h
    # All cell panels evaluated in one shot: cell i maps the reference nodes
    # to r_i + h*(x+1)/2.
    pts = nodes[:, None] + 0.5 * h * (_GAUSS_X[None, :] + 1.0)
    vals = 1.0 / np.asarray(weight(pts), dtype=float)
    cell = 0.5 * h * (vals @ _GAUSS_W)
    w = np.concatenate(([0.0], np.cumsum(cell)))
    return w[:-1].copy(), float(w[-1])


def diff_periodic(v: GridFn, order: int = 1) -> GridFn:
    """Second-order central differences with periodic wrap.

    order 1 returns the first derivative samples, order 2 the second.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    h = 1.0 / n
    if order == 1:
        return (np.roll(v, -1) - np.roll(v, 1)) / (2.0 * h)
    if order == 2:
        return (np.roll(v, -1) - 2.0 * v + np.roll(v, 1)) / (h * h)
    raise ValueError(f"order must be 1 or 2, got {order}")
