"""Function families, grids, quadrature, and periodic differencing."""

import math

import numpy as np
import pytest

from warpgreen import Grid, constant_fn, fourier_fn, min_value, p_norm, parse_fn_spec
from warpgreen.core import (
    cumulative_inverse_table,
    diff_periodic,
    exp_trig_fn,
    gauss_segment,
    grid_fn,
    quad_periodic,
    quad_segment,
    sampled_fn,
    wrap_unit,
)

TWO_PI = 2.0 * math.pi


def test_wrap_unit_folds_into_fundamental_domain():
    r = np.array([-0.25, 0.0, 0.4, 1.0, 1.75, -3.1])
    w = wrap_unit(r)
    assert np.all((0.0 <= w) & (w < 1.0))
    np.testing.assert_allclose(w, [0.75, 0.0, 0.4, 0.0, 0.75, 0.9], atol=1e-12)


@pytest.mark.parametrize("shift", [1.0, -1.0, 3.0])
def test_periodic_fn_evaluation_is_periodic(shift):
    fn = parse_fn_spec("trig:2,1,0.5")
    r = np.linspace(0.0, 1.0, 33)
    np.testing.assert_allclose(fn(r + shift), fn(r), rtol=0, atol=1e-14)
    np.testing.assert_allclose(fn.d1(r + shift), fn.d1(r), rtol=0, atol=1e-13)
    np.testing.assert_allclose(fn.d2(r + shift), fn.d2(r), rtol=0, atol=1e-12)


def test_constant_fn_values_and_derivatives():
    fn = constant_fn(3.5)
    r = np.linspace(0.0, 1.0, 17)
    np.testing.assert_array_equal(fn(r), np.full(17, 3.5))
    np.testing.assert_array_equal(fn.d1(r), np.zeros(17))
    np.testing.assert_array_equal(fn.d2(r), np.zeros(17))


def test_fourier_fn_matches_manual_series():
    # 1 + 0.5 cos(2 pi r) - 0.25 sin(2 pi r) + 0.1 cos(4 pi r)
    fn = fourier_fn([1.0, 0.5, -0.25, 0.1])
    r = np.linspace(0.0, 1.0, 41)
    expect = (
        1.0
        + 0.5 * np.cos(TWO_PI * r)
        - 0.25 * np.sin(TWO_PI * r)
        + 0.1 * np.cos(2 * TWO_PI * r)
    )
    np.testing.assert_allclose(fn(r), expect, atol=1e-14)
    d_expect = (
        -0.5 * TWO_PI * np.sin(TWO_PI * r)
        - 0.25 * TWO_PI * np.cos(TWO_PI * r)
        - 0.1 * 2 * TWO_PI * np.sin(2 * TWO_PI * r)
    )
    np.testing.assert_allclose(fn.d1(r), d_expect, atol=1e-12)
    d2_expect = (
        -0.5 * TWO_PI ** 2 * np.cos(TWO_PI * r)
        + 0.25 * TWO_PI ** 2 * np.sin(TWO_PI * r)
        - 0.1 * (2 * TWO_PI) ** 2 * np.cos(2 * TWO_PI * r)
    )
    np.testing.assert_allclose(fn.d2(r), d2_expect, atol=1e-11)


def test_fourier_fn_pads_missing_sine_coefficient():
    # coefficient list ending on a cosine term is padded with b_k = 0
    fn = fourier_fn([2.0, 1.0, 0.0, 0.3])
    r = np.linspace(0.0, 1.0, 29)
    expect = 2.0 + np.cos(TWO_PI * r) + 0.3 * np.cos(2 * TWO_PI * r)
    np.testing.assert_allclose(fn(r), expect, atol=1e-14)


def test_fourier_fn_rejects_empty():
    with pytest.raises(ValueError):
        fourier_fn([])


def test_exp_trig_fn_derivatives_match_finite_differences():
    fn = exp_trig_fn(1.5, 0.7)
    r = np.linspace(0.05, 0.95, 19)
    d = 1e-6
    fd1 = (fn(r + d) - fn(r - d)) / (2 * d)
    fd2 = (fn(r + d) - 2 * fn(r) + fn(r - d)) / (d * d)
    np.testing.assert_allclose(fn.d1(r), fd1, rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(fn.d2(r), fd2, rtol=1e-3)


def test_sampled_fn_reproduces_smooth_samples():
    n = 128
    x = np.arange(n) / n
    vals = 2.0 + np.cos(TWO_PI * x)
    fn = sampled_fn(vals)
    fine = np.linspace(0.0, 1.0, 257)
    np.testing.assert_allclose(fn(fine), 2.0 + np.cos(TWO_PI * fine), atol=1e-6)


def test_sampled_fn_needs_enough_samples():
    with pytest.raises(ValueError):
        sampled_fn([1.0, 2.0, 3.0])


def test_periodic_fn_addition_and_scaling():
    f = parse_fn_spec("trig:2,1")
    g = parse_fn_spec("const:0.5")
    r = np.linspace(0.0, 1.0, 23)
    np.testing.assert_allclose((f + g)(r), f(r) + 0.5, atol=1e-14)
    np.testing.assert_allclose((3.0 * f).d2(r), 3.0 * f.d2(r), atol=1e-12)
    np.testing.assert_allclose((f * 2).d1(r), 2.0 * f.d1(r), atol=1e-12)


@pytest.mark.parametrize(
    "spec,at,value",
    [
        ("const:2.5", 0.3, 2.5),
        ("trig:2,1", 0.0, 3.0),
        ("trig:2,1", 0.5, 1.0),
        ("trig:1,0,0,0.5", 0.25, 0.5),  # 1 + 0.5 sin(4 pi r) at r = 1/4
        ("exptrig:1,1", 0.5, math.exp(-1.0)),
    ],
)
def test_parse_fn_spec_families(spec, at, value):
    fn = parse_fn_spec(spec)
    assert fn(at) == pytest.approx(value, abs=1e-12)


@pytest.mark.parametrize(
    "bad",
    [
        "nocolon",
        "mystery:1,2",
        "const:1,2",
        "const:abc",
        "trig:",
        "exptrig:1",
        "exptrig:1,2,3",
        42,
    ],
)
def test_parse_fn_spec_rejects_malformed(bad):
    with pytest.raises(ValueError):
        parse_fn_spec(bad)


def test_p_norm_of_constant_and_homogeneity():
    assert p_norm(constant_fn(-2.0)) == pytest.approx(2.0, abs=1e-14)
    g = parse_fn_spec("trig:0,0.3,0.1,0.05")
    assert p_norm(2.0 * g) == pytest.approx(2.0 * p_norm(g), rel=1e-12)


def test_min_value_on_running_warping():
    assert min_value(parse_fn_spec("trig:2,1")) == pytest.approx(1.0, abs=1e-6)


def test_grid_nodes_and_spacing():
    grid = Grid(64)
    assert grid.h == pytest.approx(1.0 / 64)
    assert grid.nodes.shape == (64,)
    assert grid.nodes[0] == 0.0
    assert grid.nodes[-1] == pytest.approx(1.0 - 1.0 / 64)
    assert grid.index_of(0.5) == 32
    assert grid.index_of(0.999999) == 0  # wraps to the seam node


def test_grid_rejects_tiny():
    with pytest.raises(ValueError):
        Grid(8)


def test_grid_fn_validates_shape_and_finiteness():
    grid = Grid(32)
    v = grid_fn(np.ones(32), grid)
    assert v.shape == (32,)
    with pytest.raises(ValueError):
        grid_fn(np.ones(31), grid)
    bad = np.ones(32)
    bad[5] = np.nan
    with pytest.raises(ValueError):
        grid_fn(bad, grid)


def test_quad_periodic_integrates_exactly_for_low_modes():
    n = 64
    r = np.arange(n) / n
    assert quad_periodic(np.full(n, 3.0)) == pytest.approx(3.0)
    assert quad_periodic(np.cos(TWO_PI * r)) == pytest.approx(0.0, abs=1e-14)


def test_quad_segment_matches_antiderivative():
    val = quad_segment(lambda t: 1.0 / (2.0 + math.cos(TWO_PI * t)), 0.2, 0.7)
    # reversed orientation flips the sign
    rev = quad_segment(lambda t: 1.0 / (2.0 + math.cos(TWO_PI * t)), 0.7, 0.2)
    assert val == pytest.approx(-rev, rel=1e-12)
    assert quad_segment(lambda t: t, 0.0, 1.0) == pytest.approx(0.5, rel=1e-12)
    assert quad_segment(lambda t: t, 0.3, 0.3) == 0.0


def test_gauss_segment_is_exact_for_polynomials():
    # 12 point Gauss integrates degree 23 exactly; probe degree 9
    val = gauss_segment(lambda t: np.asarray(t) ** 9, 0.0, 1.0)
    assert val == pytest.approx(0.1, rel=1e-13)
    assert gauss_segment(lambda t: np.asarray(t), 0.4, 0.4) == 0.0


def test_cumulative_inverse_table_constant_weight():
    grid = Grid(32)
    w, w1 = cumulative_inverse_table(lambda r: np.full_like(np.asarray(r, float), 4.0), grid)
    np.testing.assert_allclose(w, grid.nodes / 4.0, atol=1e-15)
    assert w1 == pytest.approx(0.25, rel=1e-14)


def test_cumulative_inverse_table_against_adaptive_quadrature():
    f = parse_fn_spec("trig:2,1")
    grid = Grid(64)
    w, w1 = cumulative_inverse_table(f, grid)
    for j in (1, 17, 40, 63):
        oracle = quad_segment(lambda t: 1.0 / float(f(t)), 0.0, grid.nodes[j])
        assert w[j] == pytest.approx(oracle, rel=1e-11)
    assert w1 == pytest.approx(quad_segment(lambda t: 1.0 / float(f(t)), 0.0, 1.0), rel=1e-11)


@pytest.mark.parametrize("n", [128, 256])
def test_diff_periodic_second_order(n):
    r = np.arange(n) / n
    v = np.sin(TWO_PI * r)
    d1 = diff_periodic(v, order=1)
    d2 = diff_periodic(v, order=2)
    err1 = np.max(np.abs(d1 - TWO_PI * np.cos(TWO_PI * r)))
    err2 = np.max(np.abs(d2 + TWO_PI ** 2 * np.sin(TWO_PI * r)))
    # second order: error scales with (2 pi / n)^2 times the next derivative
    assert err1 < 50.0 / n ** 2
    assert err2 < 300.0 / n ** 2


def test_diff_periodic_rejects_other_orders():
    with pytest.raises(ValueError):
        diff_periodic(np.ones(32), order=3)
