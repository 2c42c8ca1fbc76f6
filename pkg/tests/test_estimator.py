import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import brute_force_local, random_sample
from tailtrend.core import BivariateSample, EvalGrid, IntegratedCurve, TuningParams, check_surface, floor_count
from tailtrend.estimator import (
    BlockEstimates,
    average_tail_copula,
    block_index,
    derivative_estimator,
    descending_ranks,
    integrated_estimator,
    local_tail_copula,
    piecewise_R_tilde,
    trend_statistics,
)

GRID_UV = np.arange(1, 11) / 10


def test_comonotone_window_example():
    # nh = 10, kh = 5, u = v = 0.4: thresholds at the 8th order statistic, 2 pairs above
    sample = BivariateSample(np.arange(1.0, 11.0), np.arange(1.0, 11.0))
    params = TuningParams(5, 1)
    surf = local_tail_copula(sample, params, 0.5, [0.4], [0.4])
    assert surf.values[0, 0] == 0.4
    assert brute_force_local(list(sample.x), list(sample.y), 5, 1.0, 0.4, 0.4) == 0.4


def test_zero_level_gives_zero():
    sample = random_sample(1, 200)
    params = TuningParams(20, Fraction(1, 2))
    surf = local_tail_copula(sample, params, 0.25, [0.0, 0.5], [0.3, 1.0])
    assert np.all(surf.values[0] == 0)


def test_border_identity():
    sample = random_sample(2, 1000)
    params = TuningParams(100, Fraction(1, 10))
    for j in range(1, 11):
        surf = local_tail_copula(sample, params, (j - 0.5) / 10, GRID_UV, GRID_UV)
        assert np.array_equal(surf.u_border, floor_count(10.0, GRID_UV) / 10.0)
        assert np.array_equal(surf.v_border, floor_count(10.0, GRID_UV) / 10.0)


@pytest.mark.parametrize("seed", range(10))
def test_matches_brute_force(seed):
    g = np.random.default_rng(seed)
    nh = int(g.integers(20, 51))
    k = int(g.integers(nh // 2, 2 * nh))
    sample = random_sample(seed, nh)
    params = TuningParams(k, 1)
    kh = float(k)
    u_pts = [u for u in GRID_UV if floor_count(kh, u) + 1 <= nh]
    surf = local_tail_copula(sample, params, 0.5, u_pts, u_pts)
    for a, u in enumerate(u_pts):
        for b, v in enumerate(u_pts):
            assert surf.values[a, b] == brute_force_local(list(sample.x), list(sample.y), k, 1, u, v)


def test_window_and_admissible_range():
    sample = random_sample(3, 100)
    params = TuningParams(20, Fraction(1, 5))
    with pytest.raises(ValueError, match="outside"):
        local_tail_copula(sample, params, 0.05, [0.5], [0.5])
    # s = 0.15 is not a block midpoint but still has a full window
    surf = local_tail_copula(sample, params, 0.15, [0.5], [0.5])
    window = slice(5, 25)
    expected = brute_force_local(list(sample.x[window]), list(sample.y[window]), 20, 0.2, 0.5, 0.5)
    assert surf.values[0, 0] == expected


def test_order_statistic_index_out_of_range():
    sample = random_sample(4, 100)
    with pytest.raises(ValueError, match="order-statistic"):
        local_tail_copula(sample, TuningParams(100, Fraction(1, 10)), 0.05, [1.0], [1.0])


def test_ties_broken_by_index():
    ranks = descending_ranks(np.array([1.0, 1.0, 0.0]))
    assert list(ranks) == [2, 1, 3]


@pytest.mark.parametrize(
    "h, s, j",
    [(Fraction(1, 10), 0.05, 1), (Fraction(1, 10), 1.0, 10), (Fraction(1, 3), 1.0, 3),
     (Fraction(3, 20), 0.95, 6), (Fraction(3, 20), 0.9, 6), (Fraction(1, 10), 0.1, 1)],
)
def test_block_index(h, s, j):
    assert block_index(s, h) == j


def test_piecewise_uses_block_midpoint():
    sample = random_sample(5, 200)
    params = TuningParams(40, Fraction(3, 20))
    tilde = piecewise_R_tilde(sample, params, GRID_UV[:5], GRID_UV[:5], 0.95)
    direct = local_tail_copula(sample, params, Fraction(33, 40), GRID_UV[:5], GRID_UV[:5])
    assert np.array_equal(tilde.values, direct.values)
    with pytest.raises(ValueError):
        piecewise_R_tilde(sample, params, [0.5], [0.5], 0.0)


def _step_integral(block_vals, h, s):
    m = len(block_vals)

    def r_tilde(w):
        return block_vals[min(math.ceil(w / h - 1e-12), m) - 1]

    breaks = [j * h for j in range(1, m) if j * h < s]
    return quad(r_tilde, 0, s, points=breaks or None, limit=200)[0]


def test_three_block_integral():
    sample = random_sample(6, 30)
    blocks = BlockEstimates(sample, TuningParams(9, Fraction(1, 3)), 1.0)
    vals = np.array([0.2, 0.4, 0.6])
    got = float(blocks.integrate(vals, [0.5])[0])
    assert got == pytest.approx(0.1333333333333333, abs=1e-15)
    assert got == pytest.approx(_step_integral(vals, 1 / 3, 0.5), abs=1e-10)


@pytest.mark.parametrize("s", [0.05, 0.1, 0.37, 0.5, 0.93, 1.0])
def test_integral_matches_quadrature(s):
    sample = random_sample(7, 160)
    blocks = BlockEstimates(sample, TuningParams(60, Fraction(3, 20)), 1.0)
    vals = blocks.block_values(0.5, 0.7)
    got = float(blocks.integrate(vals, [s])[0])
    assert got == pytest.approx(_step_integral(list(vals), 0.15, s), abs=1e-9)


def test_first_knot_is_one_block():
    sample = random_sample(8, 1000)
    params = TuningParams(100, Fraction(1, 10))
    grid = EvalGrid.default(params.h)
    curve = integrated_estimator(sample, params, grid)
    first = local_tail_copula(sample, params, 0.05, grid.u, grid.v)
    assert np.allclose(curve.values[:, :, 0], 0.1 * first.values, atol=1e-15)


def test_identical_blocks_average():
    window = random_sample(9, 100)
    sample = BivariateSample(np.tile(window.x, 10), np.tile(window.y, 10))
    params = TuningParams(100, Fraction(1, 10))
    grid = EvalGrid.default(params.h)
    curve = integrated_estimator(sample, params, grid)
    first = local_tail_copula(sample, params, 0.05, grid.u, grid.v)
    assert np.allclose(curve.values[:, :, -1], first.values, atol=1e-14)
    t_sup, t_cvm = trend_statistics(curve, params)
    assert t_sup < 1e-12 and t_cvm < 1e-24


def test_curve_shape_invariants():
    sample = random_sample(10, 2000)
    params = TuningParams(100, Fraction(1, 10))
    grid = EvalGrid.default(params.h)
    curve = integrated_estimator(sample, params, grid)
    vals = np.concatenate([np.zeros(grid.shape[:2] + (1,)), curve.values], axis=2)
    slopes = np.diff(vals, axis=2) / np.diff(np.concatenate([[0.0], grid.s]))
    bound = np.minimum.outer(grid.u, grid.v)[:, :, None] + 1 / params.kh
    assert np.all(slopes >= -1e-12)
    assert np.all(slopes <= bound + 1e-12)


def test_average_surface_comonotone():
    x = np.arange(2000.0)
    sample = BivariateSample(x, x)
    params = TuningParams(100, Fraction(1, 10))
    surf = average_tail_copula(sample, params, GRID_UV, GRID_UV)
    assert np.all(np.abs(np.diag(surf.values) - GRID_UV) <= 1 / params.kh)
    assert surf.provenance == "integrated average"
    assert check_surface(surf, params.kh) == []


def test_average_surface_independent_is_small():
    g = np.random.default_rng(11)
    sample = BivariateSample(g.random(20000), g.random(20000))
    params = TuningParams(1000, Fraction(1, 10))
    surf = average_tail_copula(sample, params, [1.0], [1.0])
    assert surf.values[0, 0] < 0.15


def test_derivative_examples():
    k = 32  # delta = 0.5
    assert np.all(derivative_estimator(lambda u, v: v, k, 1, GRID_UV, GRID_UV) == 0)
    interior = GRID_UV[GRID_UV >= 0.5]
    assert np.allclose(derivative_estimator(lambda u, v: u, k, 1, interior, GRID_UV), 1.0)
    assert np.allclose(derivative_estimator(lambda u, v: u, k, 1, [0.0], [0.3]), 1.0)
    assert np.allclose(derivative_estimator(lambda u, v: v, k, 2, [0.2], [0.0]), 1.0)


def test_derivative_clamps():
    assert np.all(derivative_estimator(lambda u, v: 3 * u, 32, 1, GRID_UV, GRID_UV) == 1.0)
    assert np.all(derivative_estimator(lambda u, v: -u, 32, 1, GRID_UV, GRID_UV) == 0.0)
    with pytest.raises(ValueError):
        derivative_estimator(lambda u, v: u, 0, 1, GRID_UV, GRID_UV)


def test_trend_statistics_null_curve():
    grid = EvalGrid.default(Fraction(1, 10))
    base = np.random.default_rng(12).random(grid.shape[:2])
    vals = base[:, :, None] * grid.s[None, None, :]
    curve = IntegratedCurve(grid, vals, Fraction(1, 10))
    assert trend_statistics(curve, TuningParams(100, Fraction(1, 10))) == (0.0, 0.0)


def test_trend_statistics_single_deviation():
    grid = EvalGrid.default(Fraction(1, 10))
    vals = np.full(grid.shape[:2], 0.3)[:, :, None] * grid.s[None, None, :]
    eps = 0.01
    vals[3, 4, 2] += eps
    curve = IntegratedCurve(grid, vals, Fraction(1, 10))
    k = 400
    t_sup, t_cvm = trend_statistics(curve, TuningParams(k, Fraction(1, 10)))
    assert t_sup == pytest.approx(math.sqrt(k) * eps, rel=1e-9)
    assert t_cvm == pytest.approx(k * eps**2 * 0.1 * 0.1 * 0.1, rel=1e-9)


def test_trend_statistics_requires_s_one():
    grid = EvalGrid(GRID_UV, GRID_UV, (0.5,))
    curve = IntegratedCurve(grid, np.zeros(grid.shape), Fraction(1, 10))
    with pytest.raises(ValueError, match="s=1"):
        trend_statistics(curve, TuningParams(10, Fraction(1, 10)))


def test_swap_symmetry():
    sample = random_sample(13, 2000)
    params = TuningParams(100, Fraction(1, 10))
    grid = EvalGrid.default(params.h)
    a = trend_statistics(integrated_estimator(sample, params, grid), params)
    b = trend_statistics(integrated_estimator(sample.swapped(), params, grid), params)
    assert a == b


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rho=st.floats(-0.9, 0.9))
def test_monotone_and_bounded(seed, rho):
    sample = random_sample(seed, 400, rho)
    params = TuningParams(80, Fraction(1, 4))
    blocks = BlockEstimates(sample, params, 1.0)
    for surf in blocks.block_surfaces(GRID_UV, GRID_UV):
        assert check_surface(surf, params.kh) == []
        bound = np.minimum.outer(floor_count(params.kh, GRID_UV), floor_count(params.kh, GRID_UV)) / params.kh
        assert np.all(surf.values <= bound)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rank_invariance_property(seed):
    sample = random_sample(seed, 600)
    moved = BivariateSample(np.exp(sample.x), sample.y**3 + sample.y)
    params = TuningParams(60, Fraction(1, 6))
    grid = EvalGrid.default(params.h)
    a = integrated_estimator(sample, params, grid)
    b = integrated_estimator(moved, params, grid)
    assert np.array_equal(a.values, b.values)
    assert trend_statistics(a, params) == trend_statistics(b, params)
