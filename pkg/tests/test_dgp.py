import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import simpson

from tailtrend.dgp import (
    LogisticModel,
    MixtureSpec,
    ScedasisSpec,
    generate_dataset,
    mixing_weight,
    positive_stable,
    sample_gumbel_frechet,
    scedasis_eval,
    true_integrated_curve,
)


@pytest.mark.parametrize("theta, expected", [(0.5, 0.585786), (0.9, 0.133934)])
def test_logistic_tdc(theta, expected):
    model = LogisticModel(theta)
    assert model.R(1.0, 1.0) == pytest.approx(expected, abs=1e-6)
    assert model.tdc == pytest.approx(expected, abs=1e-6)


def test_logistic_reported_rounding():
    assert round(LogisticModel(0.5).tdc, 2) == 0.59
    assert round(LogisticModel(0.9).tdc, 2) == 0.13


@pytest.mark.parametrize("theta", [0.1, 0.5, 0.9, 1.0])
def test_logistic_zero_and_homogeneity(theta):
    model = LogisticModel(theta)
    assert model.R(0.7, 0.0) == 0.0
    assert model.R(0.0, 0.0) == 0.0
    assert model.R(2.0, 2.0) == pytest.approx(2 * model.R(1.0, 1.0), rel=1e-12)
    assert model.R(0.6, 1.4) * 3 == pytest.approx(model.R(1.8, 4.2), rel=1e-12)


def test_logistic_bounds():
    u, v = np.meshgrid(np.linspace(0.01, 2, 40), np.linspace(0.01, 2, 40))
    for theta in np.arange(1, 11) / 10:
        r = LogisticModel(theta).R(u, v)
        assert np.all(r >= 0)
        assert np.all(r <= np.minimum(u, v))
        # strict gap (min/max)**(1/theta) must be representable in double precision
        resolvable = np.minimum(u, v) / np.maximum(u, v) > 1e-13 ** theta
        assert np.all(r[resolvable] < np.minimum(u, v)[resolvable])


def test_logistic_rejects_negative_and_bad_theta():
    with pytest.raises(ValueError):
        LogisticModel(0.5).R(-1.0, 1.0)
    with pytest.raises(ValueError):
        LogisticModel(1.5)
    with pytest.raises(ValueError):
        LogisticModel(0.5).partials(0.0, 1.0)


def test_partials_at_one_one():
    r1, r2 = LogisticModel(0.5).partials(1.0, 1.0)
    assert r1 == pytest.approx(1 - 2**-0.5, abs=1e-12)
    assert r1 == pytest.approx(LogisticModel(0.5).tdc / 2, abs=1e-12)
    assert r1 == r2


@pytest.mark.parametrize("theta", [0.2, 0.5, 0.9])
def test_partials_match_central_differences(theta):
    model = LogisticModel(theta)
    eps = 1e-5
    u, v = np.meshgrid(np.linspace(0.1, 1.5, 15), np.linspace(0.1, 1.5, 15))
    r1, r2 = model.partials(u, v)
    fd1 = (model.R(u + eps, v) - model.R(u - eps, v)) / (2 * eps)
    fd2 = (model.R(u, v + eps) - model.R(u, v - eps)) / (2 * eps)
    assert np.max(np.abs(r1 - fd1)) <= 1e-6
    assert np.max(np.abs(r2 - fd2)) <= 1e-6
    assert np.all((r1 >= 0) & (r1 <= 1))


def test_scedasis_values():
    assert scedasis_eval(ScedasisSpec.builtin("M1"), 0.42) == (1.0, 1.0)
    m2 = ScedasisSpec.builtin("m2")
    assert scedasis_eval(m2, 0.0) == pytest.approx((0.8, 1.5))
    assert scedasis_eval(m2, 1.0) == pytest.approx((1.2, 0.5))
    m3 = ScedasisSpec.builtin("M3")
    assert scedasis_eval(m3, 0.0) == pytest.approx((1.6, 1.0))
    assert scedasis_eval(m3, 0.25) == pytest.approx((1.0, 1.4))
    with pytest.raises(ValueError):
        scedasis_eval(m3, 1.2)
    with pytest.raises(ValueError):
        ScedasisSpec.builtin("M4")


def test_mixing_weight():
    assert mixing_weight(MixtureSpec(0.7), 0.5) == 1.0
    assert mixing_weight(MixtureSpec(0.7), 1.0) == pytest.approx(0.0, abs=1e-15)
    assert mixing_weight(MixtureSpec(0.7), 0.9) == pytest.approx(1 - 8 / 27, rel=1e-12)
    assert mixing_weight(MixtureSpec(1.0), 1.0) == 1.0
    assert mixing_weight(MixtureSpec(0.0), 0.5) == pytest.approx(0.875)


def test_true_curve_values():
    model = LogisticModel(0.5)
    rho = 2 - math.sqrt(2)
    assert true_integrated_curve(model, MixtureSpec(0.0), 1.0) == pytest.approx(0.439340, abs=1e-6)
    assert true_integrated_curve(model, MixtureSpec(1.0), 0.3) == pytest.approx(rho * 0.3, rel=1e-14)
    s = np.linspace(0, 1, 11)
    assert np.allclose(true_integrated_curve(model, MixtureSpec(0.0), s), rho * (s - s**4 / 4), atol=1e-15)


def test_true_curve_against_simpson():
    model = LogisticModel(0.5)
    mix = MixtureSpec(2 / 3)
    w = np.linspace(0, 1, 1001)
    numeric = simpson(model.tdc * mix.weight(w), x=w)
    closed = true_integrated_curve(model, mix, 1.0)
    assert closed == pytest.approx(0.536970, abs=1e-6)
    assert closed == pytest.approx(numeric, abs=1e-8)


def test_positive_stable_laplace_transform():
    rng = np.random.default_rng(3)
    alpha = 0.5
    s = positive_stable(alpha, 200_000, rng)
    for t in (0.3, 1.0, 2.0):
        mc = np.exp(-t * s)
        assert mc.mean() == pytest.approx(math.exp(-t**alpha), abs=4 * mc.std() / math.sqrt(s.size))


def test_independent_when_theta_one():
    u, v = sample_gumbel_frechet(LogisticModel(1.0), 20000, np.random.default_rng(4))
    r = np.corrcoef(np.log(u), np.log(v))[0, 1]
    assert abs(r) < 4 / math.sqrt(20000)


@pytest.mark.parametrize("theta", [0.3, 0.5, 0.9])
def test_kendall_tau_of_gumbel(theta):
    # Gumbel copula with generator exp(-t**theta) has Kendall's tau 1 - theta
    u, v = sample_gumbel_frechet(LogisticModel(theta), 4000, np.random.default_rng(5))
    tau = stats.kendalltau(u, v).statistic
    assert tau == pytest.approx(1 - theta, abs=0.04)


def test_generate_is_deterministic():
    args = (2000, LogisticModel(0.5), ScedasisSpec.builtin("M3"), MixtureSpec(0.8))
    a = generate_dataset(*args, rng=17)
    b = generate_dataset(*args, rng=17)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)


def test_scaling_identity():
    # same seed, different scedasis: X_i differs exactly by the factor c_X(i/n)
    model, mix = LogisticModel(0.5), MixtureSpec(0.6)
    base = generate_dataset(1000, model, ScedasisSpec.builtin("M1"), mix, 9)
    scaled = generate_dataset(1000, model, ScedasisSpec.builtin("M2"), mix, 9)
    s = np.arange(1, 1001) / 1000
    assert np.array_equal(scaled.x, (0.8 + 0.4 * s) * base.x)
    assert np.array_equal(scaled.y, (1.5 - s) * base.y)
    # hence F_i(x) = F0(x / c_X(i/n)) for the Frechet(1) baseline
    assert np.allclose(np.exp(-1 / (scaled.x / (0.8 + 0.4 * s))), np.exp(-1 / base.x))


def test_null_dataset_has_all_dependent_pairs():
    model = LogisticModel(0.5)
    null = generate_dataset(500, model, ScedasisSpec.builtin("M1"), None, 3)
    lam1 = generate_dataset(500, model, ScedasisSpec.builtin("M1"), MixtureSpec(1.0), 3)
    assert np.array_equal(null.x, lam1.x)


def test_forced_independence():
    from fractions import Fraction

    from tailtrend.core import TuningParams
    from tailtrend.estimator import average_tail_copula

    sample = generate_dataset(20000, LogisticModel(0.5), ScedasisSpec.builtin("M1"), None, 5, independent=True)
    surf = average_tail_copula(sample, TuningParams(1000, Fraction(1, 10)), [1.0], [1.0])
    assert surf.values[0, 0] < 0.15
