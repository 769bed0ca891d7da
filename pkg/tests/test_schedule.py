import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from esdlab import DiffusionSchedule
from esdlab.schedule import ScheduleDomainError

from conftest import T_HALF

times = st.floats(0.0, 3.0, allow_nan=False)


def test_alpha_examples(schedule):
    assert schedule.alpha(0.0) == 1.0
    assert schedule.alpha(math.log(2.0)) == pytest.approx(float(mpmath.exp(-mpmath.log(2))), abs=1e-15)
    assert schedule.alpha(3.0) == pytest.approx(float(mpmath.exp(-3)), abs=1e-15)
    assert schedule.alpha(3.0) == pytest.approx(0.049787, abs=1e-6)


def test_sigma_examples(schedule):
    assert schedule.sigma(0.0) == 0.0
    oracle = float(mpmath.sqrt(1 - mpmath.exp(-2 * mpmath.log(2))))
    assert schedule.sigma(math.log(2.0)) == pytest.approx(oracle, abs=1e-15)
    assert schedule.sigma(math.log(2.0)) == pytest.approx(0.866025, abs=1e-6)


def test_sigma_small_t_matches_high_precision(schedule):
    for t in (1e-12, 1e-8, 1e-4):
        oracle = float(mpmath.sqrt(-mpmath.expm1(-2 * mpmath.mpf(t))))
        assert schedule.sigma(t) == pytest.approx(oracle, rel=1e-14)


@given(times)
def test_variance_preserving(t):
    s = DiffusionSchedule()
    assert s.alpha(t) ** 2 + s.sigma(t) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_variance_preserving_bulk(schedule):
    t = np.random.default_rng(0).uniform(0, 3, 1000)
    a, s = schedule.alpha_sigma(t)
    assert np.max(np.abs(a * a + s * s - 1)) < 1e-12


@given(times, times)
def test_monotone(t1, t2):
    s = DiffusionSchedule()
    if t1 < t2:
        assert s.alpha(t1) > s.alpha(t2)
        assert s.sigma(t1) < s.sigma(t2)


@pytest.mark.parametrize("t", [-0.1, 3.01, float("nan")])
def test_domain_error(schedule, t):
    with pytest.raises(ScheduleDomainError):
        schedule.alpha(t)
    with pytest.raises(ScheduleDomainError):
        schedule.sigma(t)


def test_weight_unit(schedule):
    for t in (0.1, 1.0, 2.5):
        omega, big = schedule.weight(t)
        assert omega == 1.0
        assert big == pytest.approx(schedule.sigma(t) / schedule.alpha(t), rel=1e-15)


def test_weight_sigma_squared_at_equal_coefficients():
    omega, big = DiffusionSchedule(weight_kind="sigma_squared").weight(T_HALF)
    assert omega == pytest.approx(0.5, abs=1e-15)
    assert big == pytest.approx(0.5, abs=1e-15)


def test_weight_sigma_vanishes_near_zero():
    s = DiffusionSchedule(weight_kind="sigma")
    assert s.weight(1e-10)[0] < 1e-4
    assert s.weight(0.0)[0] == 0.0


def test_weight_vectorised(schedule):
    t = np.array([0.1, 0.5, 2.0])
    omega, big = schedule.weight(t)
    assert omega.shape == big.shape == (3,)


def test_sample_t_degenerate():
    s = DiffusionSchedule(t_min=1.0, t_max=1.0)
    rng = np.random.default_rng(0)
    assert all(s.sample_t(rng) == 1.0 for _ in range(10))
    assert np.all(s.sample_t(rng, 5) == 1.0)


def test_sample_t_mean():
    s = DiffusionSchedule(t_min=0.1, t_max=3.0)
    draws = s.sample_t(np.random.default_rng(1), 100_000)
    se = (2.9 / math.sqrt(12)) / math.sqrt(draws.size)
    assert abs(draws.mean() - 1.55) < 3 * se
    assert draws.min() >= 0.1 and draws.max() <= 3.0


def test_sample_t_never_noise_free(schedule):
    draws = schedule.sample_t(np.random.default_rng(2), 10_000)
    assert np.all(schedule.sigma(draws) > 0)


@pytest.mark.parametrize("kwargs", [
    {"t_min": 0.0}, {"t_min": 2.0, "t_max": 1.0}, {"t_max": 4.0}, {"T": -1.0},
    {"kind": "cosine"}, {"weight_kind": "snr"},
])
def test_invalid_construction(kwargs):
    with pytest.raises(ValueError):
        DiffusionSchedule(**kwargs)


def test_grid(schedule):
    g = schedule.grid()
    assert g.shape == (64,)
    assert g[0] == schedule.t_min and g[-1] == schedule.t_max
