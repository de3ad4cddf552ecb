import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from ppmsway.stats import DegenerateTest, Sidedness, paired_t_test, student_t_cdf, student_t_sf


def t_density(x, dof):
    log_norm = math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2) - 0.5 * math.log(dof * math.pi)
    return math.exp(log_norm - (dof + 1) / 2 * math.log1p(x * x / dof))


def sf_by_quadrature(t, dof):
    # integrate the density from 0 to |t| and use symmetry for the tail
    inner, _ = integrate.quad(t_density, 0.0, abs(t), args=(dof,), epsabs=1e-14, epsrel=1e-13, limit=200)
    tail = 0.5 - inner
    return tail if t >= 0 else 1.0 - tail


@pytest.mark.parametrize("dof", [2, 4, 9, 16, 29])
@pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 4.0])
def test_sf_matches_quadrature(t, dof):
    assert student_t_sf(t, dof) == pytest.approx(sf_by_quadrature(t, dof), abs=1e-9)


def test_cauchy_closed_form():
    for t in (-3.0, -0.2, 0.0, 1.0, 2.5, 40.0):
        assert abs(student_t_sf(t, 1) - (0.5 - math.atan(t) / math.pi)) <= 1e-12
    assert student_t_sf(1.0, 1) == pytest.approx(0.25, abs=1e-15)


def test_zero_is_half():
    for dof in (1, 3, 50, 1000):
        assert student_t_sf(0.0, dof) == 0.5


def test_reference_value_dof4():
    assert student_t_sf(4.2426, 4) == pytest.approx(0.00662, abs=1e-4)


def test_infinite_t():
    assert student_t_sf(math.inf, 3) == 0.0
    assert student_t_sf(-math.inf, 3) == 1.0


@given(t=st.floats(-50, 50), dof=st.integers(1, 200))
def test_sf_symmetry(t, dof):
    assert student_t_sf(t, dof) + student_t_sf(-t, dof) == pytest.approx(1.0, abs=1e-12)
    assert student_t_cdf(t, dof) == student_t_sf(-t, dof)


@given(a=st.floats(-20, 20), b=st.floats(-20, 20), dof=st.integers(1, 100))
def test_sf_decreasing(a, b, dof):
    lo, hi = sorted((a, b))
    assert student_t_sf(hi, dof) <= student_t_sf(lo, dof)
    if hi - lo > 1e-6:
        # strictness is checked on the small tail; the other side rounds to 1
        if lo >= 0:
            assert student_t_sf(hi, dof) < student_t_sf(lo, dof)
        if hi <= 0:
            assert student_t_cdf(lo, dof) < student_t_cdf(hi, dof)


def test_paired_fixture():
    r = paired_t_test(np.arange(1.0, 6.0), np.zeros(5))
    assert r.t_stat == pytest.approx(3 / (math.sqrt(2.5) / math.sqrt(5)), rel=1e-12)
    assert r.t_stat == pytest.approx(4.2426, abs=1e-4)
    assert r.dof == 4 and r.n_pairs == 5
    assert r.p_value == pytest.approx(0.0132, abs=1e-3)
    one = paired_t_test(np.arange(1.0, 6.0), np.zeros(5), Sidedness.ONE_SIDED_GREATER)
    assert one.p_value == pytest.approx(r.p_value / 2, rel=1e-12)
    assert one.p_value == pytest.approx(0.0066, abs=1e-4)


def test_identical_pairs():
    a = [0.3, 0.1, 0.7]
    assert paired_t_test(a, a).p_value == 1.0
    assert paired_t_test(a, a, Sidedness.ONE_SIDED_GREATER).p_value == 1.0


def test_constant_nonzero_shift_is_degenerate():
    with pytest.raises(DegenerateTest, match="zero variance, nonzero shift"):
        paired_t_test([1.0, 2.0, 3.0], [0.0, 1.0, 2.0])


def test_needs_two_pairs():
    with pytest.raises(ValueError):
        paired_t_test([1.0], [0.0])
    with pytest.raises(ValueError):
        paired_t_test([1.0, 2.0], [0.0])


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 30))
def test_swapping_samples(seed, n):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(size=n)
    ab, ba = paired_t_test(a, b), paired_t_test(b, a)
    assert ab.t_stat == pytest.approx(-ba.t_stat, rel=1e-12)
    assert ab.p_value == pytest.approx(ba.p_value, rel=1e-12)


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 30))
def test_two_sided_convention(seed, n):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(size=n)
    r = paired_t_test(a, b)
    sf = student_t_sf(r.t_stat, r.dof)
    assert r.p_value == pytest.approx(min(1.0, 2 * min(sf, 1 - sf)), abs=1e-15)
    assert 0.0 <= r.p_value <= 1.0
