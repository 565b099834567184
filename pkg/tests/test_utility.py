import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectrum_leasing import alpha_fair, check_scale_condition
from spectrum_leasing.utility import (ScaleConditionError, custom, default_scale_grid, diminishing_return,
                                      exponential, from_config)

alphas = st.floats(0.05, 4.0).filter(lambda a: abs(a - 1) > 1e-3)
rates = st.floats(1e-3, 1e3)


def test_log_utility_values():
    u = alpha_fair(1.0)
    assert u.value(1.0) == 0.0
    assert u.marginal(2.0) == 0.5
    assert u.is_proportional_fair


def test_alpha_two_is_negative_reciprocal():
    u = alpha_fair(2.0)
    r = np.array([0.5, 1.0, 4.0])
    np.testing.assert_allclose(u.value(r), -1.0 / r)


def test_inverse_round_trip_alpha_08():
    u = alpha_fair(0.8)
    assert u.inverse_marginal(u.marginal(3.7)) == pytest.approx(3.7, rel=1e-9)


def test_linear_utility_has_no_inverse():
    u = alpha_fair(0.0)
    assert u.inverse_marginal is None
    assert u.is_linear
    assert u.marginal_at_zero == 1.0


def test_negative_alpha_rejected():
    with pytest.raises(ValueError):
        alpha_fair(-0.5)


@given(a=alphas, r=rates)
def test_marginal_is_derivative(a, r):
    u = alpha_fair(a)
    h = 1e-6 * r
    fd = (u.value(r + h) - u.value(r - h)) / (2 * h)
    assert u.marginal(r) == pytest.approx(fd, rel=1e-5)


@given(a=st.floats(0.05, 4.0), r=rates)
def test_inverse_marginal_round_trip(a, r):
    u = alpha_fair(a)
    assert u.inverse_marginal(u.marginal(r)) == pytest.approx(r, rel=1e-9)


@given(a=st.floats(0.0, 4.0), r1=rates, r2=rates)
def test_concavity(a, r1, r2):
    u = alpha_fair(a)
    lo, hi = min(r1, r2), max(r1, r2)
    assert u.marginal(lo) >= u.marginal(hi) > 0


@given(a=st.floats(0.0, 4.0), r1=rates, r2=rates, n=st.integers(1, 64))
def test_marginal_ratio_is_scale_free(a, r1, r2, n):
    u = alpha_fair(a)
    assert u.marginal(r1) / u.marginal(r2) == pytest.approx((r2 / r1) ** a, rel=1e-9)
    assert check_scale_condition(u, [(r1, r2, n)])


@given(r=rates)
def test_pf_identity(r):
    assert r * alpha_fair(1.0).marginal(r) == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("a", [0.0, 0.5, 1.0, 2.0, 3.3])
def test_alpha_fair_passes_scale_condition(a):
    u = alpha_fair(a)
    assert u.satisfies_scale_condition
    assert check_scale_condition(u)


@pytest.mark.parametrize("make", [exponential, diminishing_return])
def test_non_homogeneous_utilities_fail(make):
    u = make()
    assert not u.satisfies_scale_condition
    assert not check_scale_condition(u)
    with pytest.raises(ScaleConditionError):
        make(enforce=True)


def test_custom_homogeneous_utility_accepted():
    # sqrt is the alpha = 0.5 member written out by hand
    u = custom(lambda r: 2 * np.sqrt(r), lambda r: 1 / np.sqrt(r), lambda y: 1 / y ** 2, name="sqrt")
    assert u.satisfies_scale_condition
    assert u.theta([1.0, 4.0]) == pytest.approx(1.0 + 2.0)


def test_scale_grid_rejects_bad_entries():
    with pytest.raises(ValueError):
        check_scale_condition(alpha_fair(1.0), [(1.0, 2.0, 0)])
    with pytest.raises(ValueError):
        check_scale_condition(alpha_fair(1.0), [(-1.0, 2.0, 2)])


def test_default_grid_is_reproducible():
    assert default_scale_grid() == default_scale_grid()


def test_theta():
    r = np.array([0.3, 1.1, 2.5])
    assert alpha_fair(1.0).theta(r) == 3.0
    a = 2.0
    assert alpha_fair(a).theta(r) == pytest.approx(float(np.sum(r ** (1 - a))))
    assert alpha_fair(a).theta([]) == 0.0


def test_from_config():
    assert from_config("alpha_fair", 0.8).alpha == 0.8
    assert from_config("alpha_fair").is_proportional_fair
    assert not from_config("exponential").satisfies_scale_condition
    with pytest.raises(ValueError):
        from_config("bogus")


def test_value_is_finite_on_grid():
    for a in (0.0, 0.5, 1.0, 2.0):
        v = alpha_fair(a).value(np.logspace(-3, 3, 13))
        assert np.all(np.isfinite(v)) and np.all(np.diff(v) > 0)
    assert math.isinf(alpha_fair(1.0).marginal_at_zero)
