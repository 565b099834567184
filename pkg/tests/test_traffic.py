import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from spectrum_leasing import TrafficModel


def test_uniform_moments():
    t = TrafficModel.uniform(0, 16)
    assert t.mean == 8.0
    assert t.std == pytest.approx(np.sqrt((17 ** 2 - 1) / 12))
    assert t.k_up == 16


@given(mean=st.integers(1, 40), cv=st.floats(0.0, 0.9))
def test_from_mean_cv_hits_targets(mean, cv):
    assume(cv * mean * np.sqrt(3) <= mean - 1)  # support must stay non-negative with room
    t = TrafficModel.from_mean_cv(mean, cv)
    assert t.mean == pytest.approx(mean, abs=1e-12)
    assert t.std ** 2 == pytest.approx((cv * mean) ** 2, rel=1e-9, abs=1e-12)
    assert t.k_low >= 0


def test_from_mean_cv_rejects_impossible():
    with pytest.raises(ValueError):
        TrafficModel.from_mean_cv(2, 2.0)
    with pytest.raises(ValueError):
        TrafficModel.from_mean_cv(3.5, 0.1)


def test_degenerate_law():
    t = TrafficModel.from_mean_cv(8, 0.0)
    assert t.k_low == t.k_up == 8
    assert t.ppf(np.array([0.0, 0.5, 0.999])).tolist() == [8, 8, 8]


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=10), st.integers(0, 5))
def test_cdf_and_ppf_agree(weights, k_low):
    pmf = np.array(weights) / np.sum(weights)
    t = TrafficModel(k_low, pmf)
    u = np.linspace(0, 1, 101, endpoint=False)
    k = t.ppf(u)
    # ppf(u) is the smallest k with cdf(k) > u
    assert np.all(t.cdf(k) > u - 1e-12)
    assert np.all(t.cdf(k - 1) <= u + 1e-12)


def test_sampling_frequencies(rng):
    t = TrafficModel(2, [0.2, 0.5, 0.3])
    k = t.sample_counts(rng, 100_000)
    freq = np.bincount(k - 2, minlength=3) / k.size
    np.testing.assert_allclose(freq, t.pmf, atol=0.005)


def test_bad_pmf_rejected():
    with pytest.raises(ValueError):
        TrafficModel(0, [0.5, 0.6])
    with pytest.raises(ValueError):
        TrafficModel(-1, [1.0])
    with pytest.raises(ValueError):
        TrafficModel.uniform(3, 2)
