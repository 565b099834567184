"""Compiled and pure-Python kernels must agree, and both must match sampling."""
import math

import numpy as np
import pytest

from spectrum_leasing import kernels
from spectrum_leasing.dra import INITIAL_PANELS, MAX_PANELS, QUAD_TOL, TAIL_GAIN

try:
    compiled = kernels.get_backend("compiled")
except ImportError:  # pragma: no cover - depends on the build
    compiled = None
python = kernels.get_backend("python")

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")

CASES = [
    (np.array([3.0]), np.array([1.0])),
    (np.array([0.25, 0.25]), np.array([1.0, 1.0])),
    (np.array([1e4, 0.3, 12.0]), np.array([0.02, 3.0, 0.4])),
    (10.0 ** np.linspace(-0.6, 5, 8), np.geomspace(0.05, 5, 8)),
]


def _phi(mod, snr, w, k=-1):
    vals, errs = np.zeros(snr.size), np.zeros(snr.size)
    ok = mod.phi_integrals(snr, w, TAIL_GAIN, INITIAL_PANELS, QUAD_TOL, MAX_PANELS, vals, errs, k)
    return vals, errs, ok


def _jac(mod, snr, w):
    K = snr.size
    vals, errs, jac = np.zeros(K), np.zeros(K), np.zeros((K, K))
    ok = mod.phi_jacobian(snr, w, TAIL_GAIN, INITIAL_PANELS, QUAD_TOL, MAX_PANELS, vals, errs, jac)
    return vals, jac, ok


def test_backend_is_selected():
    assert kernels.BACKEND in ("compiled", "python")
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@needs_compiled
@pytest.mark.parametrize("snr,w", CASES)
def test_phi_parity(snr, w):
    a, _, ok_a = _phi(compiled, snr, w)
    b, _, ok_b = _phi(python, snr, w)
    assert ok_a and ok_b
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@needs_compiled
@pytest.mark.parametrize("snr,w", CASES)
def test_jacobian_parity(snr, w):
    va, ja, _ = _jac(compiled, snr, w)
    vb, jb, _ = _jac(python, snr, w)
    np.testing.assert_allclose(va, vb, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(ja, jb, rtol=1e-10, atol=1e-12)


@needs_compiled
def test_schedule_parity(rng):
    K, n = 5, 7
    w = rng.uniform(0.2, 2, K)
    snr = 10 ** rng.uniform(-1, 3, K)
    gains = rng.standard_exponential((300, K, n))
    out = []
    for mod in (compiled, python):
        winners = np.zeros((300, n), dtype=np.int32)
        totals = np.zeros(K)
        mod.schedule_slots(w, snr, 1.5, gains, winners, totals)
        out.append((winners, totals))
    np.testing.assert_array_equal(out[0][0], out[1][0])
    np.testing.assert_allclose(out[0][1], out[1][1], rtol=1e-12)


@pytest.mark.parametrize("mod", [m for m in (compiled, python) if m is not None])
def test_phi_matches_monte_carlo(mod, rng):
    snr = np.array([0.5, 20.0, 3.0])
    w = np.array([1.0, 0.3, 0.8])
    vals, _, _ = _phi(mod, snr, w)
    g = rng.standard_exponential((400_000, 3))
    rates = np.log2(1 + snr * g)
    win = np.argmax(w * rates, axis=1)
    collected = np.where(win[:, None] == np.arange(3), rates, 0.0)
    mc, se = collected.mean(axis=0), collected.std(axis=0) / math.sqrt(g.shape[0])
    assert np.all(np.abs(vals - mc) < 4 * se)


@pytest.mark.parametrize("mod", [m for m in (compiled, python) if m is not None])
def test_single_user_is_mean_rate(mod):
    from scipy import special
    s = 2.5
    vals, _, _ = _phi(mod, np.array([s]), np.array([1.0]))
    assert vals[0] == pytest.approx(math.exp(1 / s) * special.exp1(1 / s) / math.log(2), rel=1e-10)


def test_single_index_request_leaves_others_untouched():
    snr = np.array([1.0, 5.0, 9.0])
    vals, _, _ = _phi(python, snr, np.ones(3), k=1)
    assert vals[0] == 0.0 and vals[2] == 0.0 and vals[1] > 0


@pytest.mark.parametrize("mod", [m for m in (compiled, python) if m is not None])
def test_jacobian_matches_finite_differences(mod):
    snr = np.array([0.4, 7.0, 60.0, 2.0])
    w = np.array([1.3, 0.5, 0.2, 0.9])
    _, jac, ok = _jac(mod, snr, w)
    assert ok
    h = 1e-5
    for j in range(snr.size):
        up, dn = w.copy(), w.copy()
        up[j] *= math.exp(h)
        dn[j] *= math.exp(-h)
        fd = (_phi(mod, snr, up)[0] - _phi(mod, snr, dn)[0]) / (2 * h)
        np.testing.assert_allclose(jac[:, j], fd, rtol=1e-5, atol=1e-8)


def test_jacobian_rows_sum_to_zero():
    # scaling all weights together leaves every user's share unchanged
    _, jac, _ = _jac(python, np.array([0.4, 7.0, 60.0]), np.array([1.3, 0.5, 0.2]))
    np.testing.assert_allclose(jac.sum(axis=1), 0.0, atol=1e-9)


@pytest.mark.parametrize("mod", [m for m in (compiled, python) if m is not None])
def test_quadrature_failure_is_reported(mod):
    errs = np.zeros(2)
    ok = mod.phi_integrals(np.array([1.0, 1e6]), np.array([1.0, 1e-3]), TAIL_GAIN, 1, 1e-30, 2,
                           np.zeros(2), errs, -1)
    assert not ok
    assert np.all(errs > 0)
