import math

import numpy as np
import pytest

from spectrum_leasing import ChannelParams, PriceModel, TrafficModel, UniformPrice, alpha_fair, dra, leasing
from spectrum_leasing import montecarlo as mc

CH = ChannelParams()
PRICES = PriceModel(1.0, UniformPrice(0.8, 1.8), 5.0)
SMALL = TrafficModel.uniform(0, 3)


def _scenario(alpha=1.0, traffic=SMALL, prices=PRICES, **kw):
    return mc.Scenario(traffic, alpha_fair(alpha), CH, prices, **kw)


def test_pool_blocks_are_prefix_stable():
    a = mc.SessionPool(1500, seed=3, k_max=4)
    b = mc.SessionPool(3000, seed=3, k_max=4)
    np.testing.assert_array_equal(a.u_count, b.u_count[:1500])
    np.testing.assert_array_equal(a.u_radius, b.u_radius[:1500])
    c = mc.SessionPool(1500, seed=3, k_max=4, stream=mc.SGD_STREAM)
    assert not np.array_equal(a.u_count, c.u_count)


def test_pool_counts_and_prices_follow_laws():
    pool = mc.SessionPool(20_000, seed=1, k_max=16)
    k = pool.counts(TrafficModel.uniform(0, 16))
    assert abs(k.mean() - 8) < 4 * k.std() / math.sqrt(k.size)
    c = pool.prices(UniformPrice(0.8, 1.8))
    assert c.min() >= 0.8 and c.max() <= 1.8
    with pytest.raises(ValueError):
        pool.counts(TrafficModel.uniform(0, 17))


def test_users_are_prefixes_of_the_same_draw():
    pool = mc.SessionPool(1000, seed=2, k_max=6)
    np.testing.assert_array_equal(pool.positions(5, 3, CH), pool.positions(5, 6, CH)[:3])


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_summaries_reproduce_direct_system_utility(alpha):
    u = alpha_fair(alpha)
    pool = mc.SessionPool(1000, seed=4, k_max=5)
    solver = mc.SessionSolver(pool, u, CH)
    counts = np.array([0, 1, 3, 5, 2])
    theta, loc = solver.summaries(counts)
    for i, k in enumerate(counts):
        if k == 0:
            assert theta[i] == 0
            continue
        users = pool.users(i, int(k), CH)
        prof = dra.solve_fixed_point(users, u, CH)
        assert theta[i] == pytest.approx(prof.theta, rel=1e-9)
        for n in (0.5, 7.0, 33.0):
            g = mc.system_utility(u, n, counts[i:i + 1], theta[i:i + 1], loc[i:i + 1])[0]
            assert g == pytest.approx(dra.system_utility(users, u, prof, n), rel=1e-9, abs=1e-9)


def test_vectorized_surplus_matches_scalar():
    u = alpha_fair(1.0)
    pool = mc.SessionPool(1000, seed=5, k_max=4)
    counts = np.array([0, 1, 2, 4, 3, 4])
    theta, loc = mc.SessionSolver(pool, u, CH).summaries(counts)
    c_s = np.array([1.0, 0.9, 1.7, 1.1, 1.5, 0.8])
    for n_r in (0.0, 3.0, 12.0):
        q, n_s = mc.session_surplus(u, PRICES, n_r, c_s, counts, theta, loc)
        for i, k in enumerate(counts):
            prof = dra.solve_fixed_point(pool.users(i, int(k), CH), u, CH) if k else None
            ref = leasing.session_surplus(float(theta[i]), prof, c_s[i], n_r, u, PRICES) if k else 0.0
            if n_r == 0.0 and k:
                ref = leasing.recomposed_surplus(prof, c_s[i], 0.0, n_s[i], u, PRICES)
            assert q[i] == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_parallel_solver_matches_serial():
    u = alpha_fair(2.0)
    pool = mc.SessionPool(1000, seed=6, k_max=3)
    counts = pool.counts(SMALL)[:200]
    serial = mc.SessionSolver(pool, u, CH, workers=1, chunk=16).summaries(counts)
    para = mc.SessionSolver(pool, u, CH, workers=2, chunk=16).summaries(counts)
    for a, b in zip(serial, para):
        np.testing.assert_array_equal(a, b)


def test_solver_rejects_custom_utility():
    from spectrum_leasing.utility import exponential
    with pytest.raises(ValueError):
        mc.SessionSolver(mc.SessionPool(1000, 0, 1), exponential(), CH)


def test_zero_traffic_period():
    zero = TrafficModel.uniform(0, 0)
    pool = mc.SessionPool(1000, seed=1, k_max=1)
    solver = mc.SessionSolver(pool, alpha_fair(1.0), CH)
    st = mc.run_period(pool, solver, zero, alpha_fair(1.0), PRICES, 3.0)
    assert st.mean_surplus == pytest.approx(-3.0)
    assert pf_root_for(zero) == 0.0
    st0 = mc.run_period(pool, solver, zero, alpha_fair(1.0), PRICES, 0.0)
    assert st0.mean_surplus == 0.0 and st0.mean_n_s == 0.0


def pf_root_for(traffic):
    return leasing.pf_reservation_root(traffic, PRICES)


def test_standard_error_scales_with_sessions():
    u = alpha_fair(1.0)
    traffic = TrafficModel.uniform(0, 16)
    se = []
    for n in (4000, 8000):
        pool = mc.SessionPool(n, seed=9, k_max=16)
        st = mc.run_period(pool, mc.SessionSolver(pool, u, CH), traffic, u, PRICES, 25.0,
                           need_location=False)
        se.append(st.se_n_s)
    assert se[0] / se[1] == pytest.approx(math.sqrt(2), rel=0.1)


def test_scheme_accounting():
    u = alpha_fair(1.0)
    pool = mc.SessionPool(1000, seed=10, k_max=3)
    solver = mc.SessionSolver(pool, u, CH)
    ro = mc.run_period(pool, solver, SMALL, u, PRICES, 4.0, "reservation_only", n_ro=7.5)
    assert ro.n_r == 7.5 and ro.mean_n_s == 0.0 and ro.mean_cost_per_sc == pytest.approx(1.0)
    od, samples = mc.run_period(pool, solver, SMALL, u, PRICES, 4.0, "on_demand_only", return_samples=True)
    assert od.n_r == 0.0
    np.testing.assert_allclose(samples.n_s, PRICES.u_g * samples.counts / samples.c_s)
    assert od.mean_cost_per_sc == pytest.approx(float(np.sum(samples.c_s * samples.n_s) / np.sum(samples.n_s)),
                                                rel=1e-12)
    with pytest.raises(ValueError):
        mc.run_period(pool, solver, SMALL, u, PRICES, 4.0, "reservation_only")
    with pytest.raises(ValueError):
        mc.run_period(pool, solver, SMALL, u, PRICES, 4.0, "lottery")


@pytest.mark.parametrize("kwargs", [
    dict(variable="xi_cs", points=()),
    dict(variable="xi_cs", points=(0.2, 0.1)),
    dict(variable="xi_cs", points=(0.1, 0.1)),
    dict(variable="xi_cs", points=(0.1,), sessions=999),
    dict(variable="beta", points=(0.1,)),
    dict(variable="xi_cs", points=(0.1,), schemes=("two_stage", "barter")),
])
def test_grid_validation(kwargs):
    with pytest.raises(ValueError):
        mc.ExperimentGrid(**kwargs)


def test_apply_point():
    base = _scenario(traffic=TrafficModel.from_mean_cv(8, 0.3), prices=PriceModel(1.0, UniformPrice.from_mean_cv(1.3, 0.1), 5.0))
    p = mc.apply_point(base, "xi_cs", 0.3).prices.on_demand
    assert (p.mean, p.cv) == (pytest.approx(1.3), pytest.approx(0.3))
    assert mc.apply_point(base, "xi_cs", 0.0).prices.on_demand.is_constant
    t = mc.apply_point(base, "xi_k", 0.5).traffic
    assert t.mean == pytest.approx(8) and t.cv == pytest.approx(0.5)
    assert mc.apply_point(base, "mu_cs", 1.5).prices.on_demand.cv == pytest.approx(0.1)
    assert mc.apply_point(base, "alpha", 2.0).u.alpha == 2.0
    with pytest.raises(ValueError):
        mc.apply_point(base, "xi_cs", 0.7)


def test_decide_and_solve_plan():
    sc = _scenario(traffic=TrafficModel.uniform(0, 16), sgd_iters=5000)
    plan = mc.solve_plan(sc, seed=1)
    assert plan["method"] == "pf_root"
    assert plan["n_r"] == pytest.approx(leasing.pf_reservation_root(sc.traffic, sc.prices))
    assert plan["sgd_plan"].n_r == pytest.approx(plan["n_r"], rel=0.05)
    assert plan["n_ro"] == pytest.approx(40.0)
    cheap = _scenario(prices=PriceModel(1.0, UniformPrice(0.5, 1.5), 5.0))
    none = mc.solve_plan(cheap, seed=1)
    assert none["n_r"] == 0.0 and none["reason"] == leasing.NO_RESERVATION_REASON
    slow = mc.solve_plan(_scenario(traffic=TrafficModel.uniform(0, 16), sgd_iters=5000, pf_fast_path=False), 1)
    assert slow["method"] == "sgd" and slow["n_r"] == slow["sgd_plan"].n_r


def test_sweep_skip_callback_and_cache():
    base = _scenario(alpha=2.0, sgd_iters=1000)
    grid = mc.ExperimentGrid("xi_cs", (0.0, 0.2), sessions=1000, seed=2)
    seen = []
    cache = {}
    full = mc.sweep(grid, base, on_point=seen.append, cache=cache)
    assert [r[0].value for r in seen] == [0.0, 0.2]
    assert len(full.rows) == 2 * len(mc.SCHEMES)
    again = mc.sweep(grid, base, skip=[0.0], cache=cache)
    assert [r.value for r in again.rows] == [0.2] * len(mc.SCHEMES)
    assert again.rows == full.rows[len(mc.SCHEMES):]
    fresh = mc.sweep(grid, base, skip=[0.0])
    assert fresh.rows == again.rows
    assert full.column("reservation_only", "n_r")[0] == full.column("reservation_only", "n_r")[1]
