"""Period-level Monte Carlo: session pools, scheme evaluation and parameter sweeps.

Every random quantity is a deterministic function of (root seed, stream, block),
so results do not depend on the number of workers or on evaluation order.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import dra, leasing
from .channel import ChannelParams, UserSet, positions_from_uniforms
from .leasing import PriceModel, UniformPrice
from .traffic import TrafficModel
from .utility import UtilitySpec, alpha_fair

log = logging.getLogger(__name__)

BLOCK = 1024
EVAL_STREAM = 0
SGD_STREAM = 1
SCHEMES = ("two_stage", "reservation_only", "on_demand_only")
SWEEP_VARIABLES = ("xi_cs", "xi_k", "mu_cs", "mu_k", "alpha")


class SessionPool:
    """Primitive uniforms for ``size`` sessions, shared by every scheme and grid point.

    A session's user count and on-demand price come from inverse CDFs of its
    two uniforms; its users are the first K of ``k_max`` pre-drawn positions.
    """

    def __init__(self, size: int, seed: int, k_max: int, stream: int = EVAL_STREAM):
        if size < 1:
            raise ValueError("pool needs at least one session")
        self.size = int(size)
        self.seed = int(seed)
        self.k_max = int(k_max)
        self.stream = int(stream)
        parts = [self._block(b) for b in range(math.ceil(self.size / BLOCK))]
        self.u_count = np.concatenate([p[0] for p in parts])[: self.size]
        self.u_price = np.concatenate([p[1] for p in parts])[: self.size]
        self.u_radius = np.concatenate([p[2] for p in parts])[: self.size]
        self.u_angle = np.concatenate([p[3] for p in parts])[: self.size]

    def _block(self, b):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, self.stream, b]))
        return (rng.random(BLOCK), rng.random(BLOCK),
                rng.random((BLOCK, self.k_max)), rng.random((BLOCK, self.k_max)))

    def counts(self, traffic: TrafficModel) -> np.ndarray:
        if traffic.k_up > self.k_max:
            raise ValueError(f"traffic reaches K={traffic.k_up} but the pool holds {self.k_max} positions")
        return traffic.ppf(self.u_count).astype(int)

    def prices(self, law) -> np.ndarray:
        return np.asarray(law.ppf(self.u_price), dtype=float)

    def positions(self, i: int, k: int, channel: ChannelParams) -> np.ndarray:
        return positions_from_uniforms(channel, self.u_radius[i, :k], self.u_angle[i, :k])

    def users(self, i: int, k: int, channel: ChannelParams) -> UserSet:
        return UserSet(self.positions(i, k, channel))


def _solve_summaries(tasks):
    """Worker body: (positions, alpha, channel) -> (theta, sum of log throughputs)."""
    out = []
    for pos, alpha, channel in tasks:
        u = alpha_fair(alpha)  # utilities hold closures, so only alpha crosses the process boundary
        prof = dra.solve_fixed_point(UserSet(pos), u, channel)
        out.append((prof.theta, float(np.sum(np.log(prof.unit_throughputs)))))
    return out


class SessionSolver:
    """Memoized per-session throughput summaries for one (utility, channel) pair.

    Stores theta and, under proportional fairness, sum(log r_k), which is all
    the system utility G(X, n) needs for the alpha-fair family.
    """

    def __init__(self, pool: SessionPool, u: UtilitySpec, channel: ChannelParams, workers: int = 1,
                 chunk: int = 64):
        if u.family != "alpha_fair":
            raise ValueError("period simulation supports the alpha-fair family only")
        self.pool = pool
        self.u = u
        self.channel = channel
        self.workers = max(1, int(workers))
        self.chunk = chunk
        self._cache: Dict[tuple, tuple] = {}

    def _fill(self, keys):
        todo = sorted(set(keys) - self._cache.keys())
        if not todo:
            return
        tasks = [(self.pool.positions(i, k, self.channel), self.u.alpha, self.channel) for i, k in todo]
        batches = [tasks[s:s + self.chunk] for s in range(0, len(tasks), self.chunk)]
        if self.workers > 1 and len(batches) > 1:
            with ProcessPoolExecutor(self.workers) as ex:
                results = [r for batch in ex.map(_solve_summaries, batches) for r in batch]
        else:
            results = [r for batch in batches for r in _solve_summaries(batch)]
        self._cache.update(zip(todo, results))

    def summaries(self, counts: np.ndarray, need_location: bool = True):
        """(theta, location) arrays for the sessions with user counts ``counts``."""
        counts = np.asarray(counts, dtype=int)
        theta = np.zeros(counts.size)
        loc = np.zeros(counts.size)
        busy = np.flatnonzero(counts > 0)
        if self.u.is_proportional_fair:
            theta[busy] = counts[busy]
            if not need_location:
                return theta, loc
        keys = [(int(i), int(counts[i])) for i in busy]
        self._fill(keys)
        for i, key in zip(busy, keys):
            theta[i], loc[i] = self._cache[key]
        if self.u.is_proportional_fair:
            theta[busy] = counts[busy]
        return theta, loc


def system_utility(u: UtilitySpec, n, counts, theta, loc):
    """G(X, n) from session summaries; 0 for empty sessions.

    alpha-fair: G = U(n) theta for alpha != 1 and K log n + sum(log r_k) for alpha = 1.
    """
    n = np.broadcast_to(np.asarray(n, dtype=float), np.shape(counts))
    busy = np.asarray(counts) > 0
    out = np.zeros(np.shape(counts))
    with np.errstate(divide="ignore"):
        if u.is_proportional_fair:
            out[busy] = counts[busy] * np.log(n[busy]) + loc[busy]
        else:
            out[busy] = u.value(n[busy]) * theta[busy]
    return out


def session_surplus(u, prices: PriceModel, n_r, c_s, counts, theta, loc):
    """Vectorized optimal session surplus, same branches as ``leasing.session_surplus``."""
    n_s = leasing.optimal_on_demand(theta, c_s, n_r, u, prices)
    n_s = np.asarray(n_s, dtype=float)
    q = np.zeros(np.shape(counts))
    busy = np.asarray(counts) > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        threshold = prices.u_g * theta * np.asarray(u.marginal(np.full(theta.shape, float(n_r))), dtype=float)
    idle = busy & (c_s > threshold)
    req = busy & ~idle
    if idle.any():
        q[idle] = prices.u_g * system_utility(u, n_r, counts[idle], theta[idle], loc[idle])
    if req.any():
        n_star = n_r + n_s[req]
        q[req] = (c_s[req] * n_r - c_s[req] * n_star
                  + prices.u_g * system_utility(u, n_star, counts[req], theta[req], loc[req]))
    return q, n_s


@dataclass(frozen=True)
class SchemeStats:
    scheme: str
    n_r: float
    reservation_price: float
    mean_n_s: float
    se_n_s: float
    mean_on_demand_cost: float
    mean_surplus: float
    se_surplus: float
    sessions: int

    @property
    def mean_total_sc(self) -> float:
        return self.n_r + self.mean_n_s

    @property
    def mean_cost_per_sc(self) -> float:
        """(c_r n_r + E[c_s n_s]) / (n_r + E[n_s])."""
        total = self.mean_total_sc
        if total == 0:
            return math.nan
        return (self.reservation_price * self.n_r + self.mean_on_demand_cost) / total


def _se(x):
    return float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan


def _stats(scheme, n_r, n_s, spend, surplus, c_r):
    return SchemeStats(scheme, float(n_r), float(c_r), float(np.mean(n_s)), _se(n_s),
                       float(np.mean(spend)), float(np.mean(surplus)), _se(surplus), int(surplus.size))


@dataclass(frozen=True)
class PeriodSamples:
    """Per-session draws and decisions behind one run of ``run_period``."""
    counts: np.ndarray
    c_s: np.ndarray
    theta: np.ndarray
    n_s: np.ndarray
    surplus: np.ndarray


def run_period(pool: SessionPool, solver: SessionSolver, traffic: TrafficModel, u: UtilitySpec,
               prices: PriceModel, n_r: float, scheme: str = "two_stage", n_ro: Optional[float] = None,
               need_location: bool = True, return_samples: bool = False):
    """Evaluate one scheme over every session in the pool.

    ``n_r`` is the two-stage reservation; reservation-only uses ``n_ro``. The
    reported surplus is the period surplus per session, reservation cost included.
    """
    counts = pool.counts(traffic)
    c_s = pool.prices(prices.on_demand)
    theta, loc = solver.summaries(counts, need_location=need_location)
    c_r = prices.c_r
    if scheme == "two_stage":
        q, n_s = session_surplus(u, prices, n_r, c_s, counts, theta, loc)
        surplus = q - c_r * n_r
        used_r = n_r
    elif scheme == "reservation_only":
        if n_ro is None:
            raise ValueError("reservation_only needs n_ro")
        n_s = np.zeros(counts.size)
        surplus = prices.u_g * system_utility(u, n_ro, counts, theta, loc) - c_r * n_ro
        used_r = n_ro
    elif scheme == "on_demand_only":
        q, n_s = session_surplus(u, prices, 0.0, c_s, counts, theta, loc)
        surplus = q
        used_r = 0.0
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    stats = _stats(scheme, used_r, n_s, c_s * n_s, surplus, c_r)
    if return_samples:
        return stats, PeriodSamples(counts, c_s, theta, n_s, surplus)
    return stats


@dataclass(frozen=True)
class ExperimentGrid:
    variable: str
    points: tuple
    sessions: int = 10_000
    seed: int = 0
    schemes: tuple = SCHEMES

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {self.variable!r}")
        pts = tuple(float(p) for p in self.points)
        if not pts:
            raise ValueError("grid has no points")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("grid points must be distinct and sorted ascending")
        if self.sessions < 1000:
            raise ValueError("need at least 1000 sessions per grid point")
        bad = set(self.schemes) - set(SCHEMES)
        if bad or not self.schemes:
            raise ValueError(f"unknown schemes {sorted(bad)}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "schemes", tuple(self.schemes))


@dataclass(frozen=True)
class Scenario:
    """Everything that defines one grid point's economics."""
    traffic: TrafficModel
    u: UtilitySpec
    channel: ChannelParams
    prices: PriceModel
    sgd_iters: int = 20_000
    sgd_eta0: float = leasing.DEFAULT_ETA0
    pf_fast_path: bool = True


def apply_point(base: Scenario, variable: str, value: float) -> Scenario:
    """Scenario with one sweep variable moved to ``value``."""
    od = base.prices.on_demand
    if variable in ("xi_cs", "mu_cs"):
        if not isinstance(od, UniformPrice):
            raise ValueError("price sweeps need a uniform on-demand price")
        mu, xi = (od.mean, value) if variable == "xi_cs" else (value, od.cv)
        return replace(base, prices=replace(base.prices, on_demand=UniformPrice.from_mean_cv(mu, xi)))
    if variable in ("xi_k", "mu_k"):
        mean, cv = (base.traffic.mean, value) if variable == "xi_k" else (value, base.traffic.cv)
        if abs(mean - round(mean)) > 1e-9:
            raise ValueError("traffic sweeps need an integer mean user count")
        return replace(base, traffic=TrafficModel.from_mean_cv(int(round(mean)), cv))
    if variable == "alpha":
        return replace(base, u=alpha_fair(value))
    raise ValueError(f"unknown sweep variable {variable!r}")


@dataclass
class Decision:
    n_r: float
    n_ro: float
    method: str
    reason: str = ""
    plan: Optional[leasing.LeasePlan] = None


def decide(sc: Scenario, sgd_pool: Optional[SessionPool], sgd_solver: Optional[SessionSolver]) -> Decision:
    """Two-stage reservation (PF root or SGD) and the reservation-only benchmark."""
    u, prices, traffic = sc.u, sc.prices, sc.traffic
    if u.is_proportional_fair:
        mean_theta = traffic.mean
    else:
        theta, _ = sgd_solver.summaries(sgd_pool.counts(traffic), need_location=False)
        mean_theta = float(theta.mean())
    n_ro = leasing.baseline_reservation_only(mean_theta, u, prices)
    if not prices.reservation_pays:
        return Decision(0.0, n_ro, "none", leasing.NO_RESERVATION_REASON)
    if u.is_proportional_fair and sc.pf_fast_path:
        return Decision(leasing.pf_reservation_root(traffic, prices), n_ro, "pf_root")
    theta, _ = sgd_solver.summaries(sgd_pool.counts(traffic), need_location=False)
    plan = leasing.sgd_from_thetas(theta, u, prices, eta0=sc.sgd_eta0,
                                   mean_theta=traffic.mean if u.is_proportional_fair else None)
    return Decision(plan.n_r, n_ro, "sgd", plan.reason, plan)


def solve_plan(sc: Scenario, seed: int, workers: int = 1) -> dict:
    """Period decision for one scenario: SGD always, plus the exact root under PF.

    The reported ``n_r`` is the PF root when the fast path applies, else the SGD
    average.
    """
    u, prices, traffic = sc.u, sc.prices, sc.traffic
    out = {"n_r": 0.0, "method": "none", "reason": "", "pf_root": None, "sgd_plan": None}
    if u.is_proportional_fair:
        out["n_ro"] = leasing.baseline_reservation_only(traffic.mean, u, prices)
    if not prices.reservation_pays:
        out["reason"] = leasing.NO_RESERVATION_REASON
        if "n_ro" not in out:
            out["n_ro"] = None
        return out
    k_max = max(1, traffic.k_up)
    pool = SessionPool(sc.sgd_iters, seed, k_max, SGD_STREAM)
    theta, _ = SessionSolver(pool, u, sc.channel, workers).summaries(pool.counts(traffic), need_location=False)
    pf = u.is_proportional_fair
    plan = leasing.sgd_from_thetas(theta, u, prices, eta0=sc.sgd_eta0, mean_theta=traffic.mean if pf else None)
    out["sgd_plan"] = plan
    if not pf:
        out["n_ro"] = leasing.baseline_reservation_only(float(theta.mean()), u, prices)
    if pf:
        out["pf_root"] = leasing.pf_reservation_root(traffic, prices)
    if pf and sc.pf_fast_path:
        out["n_r"], out["method"] = out["pf_root"], "pf_root"
    else:
        out["n_r"], out["method"] = plan.n_r, "sgd"
    return out


@dataclass(frozen=True)
class SweepRow:
    value: float
    stats: SchemeStats


@dataclass
class SweepResult:
    variable: str
    rows: List[SweepRow] = field(default_factory=list)

    def for_scheme(self, scheme: str) -> List[SweepRow]:
        return [r for r in self.rows if r.stats.scheme == scheme]

    def column(self, scheme: str, attr: str) -> np.ndarray:
        return np.array([getattr(r.stats, attr) for r in self.for_scheme(scheme)])


def traffic_k_max(base: Scenario, grid: ExperimentGrid) -> int:
    k = base.traffic.k_up
    for v in grid.points:
        try:
            k = max(k, apply_point(base, grid.variable, v).traffic.k_up)
        except ValueError:
            pass
    return k


def sweep(grid: ExperimentGrid, base: Scenario, workers: int = 1, skip: Sequence[float] = (),
          on_point=None, cache: Optional[dict] = None) -> SweepResult:
    """Run every grid point on shared session pools.

    ``skip`` lists grid values already done (resume); ``on_point`` is called with
    each finished point's rows, in grid order. Passing the same ``cache`` dict to
    several sweeps reuses solved sessions when their pools coincide.
    """
    k_max = max(1, traffic_k_max(base, grid))
    pool_key = (grid.sessions, grid.seed, k_max, base.sgd_iters, base.channel)
    solvers: Dict[tuple, tuple] = {} if cache is None else cache
    result = SweepResult(grid.variable)
    skip = {float(s) for s in skip}
    for value in grid.points:
        if value in skip:
            continue
        sc = apply_point(base, grid.variable, value)
        key = pool_key + (sc.u.alpha,)
        if key not in solvers:
            pool = SessionPool(grid.sessions, grid.seed, k_max, EVAL_STREAM)
            sgd_pool = SessionPool(base.sgd_iters, grid.seed, k_max, SGD_STREAM)
            solvers[key] = (SessionSolver(pool, sc.u, sc.channel, workers),
                            SessionSolver(sgd_pool, sc.u, sc.channel, workers))
        solver, sgd_solver = solvers[key]
        pool, sgd_pool = solver.pool, sgd_solver.pool
        dec = decide(sc, sgd_pool, sgd_solver)
        rows = []
        for scheme in grid.schemes:
            st = run_period(pool, solver, sc.traffic, sc.u, sc.prices, dec.n_r, scheme, n_ro=dec.n_ro)
            rows.append(SweepRow(value, st))
        log.info("%s=%g: n_r=%.4f (%s)", grid.variable, value, dec.n_r, dec.method)
        result.rows.extend(rows)
        if on_point is not None:
            on_point(rows)
    return result
