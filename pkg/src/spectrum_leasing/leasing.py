"""Advance reservation and on-demand leasing decisions.

All optimization is over the continuous relaxation; integer decisions are
obtained by rounding at the end.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize

from . import dra
from .channel import ChannelParams, sample_user_set
from .utility import UtilitySpec

log = logging.getLogger(__name__)

NO_RESERVATION_REASON = "expected on-demand price does not exceed the reservation price"
SQRT3 = math.sqrt(3.0)
# SGD step scale, in sub-channels per unit of gradient
DEFAULT_ETA0 = 10.0


class UniformPrice:
    """On-demand price uniform on [low, high]; a point mass when low == high."""

    def __init__(self, low: float, high: float):
        low, high = float(low), float(high)
        if not 0 < low <= high:
            raise ValueError(f"uniform price needs 0 < low <= high, got [{low}, {high}]")
        self.low = low
        self.high = high

    @classmethod
    def from_mean_cv(cls, mean: float, cv: float) -> "UniformPrice":
        """Support [(1 - sqrt(3) cv) mean, (1 + sqrt(3) cv) mean]."""
        if not mean > 0 or cv < 0:
            raise ValueError("need mean > 0 and cv >= 0")
        low = (1.0 - SQRT3 * cv) * mean
        if not low > 0:
            raise ValueError(f"cv={cv} gives a non-positive lower price {low:.6g} at mean {mean}")
        return cls(low, (1.0 + SQRT3 * cv) * mean)

    def __repr__(self):
        return f"UniformPrice({self.low!r}, {self.high!r})"

    @property
    def is_constant(self) -> bool:
        return self.low == self.high

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high)

    @property
    def std(self) -> float:
        return (self.high - self.low) / (2.0 * SQRT3)

    @property
    def cv(self) -> float:
        return self.std / self.mean

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            return (x >= self.low).astype(float)
        return np.clip((x - self.low) / (self.high - self.low), 0.0, 1.0)

    def ppf(self, u):
        return self.low + (self.high - self.low) * np.asarray(u, dtype=float)

    def integral_sf(self, upper):
        """Closed-form integral of 1 - F over [0, upper], i.e. E[min(c_s, upper)]."""
        L = np.asarray(upper, dtype=float)
        a, b = self.low, self.high
        if self.is_constant:
            return np.minimum(L, a)
        Lc = np.clip(L, a, b)
        inside = Lc - (Lc - a) ** 2 / (2.0 * (b - a))
        out = np.where(L <= a, L, np.where(L >= b, self.mean, inside))
        return out if out.ndim else float(out)


class ScipyPrice:
    """On-demand price following any frozen ``scipy.stats`` continuous law on (0, inf)."""

    def __init__(self, dist, tol: float = 1e-10):
        lo, _ = dist.support()
        if lo < 0:
            raise ValueError("on-demand price distribution must be supported on non-negative reals")
        self.dist = dist
        self.tol = tol

    def __repr__(self):
        return f"ScipyPrice({self.dist.dist.name}{self.dist.args})"

    @property
    def is_constant(self) -> bool:
        return False

    @property
    def mean(self) -> float:
        return float(self.dist.mean())

    @property
    def std(self) -> float:
        return float(self.dist.std())

    @property
    def cv(self) -> float:
        return self.std / self.mean

    def cdf(self, x):
        return self.dist.cdf(x)

    def ppf(self, u):
        return self.dist.ppf(u)

    def _one(self, L):
        if L <= 0:
            return 0.0
        if math.isinf(L):
            return self.mean
        val, _ = integrate.quad(self.dist.sf, 0.0, L, epsabs=self.tol, epsrel=self.tol, limit=200)
        return val

    def integral_sf(self, upper):
        L = np.asarray(upper, dtype=float)
        if L.ndim == 0:
            return self._one(float(L))
        return np.array([self._one(x) for x in L.ravel()]).reshape(L.shape)


@dataclass(frozen=True)
class PriceModel:
    reservation_price: float
    on_demand: object  # UniformPrice or ScipyPrice
    utility_scale: float
    sc_cap: float = 1024.0

    def __post_init__(self):
        if not self.reservation_price > 0:
            raise ValueError("reservation_price must be positive")
        if not self.utility_scale > 0:
            raise ValueError("utility_scale must be positive")
        if not self.sc_cap > 0:
            raise ValueError("sc_cap must be positive")

    @property
    def c_r(self) -> float:
        return self.reservation_price

    @property
    def u_g(self) -> float:
        return self.utility_scale

    @property
    def reservation_pays(self) -> bool:
        """False when on-demand leasing is on average no dearer than reserving."""
        return self.on_demand.mean > self.reservation_price


@dataclass
class LeasePlan:
    n_r: float
    reason: str = ""
    method: str = "sgd"
    initial: Optional[float] = None
    history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    final_gradient: float = math.nan
    final_gradient_se: float = math.nan

    @property
    def n_r_int(self) -> int:
        return int(round(self.n_r))

    def on_demand(self, theta, c_s, u: UtilitySpec, prices: PriceModel):
        return optimal_on_demand(theta, c_s, self.n_r, u, prices)


@dataclass(frozen=True)
class SessionOutcome:
    theta: float
    c_s: float
    n_s: float
    surplus: float

    @property
    def on_demand_spend(self) -> float:
        return self.c_s * self.n_s


def _marginal(u: UtilitySpec, n):
    with np.errstate(divide="ignore"):
        return np.asarray(u.marginal(np.asarray(n, dtype=float)), dtype=float)


def optimal_on_demand(theta, c_s, n_r, u: UtilitySpec, prices: PriceModel):
    """On-demand request n_s* = max(U'^-1(c_s / (u_g theta)) - n_r, 0).

    For a linear utility U' is constant, so the request is all-or-nothing up to
    ``prices.sc_cap`` total sub-channels. Broadcasts over array inputs.
    """
    theta = np.asarray(theta, dtype=float)
    c_s = np.asarray(c_s, dtype=float)
    n_r = np.asarray(n_r, dtype=float)
    if np.any(theta < 0) or np.any(c_s <= 0) or np.any(n_r < 0):
        raise ValueError("need theta >= 0, c_s > 0, n_r >= 0")
    busy = theta > 0
    if u.inverse_marginal is None:
        n_total = np.where(c_s < prices.u_g * theta, prices.sc_cap, 0.0)
    else:
        with np.errstate(divide="ignore"):
            y = np.where(busy, c_s / (prices.u_g * np.where(busy, theta, 1.0)), np.inf)
            n_total = np.where(busy, u.inverse_marginal(y), 0.0)
    out = np.where(busy, np.maximum(n_total - n_r, 0.0), 0.0)
    return float(out) if out.ndim == 0 else out


def _system_utility(u, profile, n):
    return float(np.sum(u.value(n * profile.unit_throughputs)))


def session_surplus(theta, profile, c_s, n_r, u: UtilitySpec, prices: PriceModel) -> float:
    """Optimal session surplus Q given the reservation ``n_r``.

    Without a request the surplus is u_g G(n_r); with one, for n* = n_r + n_s*,
    it is c_s n_r - c_s n* + u_g G(n*). ``profile`` is the session's unit
    throughput profile (None for an empty session).
    """
    if profile is None or profile.count == 0 or theta == 0:
        return 0.0
    if n_r < 0:
        raise ValueError("n_r must be non-negative")
    threshold = prices.u_g * theta * float(_marginal(u, n_r))
    with np.errstate(divide="ignore"):
        if c_s > threshold:
            return prices.u_g * _system_utility(u, profile, n_r)
        n_star = n_r + optimal_on_demand(theta, c_s, n_r, u, prices)
        return c_s * n_r - c_s * n_star + prices.u_g * _system_utility(u, profile, n_star)


def recomposed_surplus(profile, c_s, n_r, n_s, u: UtilitySpec, prices: PriceModel) -> float:
    """-c_s n_s + u_g G(n_r + n_s), the session objective at an arbitrary request."""
    if profile is None or profile.count == 0:
        return 0.0
    return -c_s * n_s + prices.u_g * _system_utility(u, profile, n_r + n_s)


def session_outcome(theta, profile, c_s, n_r, u, prices) -> SessionOutcome:
    n_s = optimal_on_demand(theta, c_s, n_r, u, prices)
    return SessionOutcome(float(theta), float(c_s), float(n_s),
                          session_surplus(theta, profile, c_s, n_r, u, prices))


def sample_gradient(theta, n_r, u: UtilitySpec, prices: PriceModel):
    """Per-session stochastic gradient of the period surplus in n_r.

    -c_r + integral of (1 - F_cs) over [0, u_g theta U'(n_r)]. Broadcasts.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("theta must be non-negative")
    w = _marginal(u, n_r)
    with np.errstate(invalid="ignore"):
        upper = np.where(theta > 0, prices.u_g * theta * w, 0.0)
    return prices.on_demand.integral_sf(upper) - prices.c_r


def _initial_reservation(u, prices, mean_theta):
    mu = prices.on_demand.mean
    if mean_theta <= 0:
        return 0.0
    if u.is_proportional_fair:
        return prices.u_g * mean_theta / mu
    if u.inverse_marginal is None:
        return 0.0
    return float(u.inverse_marginal(mu / (prices.u_g * mean_theta)))


def sgd_from_thetas(thetas, u: UtilitySpec, prices: PriceModel, eta0: float = DEFAULT_ETA0,
                    initial: Optional[float] = None, mean_theta: Optional[float] = None) -> LeasePlan:
    """Projected SGD for the advance reservation, one session sample per step.

    ``thetas`` holds the session metrics consumed in order (drawn up front so
    they can be computed in parallel). Step l moves by eta0/sqrt(l) times the
    sample gradient; the result is the average of the iterates.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 1 or thetas.size < 1:
        raise ValueError("need at least one session sample")
    if not prices.reservation_pays:
        return LeasePlan(0.0, reason=NO_RESERVATION_REASON, method="sgd", initial=0.0)
    if mean_theta is None:
        mean_theta = float(thetas.mean())
    x = _initial_reservation(u, prices, mean_theta) if initial is None else float(initial)
    cap = prices.sc_cap if u.inverse_marginal is None else math.inf
    L = thetas.size
    history = np.empty(L)
    for l in range(1, L + 1):
        history[l - 1] = x
        grad = float(sample_gradient(thetas[l - 1], x, u, prices))
        x = min(max(x + eta0 / math.sqrt(l) * grad, 0.0), cap)
    n_r = float(history.mean())
    g = np.asarray(sample_gradient(thetas, n_r, u, prices), dtype=float)
    return LeasePlan(n_r, method="sgd", initial=float(history[0]), history=history,
                     final_gradient=float(g.mean()),
                     final_gradient_se=float(g.std(ddof=1) / math.sqrt(L)) if L > 1 else math.nan)


def session_theta(users, u: UtilitySpec, channel: ChannelParams) -> float:
    """Theta of one session; K itself under proportional fairness, no solve needed."""
    if users.count == 0:
        return 0.0
    if u.is_proportional_fair:
        return float(users.count)
    return dra.solve_fixed_point(users, u, channel).theta


def sample_thetas(traffic, u: UtilitySpec, channel: ChannelParams, count: int,
                  rng: np.random.Generator) -> np.ndarray:
    return np.array([session_theta(sample_user_set(traffic, channel, rng), u, channel)
                     for _ in range(count)])


def sgd_reservation(traffic, u: UtilitySpec, channel: ChannelParams, prices: PriceModel,
                    iters: int = 20000, rng: Optional[np.random.Generator] = None,
                    eta0: float = DEFAULT_ETA0, initial: Optional[float] = None) -> LeasePlan:
    """SGD reservation with fresh session draws from ``traffic``."""
    if iters < 1:
        raise ValueError("iters must be at least 1")
    if not prices.reservation_pays:
        return LeasePlan(0.0, reason=NO_RESERVATION_REASON, method="sgd", initial=0.0)
    rng = np.random.default_rng() if rng is None else rng
    thetas = sample_thetas(traffic, u, channel, iters, rng)
    mean_theta = traffic.mean if u.is_proportional_fair else None
    return sgd_from_thetas(thetas, u, prices, eta0=eta0, initial=initial, mean_theta=mean_theta)


def pf_root_rhs(n, traffic, prices: PriceModel) -> float:
    """Integral of (1 - F_cs(eta/n)) (1 - F_K(eta/u_g)) over [0, u_g K_up].

    1 - F_K(eta/u_g) is constant on [u_g k, u_g (k+1)), so each piece is
    n (M(u_g (k+1)/n) - M(u_g k/n)) with M(L) = E[min(c_s, L)].
    """
    if traffic.k_up == 0:
        return 0.0
    ks = np.arange(traffic.k_up)
    tail = traffic.sf(ks)  # P(K >= k+1)
    M = prices.on_demand.integral_sf(prices.u_g * np.arange(traffic.k_up + 1) / n)
    return float(n * np.sum(tail * np.diff(M)))


def pf_reservation_root(traffic, prices: PriceModel, xtol: float = 1e-12) -> float:
    """Optimal reservation under proportional fairness, independent of user positions.

    Solves c_r n = pf_root_rhs(n) by bisection on [1e-6, u_g K_up / c_r].
    """
    if not prices.reservation_pays or traffic.k_up == 0:
        return 0.0
    lo, hi = 1e-6, prices.u_g * traffic.k_up / prices.c_r

    def h(n):
        return prices.c_r * n - pf_root_rhs(n, traffic, prices)

    h_lo, h_hi = h(lo), h(hi)
    if h_lo >= 0:
        return 0.0
    if h_hi == 0:
        return hi
    if h_hi < 0:
        raise RuntimeError(f"reservation root not bracketed: h({lo})={h_lo:.6g}, h({hi})={h_hi:.6g}")
    return float(optimize.bisect(h, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))


def baseline_reservation_only(mean_theta: float, u: UtilitySpec, prices: PriceModel) -> float:
    """Reserve-only plan n_ro = U'^-1(c_r / (u_g E[theta])); ignores on-demand prices."""
    if mean_theta <= 0:
        return 0.0
    if u.inverse_marginal is None:
        return prices.sc_cap if prices.c_r < prices.u_g * mean_theta else 0.0
    return float(u.inverse_marginal(prices.c_r / (prices.u_g * mean_theta)))


def baseline_on_demand_only(theta, c_s, u: UtilitySpec, prices: PriceModel):
    """On-demand-only request: the optimal request with nothing reserved."""
    return optimal_on_demand(theta, c_s, 0.0, u, prices)
