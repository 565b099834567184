"""Per-session dynamic resource allocation.

The scheduler gives each sub-channel in each slot to the user maximizing
U'(r_k) * rate; the long-run throughputs r solve r_k = n * Phi_k(r), where
Phi_k is user k's expected rate on slots it wins.
"""
import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .channel import ChannelParams, UserSet, rate_distribution

log = logging.getLogger(__name__)

# Each user's integral runs over its own rate up to the fading-gain quantile
# TAIL_GAIN, where the survival probability is exp(-45) < 1e-12.
TAIL_GAIN = 45.0
INITIAL_PANELS = 8
QUAD_TOL = 1e-10
MAX_PANELS = 4096


class QuadratureError(RuntimeError):
    def __init__(self, message, error_estimate):
        super().__init__(message)
        self.error_estimate = error_estimate


class FixedPointError(RuntimeError):
    def __init__(self, message, residual, iterate):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


@dataclass(frozen=True)
class ThroughputProfile:
    unit_throughputs: np.ndarray
    theta: float
    residual: float
    iterations: int = 0

    @property
    def count(self) -> int:
        return self.unit_throughputs.size


@dataclass(frozen=True)
class AllocationTrace:
    winners: np.ndarray  # (T, n_sc) user index per sub-channel per slot
    throughputs: np.ndarray  # per-user time-averaged throughput
    slots: int


def _phi_values(snr, weights, k=-1):
    vals = np.zeros(snr.size)
    errs = np.zeros(snr.size)
    ok = kernels.phi_integrals(snr, weights, TAIL_GAIN, INITIAL_PANELS, QUAD_TOL, MAX_PANELS,
                               vals, errs, k)
    if not ok:
        worst = float(errs.max())
        raise QuadratureError(f"throughput integral did not converge (error estimate {worst:.3g})", worst)
    return vals


def phi(users: UserSet, u, channel: ChannelParams, r, k=None):
    """Expected rate user ``k`` collects per sub-channel, given throughputs ``r``.

    With ``k=None`` the whole vector is returned.
    """
    r = np.asarray(r, dtype=float)
    if r.shape != (users.count,) or np.any(r <= 0):
        raise ValueError("throughputs must be a strictly positive vector, one per user")
    snr = np.ascontiguousarray(channel.mean_snr(users.distances), dtype=float)
    weights = np.ascontiguousarray(u.marginal(r), dtype=float)
    vals = _phi_values(snr, weights, -1 if k is None else int(k))
    vals = channel.bandwidth_per_sc * vals
    return vals if k is None else float(vals[k])


def solo_mean_rates(users: UserSet, channel: ChannelParams) -> np.ndarray:
    return np.array([rate_distribution(channel, d).mean for d in users.distances])


def _phi_with_jacobian(snr, weights):
    K = snr.size
    vals = np.zeros(K)
    errs = np.zeros(K)
    jac = np.zeros((K, K))
    ok = kernels.phi_jacobian(snr, weights, TAIL_GAIN, INITIAL_PANELS, QUAD_TOL, MAX_PANELS,
                              vals, errs, jac)
    if not ok:
        worst = float(errs.max())
        raise QuadratureError(f"throughput integral did not converge (error estimate {worst:.3g})", worst)
    return vals, jac


def _marginal_elasticity(u, r):
    """d log U'(r) / d log r, exact for alpha-fair and by central differences otherwise."""
    if u.family == "alpha_fair":
        return np.full(r.size, -u.alpha)
    h = 1e-5
    up = np.log(np.asarray(u.marginal(r * np.exp(h)), dtype=float))
    dn = np.log(np.asarray(u.marginal(r * np.exp(-h)), dtype=float))
    return (up - dn) / (2 * h)


def solve_throughputs(users: UserSet, u, channel: ChannelParams, n: float = 1.0, start=None,
                      rtol: float = 1e-8, atol: float = 1e-8, max_iter: int = 500,
                      damping: float = 0.5, picard_iter: int = 0):
    """Root of r = n * Phi(r).

    Optional damped Picard steps (none by default), then Newton on log r with
    the Jacobian of Phi integrated alongside Phi itself. Coordinate-wise bisection is the last
    resort. Returns ``(r, residual, iterations)``.
    """
    K = users.count
    if K == 0:
        raise ValueError("empty user set has no throughput profile")
    if not n > 0:
        raise ValueError("number of sub-channels must be positive")
    snr = np.ascontiguousarray(channel.mean_snr(users.distances), dtype=float)
    scale = n * channel.bandwidth_per_sc
    solo = solo_mean_rates(users, channel)
    if start is None:
        r = n * solo / K
    else:
        r = np.array(start, dtype=float)
        if r.shape != (K,) or np.any(r <= 0):
            raise ValueError("start must be a strictly positive vector, one per user")

    def weights(x):
        return np.ascontiguousarray(u.marginal(x), dtype=float)

    def done(x, mapped):
        res = float(np.max(np.abs(x - mapped)))
        return res, res <= min(rtol * x.mean(), atol * channel.bandwidth_per_sc)

    it = 0
    residual = np.inf
    if K == 1:
        picard_iter = 1
    for _ in range(min(picard_iter, max_iter)):
        it += 1
        mapped = scale * _phi_values(snr, weights(r))
        residual, ok = done(r, mapped)
        if ok:
            return r, residual, it
        r = (1.0 - damping) * r + damping * mapped

    y = np.log(r)
    mapped = scale * _phi_values(snr, weights(r))
    while it < max_iter:
        it += 1
        r = np.exp(y)
        residual, ok = done(r, mapped)
        if ok:
            return r, residual, it
        f = y - np.log(mapped)
        vals, dphi = _phi_with_jacobian(snr, weights(r))
        jac = np.eye(K) - (dphi / vals[:, None]) * _marginal_elasticity(u, r)[None, :]
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            break
        norm0 = float(np.max(np.abs(f)))
        t = 1.0
        while t > 1e-4:
            y_new = y + t * step
            trial = scale * _phi_values(snr, weights(np.exp(y_new)))
            f_new = y_new - np.log(trial)
            if np.all(np.isfinite(f_new)) and np.max(np.abs(f_new)) < (1 - 1e-4 * t) * norm0:
                break
            t *= 0.5
        else:
            break
        y, mapped = y_new, trial

    log.debug("Newton stalled at residual %.3g; switching to coordinate bisection", residual)
    return _coordinate_bisection(np.exp(y), snr, u, scale, n * solo, rtol,
                                 atol * channel.bandwidth_per_sc, max_iter)


def _coordinate_bisection(r, snr, u, scale, upper, rtol, atol, max_sweeps):
    """Gauss-Seidel sweeps solving each r_k = scale*Phi_k exactly.

    r_k - scale*Phi_k(r) is increasing in r_k, and Phi_k never exceeds the
    user's solo mean rate, so [tiny, upper_k] always brackets the root.
    """
    r = r.copy()
    K = r.size

    def gap(x, k):
        trial = r.copy()
        trial[k] = x
        w = np.ascontiguousarray(u.marginal(trial), dtype=float)
        return x - scale * _phi_values(snr, w, k)[k]

    residual = np.inf
    for sweep in range(1, max_sweeps + 1):
        for k in range(K):
            lo, hi = upper[k] * 1e-12, upper[k]
            for _ in range(200):
                mid = np.sqrt(lo * hi)
                if gap(mid, k) > 0:
                    hi = mid
                else:
                    lo = mid
                if hi - lo <= 1e-15 * hi:
                    break
            r[k] = 0.5 * (lo + hi)
        mapped = scale * _phi_values(snr, np.ascontiguousarray(u.marginal(r), dtype=float))
        residual = float(np.max(np.abs(r - mapped)))
        if residual <= min(rtol * r.mean(), atol):
            return r, residual, sweep
    raise FixedPointError(f"fixed point not reached (residual {residual:.3g})", residual, r)


def solve_fixed_point(users: UserSet, u, channel: ChannelParams, start=None, **kwargs) -> ThroughputProfile:
    """Unit-sub-channel throughputs r*(1) and the utility metric Theta."""
    if not u.satisfies_scale_condition:
        raise ValueError(f"utility {u.name!r} fails the scale condition; no single-SC profile exists")
    r, residual, iters = solve_throughputs(users, u, channel, 1.0, start=start, **kwargs)
    return ThroughputProfile(r, u.theta(r), residual, iters)


def policy_weights(u, profile: ThroughputProfile, n: float = 1.0) -> np.ndarray:
    return np.asarray(u.marginal(n * profile.unit_throughputs), dtype=float)


def allocate_slot(users: UserSet, u, profile: ThroughputProfile, slot_rates) -> np.ndarray:
    """Winner per sub-channel: argmax_k U'(r_k) * rate_ki, lowest index on ties."""
    rates = np.asarray(slot_rates, dtype=float)
    if rates.ndim != 2 or rates.shape[0] != profile.count:
        raise ValueError("slot_rates must be (users, sub-channels)")
    if np.any(rates < 0):
        raise ValueError("rates must be non-negative")
    w = policy_weights(u, profile)
    return np.argmax(w[:, None] * rates, axis=0)


def simulate_session(users: UserSet, u, channel: ChannelParams, n_sc: int, slots: int,
                     rng: np.random.Generator, profile: ThroughputProfile = None,
                     block: int = 2048) -> AllocationTrace:
    """Run the scheduler over ``slots`` i.i.d. Rayleigh slots on ``n_sc`` sub-channels."""
    K = users.count
    if slots < 1:
        raise ValueError("need at least one slot")
    if n_sc < 0:
        raise ValueError("n_sc must be non-negative")
    winners = np.zeros((slots, n_sc), dtype=np.int32)
    totals = np.zeros(K)
    if n_sc == 0 or K == 0:
        return AllocationTrace(winners, totals, slots)
    if profile is None:
        profile = solve_fixed_point(users, u, channel)
    w = np.ascontiguousarray(policy_weights(u, profile, n_sc))
    snr = np.ascontiguousarray(channel.mean_snr(users.distances), dtype=float)
    for start in range(0, slots, block):
        stop = min(start + block, slots)
        gains = rng.standard_exponential((stop - start, K, n_sc))
        kernels.schedule_slots(w, snr, channel.bandwidth_per_sc, gains, winners[start:stop], totals)
    return AllocationTrace(winners, totals / slots, slots)


def system_utility(users, u, profile: ThroughputProfile, n: float) -> float:
    """Maximal session utility G with ``n`` sub-channels: sum_k U(n * r_k(1))."""
    if (users is not None and users.count == 0) or profile is None or profile.count == 0:
        return 0.0
    if n <= 0 and u.marginal_at_zero == np.inf:
        raise ValueError("utility diverges with zero sub-channels")
    return float(np.sum(u.value(n * profile.unit_throughputs)))
