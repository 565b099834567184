"""Cell geometry, path loss, Rayleigh fading and per-user rate distributions."""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

LN2 = math.log(2.0)


@dataclass(frozen=True)
class ChannelParams:
    """Physical-layer constants of a single downlink cell.

    The received SNR is calibrated at the cell edge. Either give the edge SNR
    directly (``reference_snr_edge_db``) or give ``tx_power`` and ``noise_psd``,
    in which case the path loss is normalized to 1 at the edge and the edge SNR
    is ``P / (N0 B)``. The capacity margin divides the SNR in both cases.
    """

    bandwidth_per_sc: float = 1.0
    capacity_margin: float = 1.0
    pathloss_exponent: float = 3.67
    cell_radius: float = 1000.0
    reference_snr_edge_db: Optional[float] = -6.0
    tx_power: Optional[float] = None
    noise_psd: Optional[float] = None
    min_distance_fraction: float = 1e-3

    def __post_init__(self):
        physical = self.tx_power is not None or self.noise_psd is not None
        if physical and self.reference_snr_edge_db is not None:
            raise ValueError("give either reference_snr_edge_db or (tx_power, noise_psd), not both")
        if physical and (self.tx_power is None or self.noise_psd is None):
            raise ValueError("tx_power and noise_psd must be given together")
        if not physical and self.reference_snr_edge_db is None:
            raise ValueError("no SNR calibration: set reference_snr_edge_db or (tx_power, noise_psd)")
        for name in ("bandwidth_per_sc", "cell_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if physical and not (self.tx_power > 0 and self.noise_psd > 0):
            raise ValueError("tx_power and noise_psd must be positive")
        if not self.capacity_margin >= 1:
            raise ValueError("capacity_margin must be >= 1")
        if not self.pathloss_exponent > 2:
            raise ValueError("pathloss_exponent must exceed 2")
        if not 0 < self.min_distance_fraction < 1:
            raise ValueError("min_distance_fraction must lie in (0, 1)")

    @property
    def edge_snr(self) -> float:
        """Linear SNR at the cell edge, before the capacity margin."""
        if self.reference_snr_edge_db is not None:
            return 10.0 ** (self.reference_snr_edge_db / 10.0)
        return self.tx_power / (self.noise_psd * self.bandwidth_per_sc)

    def pathloss(self, distance):
        return (np.asarray(distance, dtype=float) / self.cell_radius) ** (-self.pathloss_exponent)

    def mean_snr(self, distance):
        """Average received SNR (unit-mean fading) at ``distance``, margin included."""
        return self.edge_snr * self.pathloss(distance) / self.capacity_margin


@dataclass(frozen=True)
class UserSet:
    """Realized users of one session: positions (K, 2) inside the cell disk."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "positions", pos)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def distances(self) -> np.ndarray:
        return np.hypot(self.positions[:, 0], self.positions[:, 1])

    def validate(self, channel: ChannelParams) -> None:
        if np.any(self.distances > channel.cell_radius * (1 + 1e-12)):
            raise ValueError("user position outside the cell")

    @classmethod
    def at_distances(cls, distances) -> "UserSet":
        d = np.asarray(distances, dtype=float)
        return cls(np.column_stack([d, np.zeros_like(d)]))


def _check_distance(params, distance):
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0) or np.any(d > params.cell_radius * (1 + 1e-12)):
        raise ValueError("distance must lie in (0, cell_radius]")
    return d


def instantaneous_rate(params: ChannelParams, distance, fading_gain):
    """Achievable rate B*log2(1 + SNR(d)*g) on one sub-channel."""
    d = _check_distance(params, distance)
    g = np.asarray(fading_gain, dtype=float)
    if np.any(g < 0):
        raise ValueError("fading gain must be non-negative")
    rate = params.bandwidth_per_sc * np.log1p(params.mean_snr(d) * g) / LN2
    return float(rate) if rate.ndim == 0 else rate


def _scaled_exp1(x: float) -> float:
    """exp(x) * E1(x) without overflow."""
    if x < 600.0:
        return math.exp(x) * float(special.exp1(x))
    # asymptotic series, accurate to double precision for x >= 600
    inv = 1.0 / x
    return inv * (1 - inv + 2 * inv**2 - 6 * inv**3 + 24 * inv**4)


@dataclass(frozen=True)
class RateDistribution:
    """Law of B*log2(1 + S*g) with g ~ Exp(1)."""

    user_distance: float
    mean_snr: float
    bandwidth: float

    def cdf(self, eta):
        eta = np.maximum(np.asarray(eta, dtype=float), 0.0)
        return -np.expm1(-np.expm1(eta * LN2 / self.bandwidth) / self.mean_snr)

    def sf(self, eta):
        eta = np.maximum(np.asarray(eta, dtype=float), 0.0)
        return np.exp(-np.expm1(eta * LN2 / self.bandwidth) / self.mean_snr)

    def pdf(self, eta):
        eta = np.asarray(eta, dtype=float)
        x = eta * LN2 / self.bandwidth
        with np.errstate(over="ignore"):
            dens = np.exp(x - np.expm1(x) / self.mean_snr) * LN2 / (self.bandwidth * self.mean_snr)
        return np.where(eta < 0, 0.0, dens)

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        return self.bandwidth * np.log1p(-self.mean_snr * np.log1p(-p)) / LN2

    @property
    def mean(self) -> float:
        return self.bandwidth * _scaled_exp1(1.0 / self.mean_snr) / LN2

    def upper_rate(self, tail: float = 1e-12) -> float:
        """Rate above which the survival probability is below ``tail``."""
        return float(self.ppf(1.0 - tail))

    def sample(self, rng: np.random.Generator, size=None):
        g = rng.standard_exponential(size)
        return self.bandwidth * np.log1p(self.mean_snr * g) / LN2


def rate_distribution(params: ChannelParams, distance: float) -> RateDistribution:
    d = float(_check_distance(params, distance))
    return RateDistribution(d, float(params.mean_snr(d)), params.bandwidth_per_sc)


def positions_from_uniforms(params: ChannelParams, u_radius, u_angle) -> np.ndarray:
    """Map uniforms to points uniform on the disk, keeping the minimum distance."""
    f2 = params.min_distance_fraction**2
    rho = params.cell_radius * np.sqrt(f2 + (1.0 - f2) * np.asarray(u_radius))
    phi = 2.0 * np.pi * np.asarray(u_angle)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi)], axis=-1)


def sample_user_set(traffic, params: ChannelParams, rng: np.random.Generator) -> UserSet:
    """Draw K from the traffic model, then K positions uniform on the cell disk."""
    k = int(traffic.sample_counts(rng))
    u = rng.random((k, 2))
    return UserSet(positions_from_uniforms(params, u[:, 0], u[:, 1]))
