"""Distribution of the number of users per session."""
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TrafficModel:
    """PMF of the user count K on the integers k_low..k_up.

    Positions are always uniform on the cell disk.
    """

    k_low: int
    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        if pmf.ndim != 1 or pmf.size == 0:
            raise ValueError("pmf must be a non-empty vector")
        if np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-12:
            raise ValueError("pmf must be non-negative and sum to 1")
        if self.k_low < 0:
            raise ValueError("k_low must be non-negative")
        object.__setattr__(self, "pmf", pmf / pmf.sum())
        object.__setattr__(self, "k_low", int(self.k_low))

    @classmethod
    def uniform(cls, k_low: int, k_up: int) -> "TrafficModel":
        if not 0 <= k_low <= k_up:
            raise ValueError("need 0 <= k_low <= k_up")
        n = k_up - k_low + 1
        return cls(k_low, np.full(n, 1.0 / n))

    @classmethod
    def from_mean_cv(cls, mean: int, cv: float) -> "TrafficModel":
        """Symmetric law with exact mean and coefficient of variation.

        A uniform law on mean-h..mean+h (h the smallest half-width that reaches
        the target variance) mixed with a point mass at the mean.
        """
        if mean != int(mean) or mean < 0:
            raise ValueError("mean user count must be a non-negative integer")
        mean = int(mean)
        if cv < 0:
            raise ValueError("cv must be non-negative")
        var = (cv * mean) ** 2
        if var == 0:
            return cls(mean, np.array([1.0]))
        h = 1
        while h * (h + 1) / 3.0 < var:
            h += 1
        if h > mean:
            raise ValueError(f"cv={cv} too large for mean {mean}: support would go negative")
        w = 1.0 - 3.0 * var / (h * (h + 1))
        pmf = np.full(2 * h + 1, (1.0 - w) / (2 * h + 1))
        pmf[h] += w
        return cls(mean - h, pmf)

    @property
    def k_up(self) -> int:
        return self.k_low + self.pmf.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.k_low, self.k_up + 1)

    @property
    def mean(self) -> float:
        return float(self.support @ self.pmf)

    @property
    def std(self) -> float:
        return math.sqrt(max(float((self.support - self.mean) ** 2 @ self.pmf), 0.0))

    @property
    def cv(self) -> float:
        return self.std / self.mean if self.mean > 0 else 0.0

    def cdf(self, k):
        """P(K <= k) for real k."""
        k = np.floor(np.asarray(k, dtype=float))
        cum = np.concatenate([[0.0], np.cumsum(self.pmf)])
        idx = np.clip(k - self.k_low + 1, 0, self.pmf.size).astype(int)
        return cum[idx]

    def sf(self, k):
        return 1.0 - self.cdf(k)

    def ppf(self, u):
        """Inverse CDF on uniforms in [0, 1)."""
        cum = np.cumsum(self.pmf)
        idx = np.searchsorted(cum, np.asarray(u, dtype=float), side="right")
        return self.k_low + np.minimum(idx, self.pmf.size - 1)

    def sample_counts(self, rng: np.random.Generator, size=None):
        return self.ppf(rng.random(size))
