"""User utility functions of average throughput."""
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

SCALE_RTOL = 1e-9


class ScaleConditionError(ValueError):
    """The utility's marginal-ratio is not invariant under rate scaling."""


@dataclass(frozen=True)
class UtilitySpec:
    family: str
    value: Callable
    marginal: Callable
    inverse_marginal: Optional[Callable]
    alpha: Optional[float] = None
    satisfies_scale_condition: bool = True
    name: str = field(default="")

    @property
    def is_linear(self) -> bool:
        return self.family == "alpha_fair" and self.alpha == 0

    @property
    def is_proportional_fair(self) -> bool:
        return self.family == "alpha_fair" and self.alpha == 1

    @property
    def marginal_at_zero(self) -> float:
        """Limit of the marginal utility as the rate goes to 0+."""
        if self.family == "alpha_fair":
            return math.inf if self.alpha > 0 else 1.0
        return float(self.marginal(0.0))

    def theta(self, unit_throughputs) -> float:
        """Session utility metric: sum of r * U'(r), normalized by U'(1)."""
        r = np.asarray(unit_throughputs, dtype=float)
        if r.size == 0:
            return 0.0
        if self.is_proportional_fair:
            return float(r.size)
        return float(np.sum(r * self.marginal(r)) / self.marginal(1.0))


def alpha_fair(alpha: float) -> UtilitySpec:
    """Alpha-fair family: log for alpha = 1, r^(1-a)/(1-a) otherwise."""
    alpha = float(alpha)
    if not alpha >= 0:
        raise ValueError("alpha must be non-negative")

    if alpha == 1.0:
        def value(r):
            return np.log(r)
    else:
        def value(r):
            return np.power(r, 1.0 - alpha) / (1.0 - alpha)

    if alpha == 0.0:
        def marginal(r):
            return np.ones_like(np.asarray(r, dtype=float))
        inverse = None  # constant marginal: leasing uses the sub-channel cap instead
    else:
        def marginal(r):
            return np.power(r, -alpha)

        def inverse(y):
            return np.power(y, -1.0 / alpha)

    return UtilitySpec("alpha_fair", value, marginal, inverse, alpha=alpha,
                       satisfies_scale_condition=True, name=f"alpha_fair({alpha:g})")


def default_scale_grid(seed: int = 7, size: int = 64):
    rng = np.random.default_rng(seed)
    r1 = 10.0 ** rng.uniform(-3, 3, size)
    r2 = 10.0 ** rng.uniform(-3, 3, size)
    n = rng.integers(1, 65, size)
    return list(zip(r1, r2, n))


def check_scale_condition(u: UtilitySpec, grid=None) -> bool:
    """True iff U'(r1)/U'(r2) == U'(r1/n)/U'(r2/n) on every grid entry."""
    if grid is None:
        grid = default_scale_grid()
    for r1, r2, n in grid:
        if not (r1 > 0 and r2 > 0 and n >= 1 and int(n) == n):
            raise ValueError(f"invalid scale-grid entry {(r1, r2, n)}")
        lhs = float(u.marginal(r1)) / float(u.marginal(r2))
        rhs = float(u.marginal(r1 / n)) / float(u.marginal(r2 / n))
        if not math.isfinite(lhs) or not math.isfinite(rhs):
            return False
        if abs(lhs - rhs) > SCALE_RTOL * max(abs(lhs), abs(rhs)):
            return False
    return True


def custom(value, marginal, inverse_marginal, name="custom", enforce=True, grid=None) -> UtilitySpec:
    """Wrap caller-supplied U, U' and U'^-1.

    With ``enforce`` (the default) a utility failing the scale check is rejected,
    since the throughput-linearity the leasing layer relies on does not hold.
    """
    spec = UtilitySpec("custom", value, marginal, inverse_marginal, name=name)
    ok = check_scale_condition(spec, grid)
    if enforce and not ok:
        raise ScaleConditionError(
            f"utility {name!r}: U'(r1)/U'(r2) changes when both rates are divided by n; "
            "throughput is not linear in the number of sub-channels"
        )
    return UtilitySpec("custom", value, marginal, inverse_marginal,
                       satisfies_scale_condition=ok, name=name)


def exponential(enforce=False) -> UtilitySpec:
    """U(r) = 1 - exp(-r)."""
    return custom(lambda r: -np.expm1(-np.asarray(r, dtype=float)),
                  lambda r: np.exp(-np.asarray(r, dtype=float)),
                  lambda y: -np.log(y), name="exponential", enforce=enforce)


def diminishing_return(enforce=False) -> UtilitySpec:
    """U(r) = ln(1 + r)."""
    return custom(lambda r: np.log1p(r),
                  lambda r: 1.0 / (1.0 + np.asarray(r, dtype=float)),
                  lambda y: 1.0 / np.asarray(y, dtype=float) - 1.0,
                  name="diminishing_return", enforce=enforce)


def from_config(family: str, alpha: Optional[float] = None) -> UtilitySpec:
    if family == "alpha_fair":
        return alpha_fair(1.0 if alpha is None else alpha)
    if family == "exponential":
        return exponential()
    if family == "diminishing_return":
        return diminishing_return()
    raise ValueError(f"unknown utility family {family!r}")
