"""Two-stage spectrum leasing for a virtual operator.

Advance reservation of sub-channels for a whole period, on-demand requests per
session, and the channel-aware scheduler whose throughput profile ties them
together.
"""
from .channel import ChannelParams, RateDistribution, UserSet, instantaneous_rate, rate_distribution, sample_user_set
from .dra import (ThroughputProfile, allocate_slot, phi, simulate_session, solve_fixed_point,
                  system_utility)
from .kernels import BACKEND
from .leasing import (LeasePlan, PriceModel, ScipyPrice, UniformPrice, baseline_on_demand_only,
                      baseline_reservation_only, optimal_on_demand, pf_reservation_root,
                      sample_gradient, session_surplus, sgd_from_thetas, sgd_reservation)
from .traffic import TrafficModel
from .utility import UtilitySpec, alpha_fair, check_scale_condition

__version__ = "0.1.0"
