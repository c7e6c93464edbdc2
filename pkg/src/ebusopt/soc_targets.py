"""End-of-horizon state-of-charge targets.

The planner penalizes buses whose predicted state of charge falls below a
target sigma_goal at the end of the look-ahead horizon.  The target ramps
from sigma_ini down to sigma_end over the day, either linearly or along a
price-aware piecewise-linear profile that slows the ramp during cheap hours
(so buses are nudged to charge when electricity is cheap).
"""

from __future__ import annotations

from .config import NetworkConfig

# Hourly price deviations are weighted in EUR/kWh; with EUR/MWh inputs the
# default spread coefficient would drive weights negative.
_EUR_PER_MWH_TO_EUR_PER_KWH = 1e-3


def charging_weights(prices, epsilon: float) -> list[float]:
    """Hourly ramp weights (1 + eps * (p_n - mean)) / N, summing to one.

    ``epsilon`` controls how strongly the desired charging pattern deviates
    from uniform hourly charging; it must be small enough to keep every
    weight nonnegative for the given price spread.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    n = len(prices)
    if n == 0:
        raise ValueError("price list is empty")
    mean = sum(prices) / n
    weights = [(1.0 + epsilon * (p - mean)) / n for p in prices]
    if any(w < 0 for w in weights):
        raise ValueError("epsilon too large for price spread")
    return weights


def sigma_breakpoints(weights, sigma_ini: float, sigma_end: float) -> list[float]:
    """Desired state of charge at each hour boundary, from sigma_ini to sigma_end."""
    if not 0.0 <= sigma_end <= sigma_ini <= 1.0:
        raise ValueError("need 0 <= sigma_end <= sigma_ini <= 1")
    total = sum(weights)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {total}")
    drop = sigma_ini - sigma_end
    out = [sigma_ini]
    for w in weights:
        out.append(out[-1] - w * drop)
    out[-1] = sigma_end  # exact endpoint despite rounding
    return out


def sigma_desired(net: NetworkConfig, t: float) -> float:
    """Price-aware desired state of charge at simulation time ``t`` in [0, T_sim]."""
    if not 0.0 <= t <= net.T_sim + 1e-9:
        raise ValueError(f"t={t} outside [0, {net.T_sim}]")
    weights = charging_weights(
        [p * _EUR_PER_MWH_TO_EUR_PER_KWH for p in net.prices], net.tou_epsilon
    )
    bps = sigma_breakpoints(weights, net.sigma_ini, net.sigma_end)
    n = min(int(t // 3600.0), net.n_periods - 1)
    frac = (t - 3600.0 * n) / 3600.0
    return bps[n] + (bps[n + 1] - bps[n]) * frac


def sigma_goal_tou(net: NetworkConfig, t_sim: float) -> float:
    """Price-aware end-of-horizon target: the desired value shifted by the horizon."""
    _check_range(net, t_sim)
    return sigma_desired(net, t_sim + net.T)


def sigma_goal_linear(net: NetworkConfig, t_sim: float) -> float:
    """Linear-ramp end-of-horizon target."""
    _check_range(net, t_sim)
    return net.sigma_end + (net.T_sim - net.T - t_sim) / net.T_sim * (
        net.sigma_ini - net.sigma_end
    )


def _check_range(net: NetworkConfig, t_sim: float):
    if not 0.0 <= t_sim <= net.T_sim - net.T + 1e-9:
        raise ValueError(f"t_sim={t_sim} outside [0, {net.T_sim - net.T}]")
