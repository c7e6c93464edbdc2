"""Synthetic bus network generation.

Routes of randomized length, stop count and headway share stop 1 as the
common terminal where all chargers sit (no depot detour).  Passenger rates
and alighting shares are uniform along each route, travel-time bounds come
from a 50 km/h speed limit and a 30 km/h minimum speed, and the remaining
parameters use the reference case-study values.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from ..config import LineConfig, LinkConfig, NetworkConfig, StopConfig
from ..horizon import route_cycle_time

SPEED_LIMIT_MPS = 50.0 / 3.6
SPEED_MIN_MPS = 30.0 / 3.6

# Empty-bus consumption rates (kWh/km) at the fast / nominal / slow ends of
# the feasible travel-time range, and the load sensitivity per km and kg.
E_FAST_KWH_KM = 1.6
E_MID_KWH_KM = 1.25
E_SLOW_KWH_KM = 1.1
MASS_KWH_PER_KG_KM = 4.0e-5

DEFAULTS = dict(
    n_c=2,
    P_char=300.0,
    d_char=10.0,
    E0=0.0,
    m_pax=60.0,
    m_cap=19500.0,
    d_pax=1.5,
    T_sim=16 * 3600.0,
    T=2 * 3600.0,
    big_M=1.0e5,
    Q=264.0,
    sigma_min=0.3,
    sigma_ini=1.0,
    sigma_end=0.3,
    tou_epsilon=2.0,
)


def price_profiles() -> dict[str, list[float]]:
    """Bundled 24-hour electricity price profiles (EUR/MWh)."""
    with resources.files("ebusopt.data").joinpath("price_profiles.json").open() as fh:
        return json.load(fh)


def day_slice(profile: list[float], start_hour: int, n_hours: int) -> tuple[float, ...]:
    """Operating-day slice of a 24-value profile; night hours are ignored."""
    return tuple(float(profile[(start_hour + h) % 24]) for h in range(n_hours))


def _make_link(rng: np.random.Generator, length_m: float) -> LinkConfig:
    km = length_m / 1000.0
    t_min = length_m / SPEED_LIMIT_MPS
    t_max = length_m / SPEED_MIN_MPS
    t_mid = 0.5 * (t_min + t_max)
    e_fast, e_mid, e_slow = (km * v for v in (E_FAST_KWH_KM, E_MID_KWH_KM, E_SLOW_KWH_KM))
    a2 = MASS_KWH_PER_KG_KM * km
    a1_fast = (e_mid - e_fast) / (t_mid - t_min)
    a1_slow = (e_slow - e_mid) / (t_max - t_mid)
    pieces = (
        (a1_fast, a2, e_fast - a1_fast * t_min),
        (a1_slow, a2, e_mid - a1_slow * t_mid),
    )
    return LinkConfig(
        t_min=t_min, t_max=t_max, pieces=pieces, breakpoints=(t_min, t_mid, t_max)
    )


def _fixed_charging_time(net_kwargs, line: LineConfig, cycle_s: float) -> float:
    """Charging duration that lands a full-at-dawn bus at sigma_min by day end."""
    e_cycle = 0.0
    for link in line.links:
        t_mid = 0.5 * (link.t_min_at(0) + link.t_max_at(0))
        e_cycle += max(a1 * t_mid + a3 for a1, _, a3 in link.pieces)
    visits = max(net_kwargs["T_sim"] / cycle_s, 1.0)
    battery = (net_kwargs["sigma_ini"] - net_kwargs["sigma_min"]) * net_kwargs["Q"]
    per_visit_kwh = max(0.0, (visits * e_cycle - battery) / visits)
    return round(3600.0 * per_visit_kwh / net_kwargs["P_char"], 0)


def generate_synthetic_network(
    n_L: int,
    n_c: int,
    seed: int | None = None,
    *,
    prices: tuple[float, ...] | None = None,
    price_profile: str = "twin_peaks",
    n_s_range: tuple[int, int] = (15, 30),
    link_m_range: tuple[float, float] = (1100.0, 1700.0),
    headway_range: tuple[float, float] = (420.0, 840.0),
    lam_range: tuple[float, float] = (0.012, 0.030),
    xi: float = 0.25,
    extra_buses: int = 1,
    **overrides,
) -> NetworkConfig:
    """Random network with ``n_L`` lines and ``n_c`` chargers at the terminal."""
    if n_L < 1 or n_c < 1:
        raise ValueError("need n_L >= 1 and n_c >= 1")
    rng = np.random.default_rng(seed)
    kw = dict(DEFAULTS)
    kw.update(overrides)
    kw["n_c"] = n_c
    n_hours = int(round(kw["T_sim"] / 3600.0))
    if prices is None:
        prices = day_slice(price_profiles()[price_profile], 5, n_hours)

    lines = []
    for _ in range(n_L):
        n_s = int(rng.integers(n_s_range[0], n_s_range[1] + 1))
        H = float(rng.integers(int(headway_range[0] // 30), int(headway_range[1] // 30) + 1) * 30)
        lam = float(rng.uniform(*lam_range))
        stops = tuple(
            StopConfig(lam=lam, xi=1.0 if j == 0 else xi) for j in range(n_s)
        )
        links = tuple(_make_link(rng, float(rng.uniform(*link_m_range))) for _ in range(n_s))
        line = LineConfig(
            n_b=1,  # placeholder until the cycle time is known
            n_s=n_s,
            H=H,
            stops=stops,
            links=links,
            Q=kw["Q"],
            sigma_min=kw["sigma_min"],
        )
        probe = NetworkConfig(
            lines=(line,),
            n_c=n_c,
            P_char=kw["P_char"],
            d_char=kw["d_char"],
            E0=kw["E0"],
            m_pax=kw["m_pax"],
            m_cap=kw["m_cap"],
            d_pax=kw["d_pax"],
            prices=prices,
            T_sim=kw["T_sim"],
            T=kw["T"],
            big_M=kw["big_M"],
        )
        cycle = route_cycle_time(probe, 1)
        n_b = int(np.ceil(cycle / H)) + extra_buses
        lines.append(
            LineConfig(
                n_b=n_b,
                n_s=n_s,
                H=H,
                stops=stops,
                links=links,
                Q=kw["Q"],
                sigma_min=kw["sigma_min"],
                c_fixed=_fixed_charging_time(kw, line, cycle),
            )
        )

    return NetworkConfig(
        lines=tuple(lines),
        n_c=n_c,
        P_char=kw["P_char"],
        d_char=kw["d_char"],
        E0=kw["E0"],
        m_pax=kw["m_pax"],
        m_cap=kw["m_cap"],
        d_pax=kw["d_pax"],
        prices=tuple(prices),
        T_sim=kw["T_sim"],
        T=kw["T"],
        big_M=kw["big_M"],
        sigma_ini=kw["sigma_ini"],
        sigma_end=kw["sigma_end"],
        tou_epsilon=kw["tou_epsilon"],
    )


def generate_tiny_network(
    n_L: int = 2,
    n_c: int = 1,
    seed: int | None = None,
    *,
    max_binaries: int | None = 12,
    **overrides,
) -> NetworkConfig:
    """Small random network whose planning instances stay enumerable.

    Short routes, one or two buses per line, and a short horizon keep the
    binary count per instance at most ``max_binaries`` (resampled until the
    bound holds).
    """
    rng = np.random.default_rng(seed)
    base = dict(
        n_s_range=(3, 5),
        link_m_range=(500.0, 900.0),
        headway_range=(300.0, 480.0),
        lam_range=(0.004, 0.012),
        extra_buses=0,
        T=1800.0,
        T_sim=4 * 3600.0,
        Q=80.0,
    )
    base.update(overrides)
    for attempt in range(64):
        net = generate_synthetic_network(
            n_L, n_c, seed=int(rng.integers(0, 2**31)), **base
        )
        # Cap fleet sizes so visit pairs stay small.
        lines = tuple(
            LineConfig(
                n_b=min(line.n_b, 2),
                n_s=line.n_s,
                H=line.H,
                stops=line.stops,
                links=line.links,
                Q=line.Q,
                sigma_min=line.sigma_min,
                c_fixed=line.c_fixed,
            )
            for line in net.lines
        )
        net = NetworkConfig(
            lines=lines,
            n_c=net.n_c,
            P_char=net.P_char,
            d_char=net.d_char,
            E0=net.E0,
            m_pax=net.m_pax,
            m_cap=net.m_cap,
            d_pax=net.d_pax,
            prices=net.prices,
            T_sim=net.T_sim,
            T=net.T,
            big_M=net.big_M,
            sigma_ini=net.sigma_ini,
            sigma_end=net.sigma_end,
            tou_epsilon=net.tou_epsilon,
        )
        if max_binaries is None:
            return net
        if _count_binaries(net) <= max_binaries:
            return net
    raise RuntimeError("could not sample a tiny network under the binary cap")


def _count_binaries(net: NetworkConfig) -> int:
    from ..horizon import build_horizon, initial_states
    from ..milp import index_variables
    from ..config import validate_config

    states = initial_states(net, mode="even")
    inst = build_horizon(validate_config(net), states, 0.0)
    idx = index_variables(inst)
    return len(idx.binary_cols)
