"""Mapping the time horizon onto per-bus spatial horizons.

Every bus gets an ordered list of future stop visits covering the planning
window.  Visit parameters (arrival rates, travel bounds, energy pieces,
electricity price) are resolved once, by the hour of the nominally predicted
arrival.  The first visit of each bus is anchored to committed plant state:
either a committed arrival time (bus already rolling toward a stop, or idle
at one) or a committed departure time (bus held at a stop, about to enter
the next link, whose travel time is still free to choose).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .config import (
    NetworkConfig,
    ValidatedNetwork,
    LinkConfig,
    canonical_json,
    pwl_energy,
    scale_link,
)
from .soc_targets import sigma_goal_tou


class HorizonError(ValueError):
    pass


@dataclass(frozen=True)
class BusState:
    """Snapshot of one bus as seen by the planner.

    ``position`` is ("stop", j) or ("link", j, frac).  ``start_kind`` tells
    how the first modeled visit is anchored: "arrival" fixes its arrival time
    at ``start_time`` (committed traversal or idle bus), "departure" fixes the
    departure onto the link entering it.  ``pending_drain_kwh`` and
    ``pending_gain_kwh`` are energy amounts already committed (remaining
    traversal, remaining charge of an in-progress session) but not yet
    reflected in ``soc``.  ``last_arrivals`` maps stop index to this bus's
    most recent arrival time there, used to close headway constraints whose
    predecessor visit precedes the horizon.
    """

    line: int
    bus: int
    position: tuple
    t_now: float
    mass: float
    soc: float
    charging: tuple[int, float] | None = None
    start_kind: str = "arrival"
    start_time: float | None = None
    pending_drain_kwh: float = 0.0
    pending_gain_kwh: float = 0.0
    last_arrivals: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ResolvedLink:
    t_min: float
    t_max: float
    pieces: tuple[tuple[float, float, float], ...]


@dataclass(frozen=True)
class VisitSpec:
    """One predicted stop visit with all parameters resolved by arrival hour."""

    stop: int
    k: int
    t_pred: float
    period: int
    lam: float
    xi: float
    link: ResolvedLink          # outgoing link, toward the next stop
    price: float | None         # EUR/MWh, terminal visits only
    pred: tuple                 # ("var", pred_bus, pred_visit_index) or ("const", t)


@dataclass(frozen=True)
class BusHorizon:
    line: int
    bus: int
    start_kind: str
    start_time: float
    m0: float
    sigma0: float
    entry_link: ResolvedLink | None
    visits: tuple[VisitSpec, ...]


@dataclass(frozen=True)
class LineMeta:
    H: float
    Q: float
    sigma_min: float
    n_b: int
    n_s: int


@dataclass(frozen=True)
class HorizonInstance:
    t_sim: float
    T: float
    sigma_goal: float
    n_c: int
    P_char: float
    d_char: float
    E0: float
    m_pax: float
    m_cap: float
    d_pax: float
    big_M: float
    lines: tuple[LineMeta, ...]
    buses: tuple[BusHorizon, ...]

    def line_meta(self, line: int) -> LineMeta:
        return self.lines[line - 1]

    def bus_horizon(self, line: int, bus: int) -> BusHorizon:
        for bh in self.buses:
            if bh.line == line and bh.bus == bus:
                return bh
        raise KeyError((line, bus))

    def to_canonical_json(self) -> str:
        return canonical_json(asdict(self))


def next_stop(n_s: int, j: int) -> int:
    """Successor stop on a circular route with stops 1..n_s (n_s + 1 is 1)."""
    return j % n_s + 1


def nominal_tau(link: LinkConfig, period: int) -> float:
    return 0.5 * (link.t_min_at(period) + link.t_max_at(period))


def resolve_link(link: LinkConfig, period: int) -> ResolvedLink:
    return ResolvedLink(
        t_min=link.t_min_at(period),
        t_max=link.t_max_at(period),
        pieces=link.pieces,
    )


def dwell_estimate(net: NetworkConfig, line_idx: int, stop: int, period: int) -> float:
    """Steady-state dwell guess: one headway of boardings at d_pax each."""
    line = net.lines[line_idx - 1]
    return net.d_pax * line.stops[stop - 1].lam_at(period) * line.H


def route_cycle_time(net: NetworkConfig, line_idx: int, period: int = 0) -> float:
    """Nominal time for one full loop, dwells included."""
    line = net.lines[line_idx - 1]
    total = 0.0
    for j in range(1, line.n_s + 1):
        total += dwell_estimate(net, line_idx, j, period)
        total += nominal_tau(line.links[j - 1], period)
    return total


def _predict_visits(net: NetworkConfig, st: BusState, horizon_end: float):
    """Walk the route at nominal speed and collect (stop, t_pred) pairs."""
    line = net.lines[st.line - 1]
    if st.position[0] == "stop":
        at = st.position[1]
    else:
        at = st.position[1]  # on link j: heading to successor of stop j
    if st.start_kind == "departure":
        first = next_stop(line.n_s, at)
        t = st.start_time + nominal_tau(line.links[at - 1], net.period_of(st.start_time))
    else:
        first = at if st.position[0] == "stop" else next_stop(line.n_s, at)
        t = st.start_time if st.start_time is not None else st.t_now
    out = []
    stop = first
    while t <= horizon_end + 1e-9:
        out.append((stop, t))
        t += dwell_estimate(net, st.line, stop, net.period_of(t))
        t += nominal_tau(line.links[stop - 1], net.period_of(t))
        stop = next_stop(line.n_s, stop)
    return out


def build_horizon(
    vnet: ValidatedNetwork, states: list[BusState], t_sim: float
) -> HorizonInstance:
    """Build the planning instance for one receding-horizon solve at ``t_sim``."""
    net = vnet.net
    if t_sim > net.T_sim - net.T + 1e-9:
        raise HorizonError(f"t_sim={t_sim} exceeds T_sim - T = {net.T_sim - net.T}")
    horizon_end = t_sim + net.T

    by_line: dict[int, dict[int, BusState]] = {}
    for st in states:
        by_line.setdefault(st.line, {})[st.bus] = st

    predicted: dict[tuple[int, int], list[tuple[int, float]]] = {}
    for st in states:
        seq = _predict_visits(net, st, horizon_end)
        if not seq:
            raise HorizonError(
                f"bus {st.bus} of line {st.line} has zero predicted visits "
                f"before t={horizon_end} (stalled state)"
            )
        predicted[(st.line, st.bus)] = seq

    buses = []
    for st in sorted(states, key=lambda s: (s.line, s.bus)):
        line = net.lines[st.line - 1]
        pred_bus = st.bus - 1 if st.bus > 1 else line.n_b
        pred_state = by_line[st.line][pred_bus]
        pred_seq = predicted[(st.line, pred_bus)]

        visits = []
        k_count: dict[int, int] = {}
        for stop, t_pred in predicted[(st.line, st.bus)]:
            k_count[stop] = k_count.get(stop, 0) + 1
            period = net.period_of(t_pred)
            # Predecessor arrival immediately preceding this one: the latest
            # of the predecessor's in-horizon visits to this stop that is
            # predicted strictly earlier, else its last recorded arrival.
            pred_ref = None
            for idx, (pstop, pt) in enumerate(pred_seq):
                if pstop == stop and pt < t_pred - 1e-9:
                    pred_ref = ("var", pred_bus, idx)
            if pred_ref is None:
                hist = pred_state.last_arrivals.get(stop)
                if hist is None:
                    hist = t_pred - line.H  # assume the predecessor was on headway
                pred_ref = ("const", float(hist))
            visits.append(
                VisitSpec(
                    stop=stop,
                    k=k_count[stop],
                    t_pred=t_pred,
                    period=period,
                    lam=line.stops[stop - 1].lam_at(period),
                    xi=line.stops[stop - 1].xi,
                    link=resolve_link(line.links[stop - 1], period),
                    price=net.prices[period] if stop == 1 else None,
                    pred=pred_ref,
                )
            )

        if st.start_kind == "departure":
            at = st.position[1]
            entry = resolve_link(line.links[at - 1], net.period_of(st.start_time))
        else:
            entry = None
        sigma0 = st.soc + (st.pending_gain_kwh - st.pending_drain_kwh) / line.Q
        buses.append(
            BusHorizon(
                line=st.line,
                bus=st.bus,
                start_kind=st.start_kind,
                start_time=float(st.start_time if st.start_time is not None else st.t_now),
                m0=st.mass,
                sigma0=min(max(sigma0, 0.0), 1.0),
                entry_link=entry,
                visits=tuple(visits),
            )
        )

    lines_meta = tuple(
        LineMeta(H=l.H, Q=l.Q, sigma_min=l.sigma_min, n_b=l.n_b, n_s=l.n_s)
        for l in net.lines
    )
    return HorizonInstance(
        t_sim=t_sim,
        T=net.T,
        sigma_goal=sigma_goal_tou(net, t_sim),
        n_c=net.n_c,
        P_char=net.P_char,
        d_char=net.d_char,
        E0=net.E0,
        m_pax=net.m_pax,
        m_cap=net.m_cap,
        d_pax=net.d_pax,
        big_M=net.big_M,
        lines=lines_meta,
        buses=tuple(buses),
    )


def initial_states(
    net: NetworkConfig,
    t0: float = 0.0,
    sigma0: float | None = None,
    mode: str = "even",
    seed: int | None = None,
) -> list[BusState]:
    """Place every bus on its route at ``t0`` with a synthetic arrival history.

    "even" spaces buses one target headway apart along the nominal route
    timeline; "random" draws the spacings uniformly over the loop (bus order
    along the route is preserved so the wrap-around predecessor convention
    stays valid).  Buses start empty, at ``sigma0`` (default sigma_ini).
    """
    rng = np.random.default_rng(seed)
    states = []
    for li, line in enumerate(net.lines, start=1):
        cycle = route_cycle_time(net, li, period=net.period_of(t0))
        if mode == "even":
            offsets = [((line.n_b - i) * line.H) % cycle for i in range(1, line.n_b + 1)]
        elif mode == "random":
            draws = sorted(rng.uniform(0.0, cycle, size=line.n_b), reverse=True)
            offsets = list(draws)
        else:
            raise ValueError(f"unknown placement mode {mode!r}")

        # Arrival/departure timeline of one nominal loop, measured from a
        # terminal departure at elapsed 0.
        arr: dict[int, float] = {}
        dep: dict[int, float] = {}
        t = 0.0
        stop = next_stop(line.n_s, 1)
        for _ in range(line.n_s):
            t += nominal_tau(line.links[(stop - 2) % line.n_s], net.period_of(t0))
            arr[stop] = t
            t += dwell_estimate(net, li, stop, net.period_of(t0))
            dep[stop] = t
            stop = next_stop(line.n_s, stop)
        cycle_nominal = dep[1]  # back at the terminal, exchange done

        # Departure anchors for locating a bus on a link; the loop frame
        # starts at a terminal departure, so the terminal anchors at 0.
        dep_anchor = dict(dep)
        dep_anchor[1] = 0.0

        for bus, elapsed in enumerate(offsets, start=1):
            elapsed = elapsed % cycle_nominal
            # Locate the bus on the loop timeline.
            pos = None
            for j in sorted(arr):
                if arr[j] <= elapsed < dep[j]:
                    pos = ("stop", j)
                    start_kind, start_time = "departure", t0 + (dep[j] - elapsed)
                    break
            if pos is None:
                # On some link: find the stop whose departure precedes elapsed.
                prev = max(
                    (j for j in dep_anchor if dep_anchor[j] <= elapsed),
                    key=lambda j: dep_anchor[j],
                )
                nxt = next_stop(line.n_s, prev)
                t_arr = arr[nxt] if arr[nxt] >= elapsed else cycle_nominal + arr[nxt]
                span = max(t_arr - dep_anchor[prev], 1e-9)
                frac = min(max(1.0 - (t_arr - elapsed) / span, 0.0), 1.0)
                pos = ("link", prev, frac)
                start_kind, start_time = "arrival", t0 + (t_arr - elapsed)

            last_arrivals = {
                j: t0 - ((elapsed - arr[j]) % cycle_nominal) for j in arr
            }
            # Remaining energy on the current link, committed at nominal speed.
            pending = 0.0
            if pos[0] == "link":
                rem = 1.0 - pos[2]
                if rem > 1e-9:
                    seg = scale_link(line.links[pos[1] - 1], rem)
                    pending = pwl_energy(
                        seg,
                        net.period_of(t0),
                        rem * nominal_tau(line.links[pos[1] - 1], net.period_of(t0)),
                        0.0,
                    )
            states.append(
                BusState(
                    line=li,
                    bus=bus,
                    position=pos,
                    t_now=t0,
                    mass=0.0,
                    soc=net.sigma_ini if sigma0 is None else sigma0,
                    start_kind=start_kind,
                    start_time=start_time,
                    pending_drain_kwh=pending,
                    last_arrivals=last_arrivals,
                )
            )
    return states
