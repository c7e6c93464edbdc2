"""Network configuration types, validation, and the piecewise-linear energy model.

Units are fixed across the whole package: times in seconds, energies in kWh,
electrical power in kW, masses in kg, prices in EUR/MWh, state of charge as a
fraction of battery capacity.  Bus mass is the onboard passenger load (an
empty bus has mass 0 here); the energy coefficients absorb the chassis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Sequence

PWL_CONTINUITY_TOL = 1e-6  # kWh, tolerance for pieces agreeing at breakpoints


class ConfigError(ValueError):
    """Raised when a network configuration violates an invariant."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def _per_period(value, period: int) -> float:
    if isinstance(value, (list, tuple)):
        return float(value[period])
    return float(value)


@dataclass(frozen=True)
class StopConfig:
    """A single bus stop: arrival rate (pax/s, scalar or per hour) and alighting share."""

    lam: float | tuple[float, ...]
    xi: float

    def lam_at(self, period: int) -> float:
        return _per_period(self.lam, period)


@dataclass(frozen=True)
class LinkConfig:
    """Inter-stop link: travel-time bounds and affine energy pieces.

    ``pieces`` holds ``(a1, a2, a3)`` with units kWh/s, kWh/kg, kWh.  The
    energy on the link is the max of the pieces, which must form a convex
    function of the travel time (slopes ``a1`` nondecreasing piece to piece).
    ``breakpoints`` are the travel times delimiting the pieces, from
    t_min up to t_max.  Bounds and breakpoints may be given per period.
    """

    t_min: float | tuple[float, ...]
    t_max: float | tuple[float, ...]
    pieces: tuple[tuple[float, float, float], ...]
    breakpoints: tuple[float, ...] | tuple[tuple[float, ...], ...] = ()

    def t_min_at(self, period: int) -> float:
        return _per_period(self.t_min, period)

    def t_max_at(self, period: int) -> float:
        return _per_period(self.t_max, period)

    def breakpoints_at(self, period: int) -> tuple[float, ...]:
        if self.breakpoints and isinstance(self.breakpoints[0], (list, tuple)):
            return tuple(self.breakpoints[period])
        return tuple(self.breakpoints)


@dataclass(frozen=True)
class LineConfig:
    """One bus line: fleet size, route layout, headway target and battery policy."""

    n_b: int
    n_s: int
    H: float
    stops: tuple[StopConfig, ...]
    links: tuple[LinkConfig, ...]
    Q: float
    sigma_min: float
    c_fixed: float = 0.0


@dataclass(frozen=True)
class NetworkConfig:
    """Static description of the whole bus network.

    ``prices`` holds one electricity price per simulation hour, so
    ``len(prices)`` fixes the number of periods N with ``T_sim = 3600 N``.
    """

    lines: tuple[LineConfig, ...]
    n_c: int
    P_char: float
    d_char: float
    E0: float
    m_pax: float
    m_cap: float
    d_pax: float
    prices: tuple[float, ...]
    T_sim: float
    T: float
    big_M: float
    sigma_ini: float = 1.0
    sigma_end: float = 0.3
    tou_epsilon: float = 2.0

    @property
    def n_periods(self) -> int:
        return len(self.prices)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    def period_of(self, t: float) -> int:
        """Hour index of simulation time ``t``, clamped to the price table."""
        return min(max(int(t // 3600.0), 0), self.n_periods - 1)

    def price_at(self, t: float) -> float:
        return self.prices[self.period_of(t)]


@dataclass(frozen=True)
class ValidatedNetwork:
    """Wrapper certifying that the enclosed configuration passed validation."""

    net: NetworkConfig

    def __getattr__(self, name):
        return getattr(self.net, name)


@dataclass
class CostParams:
    """Objective prices: headway deviation (EUR/s), boarding refusal (EUR/pax),
    end-of-horizon charge shortfall (EUR per unit of state of charge)."""

    p_reg: float = 0.0047
    p_reject: float = 100.0
    p_end: float = 40.0


def pwl_energy(link: LinkConfig, period: int, tau: float, mass: float) -> float:
    """Energy (kWh) to traverse ``link`` in ``tau`` seconds with onboard mass ``mass``.

    Evaluates the convex envelope max_q(a1_q tau + a2_q mass + a3_q); under
    the convexity invariant this equals the active piece's value.
    """
    lo, hi = link.t_min_at(period), link.t_max_at(period)
    if not (lo - 1e-9 <= tau <= hi + 1e-9):
        raise ValueError(f"tau={tau} outside travel-time bounds [{lo}, {hi}]")
    return max(a1 * tau + a2 * mass + a3 for a1, a2, a3 in link.pieces)


def scale_link(link: LinkConfig, frac: float) -> LinkConfig:
    """Link restricted to a fraction ``frac`` of its length.

    Slopes stay per-second; intercepts, the mass sensitivity, bounds and
    breakpoints scale with the fraction, so piecing a link into consecutive
    segments conserves total energy when the same piece is active.
    """
    if not 0.0 < frac <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {frac}")

    def scale_bounds(v):
        if isinstance(v, (list, tuple)):
            return tuple(x * frac for x in v)
        return v * frac

    bps = link.breakpoints
    if bps and isinstance(bps[0], (list, tuple)):
        bps = tuple(tuple(x * frac for x in row) for row in bps)
    else:
        bps = tuple(x * frac for x in bps)
    return LinkConfig(
        t_min=scale_bounds(link.t_min),
        t_max=scale_bounds(link.t_max),
        pieces=tuple((a1, a2 * frac, a3 * frac) for a1, a2, a3 in link.pieces),
        breakpoints=bps,
    )


def _validate_link(prefix: str, link: LinkConfig, n_periods: int, errors: list[str]):
    n_q = len(link.pieces)
    if n_q < 1:
        errors.append(f"{prefix}: link has no energy pieces")
        return
    slopes = [p[0] for p in link.pieces]
    if any(s2 < s1 - 1e-12 for s1, s2 in zip(slopes, slopes[1:])):
        errors.append(f"{prefix}: non-convex energy envelope on link (slopes a1 decrease)")
    for period in range(n_periods):
        lo, hi = link.t_min_at(period), link.t_max_at(period)
        if lo > hi:
            errors.append(f"{prefix}: t_min > t_max in period {period}")
        if lo <= 0:
            errors.append(f"{prefix}: t_min must be positive in period {period}")
        bps = link.breakpoints_at(period)
        if not bps:
            continue
        if len(bps) != n_q + 1:
            errors.append(f"{prefix}: expected {n_q + 1} breakpoints, got {len(bps)}")
            continue
        if abs(bps[0] - lo) > 1e-6 or abs(bps[-1] - hi) > 1e-6:
            errors.append(f"{prefix}: breakpoints must span [t_min, t_max] in period {period}")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            errors.append(f"{prefix}: breakpoints not strictly increasing in period {period}")
        # Adjacent pieces must agree at interior breakpoints for all masses;
        # checking the two extreme masses covers the affine span.
        for q in range(n_q - 1):
            t_star = bps[q + 1]
            for m_ref in (0.0, 1.0e5):
                a, b = link.pieces[q], link.pieces[q + 1]
                va = a[0] * t_star + a[1] * m_ref + a[2]
                vb = b[0] * t_star + b[1] * m_ref + b[2]
                if abs(va - vb) > PWL_CONTINUITY_TOL * max(1.0, m_ref * 1e-4):
                    errors.append(
                        f"{prefix}: pieces {q} and {q + 1} disagree at breakpoint "
                        f"{t_star:.3f} (mass {m_ref:g})"
                    )
                    break


def config_violations(net: NetworkConfig) -> list[str]:
    """All invariant violations in ``net``, empty when the config is valid."""
    errors: list[str] = []
    n = net.n_periods
    if net.n_c < 1:
        errors.append("n_c: must be at least 1")
    if any(p < 0 for p in net.prices):
        errors.append("prices: must be nonnegative")
    if abs(net.T_sim - 3600.0 * n) > 1e-6:
        errors.append(f"T_sim: must equal 3600 * len(prices) = {3600 * n}, got {net.T_sim}")
    if not net.T < net.T_sim:
        errors.append("T: planning horizon must be shorter than T_sim")
    if net.big_M <= net.T_sim:
        errors.append("big_M: must strictly exceed T_sim")
    if not 0.0 <= net.sigma_end <= net.sigma_ini <= 1.0:
        errors.append("sigma_ini/sigma_end: need 0 <= sigma_end <= sigma_ini <= 1")
    for fname in ("P_char", "m_pax", "m_cap", "d_pax"):
        if getattr(net, fname) <= 0:
            errors.append(f"{fname}: must be positive")
    if net.d_char < 0 or net.E0 < 0:
        errors.append("d_char/E0: must be nonnegative")

    for li, line in enumerate(net.lines, start=1):
        pref = f"line {li}"
        if line.n_s < 2:
            errors.append(f"{pref}: n_s must be at least 2")
        if line.n_b < 1:
            errors.append(f"{pref}: n_b must be at least 1")
        if line.H <= 0:
            errors.append(f"{pref}: H must be positive")
        if not 0.0 <= line.sigma_min <= 1.0:
            errors.append(f"{pref}: sigma_min must lie in [0, 1]")
        if line.Q <= 0:
            errors.append(f"{pref}: Q must be positive")
        if len(line.stops) != line.n_s:
            errors.append(f"{pref}: expected {line.n_s} stops, got {len(line.stops)}")
        if len(line.links) != line.n_s:
            errors.append(f"{pref}: expected {line.n_s} links, got {len(line.links)}")
        for sj, stop in enumerate(line.stops, start=1):
            lam = stop.lam if isinstance(stop.lam, (list, tuple)) else (stop.lam,)
            if any(x < 0 for x in lam):
                errors.append(f"{pref} stop {sj}: lambda must be nonnegative")
            if isinstance(stop.lam, (list, tuple)) and len(stop.lam) != n:
                errors.append(f"{pref} stop {sj}: lambda list length != number of periods")
            if not 0.0 <= stop.xi <= 1.0:
                errors.append(f"{pref} stop {sj}: xi must lie in [0, 1]")
        if line.stops and abs(line.stops[0].xi - 1.0) > 1e-12:
            errors.append(f"{pref} stop 1: xi at the terminal must equal 1")
        for lj, link in enumerate(line.links, start=1):
            _validate_link(f"{pref} link {lj}", link, n, errors)
    return errors


def validate_config(net: NetworkConfig) -> ValidatedNetwork:
    """Validate ``net`` and return the certified wrapper.

    Raises ConfigError carrying the full violation list otherwise.
    """
    errors = config_violations(net)
    if errors:
        raise ConfigError(errors)
    return ValidatedNetwork(net)


# ---------------------------------------------------------------------------
# JSON serialization.  The document layout mirrors the dataclasses; see
# README for the schema.
# ---------------------------------------------------------------------------

def network_to_dict(net: NetworkConfig) -> dict:
    return asdict(net)


def _tupled(seq):
    return tuple(tuple(x) if isinstance(x, (list, tuple)) else x for x in seq)


def network_from_dict(doc: dict) -> NetworkConfig:
    lines = []
    for ld in doc["lines"]:
        stops = tuple(
            StopConfig(
                lam=tuple(s["lam"]) if isinstance(s["lam"], (list, tuple)) else float(s["lam"]),
                xi=float(s["xi"]),
            )
            for s in ld["stops"]
        )
        links = tuple(
            LinkConfig(
                t_min=tuple(k["t_min"]) if isinstance(k["t_min"], (list, tuple)) else float(k["t_min"]),
                t_max=tuple(k["t_max"]) if isinstance(k["t_max"], (list, tuple)) else float(k["t_max"]),
                pieces=tuple(tuple(float(v) for v in p) for p in k["pieces"]),
                breakpoints=_tupled(k.get("breakpoints", ())),
            )
            for k in ld["links"]
        )
        lines.append(
            LineConfig(
                n_b=int(ld["n_b"]),
                n_s=int(ld["n_s"]),
                H=float(ld["H"]),
                stops=stops,
                links=links,
                Q=float(ld["Q"]),
                sigma_min=float(ld["sigma_min"]),
                c_fixed=float(ld.get("c_fixed", 0.0)),
            )
        )
    return NetworkConfig(
        lines=tuple(lines),
        n_c=int(doc["n_c"]),
        P_char=float(doc["P_char"]),
        d_char=float(doc["d_char"]),
        E0=float(doc["E0"]),
        m_pax=float(doc["m_pax"]),
        m_cap=float(doc["m_cap"]),
        d_pax=float(doc["d_pax"]),
        prices=tuple(float(p) for p in doc["prices"]),
        T_sim=float(doc["T_sim"]),
        T=float(doc["T"]),
        big_M=float(doc["big_M"]),
        sigma_ini=float(doc.get("sigma_ini", 1.0)),
        sigma_end=float(doc.get("sigma_end", 0.3)),
        tou_epsilon=float(doc.get("tou_epsilon", 2.0)),
    )


def load_network(path: str) -> NetworkConfig:
    with open(path) as fh:
        return network_from_dict(json.load(fh))


def save_network(net: NetworkConfig, path: str):
    with open(path, "w") as fh:
        json.dump(network_to_dict(net), fh, indent=2, sort_keys=True)
        fh.write("\n")


def canonical_json(obj) -> str:
    """Deterministic JSON used for hashing and byte-for-byte comparisons."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
