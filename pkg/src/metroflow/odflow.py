"""Time-of-day destination shares per origin and OD flow forecasts.

Shares come from smoothed journey counts (Dirichlet pseudo-counts) and are
multiplied into the arrival forecast to split it over destinations.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from typing import Sequence

from .arrivals import ArrivalForecast
from .core import ConfigError, StationId, TimeBin, bin_of, bins_per_day
from .ingest import Journey


@dataclass(frozen=True)
class PeriodDef:
    """Partition of the day into equal groups of bins (default hourly)."""

    bins_per_period: int = 4
    bin_minutes: int = 15

    def period_of(self, bin_index: int) -> int:
        return bin_index // self.bins_per_period

    @property
    def n_periods(self) -> int:
        n = bins_per_day(self.bin_minutes)
        return (n + self.bins_per_period - 1) // self.bins_per_period

    def bin_span(self, period: int) -> tuple[int, int]:
        """Inclusive [first, last] bin of a period."""
        n = bins_per_day(self.bin_minutes)
        lo = period * self.bins_per_period
        return lo, min(lo + self.bins_per_period, n) - 1


@dataclass
class DestinationShares:
    origin: StationId
    destinations: tuple[StationId, ...]
    alpha: float
    period_def: PeriodDef
    # effective (possibly decayed) counts per period per destination
    counts: list[dict[StationId, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("alpha must be > 0")
        if not self.counts:
            self.counts = [{d: 0.0 for d in self.destinations}
                           for _ in range(self.period_def.n_periods)]

    def shares(self, period: int) -> dict[StationId, float]:
        c = self.counts[period]
        total = sum(c.values()) + self.alpha * len(self.destinations)
        return {d: (c[d] + self.alpha) / total for d in self.destinations}

    def shares_for_bin(self, bin_index: int) -> dict[StationId, float]:
        return self.shares(self.period_def.period_of(bin_index))

    def to_json(self) -> dict:
        periods = []
        for p, c in enumerate(self.counts):
            lo, hi = self.period_def.bin_span(p)
            periods.append({"bins": [lo, hi], "counts": c})
        return {"origin": self.origin, "alpha": self.alpha, "periods": periods}

    @classmethod
    def from_json(cls, doc: dict | str, period_def: PeriodDef | None = None
                  ) -> "DestinationShares":
        if isinstance(doc, str):
            doc = json.loads(doc)
        periods = doc["periods"]
        dests = tuple(sorted(periods[0]["counts"])) if periods else ()
        pd_ = period_def or PeriodDef(
            bins_per_period=periods[0]["bins"][1] - periods[0]["bins"][0] + 1)
        counts = [{d: float(v) for d, v in p["counts"].items()} for p in periods]
        return cls(origin=doc["origin"], destinations=dests,
                   alpha=float(doc["alpha"]), period_def=pd_, counts=counts)


@dataclass(frozen=True)
class ODForecast:
    origin: StationId
    target_bin: TimeBin
    horizon: int
    flows: dict[StationId, float]
    total: float


def estimate_shares(journeys: Sequence[Journey], origin: StationId,
                    destinations: Sequence[StationId],
                    period_def: PeriodDef = PeriodDef(), alpha: float = 1.0,
                    day_start: dt.time = dt.time(0, 0)) -> DestinationShares:
    """Per-period smoothed destination shares from linked journeys."""
    if origin in destinations:
        raise ConfigError("origin cannot be its own destination")
    shares = DestinationShares(origin=origin, destinations=tuple(destinations),
                               alpha=alpha, period_def=period_def)
    for j in journeys:
        if j.origin != origin or j.destination not in shares.counts[0]:
            continue
        b = bin_of(j.entry_time, period_def.bin_minutes, day_start)
        shares.counts[period_def.period_of(b.index)][j.destination] += 1.0
    return shares


def update_shares_online(shares: DestinationShares,
                         new_journeys: Sequence[Journey],
                         lam: float = 1.0,
                         day_start: dt.time = dt.time(0, 0)) -> DestinationShares:
    """Decay effective counts by lam, then add the latest bin's journeys."""
    if not 0.0 < lam <= 1.0:
        raise ConfigError("forgetting factor must be in (0, 1]")
    pd_ = shares.period_def
    counts = [{d: lam * v for d, v in c.items()} for c in shares.counts]
    for j in new_journeys:
        if j.origin != shares.origin or j.destination not in counts[0]:
            continue
        b = bin_of(j.entry_time, pd_.bin_minutes, day_start)
        counts[pd_.period_of(b.index)][j.destination] += 1.0
    return DestinationShares(origin=shares.origin, destinations=shares.destinations,
                             alpha=shares.alpha, period_def=pd_, counts=counts)


def forecast_od(arrival: ArrivalForecast, shares: DestinationShares) -> ODForecast:
    """Split the arrival forecast over destinations by the period's shares."""
    if arrival.target_bin is None:
        raise ValueError("arrival forecast must carry a target bin")
    share_map = shares.shares_for_bin(arrival.target_bin.index)
    total = arrival.clamped_point
    flows = {d: total * s for d, s in share_map.items()}
    return ODForecast(origin=shares.origin, target_bin=arrival.target_bin,
                      horizon=arrival.horizon, flows=flows, total=total)
