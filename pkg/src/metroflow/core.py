"""Shared time, network, and counting primitives.

Everything here is an immutable value type; the rest of the package builds
on these without adding state.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from typing import Sequence


class ConfigError(ValueError):
    """Raised for invalid configuration values (bin widths, topologies, ...)."""


@dataclass(frozen=True, order=True)
class TimeBin:
    """One bin of a service day: (day, index) at a fixed bin width."""

    service_day: dt.date
    index: int
    bin_minutes: int = 15

    def __post_init__(self):
        validate_bin_minutes(self.bin_minutes)
        n = bins_per_day(self.bin_minutes)
        if not 0 <= self.index < n:
            raise ValueError(f"bin index {self.index} out of range [0, {n})")

    def next(self, steps: int = 1) -> "TimeBin":
        """The bin `steps` bins later, rolling over the service-day boundary."""
        n = bins_per_day(self.bin_minutes)
        total = self.index + steps
        day = self.service_day + dt.timedelta(days=total // n)
        return TimeBin(day, total % n, self.bin_minutes)


def validate_bin_minutes(bin_minutes: int) -> None:
    if bin_minutes <= 0 or 1440 % bin_minutes != 0:
        raise ConfigError(f"bin_minutes must divide 1440, got {bin_minutes}")


def bins_per_day(bin_minutes: int) -> int:
    validate_bin_minutes(bin_minutes)
    return 1440 // bin_minutes


def bin_of(timestamp: dt.datetime, bin_minutes: int = 15,
           day_start: dt.time = dt.time(0, 0)) -> TimeBin:
    """Map an instant to its time bin.

    Instants before `day_start` belong to the previous service day.
    """
    validate_bin_minutes(bin_minutes)
    day = timestamp.date()
    start = dt.datetime.combine(day, day_start)
    if timestamp < start:
        day = day - dt.timedelta(days=1)
        start = dt.datetime.combine(day, day_start)
    minutes = (timestamp - start).total_seconds() / 60.0
    return TimeBin(day, int(minutes // bin_minutes), bin_minutes)


def bin_start(b: TimeBin, day_start: dt.time = dt.time(0, 0)) -> dt.datetime:
    """Left edge of a bin; inverse of bin_of on bin boundaries."""
    start = dt.datetime.combine(b.service_day, day_start)
    return start + dt.timedelta(minutes=b.index * b.bin_minutes)


StationId = str


@dataclass(frozen=True)
class LineTopology:
    """A single directed line: ordered stations, run and dwell times, capacity."""

    stations: tuple[StationId, ...]
    run_s: tuple[float, ...]          # between consecutive stations
    dwell_s: dict[StationId, float]
    train_capacity: int
    scheduled_headway_s: float
    exog_schema: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.stations) < 2:
            raise ConfigError("topology needs at least 2 stations")
        if len(set(self.stations)) != len(self.stations):
            raise ConfigError("duplicate station ids")
        if len(self.run_s) != len(self.stations) - 1:
            raise ConfigError("run_s length must be len(stations) - 1")
        if any(r <= 0 for r in self.run_s):
            raise ConfigError("run times must be > 0")
        if any(self.dwell_s.get(s, 0) <= 0 for s in self.stations):
            raise ConfigError("every station needs a dwell time > 0")
        if self.train_capacity <= 0:
            raise ConfigError("capacity must be > 0")
        if self.scheduled_headway_s <= 0:
            raise ConfigError("headway must be > 0")

    def index_of(self, station: StationId) -> int:
        return self.stations.index(station)

    def downstream_of(self, station: StationId) -> tuple[StationId, ...]:
        return self.stations[self.index_of(station) + 1:]

    @classmethod
    def from_json(cls, doc: dict | str) -> "LineTopology":
        if isinstance(doc, str):
            doc = json.loads(doc)
        stations = tuple(s["id"] for s in doc["stations"])
        dwell = {s["id"]: float(s["dwell_s"]) for s in doc["stations"]}
        return cls(
            stations=stations,
            run_s=tuple(float(r) for r in doc["run_s"]),
            dwell_s=dwell,
            train_capacity=int(doc["capacity"]),
            scheduled_headway_s=float(doc["headway_s"]),
            exog_schema=tuple(doc.get("exog_schema", ())),
        )

    def to_json(self) -> dict:
        return {
            "stations": [{"id": s, "dwell_s": self.dwell_s[s]} for s in self.stations],
            "run_s": list(self.run_s),
            "capacity": self.train_capacity,
            "headway_s": self.scheduled_headway_s,
            "exog_schema": list(self.exog_schema),
        }


@dataclass(frozen=True)
class ExogenousVector:
    """Covariate values for one (station, bin), ordered by the schema."""

    values: tuple[float, ...]
    schema: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.schema):
            raise ValueError("values length must equal schema length")

    @classmethod
    def zeros(cls, schema: Sequence[str]) -> "ExogenousVector":
        return cls(values=(0.0,) * len(schema), schema=tuple(schema))


@dataclass(frozen=True)
class CountSeries:
    """Observed (or predicted) counts at one station, in bin order."""

    station: StationId
    bins: tuple[tuple[TimeBin, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        for (_, c) in self.bins:
            if c < 0:
                raise ValueError("counts must be >= 0")
        keys = [(b.service_day, b.index) for b, _ in self.bins]
        if keys != sorted(keys) or len(set(keys)) != len(keys):
            raise ValueError("bins must be strictly increasing in time")
