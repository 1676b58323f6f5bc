"""AFC tap parsing, journey linking, daily profiles, event calendars, and
the synthetic data generator used for demos and tests."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import (
    ConfigError,
    ExogenousVector,
    LineTopology,
    StationId,
    TimeBin,
    bin_of,
    bins_per_day,
)


@dataclass(frozen=True)
class TapEvent:
    card_id: str
    station: StationId
    direction: str  # "entry" | "exit"
    timestamp: dt.datetime


@dataclass(frozen=True)
class Journey:
    card_id: str
    origin: StationId
    destination: StationId
    entry_time: dt.datetime
    exit_time: dt.datetime


@dataclass(frozen=True)
class RowError:
    line_no: int
    reason: str


@dataclass(frozen=True)
class EventCalendarEntry:
    covariate_name: str
    station_scope: frozenset[StationId]  # empty = all stations
    start: dt.datetime
    end: dt.datetime
    value: float = 1.0


@dataclass
class DailyProfile:
    station: StationId
    service_day: dt.date
    counts: np.ndarray  # length bins_per_day

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if np.any(self.counts < 0):
            raise ValueError("profile counts must be >= 0")


_DIRECTIONS = {"in": "entry", "out": "exit"}


def parse_afc(stream: Iterable[str] | str, topology: LineTopology
              ) -> tuple[list[TapEvent], list[RowError]]:
    """Parse the AFC CSV; bad rows are collected as RowErrors, never raised."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    taps: list[TapEvent] = []
    errors: list[RowError] = []
    stations = set(topology.stations)
    for line_no, row in enumerate(reader, start=1):
        if line_no == 1 and row and row[0].strip() == "card_id":
            continue  # header
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            errors.append(RowError(line_no, f"expected 4 fields, got {len(row)}"))
            continue
        card, station, direction, ts = (f.strip() for f in row)
        if not card:
            errors.append(RowError(line_no, "empty card_id"))
            continue
        if station not in stations:
            errors.append(RowError(line_no, f"unknown station {station!r}"))
            continue
        if direction not in _DIRECTIONS:
            errors.append(RowError(line_no, f"bad direction {direction!r}"))
            continue
        try:
            timestamp = dt.datetime.fromisoformat(ts)
        except ValueError:
            errors.append(RowError(line_no, f"bad timestamp {ts!r}"))
            continue
        taps.append(TapEvent(card, station, _DIRECTIONS[direction], timestamp))
    return taps, errors


@dataclass
class LinkDiagnostics:
    same_station_pairs: int = 0


def link_journeys(taps: Sequence[TapEvent],
                  max_gap: dt.timedelta = dt.timedelta(hours=4),
                  diagnostics: LinkDiagnostics | None = None,
                  ) -> tuple[list[Journey], list[TapEvent]]:
    """Pair entries with exits per card.

    Each exit pairs with the latest unmatched prior entry of the same card;
    the pair becomes a Journey only if the gap is within max_gap. Same-station
    pairs (turnbacks / touch errors) are tallied and returned as unlinked.
    """
    ordered = sorted(taps, key=lambda t: (t.timestamp, t.card_id))
    open_entries: dict[str, list[TapEvent]] = {}
    journeys: list[Journey] = []
    unlinked: list[TapEvent] = []
    diag = diagnostics if diagnostics is not None else LinkDiagnostics()
    for tap in ordered:
        if tap.direction == "entry":
            open_entries.setdefault(tap.card_id, []).append(tap)
            continue
        stack = open_entries.get(tap.card_id)
        if not stack:
            unlinked.append(tap)
            continue
        entry = stack.pop()
        if tap.timestamp - entry.timestamp > max_gap:
            unlinked.append(entry)
            unlinked.append(tap)
        elif entry.station == tap.station:
            diag.same_station_pairs += 1
            unlinked.append(entry)
            unlinked.append(tap)
        else:
            journeys.append(Journey(tap.card_id, entry.station, tap.station,
                                    entry.timestamp, tap.timestamp))
    for stack in open_entries.values():
        unlinked.extend(stack)
    return journeys, unlinked


def build_daily_profiles(taps: Sequence[TapEvent], station: StationId,
                         bin_minutes: int = 15,
                         day_start: dt.time = dt.time(0, 0),
                         ) -> list[DailyProfile]:
    """Count entry taps at one station per bin, one profile per service day."""
    n = bins_per_day(bin_minutes)
    by_day: dict[dt.date, np.ndarray] = {}
    for tap in taps:
        if tap.direction != "entry" or tap.station != station:
            continue
        b = bin_of(tap.timestamp, bin_minutes, day_start)
        counts = by_day.setdefault(b.service_day, np.zeros(n))
        counts[b.index] += 1
    return [DailyProfile(station, day, by_day[day]) for day in sorted(by_day)]


def load_events(doc: str | list, schema: Sequence[str]) -> list[EventCalendarEntry]:
    if isinstance(doc, str):
        doc = json.loads(doc)
    entries = []
    for item in doc:
        name = item["name"]
        if name not in schema:
            raise ConfigError(f"unknown covariate {name!r} (schema: {list(schema)})")
        start = dt.datetime.fromisoformat(item["start"])
        end = dt.datetime.fromisoformat(item["end"])
        if end <= start:
            raise ConfigError(f"event {name!r}: end must be after start")
        entries.append(EventCalendarEntry(
            covariate_name=name,
            station_scope=frozenset(item.get("stations", ())),
            start=start,
            end=end,
            value=float(item.get("value", 1.0)),
        ))
    return entries


def exog_at(entries: Sequence[EventCalendarEntry], station: StationId,
            b: TimeBin, schema: Sequence[str],
            day_start: dt.time = dt.time(0, 0)) -> ExogenousVector:
    """Covariate vector for (station, bin): max value over overlapping entries."""
    from .core import bin_start
    lo = bin_start(b, day_start)
    hi = lo + dt.timedelta(minutes=b.bin_minutes)
    values = []
    for name in schema:
        v = 0.0
        for e in entries:
            if e.covariate_name != name:
                continue
            if e.station_scope and station not in e.station_scope:
                continue
            if e.start < hi and e.end > lo:  # [start, end) overlaps [lo, hi)
                v = max(v, e.value)
        values.append(v)
    return ExogenousVector(values=tuple(values), schema=tuple(schema))


# --- synthetic generator -------------------------------------------------

@dataclass
class DayTypeSpec:
    rates: np.ndarray                  # expected entries per bin
    od_shares: dict[StationId, float]  # destination -> probability
    # optional AR(1) rate deviation: persistent within-day demand drift
    ar_phi: float = 0.0
    ar_sigma: float = 0.0

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        if np.any(self.rates < 0):
            raise ConfigError("rates must be >= 0")
        total = sum(self.od_shares.values())
        if self.od_shares and abs(total - 1.0) > 1e-6:
            raise ConfigError(f"od_shares must sum to 1, got {total}")


@dataclass
class StationGenSpec:
    day_types: list[DayTypeSpec]
    travel_s: dict[StationId, float]   # destination -> mean travel seconds


@dataclass
class GeneratorSpec:
    stations: dict[StationId, StationGenSpec]
    bin_minutes: int = 15
    # multiplier applied to rates while an event window is active at a station
    event_boosts: list[tuple[StationId, int, int, float]] = field(default_factory=list)
    # (station, first_bin, last_bin inclusive, multiplier)

    @classmethod
    def from_json(cls, doc: str | dict) -> "GeneratorSpec":
        if isinstance(doc, str):
            doc = json.loads(doc)
        stations = {}
        for sid, sdoc in doc["stations"].items():
            day_types = [DayTypeSpec(np.asarray(d["rates"], dtype=float),
                                     {k: float(v) for k, v in d["od_shares"].items()},
                                     ar_phi=float(d.get("ar_phi", 0.0)),
                                     ar_sigma=float(d.get("ar_sigma", 0.0)))
                         for d in sdoc["day_types"]]
            travel = {k: float(v) for k, v in sdoc.get("travel_s", {}).items()}
            stations[sid] = StationGenSpec(day_types, travel)
        boosts = [tuple(b) for b in doc.get("event_boosts", ())]
        return cls(stations=stations, bin_minutes=int(doc.get("bin_minutes", 15)),
                   event_boosts=[(s, int(a), int(z), float(m)) for s, a, z, m in boosts])


def generate_synthetic_day(spec: GeneratorSpec, service_day: dt.date, seed: int,
                           day_type: int = 0,
                           day_start: dt.time = dt.time(0, 0)) -> list[TapEvent]:
    """Draw one service day of entry/exit taps; deterministic in (spec, seed)."""
    rng = np.random.default_rng(seed)
    n = bins_per_day(spec.bin_minutes)
    base = dt.datetime.combine(service_day, day_start)
    taps: list[TapEvent] = []
    card_no = 0
    for sid in sorted(spec.stations):
        sspec = spec.stations[sid]
        dtype = sspec.day_types[day_type % len(sspec.day_types)]
        dests = sorted(dtype.od_shares)
        probs = np.array([dtype.od_shares[d] for d in dests])
        drift = 0.0
        for b in range(min(n, len(dtype.rates))):
            if dtype.ar_sigma > 0:
                drift = dtype.ar_phi * drift + rng.normal(0, dtype.ar_sigma)
            lam = max(0.0, dtype.rates[b] + drift)
            for (st, lo, hi, mult) in spec.event_boosts:
                if st == sid and lo <= b <= hi:
                    lam *= mult
            if lam <= 0:
                continue
            count = rng.poisson(lam)
            if count == 0:
                continue
            offsets = np.sort(rng.uniform(0, spec.bin_minutes * 60, size=count))
            choice = rng.choice(len(dests), size=count, p=probs) if dests else None
            for i in range(count):
                card = f"syn-{sid}-{service_day.isoformat()}-{card_no}"
                card_no += 1
                entry_ts = base + dt.timedelta(minutes=b * spec.bin_minutes,
                                               seconds=float(offsets[i]))
                taps.append(TapEvent(card, sid, "entry", entry_ts))
                if choice is None:
                    continue
                dest = dests[int(choice[i])]
                mean_tt = sspec.travel_s.get(dest, 600.0)
                tt = max(60.0, rng.normal(mean_tt, 0.1 * mean_tt))
                taps.append(TapEvent(card, dest, "exit",
                                     entry_ts + dt.timedelta(seconds=float(tt))))
    taps.sort(key=lambda t: (t.timestamp, t.card_id, t.direction))
    return taps


def taps_to_csv(taps: Sequence[TapEvent]) -> str:
    back = {"entry": "in", "exit": "out"}
    lines = ["card_id,station_id,direction,timestamp"]
    for t in taps:
        lines.append(f"{t.card_id},{t.station},{back[t.direction]},{t.timestamp.isoformat()}")
    return "\n".join(lines) + "\n"
