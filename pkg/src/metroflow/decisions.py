"""Operator-facing decision products: crowding hotspots, entrance-denial
probability, and paired what-if evaluation of gate-closure plans."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from typing import Sequence

from .core import ConfigError, StationId
from .mesosim import GateClosure, SimConfig, SimResult, TrainState, run


@dataclass(frozen=True)
class HotspotAlert:
    station: StationId
    bin: int
    metric: str               # platform_occupancy | left_behind
    value: float
    threshold: float

    @property
    def severity(self) -> float:
        return self.value / self.threshold


@dataclass(frozen=True)
class DenialEstimate:
    station: StationId
    bin: int
    probability: float
    method: str               # ratio | ensemble


@dataclass
class GateClosurePlan:
    station: StationId
    close_start: dt.datetime
    close_end: dt.datetime
    handling_mode: str = "defer"
    divert_fraction: float = 0.0
    divert_to: StationId | None = None
    target_station: StationId | None = None

    def __post_init__(self):
        if self.close_end < self.close_start:
            raise ConfigError("close_end must be >= close_start")

    @classmethod
    def from_json(cls, doc: dict | str) -> "GateClosurePlan":
        if isinstance(doc, str):
            doc = json.loads(doc)
        handling = doc.get("handling", {"mode": "defer"})
        return cls(
            station=doc["station"],
            close_start=dt.datetime.fromisoformat(doc["start"]),
            close_end=dt.datetime.fromisoformat(doc["end"]),
            handling_mode=handling.get("mode", "defer"),
            divert_fraction=float(handling.get("divert_fraction", 0.0)),
            divert_to=handling.get("divert_to"),
            target_station=doc.get("target_station"),
        )

    def to_closure(self, sim_start: dt.datetime) -> GateClosure:
        return GateClosure(
            station=self.station,
            close_start_s=(self.close_start - sim_start).total_seconds(),
            close_end_s=(self.close_end - sim_start).total_seconds(),
            mode=self.handling_mode,
            divert_fraction=self.divert_fraction,
            divert_to=self.divert_to,
        )


@dataclass
class WhatIfResult:
    baseline: SimResult
    treated: SimResult
    deltas: dict[tuple[StationId, int], dict[str, float]]
    target_station_improvement: float

    def to_json(self) -> dict:
        return {
            "deltas": [
                {"station": sid, "bin": b, **d}
                for (sid, b), d in sorted(self.deltas.items())
            ],
            "target_station_improvement": self.target_station_improvement,
            "baseline_audit": self.baseline.to_json()["audit"],
            "treated_audit": self.treated.to_json()["audit"],
        }


def detect_hotspots(sim: SimResult, thresholds: dict[str, float]) -> list[HotspotAlert]:
    """One alert per (station, bin, metric) at or above its threshold."""
    for metric, t in thresholds.items():
        if t <= 0:
            raise ConfigError(f"threshold for {metric!r} must be > 0")
        if metric not in ("platform_occupancy", "left_behind"):
            raise ConfigError(f"unknown hotspot metric {metric!r}")
    alerts = []
    for (sid, b), stats in sim.station_bins.items():
        values = {"platform_occupancy": stats.waiting_max,
                  "left_behind": stats.left_behind}
        for metric, threshold in thresholds.items():
            v = values[metric]
            if v >= threshold:
                alerts.append(HotspotAlert(sid, b, metric, float(v), threshold))
    alerts.sort(key=lambda a: (-a.severity, a.station, a.bin))
    return alerts


def denial_probability(sim: SimResult | Sequence[SimResult], station: StationId,
                       b: int) -> DenialEstimate:
    """Share of passengers at (station, bin) denied at least one boarding."""
    def ratio(r: SimResult) -> float:
        s = r.stats(station, b)
        denom = s.queue_start + s.arrivals_in
        if denom == 0:
            return 0.0
        return min(1.0, s.left_behind_unique / denom)

    if isinstance(sim, SimResult):
        return DenialEstimate(station, b, ratio(sim), "ratio")
    runs = list(sim)
    p = sum(ratio(r) for r in runs) / len(runs)
    return DenialEstimate(station, b, p, "ensemble")


def evaluate_gate_closure(plan: GateClosurePlan, config: SimConfig,
                          od_inputs: dict[tuple[StationId, int], dict[StationId, float]],
                          initial_trains: Sequence[TrainState] = (),
                          sim_start: dt.datetime | None = None) -> WhatIfResult:
    """Paired baseline/treated runs differing only in the closure plan."""
    closure = (plan.to_closure(sim_start) if sim_start is not None
               else GateClosure(plan.station,
                                float(plan.close_start.timestamp()),
                                float(plan.close_end.timestamp()),
                                plan.handling_mode, plan.divert_fraction,
                                plan.divert_to))
    if closure.close_start_s > config.horizon_s:
        raise ConfigError("closure window outside the simulation horizon")
    baseline = run(config, od_inputs, initial_trains)
    closures = [closure] if closure.close_end_s > closure.close_start_s else []
    treated = run(config, od_inputs, initial_trains, closures=closures)

    deltas: dict[tuple[StationId, int], dict[str, float]] = {}
    for key in baseline.station_bins:
        sb, st = baseline.station_bins[key], treated.station_bins[key]
        deltas[key] = {
            "waiting_max": st.waiting_max - sb.waiting_max,
            "left_behind": st.left_behind - sb.left_behind,
        }

    target = plan.target_station or plan.station
    lo = int(closure.close_start_s // config.bin_s)
    hi = int(max(closure.close_start_s, closure.close_end_s - 1) // config.bin_s)
    improvement = 0.0
    for b in range(max(0, lo), min(config.n_bins, hi + 1)):
        sb = baseline.stats(target, b)
        st = treated.stats(target, b)
        improvement += sb.waiting_max - st.waiting_max
    return WhatIfResult(baseline=baseline, treated=treated, deltas=deltas,
                        target_station_improvement=improvement)
