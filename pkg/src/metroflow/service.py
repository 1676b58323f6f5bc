"""Real-time orchestration: per-bin cycles that classify the day, update
filters, forecast arrivals and OD flows, simulate the next half hour, and
derive decision products. Replay drives the same cycle from historical
timestamps."""

from __future__ import annotations

import datetime as dt
import json
import math
import os

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import arrivals, decisions, mesosim, odflow, patterns
from .core import (
    ConfigError,
    ExogenousVector,
    LineTopology,
    StationId,
    TimeBin,
    bin_of,
    bin_start,
    bins_per_day,
)
from .ingest import EventCalendarEntry, Journey, TapEvent, exog_at


@dataclass
class ServiceConfig:
    topology_path: str
    model_dir: str
    bin_minutes: int = 15
    day_start: dt.time = dt.time(0, 0)
    afc_path: str | None = None
    positions_path: str | None = None
    events_path: str | None = None
    out_dir: str | None = None
    mode: str = "replay"                      # live | replay
    sim_tick_s: float = 10.0
    seed: int = 0
    thresholds: dict[str, float] = field(default_factory=lambda: {
        "platform_occupancy": 300.0, "left_behind": 50.0})
    host: str = "127.0.0.1"
    port: int = 8650
    share_alpha: float = 1.0
    max_snapshots: int = 96

    def __post_init__(self):
        if self.mode not in ("live", "replay"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "replay" and self.afc_path is None:
            raise ConfigError("replay mode requires an AFC dataset path")

    @classmethod
    def from_file(cls, path: str | Path, env: dict | None = None) -> "ServiceConfig":
        path = Path(path)
        if path.suffix == ".toml":
            doc = tomllib.loads(path.read_text())
        else:
            doc = json.loads(path.read_text())
        env = dict(os.environ if env is None else env)
        for key, raw in env.items():
            if not key.startswith("TS_"):
                continue
            name = key[3:].lower()
            if name in doc or name in cls.__dataclass_fields__:
                doc[name] = raw
        kwargs = {}
        fields = cls.__dataclass_fields__
        for name, value in doc.items():
            if name not in fields:
                raise ConfigError(f"unknown config key {name!r}")
            if name == "day_start" and isinstance(value, str):
                value = dt.time.fromisoformat(value)
            elif name in ("bin_minutes", "port", "seed", "max_snapshots"):
                value = int(value)
            elif name in ("sim_tick_s", "share_alpha"):
                value = float(value)
            elif name == "thresholds" and isinstance(value, str):
                value = json.loads(value)
            kwargs[name] = value
        return cls(**kwargs)


@dataclass
class ForecastRecord:
    station: StationId
    target_bin: TimeBin
    horizon: int
    point: float
    variance: float
    baseline_point: float          # cluster centroid at the target bin
    issue_time: dt.datetime
    observed: float | None = None

    def to_json(self) -> dict:
        return {
            "station": self.station,
            "day": self.target_bin.service_day.isoformat(),
            "bin": self.target_bin.index,
            "h": self.horizon,
            "point": self.point,
            "variance": self.variance,
            "baseline": self.baseline_point,
            "issued": self.issue_time.isoformat(),
            "observed": self.observed,
        }


@dataclass
class CycleSnapshot:
    cycle_time: dt.datetime
    classifications: dict[StationId, patterns.Classification]
    arrival_forecasts: dict[StationId, dict[int, arrivals.ArrivalForecast]]
    od_forecasts: dict[StationId, dict[int, odflow.ODForecast]]
    sim_result: mesosim.SimResult
    alerts: list[decisions.HotspotAlert]
    denial: dict[StationId, decisions.DenialEstimate]
    observed_last_bin: dict[StationId, int]
    model_versions: dict[StationId, str]
    sim_start: dt.datetime

    def to_json(self) -> dict:
        return {
            "cycle_time": self.cycle_time.isoformat(),
            "sim_start": self.sim_start.isoformat(),
            "observed": dict(sorted(self.observed_last_bin.items())),
            "classification": {
                s: {"cluster": c.cluster_id, "bins_observed": c.bins_observed}
                for s, c in sorted(self.classifications.items())},
            "arrivals": {
                s: {str(h): {"target_bin": f.target_bin.index,
                             "day": f.target_bin.service_day.isoformat(),
                             "point": f.point, "variance": f.variance,
                             "clamped": f.clamped_point}
                    for h, f in by_h.items()}
                for s, by_h in sorted(self.arrival_forecasts.items())},
            "od": {
                s: {str(h): {"total": f.total,
                             "flows": dict(sorted(f.flows.items()))}
                    for h, f in by_h.items()}
                for s, by_h in sorted(self.od_forecasts.items())},
            "sim": self.sim_result.to_json(),
            "alerts": [{"station": a.station, "bin": a.bin, "metric": a.metric,
                        "value": a.value, "threshold": a.threshold,
                        "severity": a.severity} for a in self.alerts],
            "denial": {s: {"bin": d.bin, "p": d.probability, "method": d.method}
                       for s, d in sorted(self.denial.items())},
            "model_versions": dict(sorted(self.model_versions.items())),
        }


# --- model store ----------------------------------------------------------

class ModelStore:
    """Filesystem layout for fitted models under one directory."""

    def __init__(self, model_dir: str | Path):
        self.root = Path(model_dir)

    def save_clusters(self, cs: patterns.ClusterSet) -> None:
        d = self.root / "clusters"
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{cs.station}.json").write_text(json.dumps(cs.to_json()))

    def load_clusters(self, station: StationId) -> patterns.ClusterSet:
        return patterns.ClusterSet.from_json(
            (self.root / "clusters" / f"{station}.json").read_text())

    def save_params(self, station: StationId, cluster: int,
                    params: arrivals.StateSpaceParams) -> None:
        d = self.root / "params"
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{station}_{cluster}.json").write_text(json.dumps(params.to_json()))

    def load_params(self, station: StationId, cluster: int) -> arrivals.StateSpaceParams:
        return arrivals.StateSpaceParams.from_json(
            (self.root / "params" / f"{station}_{cluster}.json").read_text())

    def save_shares(self, shares: odflow.DestinationShares) -> None:
        d = self.root / "shares"
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{shares.origin}.json").write_text(json.dumps(shares.to_json()))

    def load_shares(self, origin: StationId) -> odflow.DestinationShares:
        return odflow.DestinationShares.from_json(
            (self.root / "shares" / f"{origin}.json").read_text())

    def stations_with_models(self) -> list[StationId]:
        d = self.root / "clusters"
        if not d.is_dir():
            return []
        return sorted(p.stem for p in d.glob("*.json"))


def fit_models(profiles_by_station: dict[StationId, list],
               journeys: Sequence[Journey], topology: LineTopology,
               store: ModelStore, events: Sequence[EventCalendarEntry] = (),
               k_range=range(2, 7), seed: int = 0, alpha: float = 1.0,
               day_start: dt.time = dt.time(0, 0),
               bin_minutes: int = 15) -> None:
    """Offline training: cluster days, fit per-cluster models, estimate shares."""
    schema = topology.exog_schema
    for station, profiles in profiles_by_station.items():
        cs = patterns.cluster_days(profiles, k_range=k_range, seed=seed)
        store.save_clusters(cs)
        for cluster in range(cs.k):
            day_series = []
            for p in profiles:
                if cs.members.get(p.service_day) != cluster:
                    continue
                series = []
                for b, y in enumerate(p.counts):
                    m = patterns.centroid_value(cs, cluster, b)
                    x = exog_at(events, station,
                                TimeBin(p.service_day, b, bin_minutes),
                                schema, day_start) if schema else None
                    series.append((float(y), m, x))
                day_series.append(series)
            params = arrivals.fit_mle(day_series, n_beta=len(schema), seed=seed,
                                      cluster_label=f"{station}/{cluster}")
            store.save_params(station, cluster, params)
    for origin in topology.stations:
        dests = tuple(s for s in topology.stations if s != origin)
        shares = odflow.estimate_shares(
            journeys, origin, dests, period_def=odflow.PeriodDef(bin_minutes=bin_minutes),
            alpha=alpha, day_start=day_start)
        store.save_shares(shares)


# --- orchestrator ---------------------------------------------------------

class Orchestrator:
    """Single-writer cycle runner; published snapshots are immutable."""

    def __init__(self, config: ServiceConfig, topology: LineTopology,
                 store: ModelStore, events: Sequence[EventCalendarEntry] = ()):
        self.config = config
        self.topology = topology
        self.store = store
        self.events = list(events)
        self.n_bins = bins_per_day(config.bin_minutes)

        self.clusters: dict[StationId, patterns.ClusterSet] = {}
        self.params: dict[tuple[StationId, int], arrivals.StateSpaceParams] = {}
        self.shares: dict[StationId, odflow.DestinationShares] = {}
        self.fallback: set[StationId] = set()
        for station in topology.stations:
            try:
                self.clusters[station] = self.store.load_clusters(station)
            except FileNotFoundError:
                self.fallback.add(station)
            if station not in self.fallback:
                for c in range(self.clusters[station].k):
                    try:
                        self.params[(station, c)] = self.store.load_params(station, c)
                    except FileNotFoundError:
                        self.params[(station, c)] = self._fallback_params()
            try:
                self.shares[station] = self.store.load_shares(station)
            except FileNotFoundError:
                dests = tuple(s for s in topology.stations if s != station)
                self.shares[station] = odflow.DestinationShares(
                    origin=station, destinations=dests, alpha=config.share_alpha,
                    period_def=odflow.PeriodDef(bin_minutes=config.bin_minutes))

        self.filter_states: dict[StationId, arrivals.FilterState] = {}
        self.active_cluster: dict[StationId, int] = {}
        self.today: dt.date | None = None
        self.observed_today: dict[StationId, list[int]] = {}
        self.pending: list[ForecastRecord] = []
        self.completed: list[ForecastRecord] = []
        self.snapshots: list[CycleSnapshot] = []
        self.cluster_switches: list[tuple[dt.datetime, StationId, int, int]] = []

    def _fallback_params(self) -> arrivals.StateSpaceParams:
        n = len(self.topology.exog_schema)
        return arrivals.StateSpaceParams(phi=0.0, sigma2_eps=1.0, sigma2_eta=0.0,
                                         beta=(0.0,) * n)

    def _centroid(self, station: StationId, cluster: int, bin_index: int) -> float:
        if station in self.fallback:
            return 0.0
        cs = self.clusters[station]
        return patterns.centroid_value(cs, cluster, bin_index % cs.centroids.shape[1])

    def _params_for(self, station: StationId, cluster: int) -> arrivals.StateSpaceParams:
        return self.params.get((station, cluster), self._fallback_params())

    def _reset_day(self, day: dt.date) -> None:
        self.today = day
        self.observed_today = {s: [] for s in self.topology.stations}
        for station in self.topology.stations:
            cluster = self.active_cluster.get(station, 0)
            self.filter_states[station] = arrivals.stationary_state(
                self._params_for(station, cluster))

    def run_cycle(self, now: dt.datetime, taps: Sequence[TapEvent],
                  position_reports: Sequence[dict] = ()) -> CycleSnapshot:
        """One cycle at a bin boundary, consuming the just-closed bin's taps."""
        cfg = self.config
        closed_bin = bin_of(now - dt.timedelta(minutes=cfg.bin_minutes),
                            cfg.bin_minutes, cfg.day_start)
        if self.today != closed_bin.service_day:
            self._reset_day(closed_bin.service_day)

        # (1) observed entries for the closed bin
        observed: dict[StationId, int] = {s: 0 for s in self.topology.stations}
        for tap in taps:
            if tap.direction == "entry" and tap.station in observed:
                observed[tap.station] += 1
        for s in self.topology.stations:
            prefix = self.observed_today[s]
            while len(prefix) < closed_bin.index:
                prefix.append(0)   # bins with no cycle run count as empty
            prefix.append(observed[s])

        # (2) join observations onto pending records
        still_pending = []
        for rec in self.pending:
            if (rec.target_bin.service_day == closed_bin.service_day
                    and rec.target_bin.index == closed_bin.index):
                rec.observed = float(observed.get(rec.station, 0))
                self.completed.append(rec)
            else:
                still_pending.append(rec)
        self.pending = still_pending

        # (3) classify the unfolding day, (4) filter update, (5) predict
        schema = self.topology.exog_schema
        classifications: dict[StationId, patterns.Classification] = {}
        arrival_fx: dict[StationId, dict[int, arrivals.ArrivalForecast]] = {}
        od_fx: dict[StationId, dict[int, odflow.ODForecast]] = {}
        model_versions: dict[StationId, str] = {}
        for station in self.topology.stations:
            prefix = np.array(self.observed_today[station], dtype=float)
            if station in self.fallback:
                cluster = 0
                classifications[station] = patterns.Classification(0, (0.0,), len(prefix))
                model_versions[station] = "fallback"
            else:
                cls = patterns.classify_partial(prefix, self.clusters[station])
                classifications[station] = cls
                cluster = cls.cluster_id
                model_versions[station] = f"cluster-{cluster}"
            prev = self.active_cluster.get(station)
            if prev is not None and prev != cluster:
                self.cluster_switches.append((now, station, prev, cluster))
            self.active_cluster[station] = cluster

            params = self._params_for(station, cluster)
            m_obs = self._centroid(station, cluster, closed_bin.index)
            x_obs = (exog_at(self.events, station, closed_bin, schema, cfg.day_start)
                     if schema else None)
            try:
                state, _ = arrivals.filter_update(
                    self.filter_states[station], params, float(observed[station]),
                    m_obs, x_obs, target_bin=closed_bin)
            except ValueError:
                params = self._fallback_params()
                state = arrivals.stationary_state(params)
            self.filter_states[station] = state

            # targets skip the in-progress bin: a cycle at 08:00 forecasts
            # the bins starting 08:15 (h=1) and 08:30 (h=2)
            current_bin = closed_bin.next(1)
            arrival_fx[station] = {}
            od_fx[station] = {}
            for h in (1, 2):
                target = current_bin.next(h)
                m_f = self._centroid(station, cluster, target.index)
                x_f = (exog_at(self.events, station, target, schema, cfg.day_start)
                       if schema else None)
                fc = arrivals.predict(state, params, m_f, x_f, h,
                                      station=station, target_bin=target)
                arrival_fx[station][h] = fc
                od_fx[station][h] = odflow.forecast_od(fc, self.shares[station])
                self.pending.append(ForecastRecord(
                    station=station, target_bin=target, horizon=h,
                    point=fc.point, variance=fc.variance,
                    baseline_point=m_f, issue_time=now))

        # (7) background simulation over the two forecast bins; the sim's
        # time origin is the start of the h=1 target bin
        bin_s = cfg.bin_minutes * 60.0
        sim_start = now + dt.timedelta(minutes=cfg.bin_minutes)
        sim_cfg = mesosim.SimConfig(
            topology=self.topology, horizon_s=2 * bin_s, tick_s=cfg.sim_tick_s,
            bin_s=bin_s, seed=cfg.seed, arrival_mode="expected-flow")
        od_inputs: dict[tuple[StationId, int], dict[StationId, float]] = {}
        for station, by_h in od_fx.items():
            for h, fc in by_h.items():
                od_inputs[(station, h - 1)] = dict(fc.flows)
        trains = mesosim.init_trains(
            position_reports, self.topology, sim_cfg,
            od_shares={s: self.shares[s].shares_for_bin(closed_bin.index)
                       for s in self.topology.stations})
        sim_result = mesosim.run(sim_cfg, od_inputs, trains)

        # (8) decision products
        alerts = decisions.detect_hotspots(sim_result, cfg.thresholds)
        denial = {s: decisions.denial_probability(sim_result, s, 0)
                  for s in self.topology.stations}

        snapshot = CycleSnapshot(
            cycle_time=now, classifications=classifications,
            arrival_forecasts=arrival_fx, od_forecasts=od_fx,
            sim_result=sim_result, alerts=alerts, denial=denial,
            observed_last_bin=observed, model_versions=model_versions,
            sim_start=sim_start)
        self.snapshots.append(snapshot)
        if len(self.snapshots) > cfg.max_snapshots:
            self.snapshots = self.snapshots[-cfg.max_snapshots:]
        self._persist(snapshot)
        return snapshot

    def _persist(self, snapshot: CycleSnapshot) -> None:
        if not self.config.out_dir:
            return
        day = snapshot.cycle_time.date().isoformat()
        out = Path(self.config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / f"snapshots-{day}.jsonl").open("a") as f:
            f.write(json.dumps(snapshot.to_json()) + "\n")
        with (out / f"records-{day}.jsonl").open("a") as f:
            for rec in self.completed:
                if rec.issue_time == snapshot.cycle_time:
                    f.write(json.dumps(rec.to_json()) + "\n")

    @property
    def latest(self) -> CycleSnapshot | None:
        return self.snapshots[-1] if self.snapshots else None


# --- replay and evaluation ------------------------------------------------

def replay(taps: Sequence[TapEvent], orchestrator: Orchestrator,
           day: dt.date, position_reports: Sequence[dict] = (),
           first_bin: int = 1, last_bin: int | None = None,
           ) -> tuple[list[CycleSnapshot], dict]:
    """Drive cycles over one historical service day; returns snapshots and
    the accuracy report."""
    cfg = orchestrator.config
    n = bins_per_day(cfg.bin_minutes)
    last_bin = n - 1 if last_bin is None else last_bin
    taps_by_bin: dict[int, list[TapEvent]] = {}
    for tap in taps:
        b = bin_of(tap.timestamp, cfg.bin_minutes, cfg.day_start)
        if b.service_day == day:
            taps_by_bin.setdefault(b.index, []).append(tap)
    snapshots = []
    # run three bins past last_bin (capped at day end) so the final cycle's
    # h=1 and h=2 targets still get joined with observations
    for idx in range(first_bin, min(n - 1, last_bin + 3) + 1):
        now = bin_start(TimeBin(day, idx, cfg.bin_minutes), cfg.day_start)
        snapshots.append(orchestrator.run_cycle(
            now, taps_by_bin.get(idx - 1, ()), position_reports))
    report = evaluate_accuracy(orchestrator.completed)
    return snapshots, report


def evaluate_accuracy(records: Sequence[ForecastRecord]) -> dict:
    """MAE/RMSE per (station, horizon) for the model and centroid baseline."""
    groups: dict[tuple[StationId, int], list[ForecastRecord]] = {}
    for rec in records:
        if rec.observed is None:
            continue
        groups.setdefault((rec.station, rec.horizon), []).append(rec)
    report: dict = {"by_station": [], "overall": {}}
    all_err_model: list[float] = []
    all_err_base: list[float] = []
    for (station, h), recs in sorted(groups.items()):
        err_m = [max(0.0, r.point) - r.observed for r in recs]
        err_b = [r.baseline_point - r.observed for r in recs]
        entry = {
            "station": station, "horizon": h, "n": len(recs),
            "mae": _mae(err_m), "rmse": _rmse(err_m),
            "baseline_mae": _mae(err_b), "baseline_rmse": _rmse(err_b),
        }
        entry["mae_ratio"] = (entry["mae"] / entry["baseline_mae"]
                              if entry["baseline_mae"] > 0 else math.nan)
        report["by_station"].append(entry)
        all_err_model.extend(err_m)
        all_err_base.extend(err_b)
    if all_err_model:
        mae = _mae(all_err_model)
        base = _mae(all_err_base)
        report["overall"] = {
            "n": len(all_err_model), "mae": mae, "rmse": _rmse(all_err_model),
            "baseline_mae": base, "baseline_rmse": _rmse(all_err_base),
            "mae_ratio": mae / base if base > 0 else math.nan,
        }
    return report


def _mae(errors: Sequence[float]) -> float:
    return float(np.mean(np.abs(errors))) if len(errors) else 0.0


def _rmse(errors: Sequence[float]) -> float:
    return float(np.sqrt(np.mean(np.square(errors)))) if len(errors) else 0.0
