"""Meso-scale simulator of one metro line.

Individual trains move by fixed run/dwell times; passengers are aggregated
groups that arrive per OD flow inputs, queue FIFO on platforms, board under
capacity, and alight at their destination. Outputs per-bin platform waiting
and left-behind counts plus per-train load trajectories.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import ConfigError, LineTopology, StationId


@dataclass
class PassengerGroup:
    dest: StationId
    count: int
    arrival_time: float     # seconds from sim start
    denied_before: bool = False


@dataclass
class PlatformState:
    station: StationId
    queue: list[PassengerGroup] = field(default_factory=list)

    def total_waiting(self) -> int:
        return sum(g.count for g in self.queue)


@dataclass
class TrainState:
    train_id: str
    station_idx: int               # dwelling at / last departed station index
    dwelling: bool
    remaining_ticks: int           # ticks left in current dwell or run
    load_by_dest: dict[StationId, int]
    capacity: int

    @property
    def load(self) -> int:
        return sum(self.load_by_dest.values())


@dataclass
class GateClosure:
    """Demand transformation applied while a station's gates are closed."""

    station: StationId
    close_start_s: float
    close_end_s: float
    mode: str = "defer"            # defer | divert | drop
    divert_fraction: float = 0.0
    divert_to: StationId | None = None

    def __post_init__(self):
        if self.close_end_s < self.close_start_s:
            raise ConfigError("close_end must be >= close_start")
        if self.mode not in ("defer", "divert", "drop"):
            raise ConfigError(f"unknown handling mode {self.mode!r}")
        if not 0.0 <= self.divert_fraction <= 1.0:
            raise ConfigError("divert fraction must be in [0, 1]")


@dataclass
class SimConfig:
    topology: LineTopology
    horizon_s: float
    tick_s: float = 10.0
    bin_s: float = 900.0
    seed: int = 0
    arrival_mode: str = "expected-flow"   # expected-flow | poisson-sample

    def __post_init__(self):
        if self.arrival_mode not in ("expected-flow", "poisson-sample"):
            raise ConfigError(f"unknown arrival_mode {self.arrival_mode!r}")
        if self.tick_s <= 0 or self.horizon_s <= 0:
            raise ConfigError("tick and horizon must be > 0")

    @property
    def n_ticks(self) -> int:
        return int(round(self.horizon_s / self.tick_s))

    @property
    def n_bins(self) -> int:
        return int(np.ceil(self.horizon_s / self.bin_s))

    def ticks(self, seconds: float) -> int:
        # run/dwell rounded to tick multiples at load; error < one tick
        return max(1, int(round(seconds / self.tick_s)))


@dataclass
class BinStats:
    waiting_avg: float = 0.0
    waiting_max: int = 0
    left_behind: int = 0
    left_behind_unique: int = 0
    arrivals_in: int = 0
    queue_start: int = 0


@dataclass
class SimResult:
    station_bins: dict[tuple[StationId, int], BinStats]
    train_log: list[tuple[str, StationId, float, int]]  # (train_id, station, depart_s, load)
    generated: int
    onboard: int
    alighted: int
    waiting_end: int
    dropped: int
    deferred_at_end: int

    def stats(self, station: StationId, b: int) -> BinStats:
        return self.station_bins.get((station, b), BinStats())

    def total_left_behind(self, station: StationId | None = None) -> int:
        return sum(s.left_behind for (sid, _), s in self.station_bins.items()
                   if station is None or sid == station)

    def conservation_holds(self) -> bool:
        return self.generated == self.onboard + self.alighted + self.waiting_end

    def to_json(self) -> dict:
        return {
            "stations": [
                {"station": sid, "bin": b, "waiting_avg": s.waiting_avg,
                 "waiting_max": s.waiting_max, "left_behind": s.left_behind,
                 "left_behind_unique": s.left_behind_unique,
                 "arrivals": s.arrivals_in, "queue_start": s.queue_start}
                for (sid, b), s in sorted(self.station_bins.items())
            ],
            "trains": [{"train_id": t, "station": s, "depart_s": d, "load": l}
                       for (t, s, d, l) in self.train_log],
            "audit": {"generated": self.generated, "onboard": self.onboard,
                      "alighted": self.alighted, "waiting_end": self.waiting_end,
                      "dropped": self.dropped, "deferred_at_end": self.deferred_at_end},
        }

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out)
        w.writerow(["station", "bin", "waiting_avg", "waiting_max", "left_behind", "arrivals"])
        for (sid, b), s in sorted(self.station_bins.items()):
            w.writerow([sid, b, f"{s.waiting_avg:.3f}", s.waiting_max,
                        s.left_behind, s.arrivals_in])
        return out.getvalue()

    def trains_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out)
        w.writerow(["train_id", "station", "depart_s", "load"])
        for (t, s, d, l) in self.train_log:
            w.writerow([t, s, f"{d:.0f}", l])
        return out.getvalue()


def init_trains(reports: Sequence[dict] | None, topology: LineTopology,
                config: SimConfig,
                od_shares: dict[StationId, dict[StationId, float]] | None = None,
                ) -> list[TrainState]:
    """Place trains from position reports; empty list means headway spawning."""
    if not reports:
        return []
    trains = []
    for r in reports:
        last = r["last_station"]
        if last not in topology.stations:
            raise ConfigError(f"position report for unknown station {last!r}")
        idx = topology.index_of(last)
        load = int(r.get("load") or 0)
        downstream = topology.downstream_of(last)
        load_by_dest: dict[StationId, int] = {}
        if load > 0 and downstream:
            shares = None
            if od_shares and last in od_shares:
                shares = [od_shares[last].get(d, 0.0) for d in downstream]
            if not shares or sum(shares) <= 0:
                shares = [1.0] * len(downstream)
            total = sum(shares)
            raw = [load * s / total for s in shares]
            ints = [int(x) for x in raw]
            # largest remainders keep the split exact
            rem = load - sum(ints)
            order = sorted(range(len(raw)), key=lambda i: raw[i] - ints[i], reverse=True)
            for i in order[:rem]:
                ints[i] += 1
            load_by_dest = {d: c for d, c in zip(downstream, ints) if c > 0}
        offset = float(r.get("offset_s", 0.0))
        if idx >= len(topology.stations) - 1:
            continue  # past the terminal
        run_ticks = config.ticks(topology.run_s[idx])
        done = min(run_ticks - 1, int(offset // config.tick_s))
        trains.append(TrainState(
            train_id=str(r["train_id"]), station_idx=idx, dwelling=False,
            remaining_ticks=run_ticks - done,
            load_by_dest=load_by_dest, capacity=topology.train_capacity))
    return trains


def board_alight(train: TrainState, platform: PlatformState, station: StationId,
                 ) -> tuple[TrainState, PlatformState, int, int, int]:
    """Alight this station's passengers, then board FIFO up to capacity."""
    load = dict(train.load_by_dest)
    alighted = load.pop(station, 0)
    queue = [replace(g) for g in platform.queue]
    residual = train.capacity - sum(load.values())
    boarded = 0
    remaining: list[PassengerGroup] = []
    for g in queue:
        if residual <= 0:
            remaining.append(g)
            continue
        take = min(g.count, residual)
        load[g.dest] = load.get(g.dest, 0) + take
        boarded += take
        residual -= take
        if take < g.count:
            remaining.append(replace(g, count=g.count - take))
    denied = sum(g.count for g in remaining)
    new_train = replace(train, load_by_dest=load)
    new_platform = PlatformState(station=platform.station, queue=remaining)
    return new_train, new_platform, boarded, alighted, denied


class _Sim:
    """One simulation run; owns all mutable state."""

    def __init__(self, config: SimConfig,
                 od_inputs: dict[tuple[StationId, int], dict[StationId, float]],
                 initial_trains: Sequence[TrainState],
                 closures: Sequence[GateClosure] = ()):
        self.cfg = config
        self.topo = config.topology
        self.closures = list(closures)
        self.platforms = {s: PlatformState(station=s) for s in self.topo.stations}
        self.trains: list[TrainState] = [replace(t, load_by_dest=dict(t.load_by_dest))
                                         for t in initial_trains]
        self.spawn = not initial_trains
        self.next_spawn_tick = 0
        self.spawn_no = 0
        self.stats: dict[tuple[StationId, int], BinStats] = {
            (s, b): BinStats() for s in self.topo.stations for b in range(config.n_bins)}
        self.train_log: list[tuple[str, StationId, float, int]] = []
        self.generated = 0
        self.alighted = 0
        self.dropped = 0
        self.deferred: dict[StationId, list[PassengerGroup]] = {}
        # downstream-only flows; upstream-direction demand cannot be served here
        self.flows: dict[tuple[StationId, int], dict[StationId, float]] = {}
        for (origin, b), by_dest in od_inputs.items():
            downstream = set(self.topo.downstream_of(origin)) if origin in self.topo.stations else set()
            kept = {d: f for d, f in by_dest.items() if d in downstream and f > 0}
            if kept:
                self.flows[(origin, b)] = kept
        if config.arrival_mode == "poisson-sample":
            self._draw_poisson_arrivals()
        else:
            # cumulative-target emission avoids float drift: by the end of a
            # bin exactly floor(cumulative flow) passengers have entered
            self.flow_by_bin: dict[tuple[StationId, StationId], np.ndarray] = {}
            for (origin, b), by_dest in self.flows.items():
                for dest, f in by_dest.items():
                    arr = self.flow_by_bin.setdefault(
                        (origin, dest), np.zeros(config.n_bins))
                    arr[b] += f
            self.emitted: dict[tuple[StationId, StationId], int] = {}

    # --- arrival generation ---------------------------------------------

    def _draw_poisson_arrivals(self):
        rng = np.random.default_rng(self.cfg.seed)
        per_tick: dict[int, list[tuple[StationId, PassengerGroup]]] = {}
        for (origin, b) in sorted(self.flows):
            for dest in sorted(self.flows[(origin, b)]):
                lam = self.flows[(origin, b)][dest]
                n = rng.poisson(lam)
                if n == 0:
                    continue
                times = np.sort(rng.uniform(b * self.cfg.bin_s,
                                            (b + 1) * self.cfg.bin_s, size=n))
                for t in times:
                    tick = min(self.cfg.n_ticks - 1, int(t // self.cfg.tick_s))
                    per_tick.setdefault(tick, []).append(
                        (origin, PassengerGroup(dest, 1, float(t))))
        for groups in per_tick.values():
            groups.sort(key=lambda sg: sg[1].arrival_time)
        self.poisson_arrivals = per_tick

    def _arrivals_at_tick(self, tick: int) -> list[tuple[StationId, PassengerGroup]]:
        now = tick * self.cfg.tick_s
        if self.cfg.arrival_mode == "poisson-sample":
            return self.poisson_arrivals.get(tick, [])
        b = int(now // self.cfg.bin_s)
        out = []
        ticks_per_bin = self.cfg.bin_s / self.cfg.tick_s
        j = tick - int(b * ticks_per_bin)
        for (origin, dest) in sorted(self.flow_by_bin):
            arr = self.flow_by_bin[(origin, dest)]
            target = float(arr[:b].sum()) + arr[b] * (j + 1) / ticks_per_bin
            done = self.emitted.get((origin, dest), 0)
            whole = int(np.floor(target + 1e-9)) - done
            if whole >= 1:
                self.emitted[(origin, dest)] = done + whole
                out.append((origin, PassengerGroup(dest, whole, now)))
        return out

    # --- closures --------------------------------------------------------

    def _closure_active(self, station: StationId, now: float) -> GateClosure | None:
        for c in self.closures:
            if c.station == station and c.close_start_s <= now < c.close_end_s:
                return c
        return None

    def _admit(self, station: StationId, group: PassengerGroup, tick: int):
        now = tick * self.cfg.tick_s
        c = self._closure_active(station, now)
        if c is None:
            self._enqueue(station, group, tick)
            return
        if c.mode == "drop":
            self.dropped += group.count
            return
        if c.mode == "divert" and c.divert_fraction > 0:
            target = c.divert_to
            if target is None:
                idx = self.topo.index_of(station)
                if idx == 0:
                    raise ConfigError("cannot divert at the first station without divert_to")
                target = self.topo.stations[idx - 1]
            moved = int(round(group.count * c.divert_fraction))
            if moved > 0:
                self._enqueue(target, PassengerGroup(group.dest, moved, group.arrival_time), tick)
            rest = group.count - moved
            if rest > 0:
                self.deferred.setdefault(station, []).append(
                    PassengerGroup(group.dest, rest, group.arrival_time))
                self.generated += rest
            return
        self.deferred.setdefault(station, []).append(replace(group))
        self.generated += group.count

    def _enqueue(self, station: StationId, group: PassengerGroup, tick: int):
        self.platforms[station].queue.append(group)
        self.generated += group.count
        b = self._bin(tick)
        self.stats[(station, b)].arrivals_in += group.count

    def _release_deferred(self, tick: int):
        now = tick * self.cfg.tick_s
        for c in self.closures:
            if c.mode == "drop":
                continue
            if not (now - self.cfg.tick_s < c.close_end_s <= now) and not (
                    tick == 0 and c.close_end_s <= 0):
                continue
            held = self.deferred.pop(c.station, [])
            b = self._bin(tick)
            for g in held:
                self.platforms[c.station].queue.append(g)
                self.stats[(c.station, b)].arrivals_in += g.count

    # --- trains ----------------------------------------------------------

    def _maybe_spawn(self, tick: int):
        if not self.spawn:
            return
        if tick == self.next_spawn_tick:
            dwell = self.cfg.ticks(self.topo.dwell_s[self.topo.stations[0]])
            self.trains.append(TrainState(
                train_id=f"t{self.spawn_no}", station_idx=0, dwelling=True,
                remaining_ticks=dwell, load_by_dest={},
                capacity=self.topo.train_capacity))
            self.spawn_no += 1
            self.next_spawn_tick += self.cfg.ticks(self.topo.scheduled_headway_s)

    def _depart(self, train: TrainState, tick: int):
        station = self.topo.stations[train.station_idx]
        platform = self.platforms[station]
        new_train, new_platform, boarded, alighted, denied = board_alight(
            train, platform, station)
        self.alighted += alighted
        train.load_by_dest = new_train.load_by_dest
        self.platforms[station] = new_platform
        b = self._bin(tick)
        if denied > 0:
            st = self.stats[(station, b)]
            st.left_behind += denied
            unique = sum(g.count for g in new_platform.queue if not g.denied_before)
            st.left_behind_unique += unique
            for g in new_platform.queue:
                g.denied_before = True
        assert train.load <= train.capacity
        self.train_log.append((train.train_id, station, tick * self.cfg.tick_s, train.load))

    def _advance_trains(self, tick: int):
        survivors = []
        for train in self.trains:
            train.remaining_ticks -= 1
            if train.remaining_ticks > 0:
                survivors.append(train)
                continue
            if train.dwelling:
                self._depart(train, tick)
                if train.station_idx >= len(self.topo.stations) - 1:
                    continue  # terminal: despawn
                train.dwelling = False
                train.remaining_ticks = self.cfg.ticks(self.topo.run_s[train.station_idx])
                survivors.append(train)
            else:
                # arrive at the next station; alighting happens at departure
                train.station_idx += 1
                train.dwelling = True
                station = self.topo.stations[train.station_idx]
                train.remaining_ticks = self.cfg.ticks(self.topo.dwell_s[station])
                survivors.append(train)
        self.trains = survivors

    # --- bookkeeping ------------------------------------------------------

    def _bin(self, tick: int) -> int:
        return min(self.cfg.n_bins - 1,
                   int(tick * self.cfg.tick_s // self.cfg.bin_s))

    def run(self) -> SimResult:
        n_ticks = self.cfg.n_ticks
        ticks_per_bin = max(1, int(round(self.cfg.bin_s / self.cfg.tick_s)))
        waiting_sum: dict[tuple[StationId, int], float] = {}
        for tick in range(n_ticks):
            b = self._bin(tick)
            if tick % ticks_per_bin == 0:
                for s in self.topo.stations:
                    self.stats[(s, b)].queue_start = self.platforms[s].total_waiting()
            self._release_deferred(tick)
            for (station, group) in self._arrivals_at_tick(tick):
                self._admit(station, group, tick)
            self._maybe_spawn(tick)
            self._advance_trains(tick)
            for s in self.topo.stations:
                w = self.platforms[s].total_waiting()
                st = self.stats[(s, b)]
                st.waiting_max = max(st.waiting_max, w)
                waiting_sum[(s, b)] = waiting_sum.get((s, b), 0.0) + w
        for (key, total) in waiting_sum.items():
            b = key[1]
            bin_ticks = min(ticks_per_bin, n_ticks - b * ticks_per_bin)
            self.stats[key].waiting_avg = total / max(1, bin_ticks)
        onboard = sum(t.load for t in self.trains)
        waiting_end = sum(p.total_waiting() for p in self.platforms.values())
        deferred_end = sum(g.count for gs in self.deferred.values() for g in gs)
        return SimResult(
            station_bins=self.stats, train_log=self.train_log,
            generated=self.generated, onboard=onboard, alighted=self.alighted,
            waiting_end=waiting_end + deferred_end, dropped=self.dropped,
            deferred_at_end=deferred_end)


def run(config: SimConfig,
        od_inputs: dict[tuple[StationId, int], dict[StationId, float]],
        initial_trains: Sequence[TrainState] = (),
        closures: Sequence[GateClosure] = ()) -> SimResult:
    """Run one deterministic simulation over the configured horizon."""
    max_bin = max((b for (_, b) in od_inputs), default=-1)
    if (max_bin + 1) * config.bin_s < config.horizon_s - config.bin_s:
        pass  # sparse inputs are fine; missing bins mean zero demand
    for (_, b) in od_inputs:
        if b * config.bin_s >= config.horizon_s:
            raise ConfigError(f"od input bin {b} outside the horizon")
    return _Sim(config, od_inputs, initial_trains, closures).run()


def run_ensemble(config: SimConfig,
                 od_inputs: dict[tuple[StationId, int], dict[StationId, float]],
                 n_runs: int,
                 initial_trains: Sequence[TrainState] = (),
                 closures: Sequence[GateClosure] = ()) -> list[SimResult]:
    """n independent Poisson-sampled runs with seeds seed+i."""
    if config.arrival_mode != "poisson-sample":
        raise ConfigError("ensembles need arrival_mode = poisson-sample")
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    results = []
    for i in range(n_runs):
        cfg = replace(config, seed=config.seed + i)
        results.append(_Sim(cfg, od_inputs, initial_trains, closures).run())
    return results
