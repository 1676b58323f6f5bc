"""Acceptance suite: one test per release criterion, each printing a
PASS line with its measured numbers. Run with `pytest -s tests/test_acceptance.py`
to see the lines."""

import datetime as dt
import json
import math
import time

import numpy as np
from click.testing import CliRunner
from sklearn.metrics import adjusted_rand_score

from metroflow import arrivals, cli, ingest, odflow, patterns, service
from metroflow.core import ExogenousVector, LineTopology, TimeBin
from metroflow.decisions import GateClosurePlan, evaluate_gate_closure
from metroflow.mesosim import (
    PassengerGroup,
    PlatformState,
    SimConfig,
    TrainState,
    board_alight,
    run,
)

from oracles import joint_gaussian_loglik, naive_kalman_steps, passenger_level_board

DAY = dt.date(2013, 2, 5)


def announce(number, name, detail=""):
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {number} [{name}]: PASS{suffix}")


# -- 1. Kalman oracle equivalence -----------------------------------------

def test_criterion_1_kalman_oracle_equivalence():
    start = time.time()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(120):
        phi = rng.uniform(0.0, 0.98)
        s2_eps = rng.uniform(0.05, 20.0)
        s2_eta = rng.uniform(0.0, 20.0)
        params = arrivals.StateSpaceParams(phi=phi, sigma2_eps=s2_eps,
                                           sigma2_eta=s2_eta)
        n = int(rng.integers(1, 6))
        devs = rng.normal(0, 5, size=n).tolist()
        state0 = arrivals.stationary_state(params)

        # filter recursion vs naive loop
        steps = naive_kalman_steps(phi, s2_eps, s2_eta, devs, 0.0, state0.P)
        state = state0
        for d, step in zip(devs, steps):
            state, nu = arrivals.filter_update(state, params, y=d, m=0.0)
            worst = max(worst, abs(nu - step["nu"]), abs(state.mu - step["mu"]),
                        abs(state.P - step["P"]))

        # loglik vs joint Gaussian density
        series = [(d, 0.0, None) for d in devs]
        ll = arrivals.loglik(params, series)
        oracle_ll = joint_gaussian_loglik(phi, s2_eps, s2_eta, devs, state0.P)
        worst = max(worst, abs(ll - oracle_ll))

        # h=2 prediction vs explicit one-step propagation
        fc2 = arrivals.predict(state, params, 0.0, None, 2)
        mid = arrivals.FilterState(mu=phi * state.mu,
                                   P=phi ** 2 * state.P + s2_eta)
        fc1 = arrivals.predict(mid, params, 0.0, None, 1)
        worst = max(worst, abs(fc2.point - fc1.point), abs(fc2.variance - fc1.variance))

    elapsed = time.time() - start
    assert worst < 1e-6
    assert elapsed < 10.0
    announce(1, "kalman oracle equivalence",
             f"max abs diff {worst:.2e} over 120 draws, {elapsed:.1f}s")


# -- 2. Adaptivity ---------------------------------------------------------

def _simulate_ar_days(phi, s2_eps, s2_eta, n_days, n_bins, centroid, rng):
    days = []
    for _ in range(n_days):
        mu = rng.normal(0, math.sqrt(s2_eta / (1 - phi ** 2)))
        series = []
        for _b in range(n_bins):
            mu = phi * mu + rng.normal(0, math.sqrt(s2_eta))
            y = centroid + mu + rng.normal(0, math.sqrt(s2_eps))
            series.append((y, centroid, None))
        days.append(series)
    return days


def test_criterion_2_adaptivity():
    start = time.time()
    rng = np.random.default_rng(202)
    centroid = 100.0
    days = _simulate_ar_days(0.95, 9.0, 1.0, 20, 96, centroid, rng)
    fitted = arrivals.fit_mle(days, seed=0)
    assert fitted.phi >= 0.9, f"fitted phi {fitted.phi}"

    # level shift +delta at T: 1-step error must fall below 0.2*delta in 10 bins
    delta = 50.0
    T = 40
    state = arrivals.stationary_state(fitted)
    errors = []
    for b in range(70):
        y = centroid + (delta if b >= T else 0.0)
        fc = arrivals.predict(state, fitted, centroid, None, 1)
        errors.append(abs(fc.point - y))
        state, _ = arrivals.filter_update(state, fitted, y=y, m=centroid)
    assert errors[T + 10] < 0.2 * delta

    # replay comparison: adaptive model vs frozen centroid baseline post-shift
    state = arrivals.stationary_state(fitted)
    model_err, base_err = [], []
    for b in range(70):
        y = centroid + (delta if b >= T else 0.0)
        fc = arrivals.predict(state, fitted, centroid, None, 1)
        if b >= T:
            model_err.append(abs(fc.point - y))
            base_err.append(abs(centroid - y))
        state, _ = arrivals.filter_update(state, fitted, y=y, m=centroid)
    mae_ratio = np.mean(model_err) / np.mean(base_err)
    elapsed = time.time() - start
    assert mae_ratio <= 0.8
    assert elapsed < 30.0
    announce(2, "adaptivity", f"phi {fitted.phi:.3f}, post-shift error at T+10 "
             f"{errors[T + 10]:.1f} < {0.2 * delta}, MAE ratio {mae_ratio:.3f}, "
             f"{elapsed:.1f}s")


# -- 3. Parameter recovery -------------------------------------------------

def test_criterion_3_parameter_recovery():
    start = time.time()
    rng = np.random.default_rng(303)
    true_eps = 16.0
    days = []
    flagged = set(range(70, 74))
    for _ in range(20):
        series = []
        for b in range(96):
            x_val = 1.0 if b in flagged else 0.0
            y = 50.0 + 50.0 * x_val + rng.normal(0, math.sqrt(true_eps))
            series.append((y, 50.0, ExogenousVector((x_val,), ("event",))))
        days.append(series)
    fitted = arrivals.fit_mle(days, n_beta=1, seed=0)
    elapsed = time.time() - start
    assert 0.7 * true_eps <= fitted.sigma2_eps <= 1.3 * true_eps
    assert 35.0 <= fitted.beta[0] <= 65.0
    assert elapsed < 120.0
    announce(3, "parameter recovery",
             f"s2_eps {fitted.sigma2_eps:.2f} (true {true_eps}), "
             f"beta0 {fitted.beta[0]:.1f} (true 50), {elapsed:.1f}s")


# -- 4. Clustering recovery ------------------------------------------------

def test_criterion_4_clustering_recovery():
    start = time.time()
    rng = np.random.default_rng(404)
    spread = 2.0
    shapes = {
        0: np.full(96, 20.0),
        1: np.concatenate([np.full(48, 60.0), np.full(48, 20.0)]),
        2: np.concatenate([np.full(48, 100.0), np.full(48, 40.0)]),
    }
    # separation between type means >= 5x within-type spread
    profiles, truth = [], []
    for i in range(30):
        t = i % 3
        counts = np.clip(shapes[t] + rng.normal(0, spread, 96), 0, None)
        profiles.append(ingest.DailyProfile("S1", DAY + dt.timedelta(days=i), counts))
        truth.append(t)
    cs = patterns.cluster_days(profiles, k_range=range(2, 7), seed=0)
    fitted = [cs.members[p.service_day] for p in profiles]
    ari = adjusted_rand_score(truth, fitted)
    assert ari == 1.0

    correct = 0
    for p, t in zip(profiles, truth):
        c = patterns.classify_partial(p.counts[:8], cs)
        if c.cluster_id == cs.members[p.service_day]:
            correct += 1
    accuracy = correct / len(profiles)
    elapsed = time.time() - start
    assert accuracy >= 0.95
    assert elapsed < 30.0
    announce(4, "clustering recovery",
             f"ARI {ari:.2f}, bin-8 classification accuracy {accuracy:.2%}, "
             f"{elapsed:.1f}s")


# -- 5. OD simplex and recovery --------------------------------------------

def test_criterion_5_od_simplex_and_recovery():
    rng = np.random.default_rng(505)
    for _ in range(300):
        n_dests = int(rng.integers(2, 7))
        dests = tuple(f"D{i}" for i in range(n_dests))
        shares = odflow.DestinationShares(
            origin="A", destinations=dests, alpha=float(rng.uniform(0.01, 5.0)),
            period_def=odflow.PeriodDef())
        period = int(rng.integers(0, shares.period_def.n_periods))
        shares.counts[period] = {d: float(rng.integers(0, 500)) for d in dests}
        s = shares.shares(period)
        assert abs(sum(s.values()) - 1.0) <= 1e-9
        assert all(v > 0 for v in s.values())

    true_shares = {"S2": 0.6, "S3": 0.3, "S4": 0.1}
    spec = ingest.GeneratorSpec(stations={"S1": ingest.StationGenSpec(
        day_types=[ingest.DayTypeSpec(np.full(96, 2.0), true_shares)],
        travel_s={"S2": 300, "S3": 600, "S4": 900})})
    journeys = []
    rep = 0
    while len(journeys) < 10_000:
        taps = ingest.generate_synthetic_day(spec, DAY + dt.timedelta(days=rep),
                                             seed=rep)
        js, _ = ingest.link_journeys(taps)
        journeys.extend(js)
        rep += 1
    est = odflow.estimate_shares(journeys, "S1", ("S2", "S3", "S4"),
                                 period_def=odflow.PeriodDef(bins_per_period=96),
                                 alpha=1.0)
    got = est.shares(0)
    worst = max(abs(got[d] - p) for d, p in true_shares.items())
    assert worst <= 0.02
    announce(5, "od simplex + recovery",
             f"{len(journeys)} journeys, max share error {worst:.4f}")


# -- 6. Simulator conservation, capacity, FIFO ------------------------------

def test_criterion_6_simulator_conservation():
    start = time.time()
    rng = np.random.default_rng(606)
    for scenario in range(1000):
        n_stations = int(rng.integers(2, 6))
        stations = tuple(f"S{i}" for i in range(n_stations))
        capacity = int(rng.integers(5, 150))
        topo = LineTopology(
            stations=stations,
            run_s=tuple(float(rng.uniform(30, 240)) for _ in range(n_stations - 1)),
            dwell_s={s: float(rng.uniform(10, 90)) for s in stations},
            train_capacity=capacity,
            scheduled_headway_s=float(rng.uniform(400, 1200)))  # <= 3 spawns
        cfg = SimConfig(topology=topo, horizon_s=1200.0, tick_s=10.0,
                        bin_s=600.0, seed=int(rng.integers(0, 1 << 30)),
                        arrival_mode=str(rng.choice(["expected-flow",
                                                     "poisson-sample"])))
        od = {}
        for i, origin in enumerate(stations[:-1]):
            for b in range(2):
                flows = {d: float(rng.uniform(0, 30))
                         for d in stations[i + 1:] if rng.random() < 0.7}
                if flows:
                    od[(origin, b)] = flows
        result = run(cfg, od)
        assert result.conservation_holds(), f"scenario {scenario}"
        assert all(l <= capacity for (_, _, _, l) in result.train_log)

        # FIFO boarding vs passenger-level oracle on a random instance
        load = {}
        for d in stations[1:]:
            c = int(rng.integers(0, capacity // 2 + 1))
            if c:
                load[d] = c
        if sum(load.values()) <= capacity:
            queue = [PassengerGroup(str(rng.choice(stations[1:])),
                                    int(rng.integers(1, 40)), float(i))
                     for i in range(int(rng.integers(0, 5)))]
            train = TrainState("t", 0, True, 1, dict(load), capacity=capacity)
            station = stations[int(rng.integers(1, n_stations))]
            new_train, new_platform, boarded, alighted, denied = board_alight(
                train, PlatformState(station, queue), station)
            o_load, o_b, o_a, o_d, _ = passenger_level_board(
                capacity, load, station,
                [(g.dest, g.count, g.arrival_time) for g in queue])
            assert (boarded, alighted, denied) == (o_b, o_a, o_d)
            assert {d: c for d, c in new_train.load_by_dest.items() if c} == o_load
    elapsed = time.time() - start
    assert elapsed < 60.0
    announce(6, "simulator conservation/capacity/FIFO",
             f"1000 scenarios, {elapsed:.1f}s")


# -- 7. What-if directional check ------------------------------------------

def test_criterion_7_whatif_directional():
    start = time.time()
    topo = LineTopology(
        stations=("S1", "S2", "S3"),
        run_s=(60.0, 60.0),
        dwell_s={s: 30.0 for s in ("S1", "S2", "S3")},
        train_capacity=50, scheduled_headway_s=120.0)
    cfg = SimConfig(topology=topo, horizon_s=1800.0, tick_s=10.0, bin_s=900.0)
    od = {("S1", 0): {"S3": 300.0}, ("S2", 0): {"S3": 200.0},
          ("S1", 1): {"S3": 20.0}, ("S2", 1): {"S3": 20.0}}
    t0 = dt.datetime(2013, 2, 5, 8, 0)

    closed = GateClosurePlan(station="S1", close_start=t0,
                             close_end=t0 + dt.timedelta(minutes=15),
                             target_station="S2")
    result = evaluate_gate_closure(closed, cfg, od, sim_start=t0)
    assert result.target_station_improvement > 0

    noop = GateClosurePlan(station="S1", close_start=t0, close_end=t0,
                           target_station="S2")
    noop_result = evaluate_gate_closure(noop, cfg, od, sim_start=t0)
    base_bytes = json.dumps(noop_result.baseline.to_json()).encode()
    treat_bytes = json.dumps(noop_result.treated.to_json()).encode()
    assert base_bytes == treat_bytes
    elapsed = time.time() - start
    assert elapsed < 10.0
    announce(7, "gate-closure what-if",
             f"improvement {result.target_station_improvement:.0f} pax, "
             f"no-op byte-identical, {elapsed:.1f}s")


# -- 8. Cycle semantics ----------------------------------------------------

def _build_world(tmp_path):
    """Topology file, hand-built k=1 models, and a replay config."""
    stations = ("S1", "S2", "S3", "S4")
    topo = LineTopology(stations=stations, run_s=(120.0, 120.0, 120.0),
                        dwell_s={s: 30.0 for s in stations},
                        train_capacity=100, scheduled_headway_s=300.0,
                        exog_schema=("major_event_nearby", "planned_closure"))
    topo_path = tmp_path / "topology.json"
    topo_path.write_text(json.dumps(topo.to_json()))
    afc_path = tmp_path / "taps.csv"
    afc_path.write_text("card_id,station_id,direction,timestamp\n")
    store = service.ModelStore(tmp_path / "models")
    for i, station in enumerate(stations):
        cs = patterns.ClusterSet(
            station=station, k=1,
            centroids=np.full((1, 96), 10.0 * (i + 1)),
            members={DAY - dt.timedelta(days=d): 0 for d in range(1, 6)})
        store.save_clusters(cs)
        store.save_params(station, 0, arrivals.StateSpaceParams(
            phi=0.9, sigma2_eps=1.0, sigma2_eta=0.5, beta=(0.0, 0.0)))
        dests = tuple(s for s in stations if s != station)
        store.save_shares(odflow.DestinationShares(
            origin=station, destinations=dests, alpha=1.0,
            period_def=odflow.PeriodDef()))
    cfg = service.ServiceConfig(
        topology_path=str(topo_path), model_dir=str(tmp_path / "models"),
        afc_path=str(afc_path), mode="replay", sim_tick_s=15.0,
        thresholds={"platform_occupancy": 1000.0, "left_behind": 1000.0})
    return cfg, topo, store, stations


def _flat_day_taps(stations, level=8):
    taps = []
    for station in stations:
        for b in range(32, 48):
            for i in range(level):
                minutes = b * 15 + (i * 15) // level
                ts = (dt.datetime.combine(DAY, dt.time(0, 0))
                      + dt.timedelta(minutes=minutes))
                taps.append(ingest.TapEvent(f"c-{station}-{b}-{i}", station,
                                            "entry", ts))
    return taps


def test_criterion_8_cycle_semantics(tmp_path):
    cfg, topo, store, stations = _build_world(tmp_path)
    orch = service.Orchestrator(cfg, topo, store)
    snap = orch.run_cycle(dt.datetime(2013, 2, 5, 8, 0), [])
    fx = snap.arrival_forecasts["S1"]
    assert fx[1].target_bin == TimeBin(DAY, 33)  # 08:15
    assert fx[2].target_bin == TimeBin(DAY, 34)  # 08:30
    snap2 = orch.run_cycle(dt.datetime(2013, 2, 5, 8, 15), [])
    fx2 = snap2.arrival_forecasts["S1"]
    assert fx2[1].target_bin == TimeBin(DAY, 34)  # 08:30
    assert fx2[2].target_bin == TimeBin(DAY, 35)  # 08:45

    taps = _flat_day_taps(stations)
    streams = []
    for _ in range(2):
        orch = service.Orchestrator(cfg, topo, store)
        snapshots, _ = service.replay(taps, orch, DAY, first_bin=33, last_bin=44)
        streams.append(json.dumps([s.to_json() for s in snapshots]).encode())
    assert streams[0] == streams[1]
    announce(8, "cycle semantics", "08:00 -> 08:15/08:30 targets, replay "
             "byte-identical")


# -- 9. End-to-end synthetic demo ------------------------------------------

def test_criterion_9_end_to_end_demo(tmp_path):
    start = time.time()
    stations = ("S1", "S2", "S3")
    topo = LineTopology(stations=stations, run_s=(120.0, 120.0),
                        dwell_s={s: 30.0 for s in stations},
                        train_capacity=600, scheduled_headway_s=180.0)
    (tmp_path / "topology.json").write_text(json.dumps(topo.to_json()))

    def rates(peak):
        r = np.full(96, 6.0)
        r[28:40] = peak          # morning peak
        r[64:76] = 0.7 * peak    # evening peak
        return r.tolist()

    def station_spec(shares):
        weekday = {"rates": rates(40.0), "od_shares": shares,
                   "ar_phi": 0.9, "ar_sigma": 3.0}
        weekend = {"rates": rates(10.0), "od_shares": shares,
                   "ar_phi": 0.9, "ar_sigma": 1.5}
        return {"day_types": [weekday, weekend],
                "travel_s": {d: 400.0 for d in shares}}

    gen_spec = {"stations": {
        "S1": station_spec({"S2": 0.55, "S3": 0.45}),
        "S2": station_spec({"S1": 0.4, "S3": 0.6}),
        "S3": station_spec({"S1": 0.5, "S2": 0.5}),
    }}
    (tmp_path / "gen.json").write_text(json.dumps(gen_spec))

    runner = CliRunner()
    r = runner.invoke(cli.main, [
        "generate", "--spec", str(tmp_path / "gen.json"), "--days", "30",
        "--start-day", "2013-02-01", "--seed", "0",
        "--out", str(tmp_path / "train.csv")])
    assert r.exit_code == 0, r.output
    r = runner.invoke(cli.main, [
        "generate", "--spec", str(tmp_path / "gen.json"), "--days", "1",
        "--start-day", "2013-03-04", "--seed", "999",
        "--out", str(tmp_path / "test.csv")])
    assert r.exit_code == 0, r.output

    train = (tmp_path / "train.csv").read_text()
    test = (tmp_path / "test.csv").read_text()
    full = train + "".join(test.splitlines(keepends=True)[1:])
    (tmp_path / "all.csv").write_text(full)

    (tmp_path / "config.json").write_text(json.dumps({
        "topology_path": str(tmp_path / "topology.json"),
        "model_dir": str(tmp_path / "models"),
        "afc_path": str(tmp_path / "all.csv"),
        "mode": "replay",
        "thresholds": {"platform_occupancy": 5000, "left_behind": 5000},
    }))

    r = runner.invoke(cli.main, [
        "fit", "--config", str(tmp_path / "config.json"),
        "--afc", str(tmp_path / "train.csv"), "--k-max", "3"])
    assert r.exit_code == 0, r.output

    r = runner.invoke(cli.main, [
        "replay", "--config", str(tmp_path / "config.json"),
        "--day", "2013-03-04",
        "--report-out", str(tmp_path / "report.json")])
    assert r.exit_code == 0, r.output
    report = json.loads((tmp_path / "report.json").read_text())
    ratio = report["overall"]["mae_ratio"]
    elapsed = time.time() - start
    assert ratio < 1.0, f"model MAE ratio {ratio}"
    assert report["by_station"]
    assert elapsed < 600.0
    announce(9, "end-to-end synthetic demo",
             f"MAE ratio {ratio:.3f} over {report['overall']['n']} forecasts, "
             f"{elapsed:.0f}s")
