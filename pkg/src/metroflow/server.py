"""HTTP/JSON API over published cycle snapshots, plus an SSE notification
stream and the gate-closure what-if endpoint."""

from __future__ import annotations

import asyncio
import datetime as dt
import json
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles

from . import decisions, mesosim
from .service import Orchestrator


def create_app(orchestrator: Orchestrator, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="metroflow")
    app.state.orch = orchestrator
    app.state.subscribers: list[asyncio.Queue] = []

    def latest():
        snap = orchestrator.latest
        if snap is None:
            raise HTTPException(status_code=503, detail="no cycle published yet")
        return snap

    @app.get("/v1/health")
    def health():
        snap = orchestrator.latest
        if snap is None:
            return {"status": "warming"}
        return {"status": "ok", "last_cycle": snap.cycle_time.isoformat()}

    @app.get("/v1/stations")
    def stations():
        return {"stations": list(orchestrator.topology.stations),
                "bin_minutes": orchestrator.config.bin_minutes}

    @app.get("/v1/forecast/arrivals")
    def forecast_arrivals(station: str, history: int = 16):
        snap = latest()
        if station not in orchestrator.topology.stations:
            raise HTTPException(status_code=404, detail=f"unknown station {station}")
        cluster = orchestrator.active_cluster.get(station, 0)
        observed = orchestrator.observed_today.get(station, [])
        tail = observed[-history:]
        first = len(observed) - len(tail)
        baseline = [orchestrator._centroid(station, cluster, b)
                    for b in range(first, len(observed))]
        fx = snap.arrival_forecasts.get(station, {})
        out = {"station": station, "cluster": cluster,
               "fallback": station in orchestrator.fallback,
               "history": {"first_bin": first, "observed": tail,
                           "baseline": baseline},
               "forecasts": {}}
        for h, f in fx.items():
            out["forecasts"][str(h)] = {
                "target_bin": f.target_bin.index, "point": f.point,
                "clamped": f.clamped_point, "variance": f.variance,
                "baseline": orchestrator._centroid(station, cluster, f.target_bin.index),
            }
        return out

    @app.get("/v1/forecast/od")
    def forecast_od(origin: str):
        snap = latest()
        by_h = snap.od_forecasts.get(origin)
        if by_h is None:
            raise HTTPException(status_code=404, detail=f"unknown origin {origin}")
        return {"origin": origin,
                "forecasts": {str(h): {"total": f.total,
                                       "target_bin": f.target_bin.index,
                                       "flows": dict(sorted(f.flows.items()))}
                              for h, f in by_h.items()}}

    @app.get("/v1/sim/loads")
    def sim_loads():
        snap = latest()
        return {"trains": [{"train_id": t, "station": s, "depart_s": d, "load": l}
                           for (t, s, d, l) in snap.sim_result.train_log]}

    @app.get("/v1/sim/platforms")
    def sim_platforms():
        snap = latest()
        return {"platforms": snap.sim_result.to_json()["stations"]}

    @app.get("/v1/alerts")
    def alerts():
        snap = latest()
        return {"alerts": [{"station": a.station, "bin": a.bin, "metric": a.metric,
                            "value": a.value, "threshold": a.threshold,
                            "severity": a.severity} for a in snap.alerts]}

    @app.get("/v1/denial")
    def denial(station: str):
        snap = latest()
        d = snap.denial.get(station)
        if d is None:
            raise HTTPException(status_code=404, detail=f"unknown station {station}")
        return {"station": station, "bin": d.bin, "probability": d.probability,
                "method": d.method}

    @app.post("/v1/whatif/gate-closure")
    def whatif(plan_doc: dict):
        snap = latest()
        plan = decisions.GateClosurePlan.from_json(plan_doc)
        cfg = orchestrator.config
        bin_s = cfg.bin_minutes * 60.0
        sim_cfg = mesosim.SimConfig(
            topology=orchestrator.topology, horizon_s=2 * bin_s,
            tick_s=cfg.sim_tick_s, bin_s=bin_s, seed=cfg.seed,
            arrival_mode="expected-flow")
        od_inputs = {}
        for station, by_h in snap.od_forecasts.items():
            for h, f in by_h.items():
                od_inputs[(station, h - 1)] = dict(f.flows)
        result = decisions.evaluate_gate_closure(
            plan, sim_cfg, od_inputs, sim_start=snap.sim_start)
        return result.to_json()

    @app.get("/v1/accuracy")
    def accuracy():
        from .service import evaluate_accuracy
        return evaluate_accuracy(orchestrator.completed)

    @app.get("/v1/events")
    async def events(request: Request):
        queue: asyncio.Queue = asyncio.Queue()
        app.state.subscribers.append(queue)

        async def stream():
            try:
                while True:
                    if await request.is_disconnected():
                        break
                    try:
                        payload = await asyncio.wait_for(queue.get(), timeout=15.0)
                    except asyncio.TimeoutError:
                        yield ": keepalive\n\n"
                        continue
                    yield f"event: snapshot\ndata: {payload}\n\n"
            finally:
                app.state.subscribers.remove(queue)

        return StreamingResponse(stream(), media_type="text/event-stream")

    def notify_snapshot(snapshot) -> None:
        payload = json.dumps({"cycle_time": snapshot.cycle_time.isoformat()})
        for queue in list(app.state.subscribers):
            queue.put_nowait(payload)

    app.state.notify_snapshot = notify_snapshot

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


async def live_loop(app: FastAPI, taps_for_bin, position_reports_fn=None,
                    clock=None) -> None:
    """Fire run_cycle at each bin boundary; taps_for_bin(bin) supplies data."""
    orch: Orchestrator = app.state.orch
    bin_minutes = orch.config.bin_minutes
    now_fn = clock or dt.datetime.now
    while True:
        now = now_fn()
        seconds_into = (now.minute % bin_minutes) * 60 + now.second
        wait = bin_minutes * 60 - seconds_into
        await asyncio.sleep(wait)
        cycle_time = now_fn().replace(second=0, microsecond=0)
        reports = position_reports_fn() if position_reports_fn else ()
        snapshot = orch.run_cycle(cycle_time, taps_for_bin(cycle_time), reports)
        app.state.notify_snapshot(snapshot)
