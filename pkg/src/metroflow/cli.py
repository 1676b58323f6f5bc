"""Command line entry points: generate synthetic data, fit models offline,
replay a historical day, evaluate accuracy, and serve the HTTP API."""

from __future__ import annotations

import datetime as dt
import json
from pathlib import Path

import click

from . import ingest, service
from .core import LineTopology


def _load_config(config_path: str) -> service.ServiceConfig:
    return service.ServiceConfig.from_file(config_path)


def _load_topology(cfg: service.ServiceConfig) -> LineTopology:
    return LineTopology.from_json(Path(cfg.topology_path).read_text())


@click.group()
def main():
    """Predictive decision support for a metro line."""


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help="Generator spec JSON.")
@click.option("--days", default=30, show_default=True, help="Service days to generate.")
@click.option("--start-day", default="2013-02-01", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def generate(spec_path, days, start_day, seed, out_path):
    """Generate a synthetic AFC tap dataset."""
    spec = ingest.GeneratorSpec.from_json(Path(spec_path).read_text())
    first = dt.date.fromisoformat(start_day)
    all_taps = []
    for i in range(days):
        day = first + dt.timedelta(days=i)
        # weekday/weekend alternation when a second day type exists
        day_type = 1 if day.weekday() >= 5 else 0
        all_taps.extend(ingest.generate_synthetic_day(spec, day, seed + i, day_type))
    Path(out_path).write_text(ingest.taps_to_csv(all_taps))
    click.echo(f"wrote {len(all_taps)} taps over {days} days to {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--afc", "afc_path", default=None, type=click.Path(exists=True),
              help="Training AFC CSV (defaults to the config's afc_path).")
@click.option("--seed", default=0, show_default=True)
@click.option("--k-min", default=2, show_default=True)
@click.option("--k-max", default=6, show_default=True)
def fit(config_path, afc_path, seed, k_min, k_max):
    """Offline training: cluster daily profiles and fit per-cluster models."""
    cfg = _load_config(config_path)
    topology = _load_topology(cfg)
    path = afc_path or cfg.afc_path
    if not path:
        raise click.UsageError("no AFC dataset given")
    taps, errors = ingest.parse_afc(Path(path).open(), topology)
    if errors:
        click.echo(f"skipped {len(errors)} bad rows", err=True)
    journeys, _ = ingest.link_journeys(taps)
    events = []
    if cfg.events_path:
        events = ingest.load_events(Path(cfg.events_path).read_text(),
                                    topology.exog_schema)
    profiles = {s: ingest.build_daily_profiles(taps, s, cfg.bin_minutes, cfg.day_start)
                for s in topology.stations}
    profiles = {s: p for s, p in profiles.items() if len(p) >= 2}
    store = service.ModelStore(cfg.model_dir)
    service.fit_models(profiles, journeys, topology, store, events=events,
                       k_range=range(k_min, k_max + 1), seed=seed,
                       alpha=cfg.share_alpha, day_start=cfg.day_start,
                       bin_minutes=cfg.bin_minutes)
    click.echo(f"fitted models for {len(profiles)} stations into {cfg.model_dir}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--day", required=True, help="Service day to replay (YYYY-MM-DD).")
@click.option("--report-out", default=None, type=click.Path())
def replay(config_path, day, report_out):
    """Replay one historical day through the cycle logic and report accuracy."""
    cfg = _load_config(config_path)
    topology = _load_topology(cfg)
    taps, _ = ingest.parse_afc(Path(cfg.afc_path).open(), topology)
    events = []
    if cfg.events_path:
        events = ingest.load_events(Path(cfg.events_path).read_text(),
                                    topology.exog_schema)
    orch = service.Orchestrator(cfg, topology, service.ModelStore(cfg.model_dir),
                                events=events)
    snapshots, report = service.replay(taps, orch, dt.date.fromisoformat(day))
    click.echo(f"replayed {len(snapshots)} cycles")
    overall = report.get("overall", {})
    if overall:
        click.echo(f"model MAE {overall['mae']:.2f} vs baseline "
                   f"{overall['baseline_mae']:.2f} (ratio {overall['mae_ratio']:.3f})")
    if report_out:
        Path(report_out).write_text(json.dumps(report, indent=2))
        click.echo(f"report written to {report_out}")


@main.command()
@click.option("--records", "records_path", required=True, type=click.Path(exists=True),
              help="JSONL of completed forecast records.")
def evaluate(records_path):
    """Accuracy report from persisted forecast records."""
    records = []
    for line in Path(records_path).read_text().splitlines():
        doc = json.loads(line)
        if doc.get("observed") is None:
            continue
        records.append(service.ForecastRecord(
            station=doc["station"],
            target_bin=service.TimeBin(dt.date.fromisoformat(doc["day"]),
                                       doc["bin"]),
            horizon=doc["h"], point=doc["point"], variance=doc["variance"],
            baseline_point=doc["baseline"],
            issue_time=dt.datetime.fromisoformat(doc["issued"]),
            observed=doc["observed"]))
    report = service.evaluate_accuracy(records)
    click.echo(json.dumps(report, indent=2))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--ui-dir", default=None, type=click.Path(),
              help="Static dashboard assets to serve under /ui.")
def serve(config_path, ui_dir):
    """Run the HTTP service (live mode schedules cycles on bin boundaries)."""
    import uvicorn

    from .server import create_app

    cfg = _load_config(config_path)
    topology = _load_topology(cfg)
    store = service.ModelStore(cfg.model_dir)
    missing = [s for s in topology.stations
               if s not in store.stations_with_models()]
    if missing:
        click.echo(f"warning: no models for stations {missing}; "
                   "serving centroid fallbacks", err=True)
    events = []
    if cfg.events_path:
        events = ingest.load_events(Path(cfg.events_path).read_text(),
                                    topology.exog_schema)
    orch = service.Orchestrator(cfg, topology, store, events=events)
    app = create_app(orch, ui_dir=ui_dir)
    uvicorn.run(app, host=cfg.host, port=cfg.port)


if __name__ == "__main__":
    main()
