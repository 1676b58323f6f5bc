import datetime as dt

import pytest

from metroflow.core import LineTopology
from metroflow.ingest import TapEvent


@pytest.fixture
def topology():
    return LineTopology(
        stations=("S1", "S2", "S3", "S4"),
        run_s=(120.0, 120.0, 120.0),
        dwell_s={"S1": 30.0, "S2": 30.0, "S3": 30.0, "S4": 30.0},
        train_capacity=100,
        scheduled_headway_s=300.0,
        exog_schema=("major_event_nearby", "planned_closure"),
    )


def tap(card, station, direction, hhmm, day="2013-02-05", second=0):
    h, m = map(int, hhmm.split(":"))
    ts = dt.datetime.fromisoformat(day) + dt.timedelta(hours=h, minutes=m, seconds=second)
    return TapEvent(card, station, direction, ts)
