import datetime as dt
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from metroflow.arrivals import ArrivalForecast
from metroflow.core import ConfigError, TimeBin
from metroflow.ingest import Journey
from metroflow.odflow import (
    DestinationShares,
    PeriodDef,
    estimate_shares,
    forecast_od,
    update_shares_online,
)

DAY = dt.date(2013, 2, 5)
DESTS = ("B", "C", "D")


def journey(dest, hhmm="08:05", origin="A"):
    h, m = map(int, hhmm.split(":"))
    entry = dt.datetime(2013, 2, 5, h, m)
    return Journey("c", origin, dest, entry, entry + dt.timedelta(minutes=20))


def journeys_with_counts(b, c, d, hhmm="08:05"):
    return ([journey("B", hhmm)] * b + [journey("C", hhmm)] * c
            + [journey("D", hhmm)] * d)


class TestEstimateShares:
    def test_prior_only_is_uniform(self):
        shares = estimate_shares([], "A", DESTS, alpha=1.0)
        assert shares.shares(0) == pytest.approx({"B": 1 / 3, "C": 1 / 3, "D": 1 / 3})

    def test_smoothing_formula(self):
        shares = estimate_shares(journeys_with_counts(30, 10, 0), "A", DESTS, alpha=1.0)
        period = shares.period_def.period_of(32)
        assert shares.shares(period) == pytest.approx(
            {"B": 31 / 43, "C": 11 / 43, "D": 1 / 43})

    def test_tiny_alpha_limit(self):
        shares = estimate_shares(journeys_with_counts(50, 0, 0), "A", DESTS, alpha=1e-6)
        period = shares.period_def.period_of(32)
        assert shares.shares(period)["B"] == pytest.approx(1.0, abs=1e-4)

    def test_origin_cannot_be_destination(self):
        with pytest.raises(ConfigError):
            estimate_shares([], "A", ("A", "B"))

    def test_alpha_must_be_positive(self):
        with pytest.raises(ConfigError):
            estimate_shares([], "A", DESTS, alpha=0.0)

    def test_periods_partition_day(self):
        pd_ = PeriodDef(bins_per_period=4, bin_minutes=15)
        covered = [pd_.period_of(b) for b in range(96)]
        assert covered == sorted(covered)
        assert len(set(covered)) == pd_.n_periods == 24


class TestUpdateSharesOnline:
    def test_no_new_journeys_identity(self):
        shares = estimate_shares(journeys_with_counts(3, 2, 1), "A", DESTS)
        updated = update_shares_online(shares, [], lam=1.0)
        assert updated.counts == shares.counts

    def test_cumulative_counting(self):
        shares = estimate_shares(journeys_with_counts(30, 10, 0), "A", DESTS, alpha=1.0)
        updated = update_shares_online(shares, [journey("D")] * 43, lam=1.0)
        period = shares.period_def.period_of(32)
        assert updated.shares(period) == pytest.approx(
            {"B": 31 / 86, "C": 11 / 86, "D": 44 / 86})

    def test_forgetting_halves_counts(self):
        shares = estimate_shares(journeys_with_counts(30, 10, 0), "A", DESTS)
        updated = update_shares_online(shares, [], lam=0.5)
        period = shares.period_def.period_of(32)
        assert updated.counts[period]["B"] == pytest.approx(15.0)
        assert updated.counts[period]["C"] == pytest.approx(5.0)

    def test_bad_lambda(self):
        shares = estimate_shares([], "A", DESTS)
        with pytest.raises(ConfigError):
            update_shares_online(shares, [], lam=0.0)


def arrival(total, bin_index=33, h=1):
    return ArrivalForecast(station="A", target_bin=TimeBin(DAY, bin_index),
                           horizon=h, point=total, variance=1.0)


class TestForecastOd:
    def test_proportional_split(self):
        shares = DestinationShares(origin="A", destinations=("B", "C"), alpha=1e-9,
                                   period_def=PeriodDef())
        shares.counts[8] = {"B": 0.6, "C": 0.4}
        od = forecast_od(arrival(100.0), shares)
        assert od.flows == pytest.approx({"B": 60.0, "C": 40.0}, abs=1e-5)

    def test_zero_total(self):
        shares = estimate_shares([], "A", DESTS)
        od = forecast_od(arrival(0.0), shares)
        assert all(f == 0.0 for f in od.flows.values())

    def test_exact_rational_split(self):
        shares = estimate_shares(journeys_with_counts(30, 10, 0), "A", DESTS, alpha=1.0)
        od = forecast_od(arrival(43.0), shares)
        expect = {d: float(43 * Fraction(c + 1, 43))
                  for d, c in zip(DESTS, (30, 10, 0))}
        assert od.flows == pytest.approx(expect, abs=1e-9)
        assert od.flows["B"] == pytest.approx(31.0)

    def test_flow_conservation(self):
        shares = estimate_shares(journeys_with_counts(7, 5, 2), "A", DESTS)
        od = forecast_od(arrival(123.4), shares)
        assert sum(od.flows.values()) == pytest.approx(123.4, abs=1e-6)

    def test_negative_point_clamped(self):
        shares = estimate_shares([], "A", DESTS)
        od = forecast_od(arrival(-5.0), shares)
        assert od.total == 0.0


@given(st.lists(st.integers(0, 500), min_size=2, max_size=6),
       st.floats(0.01, 10.0))
def test_simplex_preservation(counts, alpha):
    dests = tuple(f"D{i}" for i in range(len(counts)))
    shares = DestinationShares(origin="A", destinations=dests, alpha=alpha,
                               period_def=PeriodDef())
    shares.counts[0] = {d: float(c) for d, c in zip(dests, counts)}
    s = shares.shares(0)
    assert sum(s.values()) == pytest.approx(1.0, abs=1e-9)
    assert all(v > 0 for v in s.values())


@given(st.lists(st.integers(0, 100), min_size=2, max_size=4), st.integers(1, 50))
def test_share_monotone_in_count(counts, bump):
    dests = tuple(f"D{i}" for i in range(len(counts)))
    shares = DestinationShares(origin="A", destinations=dests, alpha=1.0,
                               period_def=PeriodDef())
    shares.counts[0] = {d: float(c) for d, c in zip(dests, counts)}
    before = shares.shares(0)[dests[0]]
    shares.counts[0][dests[0]] += bump
    after = shares.shares(0)[dests[0]]
    assert after >= before


def test_shares_json_roundtrip():
    shares = estimate_shares(journeys_with_counts(30, 10, 5), "A", DESTS)
    back = DestinationShares.from_json(shares.to_json())
    assert back.origin == "A"
    assert back.counts == shares.counts
    assert back.alpha == shares.alpha
