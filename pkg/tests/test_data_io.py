"""Grid construction, curve CSV round trips, load aggregation and clock changes."""
import io
import warnings
from datetime import datetime, timedelta, timezone
from zoneinfo import ZoneInfo

import numpy as np
import pytest
from hypothesis import given

from fundcurve.data_io import (
    LoadRecord,
    MarketSnapshot,
    build_grid,
    curves_to_string,
    default_grid,
    dst_adjust,
    load_hourly,
    parse_curves,
    synthetic_quarter_hours,
    write_load,
)
from fundcurve.errors import ConfigError, DataIntegrityError, GapError, ParseError
from fundcurve.step_curve import Direction
from fundcurve.synthetic import make_fixture_f1, wm_snapshot

from conftest import wm_pairs

BERLIN = ZoneInfo("Europe/Berlin")
TS = datetime(2017, 3, 1, 12, tzinfo=timezone.utc)
HEADER = "timestamp,side,price,cumulative_volume\n"


class TestGrid:
    def test_default_layout(self):
        p = default_grid().prices
        assert p[:3].tolist() == [-500.0, -450.0, -400.0]
        i = int(np.searchsorted(p, -83.05))
        assert p[i] == -83.05 and p[i - 1] == -100.0
        assert p[i + 1] == pytest.approx(-82.85)
        j = int(np.searchsorted(p, 163.5))
        assert p[j] == 163.5 and p[j + 1] == 213.5
        assert p[-1] == 3000.0
        assert np.all(np.diff(p) > 0)

    @pytest.mark.parametrize("args", [
        (10, 5, 0.2, 50, -500, 3000),
        (-83, 163, 0.0, 50, -500, 3000),
        (-600, 163, 0.2, 50, -500, 3000),
    ])
    def test_invalid(self, args):
        with pytest.raises(ConfigError):
            build_grid(*args)


class TestCurveCsv:
    def test_round_trip_f1(self):
        snap = wm_snapshot(make_fixture_f1(), TS)
        text = curves_to_string([snap])
        back = parse_curves(io.StringIO(text), snap.grid)
        assert len(back) == 1
        assert back[0].wsup == snap.wsup and back[0].wdem == snap.wdem
        assert curves_to_string(back) == text

    @given(wm_pairs())
    def test_round_trip_property(self, pair):
        snap = MarketSnapshot(TS, *pair)
        back = parse_curves(io.StringIO(curves_to_string([snap])), snap.grid)[0]
        assert back.wsup == snap.wsup and back.wdem == snap.wdem

    def test_step_convention(self, toy_grid):
        text = HEADER + "".join(f"2017-03-01T12:00:00+00:00,{r}\n" for r in [
            "S,0.0,10", "S,20.0,30", "D,-10.0,50", "D,40.0,20"])
        snap = parse_curves(io.StringIO(text), toy_grid)[0]
        assert snap.wsup(-20.0) == 0 and snap.wsup(15.0) == 10 and snap.wsup(100.0) == 30
        assert snap.wdem(-20.0) == 50 and snap.wdem(35.0) == 50 and snap.wdem(40.0) == 20

    def test_sorted_by_instant(self, toy_grid):
        rows = []
        for ts in ("2017-03-01T13:00:00+01:00", "2017-03-01T11:30:00+00:00"):
            rows += [f"{ts},S,0.0,1\n", f"{ts},D,0.0,5\n"]
        snaps = parse_curves(io.StringIO(HEADER + "".join(rows)), toy_grid)
        assert snaps[0].timestamp < snaps[1].timestamp

    @pytest.mark.parametrize("body, line", [
        ("2017-03-01T12:00:00+00:00,S,abc,1\n", 2),
        ("2017-03-01T12:00:00+00:00,S,0.0,1\n2017-03-01T12:00:00,D,0.0,1\n", 3),
        ("2017-03-01T12:00:00+00:00,X,0.0,1\n", 2),
        ("2017-03-01T12:00:00+00:00,S,0.0\n", 2),
    ])
    def test_parse_errors_carry_line(self, body, line, toy_grid):
        with pytest.raises(ParseError, match=f"line {line}"):
            parse_curves(io.StringIO(HEADER + body), toy_grid)

    def test_bad_header(self, toy_grid):
        with pytest.raises(ParseError):
            parse_curves(io.StringIO("a,b,c,d\n"), toy_grid)

    @pytest.mark.parametrize("rows", [
        ["S,0.0,-1", "D,0.0,5"],
        ["S,0.0,5", "S,10.0,3", "D,0.0,5"],
        ["S,0.0,1", "S,0.0,2", "D,0.0,5"],
        ["S,0.0,1"],
    ])
    def test_integrity_errors(self, rows, toy_grid):
        text = HEADER + "".join(f"2017-03-01T12:00:00+00:00,{r}\n" for r in rows)
        with pytest.raises(DataIntegrityError):
            parse_curves(io.StringIO(text), toy_grid)

    def test_snapshot_rejects_swapped_sides(self):
        snap = wm_snapshot(make_fixture_f1(), TS)
        with pytest.raises(DataIntegrityError):
            MarketSnapshot(TS, snap.wdem, snap.wsup)
        assert snap.wsup.direction is Direction.SUPPLY


def _load_csv(rows):
    buf = io.StringIO()
    write_load(rows, buf)
    buf.seek(0)
    return buf


class TestLoad:
    def test_hourly_mean(self):
        start = datetime(2017, 6, 1, tzinfo=timezone.utc)
        q = [(start + i * timedelta(minutes=15), v) for i, v in enumerate([1, 2, 3, 4, 10, 10, 10, 10])]
        recs = load_hourly(_load_csv(q))
        assert [r.load for r in recs] == [2.5, 10.0]
        assert recs[1].timestamp == start + timedelta(hours=1)

    def test_incomplete_end_hour_dropped(self):
        start = datetime(2017, 6, 1, tzinfo=timezone.utc)
        q = [(start + i * timedelta(minutes=15), 1.0) for i in range(6)]
        with pytest.warns(UserWarning):
            recs = load_hourly(_load_csv(q))
        assert len(recs) == 1

    def test_interior_gap(self):
        start = datetime(2017, 6, 1, tzinfo=timezone.utc)
        q = [(start + i * timedelta(minutes=15), 1.0) for i in range(8) if i != 5]
        with pytest.raises(GapError):
            load_hourly(_load_csv(q))

    def test_nonpositive_load(self):
        with pytest.raises(DataIntegrityError):
            LoadRecord(TS, 0.0)

    def test_full_year_has_8760_hours(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            recs = load_hourly(_load_csv(synthetic_quarter_hours(2017)))
        assert len(recs) == 8760
        assert len(dst_adjust(recs)) == 8760


def _hours(local_start, loads):
    start = local_start.replace(tzinfo=BERLIN).astimezone(timezone.utc)
    return [LoadRecord(start + i * timedelta(hours=1), float(v)) for i, v in enumerate(loads)]


class TestDst:
    def test_spring_gap_imputed(self):
        # 00, 01, (02 skipped), 03, 04 local on 2017-03-26
        recs = _hours(datetime(2017, 3, 26, 0), [100, 100, 110, 110])
        out = dst_adjust(recs)
        walls = [r.timestamp.hour for r in out]
        assert walls == [0, 1, 2, 3, 4]
        assert out[2].load == pytest.approx(105.0)

    def test_autumn_fold_averaged(self):
        # 01, 02 (CEST), 02 (CET), 03 local on 2017-10-29
        recs = _hours(datetime(2017, 10, 29, 1), [90, 100, 120, 95])
        out = dst_adjust(recs)
        assert [r.timestamp.hour for r in out] == [1, 2, 3]
        assert out[1].load == pytest.approx(110.0)

    def test_spring_gap_without_neighbours(self):
        recs = _hours(datetime(2017, 3, 26, 1), [100, 110, 110])
        with pytest.raises(DataIntegrityError):
            dst_adjust(recs)

    def test_ordinary_gap(self):
        recs = _hours(datetime(2017, 6, 1, 0), [1, 2, 3])
        with pytest.raises(GapError):
            dst_adjust([recs[0], recs[2]])
