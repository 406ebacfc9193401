"""Reading and writing auction curves and load series.

Curve CSV
    ``timestamp,side,price,cumulative_volume`` with a header row. ``side`` is
    ``S`` (supply) or ``D`` (demand), prices in EUR/MWh, volumes in MW,
    timestamps ISO-8601 with an explicit UTC offset. Each (timestamp, side)
    group lists curve breakpoints; between breakpoints the volume of the
    closest breakpoint at or below the price applies. Below the first
    breakpoint supply is 0 and demand keeps its first volume.

Load CSV
    ``timestamp,load_mw``, one row per quarter hour.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from .errors import ConfigError, DataIntegrityError, GapError, ParseError
from .step_curve import Direction, PriceGrid, StepCurve, to_units

CURVE_COLUMNS = ("timestamp", "side", "price", "cumulative_volume")
LOAD_COLUMNS = ("timestamp", "load_mw")
MARKET_TZ = "Europe/Berlin"

#: Grid layout used for German day-ahead curves: 50 EUR steps outside the
#: core band, 0.20 EUR inside it.
DEFAULT_GRID_PARAMS = dict(band_lo=-83.05, band_hi=163.50, fine_step=0.20,
                           coarse_step=50.0, hard_lo=-500.0, hard_hi=3000.0)


@dataclass(frozen=True)
class MarketSnapshot:
    """Wholesale supply and demand inverses for one delivery hour."""

    timestamp: datetime
    wsup: StepCurve
    wdem: StepCurve

    def __post_init__(self):
        if self.wsup.grid != self.wdem.grid:
            raise DataIntegrityError(f"{self.timestamp}: supply and demand grids differ")
        if self.wsup.direction is not Direction.SUPPLY or self.wdem.direction is not Direction.DEMAND:
            raise DataIntegrityError(f"{self.timestamp}: expected (supply, demand) curves")
        if self.wdem.units[0] < self.wsup.units[0]:
            raise DataIntegrityError(
                f"{self.timestamp}: demand at p_min is below supply at p_min")

    @property
    def grid(self) -> PriceGrid:
        return self.wsup.grid


@dataclass(frozen=True)
class LoadRecord:
    timestamp: datetime
    load: float

    def __post_init__(self):
        if not self.load > 0:
            raise DataIntegrityError(f"{self.timestamp}: load must be positive, got {self.load}")


def build_grid(band_lo, band_hi, fine_step, coarse_step, hard_lo, hard_hi) -> PriceGrid:
    """Price grid with fine spacing inside [band_lo, band_hi] and coarse outside.

    Coarse points are laid out from ``hard_lo`` upwards and from ``band_hi``
    upwards, so both band edges and both hard bounds are grid points.
    """
    if not (fine_step > 0 and coarse_step > 0):
        raise ConfigError("grid steps must be positive")
    if not (hard_lo <= band_lo < band_hi <= hard_hi):
        raise ConfigError(
            f"need hard_lo <= band_lo < band_hi <= hard_hi, got "
            f"{hard_lo}, {band_lo}, {band_hi}, {hard_hi}")

    def run(start, stop, step):
        n = math.ceil((stop - start) / step - 1e-9)
        return start + step * np.arange(max(n, 0))

    pts = np.concatenate([
        run(hard_lo, band_lo, coarse_step),
        run(band_lo, band_hi, fine_step),
        [band_hi],
        run(band_hi, hard_hi, coarse_step)[1:],
        [hard_hi] if hard_hi > band_hi else [],
    ])
    return PriceGrid(np.round(pts, 10))


def default_grid() -> PriceGrid:
    return build_grid(**DEFAULT_GRID_PARAMS)


# --------------------------------------------------------------------------
# curves

def _open_text(source):
    if isinstance(source, (str, Path)):
        return open(source, newline="", encoding="utf-8")
    return source


def _parse_timestamp(text, line):
    try:
        ts = datetime.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"bad timestamp {text!r}", line) from None
    if ts.tzinfo is None:
        raise ParseError(f"timestamp {text!r} has no UTC offset", line)
    return ts


def _parse_float(text, what, line):
    try:
        x = float(text)
    except ValueError:
        raise ParseError(f"bad {what} {text!r}", line) from None
    if not math.isfinite(x):
        raise ParseError(f"{what} must be finite, got {text!r}", line)
    return x


def _check_header(row, expected, line=1):
    if row is None or tuple(c.strip() for c in row) != expected:
        raise ParseError(f"expected header {','.join(expected)}, got {row}", line)


def sample_points(grid: PriceGrid, prices, volumes, direction: Direction) -> StepCurve:
    """Sample breakpoints onto ``grid`` with the step convention."""
    prices = np.asarray(prices, dtype=float)
    units = to_units(volumes)
    idx = np.searchsorted(prices, grid.prices + 1e-9, side="right") - 1
    out = np.where(idx >= 0, units[np.maximum(idx, 0)],
                   0 if direction is Direction.SUPPLY else units[0])
    return StepCurve(grid, out, direction)


def parse_curves(source, grid: PriceGrid | None = None) -> list[MarketSnapshot]:
    """Read a curve CSV into snapshots sorted by delivery instant."""
    grid = grid or default_grid()
    points = defaultdict(list)
    f = _open_text(source)
    try:
        reader = csv.reader(f)
        _check_header(next(reader, None), CURVE_COLUMNS)
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line)
            ts = _parse_timestamp(row[0], line)
            side = row[1].strip()
            if side not in ("S", "D"):
                raise ParseError(f"side must be S or D, got {side!r}", line)
            price = _parse_float(row[2], "price", line)
            vol = _parse_float(row[3], "cumulative_volume", line)
            if vol < 0:
                raise DataIntegrityError(f"{ts.isoformat()}: negative volume on line {line}")
            points[ts, side].append((price, vol))
    finally:
        if f is not source:
            f.close()

    snapshots = []
    for ts in sorted({k[0] for k in points}):
        curves = {}
        for side, direction in (("S", Direction.SUPPLY), ("D", Direction.DEMAND)):
            pts = sorted(points.get((ts, side), []))
            if not pts:
                raise DataIntegrityError(f"{ts.isoformat()}: missing {direction.value} curve")
            p, v = np.array(pts).T
            if np.any(np.diff(p) == 0):
                raise DataIntegrityError(f"{ts.isoformat()}: repeated {direction.value} price")
            dv = np.diff(v)
            if (direction is Direction.SUPPLY and np.any(dv < 0)) or \
               (direction is Direction.DEMAND and np.any(dv > 0)):
                raise DataIntegrityError(
                    f"{ts.isoformat()}: {direction.value} volumes are not monotone in price")
            curves[side] = sample_points(grid, p, v, direction)
        snapshots.append(MarketSnapshot(ts, curves["S"], curves["D"]))
    return snapshots


def curve_breakpoints(curve: StepCurve):
    """Grid prices where the curve changes, plus p_min; enough to rebuild it."""
    u = curve.units
    keep = np.concatenate([[True], u[1:] != u[:-1]])
    return curve.grid.prices[keep], curve.volumes[keep]


def write_curves(snapshots, target) -> None:
    f = open(target, "w", newline="", encoding="utf-8") if isinstance(target, (str, Path)) else target
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for snap in sorted(snapshots, key=lambda s: s.timestamp):
            ts = snap.timestamp.isoformat()
            for side, curve in (("D", snap.wdem), ("S", snap.wsup)):
                for p, v in zip(*curve_breakpoints(curve)):
                    w.writerow([ts, side, repr(float(p)), f"{v:.1f}"])
    finally:
        if f is not target:
            f.close()


def curves_to_string(snapshots) -> str:
    buf = io.StringIO()
    write_curves(snapshots, buf)
    return buf.getvalue()


# --------------------------------------------------------------------------
# load

def read_quarter_hours(source) -> list[tuple[datetime, float]]:
    rows = []
    f = _open_text(source)
    try:
        reader = csv.reader(f)
        _check_header(next(reader, None), LOAD_COLUMNS)
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line)
            rows.append((_parse_timestamp(row[0], line), _parse_float(row[1], "load_mw", line)))
    finally:
        if f is not source:
            f.close()
    return rows


def load_hourly(source) -> list[LoadRecord]:
    """Average quarter-hourly load into hourly records.

    Hours are formed on the absolute time line, so clock changes need no
    special treatment here. Incomplete hours at either end are dropped with a
    warning; missing quarters anywhere else raise :class:`GapError`.
    """
    rows = read_quarter_hours(source)
    if not rows:
        return []
    rows.sort(key=lambda r: r[0])
    quarter = timedelta(minutes=15)
    utc = [ts.astimezone(timezone.utc) for ts, _ in rows]
    dupes = [rows[i][0] for i in range(1, len(rows)) if utc[i] == utc[i - 1]]
    if dupes:
        raise DataIntegrityError(f"duplicate quarter-hours: {[d.isoformat() for d in dupes]}")
    gaps = [rows[i][0] for i in range(1, len(rows)) if utc[i] - utc[i - 1] != quarter]
    if gaps:
        raise GapError(f"missing quarter-hours before {[g.isoformat() for g in gaps]}", gaps)

    groups = defaultdict(list)
    for (ts, load), u in zip(rows, utc):
        groups[u.replace(minute=0, second=0, microsecond=0)].append((ts, load))
    records, dropped = [], 0
    for hour in sorted(groups):
        quarters = groups[hour]
        if len(quarters) < 4:
            dropped += 1
            continue
        first = quarters[0][0]
        start = (hour.astimezone(first.tzinfo))
        records.append(LoadRecord(start, float(np.mean([q[1] for q in quarters]))))
    if dropped:
        warnings.warn(f"dropped {dropped} incomplete hour(s) at the ends of the load series")
    return records


def _naive_local(ts: datetime, tz: ZoneInfo) -> datetime:
    return ts.astimezone(tz).replace(tzinfo=None) if ts.tzinfo is not None else ts


def _is_ambiguous(naive: datetime, tz: ZoneInfo) -> bool:
    return (naive.replace(tzinfo=tz, fold=0).utcoffset()
            != naive.replace(tzinfo=tz, fold=1).utcoffset())


def _is_nonexistent(naive: datetime, tz: ZoneInfo) -> bool:
    aware = naive.replace(tzinfo=tz)
    return aware.astimezone(timezone.utc).astimezone(tz).replace(tzinfo=None) != naive


def dst_adjust(records, tz: str = MARKET_TZ) -> list[LoadRecord]:
    """Map hourly records onto a clock-change-free local series (24 h per day).

    The hour skipped in spring gets the mean of the two hours before and the
    two after it; the hour repeated in autumn becomes the mean of its two
    instances. Timestamps come back as naive local wall-clock times.
    """
    zone = ZoneInfo(tz)
    by_wall = defaultdict(list)
    for r in records:
        by_wall[_naive_local(r.timestamp, zone)].append(r.load)
    if not by_wall:
        return []
    values = {}
    for wall, loads in by_wall.items():
        if len(loads) == 1:
            values[wall] = loads[0]
        elif len(loads) == 2 and _is_ambiguous(wall, zone):
            values[wall] = (loads[0] + loads[1]) / 2.0
        else:
            raise DataIntegrityError(
                f"{wall.isoformat()} appears {len(loads)} times outside a clock change")

    hour = timedelta(hours=1)
    start, end = min(values), max(values)
    n = int((end - start) / hour) + 1
    out = []
    for i in range(n):
        wall = start + i * hour
        if wall in values:
            out.append(LoadRecord(wall, values[wall]))
            continue
        if not _is_nonexistent(wall, zone):
            raise GapError(f"missing hour {wall.isoformat()}", [wall])
        neighbours = [wall + d * hour for d in (-2, -1, 1, 2)]
        missing = [x for x in neighbours if x not in values]
        if missing:
            raise DataIntegrityError(
                f"cannot impute {wall.isoformat()}: neighbours {[m.isoformat() for m in missing]} absent")
        out.append(LoadRecord(wall, float(np.mean([values[x] for x in neighbours]))))
    return out


def write_load(quarters, target) -> None:
    """Write ``(timestamp, load_mw)`` pairs in the load CSV schema."""
    f = open(target, "w", newline="", encoding="utf-8") if isinstance(target, (str, Path)) else target
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOAD_COLUMNS)
        for ts, load in quarters:
            w.writerow([ts.isoformat(), repr(float(load))])
    finally:
        if f is not target:
            f.close()


def synthetic_quarter_hours(year: int, tz: str = MARKET_TZ, base: float = 50000.0,
                            seed: int = 0) -> list[tuple[datetime, float]]:
    """A gap-free quarter-hourly load year in local time with its offsets."""
    zone = ZoneInfo(tz)
    start = datetime(year, 1, 1, tzinfo=zone).astimezone(timezone.utc)
    end = datetime(year + 1, 1, 1, tzinfo=zone).astimezone(timezone.utc)
    n = int((end - start) / timedelta(minutes=15))
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    loads = base + 8000 * np.sin(2 * np.pi * t / 96) + rng.normal(0, 500, n)
    return [((start + i * timedelta(minutes=15)).astimezone(zone), float(round(x, 1)))
            for i, x in zip(t.tolist(), loads)]
