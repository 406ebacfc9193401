"""Slope and point elasticity of fundamental demand curves.

The slope at probe price ``p`` is a central difference of the forward demand
curve (price as a function of volume) around ``v0 = FDem^-1(p)``::

    ls(p, h) = (FDem(v0 + h) - FDem(v0 - h)) / (2 h)
    E(p)     = p / v0 / ls(p, h)

A probe whose slope is zero (a price plateau wider than ``2 h``) or whose
shifted volumes leave the curve's range is a sentinel: it is reported with
``sentinel_flag = 1`` and left out of every mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data_io import MARKET_TZ
from .errors import ConfigError, DomainError, EmptyAggregateError
from .step_curve import Direction, StepCurve, eval_inverse, price_at_volume

DEFAULT_PROBES = (0.0, 20.0, 25.0, 30.0, 35.0, 40.0, 50.0, 60.0)
#: Elasticity reported for a probe where the demand curve is flat in price.
INFINITE_ELASTICITY = -math.inf
REPORT_COLUMNS = ("timestamp", "probe_price", "slope", "elasticity", "sentinel_flag")
AGGREGATE_KEYS = ("hour", "month", "weekday")


@dataclass(frozen=True)
class ElasticityConfig:
    h: float = 100.0
    points: tuple = DEFAULT_PROBES

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(float(p) for p in self.points))
        if not self.h > 0:
            raise ConfigError(f"h must be positive, got {self.h}")
        if not self.points:
            raise ConfigError("probe set is empty")

    @classmethod
    def from_mapping(cls, values: dict) -> "ElasticityConfig":
        kwargs = {}
        try:
            if "h" in values:
                kwargs["h"] = float(values["h"])
            if "points" in values:
                text = values["points"].strip()
                kwargs["points"] = tuple(float(x) for x in text.split(",") if x.strip())
        except ValueError as exc:
            raise ConfigError(f"bad elasticity setting: {exc}") from None
        return cls(**kwargs)


def _check_demand(fdem: StepCurve):
    if fdem.direction is not Direction.DEMAND:
        raise DomainError("elasticities are defined on demand curves")


def slope(fdem: StepCurve, p: float, h: float) -> float:
    """Central-difference slope of the forward demand curve (EUR/MWh per MW)."""
    _check_demand(fdem)
    if not h > 0:
        raise DomainError(f"h must be positive, got {h}")
    v0 = eval_inverse(fdem, p)
    hi = price_at_volume(fdem, v0 - h)
    lo = price_at_volume(fdem, v0 + h)
    return (lo - hi) / (2.0 * h)


def point_elasticity(fdem: StepCurve, p: float, h: float) -> float:
    """``p / FDem^-1(p) / ls(p, h)``; :data:`INFINITE_ELASTICITY` on a zero slope."""
    _check_demand(fdem)
    if p == 0:
        return 0.0
    v0 = eval_inverse(fdem, p)
    if v0 <= 0:
        raise DomainError(f"no demand at price {p}")
    ls = slope(fdem, p, h)
    if ls == 0:
        return INFINITE_ELASTICITY
    return p / v0 / ls


@dataclass(frozen=True)
class ElasticityReport:
    """Per (hour, probe) rows plus exclusion bookkeeping."""

    rows: pd.DataFrame

    @property
    def n_sentinel(self) -> int:
        return int(self.rows["sentinel_flag"].sum())

    def aggregate(self, key: str) -> pd.DataFrame:
        return aggregate(self.rows, key)

    def to_csv(self, path) -> None:
        out = self.rows.loc[:, list(REPORT_COLUMNS)].copy()
        out["timestamp"] = [t.isoformat() for t in out["timestamp"]]
        out.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


def probe(fdem: StepCurve, p: float, h: float):
    """``(slope, elasticity, sentinel)`` for one probe, never raising on sentinels."""
    if p == 0:
        try:
            return slope(fdem, p, h), 0.0, False
        except DomainError:
            return math.nan, 0.0, False
    try:
        ls = slope(fdem, p, h)
    except DomainError:
        return math.nan, math.nan, True
    if ls == 0:
        return 0.0, INFINITE_ELASTICITY, True
    v0 = eval_inverse(fdem, p)
    return ls, p / v0 / ls, False


def elasticity_report(curves, config: ElasticityConfig | None = None) -> ElasticityReport:
    """Probe every ``(timestamp, fdem)`` pair at every configured price."""
    config = config or ElasticityConfig()
    records = []
    for ts, fdem in curves:
        _check_demand(fdem)
        for p in config.points:
            fdem.grid.check_price(p)
            ls, e, sentinel = probe(fdem, p, config.h)
            records.append((ts, p, ls, e, int(sentinel)))
    return ElasticityReport(pd.DataFrame.from_records(records, columns=list(REPORT_COLUMNS)))


def _local_times(stamps, tz):
    idx = pd.DatetimeIndex(pd.to_datetime(list(stamps), utc=False))
    if idx.tz is not None:
        idx = idx.tz_convert(tz)
    return idx


def aggregate(rows: pd.DataFrame, key: str, tz: str = MARKET_TZ) -> pd.DataFrame:
    """Mean slope and elasticity per ``key`` and probe price, with counts.

    ``key`` is ``hour`` (0-23), ``month`` (1-12) or ``weekday`` (0 = Monday),
    taken in local market time. Sentinel rows are excluded and counted.
    """
    if key not in AGGREGATE_KEYS:
        raise ConfigError(f"aggregate key must be one of {AGGREGATE_KEYS}, got {key!r}")
    if rows.empty:
        raise EmptyAggregateError("no rows to aggregate")
    local = _local_times(rows["timestamp"], tz)
    keys = {"hour": local.hour, "month": local.month, "weekday": local.weekday}[key]
    frame = rows.assign(**{key: np.asarray(keys)})
    good = frame[frame["sentinel_flag"] == 0]
    if good.empty:
        raise EmptyAggregateError("every row is a sentinel")
    means = (good.groupby([key, "probe_price"])
             .agg(mean_slope=("slope", "mean"), mean_elasticity=("elasticity", "mean"),
                  n=("elasticity", "size")))
    excluded = (frame.groupby([key, "probe_price"])["sentinel_flag"].sum()
                .rename("n_excluded"))
    out = means.join(excluded, how="outer").reset_index()
    out["n"] = out["n"].fillna(0).astype(int)
    out["n_excluded"] = out["n_excluded"].astype(int)
    return out.sort_values([key, "probe_price"], kind="stable").reset_index(drop=True)
