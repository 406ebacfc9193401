"""Slopes and elasticities of fundamental demand across a synthetic week."""
from datetime import datetime, timedelta, timezone

import numpy as np

from fundcurve.decomposition import DecompositionParams, decompose
from fundcurve.elasticity import ElasticityConfig, elasticity_report, slope
from fundcurve.step_curve import Direction, PriceGrid, StepCurve
from fundcurve.synthetic import random_snapshot

# A linear demand curve: 20 MW less per EUR. The central difference with a
# 100 MW half-width sees 5 EUR each way, so the slope is -0.05 EUR/MWh per MW.
grid = PriceGrid.uniform(0, 100, 1)
linear = StepCurve.from_volumes(grid, 2000 - 20 * grid.prices, Direction.DEMAND)
print("linear slope:", slope(linear, 50.0, 100.0))

# A week of random wholesale hours decomposed with one parameter set.
rng = np.random.default_rng(3)
params = DecompositionParams(5.0, 1.0, 0.5, 0.9, 0.3, 0.1)
start = datetime(2017, 5, 1, tzinfo=timezone.utc)
curves = []
for h in range(24 * 7):
    snap = random_snapshot(rng, timestamp=start + timedelta(hours=h))
    curves.append((snap.timestamp, decompose(snap, params).fdem))

rep = elasticity_report(curves, ElasticityConfig(h=20.0, points=(10, 20, 30, 40, 50)))
print(rep.rows.head(10))
# These curves have only a dozen steps, so at low probe prices the demand is
# often flat all the way down to p_min and v0 + h falls off the curve.
print("sentinel rows:", rep.n_sentinel, "of", len(rep.rows))

# Means per local hour of day and probe price (sentinels left out and counted).
by_hour = rep.aggregate("hour")
print(by_hour.pivot(index="hour", columns="probe_price", values="mean_elasticity").round(3))
print(rep.aggregate("weekday")[["weekday", "probe_price", "n", "n_excluded"]].head(10))
