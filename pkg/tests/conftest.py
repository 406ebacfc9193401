import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from fundcurve.step_curve import Direction, StepCurve
from fundcurve.synthetic import TOY_GRID, make_fixture_f1

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def toy_grid():
    return TOY_GRID


@pytest.fixture
def f1():
    return make_fixture_f1()


@st.composite
def step_curves(draw, grid=TOY_GRID, direction=None, max_step=200):
    """Random monotone curve on ``grid`` in integer units."""
    direction = direction or draw(st.sampled_from(list(Direction)))
    steps = draw(st.lists(st.integers(0, max_step), min_size=len(grid), max_size=len(grid)))
    units = np.cumsum(steps)
    if direction is Direction.DEMAND:
        units = units[::-1]
    return StepCurve(grid, units, direction)


@st.composite
def wm_pairs(draw, grid=TOY_GRID):
    """Crossing (supply, demand) pair with positive equilibrium volume."""
    sup = draw(step_curves(grid, Direction.SUPPLY))
    dem = draw(step_curves(grid, Direction.DEMAND))
    # positive demand everywhere, above supply at p_min, covered at p_max
    dem_u = dem.units + 10
    dem_u[0] = max(dem_u[0], sup.units[0] + 10)
    sup_u = sup.units.copy()
    sup_u[-1] = max(sup_u[-1], dem_u[0])
    return StepCurve(grid, sup_u, Direction.SUPPLY), StepCurve(grid, dem_u, Direction.DEMAND)
