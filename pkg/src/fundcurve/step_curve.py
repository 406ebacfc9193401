"""Monotone step curves in inverse form (cumulative volume as a function of price).

All curves share a :class:`PriceGrid`. Volumes are stored as integers in units
of 0.1 MW so that sums, splits and mirrors conserve volume exactly. The step
convention is right-continuous: the volume at price ``p`` is the volume at the
largest grid price ``<= p``.

Supply inverses are nondecreasing in price (sell orders priced at or below
``p``); demand inverses are nonincreasing (buy orders priced at or above ``p``).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, IncompatibleCurvesError, NoEquilibriumError

#: MW represented by one integer volume unit.
VOLUME_RESOLUTION = 0.1

_PRICE_TOL = 1e-9


def to_units(mw):
    """MW (scalar or array) to integer volume units, rounding to the resolution."""
    return np.rint(np.asarray(mw, dtype=float) / VOLUME_RESOLUTION).astype(np.int64)


def to_mw(units):
    return np.asarray(units, dtype=np.int64) * VOLUME_RESOLUTION


def round_half_up(x):
    """Round a float array to int64, halves away from -inf (floor(x + 0.5))."""
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


class Direction(enum.Enum):
    SUPPLY = "supply"
    DEMAND = "demand"

    @property
    def opposite(self) -> "Direction":
        return Direction.DEMAND if self is Direction.SUPPLY else Direction.SUPPLY


@dataclass(frozen=True, eq=False)
class PriceGrid:
    """Strictly increasing price points; first and last entries are p_min and p_max."""

    prices: np.ndarray

    def __post_init__(self):
        prices = np.array(self.prices, dtype=float)
        if prices.ndim != 1 or prices.size < 2:
            raise DomainError("a price grid needs at least two points")
        if not np.all(np.isfinite(prices)):
            raise DomainError("grid prices must be finite")
        if np.any(np.diff(prices) <= 0):
            raise DomainError("grid prices must be strictly increasing")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    @classmethod
    def uniform(cls, p_min: float, p_max: float, step: float) -> "PriceGrid":
        n = int(round((p_max - p_min) / step))
        if not np.isclose(p_min + n * step, p_max):
            raise DomainError(f"({p_max} - {p_min}) is not a multiple of step {step}")
        return cls(np.round(p_min + step * np.arange(n + 1), 10))

    @property
    def p_min(self) -> float:
        return float(self.prices[0])

    @property
    def p_max(self) -> float:
        return float(self.prices[-1])

    def __len__(self):
        return self.prices.size

    def __eq__(self, other):
        if not isinstance(other, PriceGrid):
            return NotImplemented
        return self is other or np.array_equal(self.prices, other.prices)

    def __hash__(self):
        return hash(self.prices.tobytes())

    def __repr__(self):
        return f"PriceGrid(n={len(self)}, p_min={self.p_min}, p_max={self.p_max})"

    def check_price(self, p: float) -> None:
        if not (self.p_min - _PRICE_TOL <= p <= self.p_max + _PRICE_TOL):
            raise DomainError(f"price {p} outside [{self.p_min}, {self.p_max}]")

    def floor_index(self, p: float) -> int:
        """Index of the largest grid price <= p."""
        self.check_price(p)
        return int(np.searchsorted(self.prices, p + _PRICE_TOL, side="right") - 1)

    def nearest_index(self, p: float) -> int:
        """Index of the nearest grid price; ties go to the lower price."""
        p = min(max(p, self.p_min), self.p_max)
        i = int(np.searchsorted(self.prices, p))
        if i == 0:
            return 0
        if i == len(self):
            return len(self) - 1
        return i if self.prices[i] - p < p - self.prices[i - 1] else i - 1

    def index_of(self, p: float) -> int:
        """Index of grid price ``p``; raises if ``p`` is not on the grid."""
        i = self.nearest_index(p)
        if abs(self.prices[i] - p) > 1e-6:
            raise DomainError(f"price {p} is not a grid price")
        return i

    def max_step(self) -> float:
        return float(np.max(np.diff(self.prices)))


@dataclass(frozen=True, eq=False)
class StepCurve:
    """Cumulative volume per grid price, stored in 0.1 MW integer units."""

    grid: PriceGrid
    units: np.ndarray
    direction: Direction

    def __post_init__(self):
        units = np.array(self.units, dtype=np.int64)
        if units.shape != (len(self.grid),):
            raise DomainError(
                f"expected {len(self.grid)} volumes, got shape {units.shape}")
        if np.any(units < 0):
            raise DomainError("volumes must be nonnegative")
        d = np.diff(units)
        if self.direction is Direction.SUPPLY and np.any(d < 0):
            raise DomainError("supply inverse must be nondecreasing in price")
        if self.direction is Direction.DEMAND and np.any(d > 0):
            raise DomainError("demand inverse must be nonincreasing in price")
        units.setflags(write=False)
        object.__setattr__(self, "units", units)

    @classmethod
    def from_volumes(cls, grid: PriceGrid, volumes, direction: Direction) -> "StepCurve":
        return cls(grid, to_units(volumes), direction)

    @classmethod
    def zeros(cls, grid: PriceGrid, direction: Direction) -> "StepCurve":
        return cls(grid, np.zeros(len(grid), dtype=np.int64), direction)

    @property
    def volumes(self) -> np.ndarray:
        """Volumes in MW."""
        return to_mw(self.units)

    def __call__(self, p: float) -> float:
        return eval_inverse(self, p)

    def __eq__(self, other):
        if not isinstance(other, StepCurve):
            return NotImplemented
        return (self.direction is other.direction and self.grid == other.grid
                and np.array_equal(self.units, other.units))

    def __repr__(self):
        return (f"StepCurve({self.direction.value}, n={len(self.grid)}, "
                f"range=[{self.volumes.min():g}, {self.volumes.max():g}] MW)")

    def _with_units(self, units, direction=None) -> "StepCurve":
        return StepCurve(self.grid, units, direction or self.direction)


@dataclass(frozen=True)
class Equilibrium:
    volume: float
    price: float
    index: int


def eval_inverse(curve: StepCurve, p: float) -> float:
    """Volume (MW) at the largest grid price <= p."""
    return float(to_mw(curve.units[curve.grid.floor_index(p)]))


def _check_compatible(a: StepCurve, b: StepCurve) -> None:
    if a.grid != b.grid:
        raise IncompatibleCurvesError("curves live on different price grids")
    if a.direction is not b.direction:
        raise IncompatibleCurvesError(
            f"cannot combine {a.direction.value} and {b.direction.value} curves")


def sum_inverse(a: StepCurve, b: StepCurve) -> StepCurve:
    _check_compatible(a, b)
    return a._with_units(a.units + b.units)


def first_crossing(sup_units: np.ndarray, dem_units: np.ndarray):
    """Row-wise clearing on stacked inverse curves.

    Returns ``(index, volume_units)`` for the lowest grid price at which supply
    covers demand. Rows with no crossing get index ``-1``.
    """
    ok = sup_units >= dem_units
    has = ok.any(axis=-1)
    idx = np.where(has, ok.argmax(axis=-1), -1)
    safe = np.maximum(idx, 0)[..., None]
    vol = np.minimum(np.take_along_axis(sup_units, safe, -1),
                     np.take_along_axis(dem_units, safe, -1))[..., 0]
    return idx, np.where(has, vol, 0)


def intersect(sup: StepCurve, dem: StepCurve) -> Equilibrium:
    """Equilibrium of a supply and a demand inverse on the same grid.

    The price is the smallest grid price where supply volume reaches demand
    volume; the volume is the smaller of the two at that price.
    """
    if sup.grid != dem.grid:
        raise IncompatibleCurvesError("curves live on different price grids")
    if sup.direction is not Direction.SUPPLY or dem.direction is not Direction.DEMAND:
        raise IncompatibleCurvesError("intersect expects (supply, demand)")
    idx, vol = first_crossing(sup.units, dem.units)
    if idx < 0:
        raise NoEquilibriumError("demand exceeds supply at every grid price")
    if vol <= 0:
        raise NoEquilibriumError("curves cross at zero volume")
    return Equilibrium(float(to_mw(vol)), float(sup.grid.prices[idx]), int(idx))


def mirror_units(units: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                 anchor_is_lo: bool) -> np.ndarray:
    """Row-wise mirror of ``units[lo..hi]`` about the anchor end of the band.

    Prices outside the band are clamped to the nearest band end, so the result
    is flat there.
    """
    n = units.shape[-1]
    cols = np.arange(n)
    lo = np.asarray(lo)[..., None]
    hi = np.asarray(hi)[..., None]
    clamped = np.take_along_axis(units, np.broadcast_to(np.clip(cols, lo, hi), units.shape), -1)
    anchor = np.take_along_axis(units, np.broadcast_to(lo if anchor_is_lo else hi,
                                                       units.shape[:-1] + (1,)), -1)
    return np.abs(anchor - clamped)


def mirror_segment(curve: StepCurve, band: tuple[float, float], anchor: float) -> StepCurve:
    """Volume differences of ``curve`` over ``band`` with opposite monotonicity.

    For a demand curve the anchor must be the lower band end (result:
    ``c(p_lo) - c(p)``, nondecreasing); for a supply curve the upper end
    (result: ``c(p_hi) - c(p)``, nonincreasing). Outside the band the result is
    held at its band-end value.
    """
    p_lo, p_hi = band
    grid = curve.grid
    if p_lo > p_hi:
        raise DomainError(f"empty band [{p_lo}, {p_hi}]")
    grid.check_price(p_lo)
    grid.check_price(p_hi)
    lo = int(np.searchsorted(grid.prices, p_lo - _PRICE_TOL))
    hi = grid.floor_index(p_hi)
    if lo > hi:
        raise DomainError(f"band [{p_lo}, {p_hi}] contains no grid price")
    expected = p_lo if curve.direction is Direction.DEMAND else p_hi
    if abs(anchor - expected) > _PRICE_TOL:
        raise DomainError(
            f"a {curve.direction.value} curve must be mirrored about {expected}, got {anchor}")
    out = mirror_units(curve.units, np.array(lo), np.array(hi),
                       anchor_is_lo=curve.direction is Direction.DEMAND)
    return curve._with_units(out, curve.direction.opposite)


def shift_volumes(curve: StepCurve, delta: float) -> StepCurve:
    """Move the whole curve right by ``delta`` MW."""
    if delta < 0:
        raise DomainError(f"shift must be nonnegative, got {delta}")
    return curve._with_units(curve.units + to_units(delta))


def split_share(curve: StepCurve, share: float) -> tuple[StepCurve, StepCurve]:
    """Split volumes into ``(round(share * v), v - round(share * v))``.

    Both parts keep the curve's monotonicity and add back to it exactly.
    """
    if not 0.0 <= share <= 1.0:
        raise DomainError(f"share must lie in [0, 1], got {share}")
    taken = round_half_up(share * curve.units)
    return curve._with_units(taken), curve._with_units(curve.units - taken)


def price_at_volume(curve: StepCurve, v: float) -> float:
    """Forward curve: the grid price at which the cumulative volume reaches ``v``.

    Where the curve takes the value ``v`` on a run of grid prices the lowest
    of them is returned. Otherwise demand gives the highest price whose volume
    is still above ``v`` and supply the lowest price whose volume exceeds it.
    Volumes outside the curve's range raise :class:`DomainError`.
    """
    u = curve.units
    lo_v, hi_v = to_mw(u.min()), to_mw(u.max())
    if not (lo_v - 1e-9 <= v <= hi_v + 1e-9):
        raise DomainError(f"volume {v} outside curve range [{lo_v}, {hi_v}]")
    target = to_units(v)
    exact = np.flatnonzero(u == target)
    if exact.size:
        i = int(exact[0])
    elif curve.direction is Direction.DEMAND:
        i = int(np.flatnonzero(u > target)[-1])
    else:
        i = int(np.flatnonzero(u > target)[0])
    return float(curve.grid.prices[i])
