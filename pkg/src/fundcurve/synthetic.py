"""Explicit three-agent order books and their two clearings.

ASD clearing pools every buy order on the demand side and every sell order on
the supply side. WM clearing lets Utility speculate around its internal price
``p_U``; its orders fall into four sectors:

====== ==================== ==================
sector Utility orders        WM pool
====== ==================== ==================
1      sells priced >= p_U   supply
2      buys priced >= p_U    supply
3      sells priced < p_U    demand
4      buys priced < p_U     demand
====== ==================== ==================

An order exactly at ``p_U`` belongs to the lower-numbered sector. A sector-2
buy at price ``q`` is offered on the supply side from the next grid price
above ``q`` on, and a sector-3 sell at ``q`` is bid on the demand side up to
the grid price below ``q``: Utility resells what it would have bought at
``q`` only for more than ``q`` and buys in what it would have produced at
``q`` only for less.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from math import gcd

import numpy as np

from .data_io import MarketSnapshot
from .decomposition import DecompositionParams
from .errors import ConfigError, DomainError
from .step_curve import Direction, Equilibrium, PriceGrid, StepCurve, intersect, to_units

#: Price band of the toy market.
TOY_GRID = PriceGrid.uniform(-20.0, 100.0, 5.0)


class Agent(enum.Enum):
    UTILITY = "Utility"
    RETAILER = "Retailer"
    SUPPLIER = "Supplier"


class Side(enum.Enum):
    BUY = "Buy"
    SELL = "Sell"


@dataclass(frozen=True)
class Order:
    agent: Agent
    side: Side
    price: float
    volume: float

    def __post_init__(self):
        if not self.volume > 0:
            raise DomainError(f"order volume must be positive, got {self.volume}")
        if self.agent is Agent.RETAILER and self.side is not Side.BUY:
            raise DomainError("Retailer only places buy orders")
        if self.agent is Agent.SUPPLIER and self.side is not Side.SELL:
            raise DomainError("Supplier only places sell orders")


@dataclass(frozen=True)
class OrderBook:
    orders: tuple
    utility_internal_price: float
    grid: PriceGrid = field(default=TOY_GRID)

    def __post_init__(self):
        object.__setattr__(self, "orders", tuple(self.orders))
        self.grid.index_of(self.utility_internal_price)
        for o in self.orders:
            self.grid.index_of(o.price)

    def sector(self, order: Order) -> int | None:
        if order.agent is not Agent.UTILITY:
            return None
        above = order.price >= self.utility_internal_price
        if order.side is Side.SELL:
            return 1 if above else 3
        return 2 if above else 4

    def by_sector(self, sector: int) -> list[Order]:
        return [o for o in self.orders if self.sector(o) == sector]

    def agent_orders(self, agent: Agent) -> list[Order]:
        return [o for o in self.orders if o.agent is agent]


def _curve(grid: PriceGrid, pool, direction: Direction) -> StepCurve:
    """Accumulate ``(grid index, units)`` pairs into an inverse curve."""
    per_price = np.zeros(len(grid), dtype=np.int64)
    for i, u in pool:
        per_price[i] += u
    if direction is Direction.SUPPLY:
        return StepCurve(grid, np.cumsum(per_price), direction)
    return StepCurve(grid, np.cumsum(per_price[::-1])[::-1], direction)


def asd_pools(book: OrderBook):
    g = book.grid
    sells = [(g.index_of(o.price), int(to_units(o.volume))) for o in book.orders if o.side is Side.SELL]
    buys = [(g.index_of(o.price), int(to_units(o.volume))) for o in book.orders if o.side is Side.BUY]
    return sells, buys


def wm_pools(book: OrderBook):
    g = book.grid
    sells, buys = [], []
    for o in book.orders:
        i, u = g.index_of(o.price), int(to_units(o.volume))
        s = book.sector(o)
        if s == 2:
            if i + 1 >= len(g):
                raise DomainError(f"sector-2 buy at p_max {o.price} cannot be resold")
            sells.append((i + 1, u))
        elif s == 3:
            if i == 0:
                raise DomainError(f"sector-3 sell at p_min {o.price} cannot be bought in")
            buys.append((i - 1, u))
        elif o.side is Side.SELL:
            sells.append((i, u))
        else:
            buys.append((i, u))
    return sells, buys


def _clear(book, pools) -> tuple[StepCurve, StepCurve, Equilibrium]:
    sells, buys = pools
    sup = _curve(book.grid, sells, Direction.SUPPLY)
    dem = _curve(book.grid, buys, Direction.DEMAND)
    return sup, dem, intersect(sup, dem)


def clear_asd(book: OrderBook):
    """Supply/demand curves and equilibrium with every order on its own side."""
    return _clear(book, asd_pools(book))


def clear_wm(book: OrderBook):
    """Supply/demand curves and equilibrium after Utility's sector reassignment."""
    return _clear(book, wm_pools(book))


def wm_snapshot(book: OrderBook, timestamp=None) -> MarketSnapshot:
    sup, dem, _ = clear_wm(book)
    return MarketSnapshot(timestamp, sup, dem)


def make_fixture_f1() -> OrderBook:
    """Small hand-checkable book on the toy grid with Utility's price at 20."""
    S, R, U = Agent.SUPPLIER, Agent.RETAILER, Agent.UTILITY
    sell, buy = Side.SELL, Side.BUY
    orders = (
        [Order(S, sell, p, 10.0) for p in (5, 15, 25, 45)]
        + [Order(R, buy, p, 10.0) for p in (95, 75, 35, 15)]
        + [Order(U, sell, 0, 20.0)]
        + [Order(U, sell, p, 10.0) for p in (10, 30, 50)]
        + [Order(U, buy, p, 10.0) for p in (90, 40, 10)]
    )
    return OrderBook(tuple(orders), 20.0, TOY_GRID)


def generating_params(book: OrderBook) -> DecompositionParams:
    """Aggregate Utility shares of the book, in decomposition form.

    ``gamma1`` and ``phi1`` are Utility's share of the WM supply above and WM
    demand below ``p_U``; ``alpha1`` is the buy share of that supply and
    ``beta1`` the buy share of that demand. The internal-price map is the
    shift ``a0 = p_U - p_W`` with ``a1 = 1``.
    """
    sup, dem, eq = clear_wm(book)
    g = book.grid
    k = g.index_of(book.utility_internal_price)
    units = lambda orders: int(sum(int(to_units(o.volume)) for o in orders))
    s1 = units(o for o in book.by_sector(1) if g.index_of(o.price) > k)
    b2, s3, b4 = (units(book.by_sector(s)) for s in (2, 3, 4))
    sup_inc = int(sup.units[-1] - sup.units[k])
    dem_inc = int(dem.units[0] - dem.units[k])
    upper, lower = s1 + b2, s3 + b4
    return DecompositionParams(
        a0=book.utility_internal_price - eq.price,
        a1=1.0,
        gamma1=upper / sup_inc if sup_inc else 0.0,
        phi1=lower / dem_inc if dem_inc else 0.0,
        alpha1=b2 / upper if upper else 0.0,
        beta1=b4 / lower if lower else 1.0,
    )


# --------------------------------------------------------------------------
# random books

@dataclass(frozen=True)
class BookSize:
    """Size knobs for :func:`random_book`.

    ``n_upper``/``n_lower`` are the numbers of price steps above and below
    Utility's price; ``block`` is the volume quantum in MW (steps are
    multiples of it, so every share is an exact multiple of 0.1 MW).
    ``base_blocks`` bounds the agent-only demand that clears above both
    prices, which moves all volumes of a book together.
    """

    n_upper: int = 6
    n_lower: int = 6
    block: float = 10.0
    max_blocks: int = 5
    base_blocks: int = 5

    def __post_init__(self):
        if min(self.n_upper, self.n_lower) < 1 or min(self.max_blocks, self.base_blocks) < 1:
            raise ConfigError("book size parameters must be positive")
        if self.block <= 0 or to_units(self.block) % 100:
            raise ConfigError("block must be a positive multiple of 10 MW")


def _tenths(x, name) -> Fraction:
    f = Fraction(str(float(x))).limit_denominator(10)
    if abs(float(f) - x) > 1e-12 or (10 % f.denominator):
        raise ConfigError(f"{name}={x} is not a multiple of 0.1")
    return f


def random_book(seed: int, size: BookSize | None = None, grid: PriceGrid | None = None,
                proportions=None, price_map=None) -> OrderBook:
    """Deterministic random book whose Utility shares are uniform per step.

    Every WM supply step above ``p_U`` is split between Supplier and Utility
    (and Utility's part between sector-1 sells and sector-2 buys) in the same
    proportions, likewise every WM demand step below ``p_U``. Hence
    :func:`generating_params` decomposes the WM curves exactly. Utility's
    speculative volumes balance (sector-3 sells equal sector-2 buys), which
    makes the ASD and WM prices coincide.

    ``proportions`` fixes ``(gamma1, phi1, alpha1, beta1)`` (multiples of
    0.1, drawn at random otherwise). ``price_map`` fixes ``(a0, a1)``: the
    market price is drawn first and ``p_U`` is its snapped image; without it
    both prices are drawn independently.
    """
    size = size or BookSize()
    grid = grid or PriceGrid.uniform(-20.0, 100.0, 1.0)
    n = len(grid)
    k_lo, k_hi = size.n_lower + 3, n - size.n_upper - 2
    if k_lo >= k_hi:
        raise ConfigError(f"grid with {n} points is too small for {size}")
    rng = np.random.default_rng(seed)
    if proportions is None:
        gamma, phi, alpha, keep = (Fraction(int(i), 10) for i in rng.integers(1, 10, 4))
    else:
        gamma, phi, alpha, keep = (_tenths(x, name) for x, name in
                                   zip(proportions, ("gamma1", "phi1", "alpha1", "beta1")))
    r1, r2 = (1 - keep) * phi, alpha * gamma
    if r1 <= 0 or r2 <= 0:
        raise ConfigError("proportions leave no speculative volume to balance")

    for _ in range(1000):
        w = int(rng.integers(1, n - 1))
        if price_map is None:
            k = int(rng.integers(k_lo, k_hi))
        else:
            k = grid.nearest_index(price_map[0] + price_map[1] * grid.prices[w])
        if k_lo <= k < k_hi:
            break
    else:
        raise ConfigError(f"price map {price_map} keeps p_U outside the usable band")
    return _build_book(rng, grid, size, gamma, phi, alpha, keep, k, w)


def _build_book(rng, grid, size, gamma, phi, alpha, keep, k, w):
    n = len(grid)
    p = grid.prices
    q = int(to_units(size.block))
    S, R, U = Agent.SUPPLIER, Agent.RETAILER, Agent.UTILITY
    sell, buy = Side.SELL, Side.BUY
    blocks = lambda m: rng.integers(1, size.max_blocks + 1, m) * q

    up_idx = np.sort(rng.choice(np.arange(k + 1, n - 1), size.n_upper, replace=False))
    lo_idx = np.sort(rng.choice(np.arange(1, k - 1), size.n_lower, replace=False))
    up_vol, lo_vol = blocks(size.n_upper), blocks(size.n_lower)

    # pad with a demand block at p_min and a supply block at p_max so that
    # sector-3 sells match sector-2 buys
    c1, c2 = int((1 - keep) * phi * 100), int(alpha * gamma * 100)
    g = gcd(c1, c2)
    c1, c2 = c1 // g, c2 // g
    d_blocks, u_blocks = int(lo_vol.sum()) // q, int(up_vol.sum()) // q
    t = max(-(-d_blocks // c2), -(-u_blocks // c1))
    sup_steps = list(zip(up_idx.tolist(), up_vol.tolist())) + [(n - 1, (c1 * t - u_blocks) * q)]
    dem_steps = list(zip(lo_idx.tolist(), lo_vol.tolist())) + [(0, (c2 * t - d_blocks) * q)]

    orders = [Order(S, sell, p[0], int(blocks(1)[0]) / 10)]
    for j, vol in sup_steps:
        util = int(gamma * vol)
        b2 = int(alpha * util)
        orders += _orders((S, sell, p[j], vol - util), (U, buy, p[j - 1], b2),
                          (U, sell, p[j], util - b2))
    for i, vol in dem_steps:
        util = int(phi * vol)
        s3 = int((1 - keep) * util)
        orders += _orders((R, buy, p[i], vol - util), (U, sell, p[i + 1], s3),
                          (U, buy, p[i], util - s3))

    # agent-only orders that place the WM crossing at grid index w: Supplier
    # may only add volume at or below p_U and Retailer at or above it
    base = int(rng.integers(1, size.base_blocks + 1)) * q
    orders += _orders((R, buy, p[max(w, k)], base))
    sup, dem, _ = _clear_units(grid, wm_pools(OrderBook(tuple(orders), float(p[k]), grid)))
    extra = int(blocks(1)[0])
    if w <= k:
        y = max(0, int(sup[w - 1] - dem[w - 1])) + extra
        x = max(0, int(dem[w] + y - sup[w])) + int(blocks(1)[0])
        orders += _orders((S, sell, p[w], x), (R, buy, p[k], y))
    else:
        x = max(0, int(dem[w] - sup[w])) + extra
        y = int(sup[w - 1] + x - dem[w - 1]) + int(blocks(1)[0])
        orders += _orders((S, sell, p[k], x), (R, buy, p[w - 1], max(y, 0)))
    return OrderBook(tuple(orders), float(p[k]), grid)


def _orders(*specs):
    """Orders from ``(agent, side, price, units)``, skipping empty ones."""
    return [Order(a, s, float(pr), u / 10) for a, s, pr, u in specs if u > 0]


def _clear_units(grid, pools):
    sells, buys = pools
    return (_curve(grid, sells, Direction.SUPPLY).units,
            _curve(grid, buys, Direction.DEMAND).units, None)


def calibration_problem(n_days: int = 30, params=(0.5, 0.9, 0.5, 0.9, 0.3, 0.1),
                        theta=(1000.0, 1.0), seed: int = 0, grid: PriceGrid | None = None,
                        size: BookSize | None = None, noise_sd: float = 0.0,
                        start: datetime | None = None):
    """Hourly WM snapshots from random books plus loads built from their ASD volumes.

    Every book shares the decomposition ``params`` (proportions as multiples
    of 0.1), so load ``theta0 + theta1 * v_ASD`` is exactly what the model
    predicts at those parameters. Returns ``(snapshots, loads, books)``.
    """
    grid = grid or PriceGrid.uniform(-50.0, 150.0, 1.0)
    start = start or datetime(2017, 1, 1, tzinfo=timezone.utc)
    rng = np.random.default_rng(seed)
    snapshots, loads, books = [], [], []
    for h in range(24 * n_days):
        book = random_book(int(rng.integers(2**31)), size, grid,
                           proportions=params[2:], price_map=params[:2])
        _, _, eq = clear_asd(book)
        ts = start + timedelta(hours=h)
        snapshots.append(wm_snapshot(book, ts))
        loads.append(theta[0] + theta[1] * eq.volume + (rng.normal(0, noise_sd) if noise_sd else 0.0))
        books.append(book)
    return snapshots, np.array(loads), books


# --------------------------------------------------------------------------
# serialisation

ORDER_COLUMNS = ("agent", "side", "price", "volume")


def write_orders(book: OrderBook, target) -> None:
    """Per-agent order sidecar: ``agent,side,price,volume``."""
    with open(target, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(ORDER_COLUMNS)
        for o in book.orders:
            w.writerow([o.agent.value, o.side.value, repr(float(o.price)), f"{o.volume:.1f}"])


# --------------------------------------------------------------------------
# random wholesale snapshots

def random_snapshot(rng: np.random.Generator, grid: PriceGrid | None = None,
                    n_steps: int = 12, timestamp=None) -> MarketSnapshot:
    """Random crossing WM curves, without an underlying order book.

    Supply starts with a must-run block at ``p_min``; demand keeps a positive
    volume at ``p_max`` and supply covers it there, so the curves always cross
    at a positive volume.
    """
    grid = grid or PriceGrid.uniform(-20.0, 100.0, 1.0)
    n = len(grid)
    sup_steps = np.zeros(n, dtype=np.int64)
    dem_steps = np.zeros(n, dtype=np.int64)
    np.add.at(sup_steps, rng.integers(0, n, n_steps), rng.integers(1, 500, n_steps))
    np.add.at(dem_steps, rng.integers(0, n, n_steps), rng.integers(1, 500, n_steps))
    sup_steps[0] += int(rng.integers(0, 1000))
    dem_steps[-1] += int(rng.integers(1, 300))
    sup = np.cumsum(sup_steps)
    dem = np.cumsum(dem_steps[::-1])[::-1]
    if sup[0] > dem[0]:
        dem = dem + (sup[0] - dem[0])
    sup[-1] = max(sup[-1], dem[-1])
    return MarketSnapshot(timestamp, StepCurve(grid, sup, Direction.SUPPLY),
                          StepCurve(grid, dem, Direction.DEMAND))


def random_params(rng: np.random.Generator) -> DecompositionParams:
    """Parameters drawn uniformly from the calibration search box."""
    return DecompositionParams(float(rng.uniform(-50, 50)), float(rng.uniform(1e-3, 2)),
                               *rng.uniform(0, 1, 4).tolist())
