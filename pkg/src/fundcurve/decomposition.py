"""Decompose wholesale (WM) auction curves into agent schedules and the
fundamental-model (FM) equilibrium.

Parameter meaning
-----------------
``a0, a1``
    Utility internal price ``p_U = a0 + a1 * p_W``.
``gamma1``
    Utility share of the wholesale supply above ``p_U``.
``phi1``
    Utility share of the wholesale demand below ``p_U``.
``alpha1``
    Share of Utility's WM supply (above ``p_U``) that consists of buy orders;
    it is flipped onto the FM demand side.
``beta1``
    Share of Utility's WM demand (below ``p_U``) that consists of buy orders
    and stays on the demand side; the remaining ``1 - beta1`` are sell orders
    flipped onto the FM supply side.

With this reading ``(0, 1, 1, 1, 0, 0)`` moves every price-sensitive demand
order to the supply side, i.e. the perfectly inelastic limit.

The boundary grid price ``p_U`` belongs to the lower segment. All heavy lifting
happens in :func:`decompose_arrays`, which works on stacks of hours at once;
the per-curve operations below are thin wrappers around the same kernels.
"""
from __future__ import annotations

from dataclasses import dataclass, field, astuple

import numpy as np

from .errors import DomainError, NoEquilibriumError
from .step_curve import (
    Direction,
    Equilibrium,
    PriceGrid,
    StepCurve,
    first_crossing,
    mirror_units,
    round_half_up,
    sum_inverse,
    to_mw,
    to_units,
)

PROPORTIONS = ("gamma1", "phi1", "alpha1", "beta1")
PARAM_NAMES = ("a0", "a1") + PROPORTIONS


@dataclass(frozen=True)
class DecompositionParams:
    a0: float
    a1: float
    gamma1: float
    phi1: float
    alpha1: float
    beta1: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            v = getattr(self, name)
            if not np.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, float(v))
        if self.a1 <= 0:
            raise DomainError(f"a1 must be positive, got {self.a1}")
        for name in PROPORTIONS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_sequence(cls, values) -> "DecompositionParams":
        return cls(*[float(v) for v in values])


INELASTIC_LIMIT = DecompositionParams(0.0, 1.0, 1.0, 1.0, 0.0, 0.0)
#: Estimates reported for German day-ahead data, 2017.
GERMANY_2017 = DecompositionParams(5.890, 0.963, 0.510, 0.984, 0.287, 0.019)


@dataclass(frozen=True)
class DecompositionResult:
    params: DecompositionParams
    p_U: float
    sup0: StepCurve
    dem0: StepCurve
    wsup1: StepCurve
    wdem1: StepCurve
    fsup1_raw: StepCurve
    fdem1_raw: StepCurve
    fsup1: StepCurve
    fdem1: StepCurve
    fsup: StepCurve
    fdem: StepCurve
    tau1: float
    wm_eq: Equilibrium
    fm_eq: Equilibrium
    v_C: float
    diagnostics: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# array kernels; every array is (hours, grid) and every index is (hours,)

def _col(x):
    """Scalar or per-hour parameter as a column for broadcasting."""
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _at(units, k):
    return np.take_along_axis(units, k[:, None], axis=1)


def utility_price_index(grid: PriceGrid, p_w, a0, a1):
    """Grid index of ``a0 + a1 * p_w`` after clamping to the grid bounds."""
    raw = np.asarray(a0, dtype=float) + np.asarray(a1, dtype=float) * np.asarray(p_w, dtype=float)
    clamped = np.clip(raw, grid.p_min, grid.p_max)
    prices = grid.prices
    i = np.clip(np.searchsorted(prices, clamped), 1, len(prices) - 1)
    lower = prices[i - 1]
    upper = prices[i]
    k = np.where(upper - clamped < clamped - lower, i, i - 1)
    return np.atleast_1d(k).astype(np.int64), np.atleast_1d(raw)


def split_supply_units(wsup, k, gamma1):
    upper = np.arange(wsup.shape[1])[None, :] > k[:, None]
    incr = np.where(upper, wsup - _at(wsup, k), 0)
    wsup1 = round_half_up(_col(gamma1) * incr)
    return wsup - wsup1, wsup1


def split_demand_units(wdem, k, phi1):
    lower = np.arange(wdem.shape[1])[None, :] <= k[:, None]
    incr = np.where(lower, wdem - _at(wdem, k), 0)
    wdem1 = round_half_up(_col(phi1) * incr)
    return wdem - wdem1, wdem1


def flip_units(wsup1, wdem1, k, alpha1, beta1):
    last = np.full_like(k, wsup1.shape[1] - 1)
    sells_from_dem = round_half_up((1.0 - _col(beta1)) * wdem1)
    buys_from_sup = round_half_up(_col(alpha1) * wsup1)
    fsup1_raw = (mirror_units(sells_from_dem, np.zeros_like(k), k, anchor_is_lo=True)
                 + (wsup1 - buys_from_sup))
    fdem1_raw = (mirror_units(buys_from_sup, k, last, anchor_is_lo=False)
                 + (wdem1 - sells_from_dem))
    return fsup1_raw, fdem1_raw


def tau_units(fsup1_raw, fdem1_raw, k):
    return (_at(fsup1_raw, k) - _at(fdem1_raw, k))[:, 0]


def adjust_units(fsup1_raw, fdem1_raw, tau):
    tau = tau[:, None]
    return fsup1_raw + np.maximum(-tau, 0), fdem1_raw + np.maximum(tau, 0)


def decompose_arrays(grid: PriceGrid, wsup, wdem, a0, a1, gamma1, phi1, alpha1, beta1,
                     keep_curves: bool = False) -> dict:
    """Vectorised decomposition of a stack of hours.

    ``wsup`` and ``wdem`` are integer unit arrays of shape (hours, grid).
    Parameters are scalars or per-hour arrays. Hours whose wholesale curves do
    not cross at a positive volume are flagged in ``ok`` and carry
    meaningless FM values.
    """
    wsup = np.atleast_2d(np.asarray(wsup, dtype=np.int64))
    wdem = np.atleast_2d(np.asarray(wdem, dtype=np.int64))
    wm_idx, wm_vol = first_crossing(wsup, wdem)
    ok = (wm_idx >= 0) & (wm_vol > 0)
    p_w = grid.prices[np.maximum(wm_idx, 0)]
    k, p_u_raw = utility_price_index(grid, p_w, a0, a1)
    k = np.broadcast_to(k, wm_idx.shape).copy()

    sup0, wsup1 = split_supply_units(wsup, k, gamma1)
    dem0, wdem1 = split_demand_units(wdem, k, phi1)
    fsup1_raw, fdem1_raw = flip_units(wsup1, wdem1, k, alpha1, beta1)
    tau = tau_units(fsup1_raw, fdem1_raw, k)
    fsup1, fdem1 = adjust_units(fsup1_raw, fdem1_raw, tau)
    fsup = sup0 + fsup1
    fdem = dem0 + fdem1
    fm_idx, fm_vol = first_crossing(fsup, fdem)

    out = dict(ok=ok, wm_idx=wm_idx, wm_vol=wm_vol, fm_idx=fm_idx, fm_vol=fm_vol,
               k=k, p_u_raw=np.broadcast_to(p_u_raw, k.shape), tau=tau)
    if keep_curves:
        out.update(sup0=sup0, dem0=dem0, wsup1=wsup1, wdem1=wdem1, fsup1_raw=fsup1_raw,
                   fdem1_raw=fdem1_raw, fsup1=fsup1, fdem1=fdem1, fsup=fsup, fdem=fdem)
    return out


def inelastic_volume_units(wsup, wdem, grid: PriceGrid):
    """v_C for a stack of hours, via the inelastic-limit parameters."""
    p = INELASTIC_LIMIT
    return decompose_arrays(grid, wsup, wdem, p.a0, p.a1, p.gamma1, p.phi1,
                            p.alpha1, p.beta1)["fm_vol"]


# --------------------------------------------------------------------------
# curve-level operations

def internal_price(params: DecompositionParams, p_W: float, grid: PriceGrid | None = None) -> float:
    """``a0 + a1 * p_W``, clamped into the grid's price band when a grid is given."""
    p = params.a0 + params.a1 * p_W
    if grid is not None:
        grid.check_price(p_W)
        p = min(max(p, grid.p_min), grid.p_max)
    return float(p)


def _k(grid, p_U):
    return np.array([grid.nearest_index(p_U)])


def split_supplier(wsup: StepCurve, p_U: float, gamma1: float):
    """Supplier schedule and Utility's WM supply from the wholesale supply.

    Returns ``(sup0, wsup1)``. Below ``p_U`` everything is Supplier's; above it
    Utility holds ``gamma1`` of the volume added beyond ``WSup(p_U)``.
    """
    if wsup.direction is not Direction.SUPPLY:
        raise DomainError("split_supplier expects a supply curve")
    sup0, wsup1 = split_supply_units(wsup.units[None], _k(wsup.grid, p_U), gamma1)
    return wsup._with_units(sup0[0]), wsup._with_units(wsup1[0])


def split_retailer(wdem: StepCurve, p_U: float, phi1: float):
    """Retailer schedule and Utility's WM demand; returns ``(dem0, wdem1)``."""
    if wdem.direction is not Direction.DEMAND:
        raise DomainError("split_retailer expects a demand curve")
    dem0, wdem1 = split_demand_units(wdem.units[None], _k(wdem.grid, p_U), phi1)
    return wdem._with_units(dem0[0]), wdem._with_units(wdem1[0])


def flip_utility(wsup1: StepCurve, wdem1: StepCurve, p_U: float, alpha1: float, beta1: float):
    """Unadjusted FM supply and demand of Utility, ``(fsup1_raw, fdem1_raw)``.

    The sell orders hidden in Utility's WM demand (``1 - beta1`` of it) are
    mirrored into an upward-sloping block below ``p_U``; the buy orders hidden
    in its WM supply (``alpha1`` of it) become a downward-sloping block above
    ``p_U``.
    """
    for a, b in ((0.0, alpha1), (0.0, beta1)):
        if not a <= b <= 1.0:
            raise DomainError(f"flip shares must lie in [0, 1], got {b}")
    fs, fd = flip_units(wsup1.units[None], wdem1.units[None], _k(wsup1.grid, p_U),
                        alpha1, beta1)
    return wsup1._with_units(fs[0]), wdem1._with_units(fd[0])


def compute_tau(fsup1_raw: StepCurve, fdem1_raw: StepCurve, p_U: float) -> float:
    """Signed gap ``FSup1_raw(p_U) - FDem1_raw(p_U)`` in MW."""
    t = tau_units(fsup1_raw.units[None], fdem1_raw.units[None], _k(fsup1_raw.grid, p_U))
    return float(to_mw(t[0]))


def adjust_utility(fsup1_raw: StepCurve, fdem1_raw: StepCurve, tau1: float):
    """Shift the lagging Utility curve right so both meet at ``p_U``."""
    fs, fd = adjust_units(fsup1_raw.units[None], fdem1_raw.units[None],
                          np.atleast_1d(to_units(tau1)))
    return fsup1_raw._with_units(fs[0]), fdem1_raw._with_units(fd[0])


def assemble_fm(sup0: StepCurve, dem0: StepCurve, fsup1: StepCurve, fdem1: StepCurve):
    return sum_inverse(sup0, fsup1), sum_inverse(dem0, fdem1)


def decompose(snapshot, params: DecompositionParams) -> DecompositionResult:
    """Run the full WM -> FM pipeline on one snapshot.

    ``snapshot`` needs ``wsup`` and ``wdem`` attributes (a
    :class:`fundcurve.data_io.MarketSnapshot` or anything shaped like it).
    """
    wsup, wdem = snapshot.wsup, snapshot.wdem
    grid = wsup.grid
    if wdem.grid != grid:
        raise DomainError("snapshot curves use different grids")
    r = decompose_arrays(grid, wsup.units, wdem.units, *params.as_array(), keep_curves=True)
    if not r["ok"][0]:
        raise NoEquilibriumError(
            f"no wholesale equilibrium for {getattr(snapshot, 'timestamp', 'snapshot')}")
    v_c = inelastic_volume_units(wsup.units, wdem.units, grid)[0]

    def curve(name, direction):
        return StepCurve(grid, r[name][0], direction)

    S, D = Direction.SUPPLY, Direction.DEMAND
    wm_i, fm_i = int(r["wm_idx"][0]), int(r["fm_idx"][0])
    p_u = float(grid.prices[r["k"][0]])
    p_w = float(grid.prices[wm_i])
    diagnostics = {
        "p_U_unsnapped": float(r["p_u_raw"][0]),
        "p_U_clamped": not grid.p_min <= float(r["p_u_raw"][0]) <= grid.p_max,
        "p_U_below_p_W": p_u < p_w,
    }
    return DecompositionResult(
        params=params,
        p_U=p_u,
        sup0=curve("sup0", S), dem0=curve("dem0", D),
        wsup1=curve("wsup1", S), wdem1=curve("wdem1", D),
        fsup1_raw=curve("fsup1_raw", S), fdem1_raw=curve("fdem1_raw", D),
        fsup1=curve("fsup1", S), fdem1=curve("fdem1", D),
        fsup=curve("fsup", S), fdem=curve("fdem", D),
        tau1=float(to_mw(r["tau"][0])),
        wm_eq=Equilibrium(float(to_mw(r["wm_vol"][0])), p_w, wm_i),
        fm_eq=Equilibrium(float(to_mw(r["fm_vol"][0])), float(grid.prices[fm_i]), fm_i),
        v_C=float(to_mw(v_c)),
        diagnostics=diagnostics,
    )


def volume_gap(result: DecompositionResult) -> float:
    """``v_F - v_W`` from Utility's FM curves alone.

    Reads the curve that was not shifted: when ``p_U <= p_F`` the FM supply at
    ``p_U`` minus how far Utility's FM demand falls between ``p_U`` and
    ``p_F``; otherwise the mirror-image expression.
    """
    p_u, p_f = result.p_U, result.fm_eq.price
    fs, fd = result.fsup1, result.fdem1
    if p_u <= p_f:
        return fs(p_u) - (fd(p_u) - fd(p_f))
    return fd(p_u) - (fs(p_u) - fs(p_f))
