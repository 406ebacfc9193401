"""Walk through the toy market: order books, two clearings, and the decomposition."""
import numpy as np

from fundcurve.decomposition import INELASTIC_LIMIT, DecompositionParams, decompose, volume_gap
from fundcurve.synthetic import (
    clear_asd,
    clear_wm,
    generating_params,
    make_fixture_f1,
    random_book,
    wm_snapshot,
)

# The hand-sized book: a supplier, a retailer and a utility that both buys
# and sells around its internal price of 20 EUR/MWh.
book = make_fixture_f1()
for o in book.orders:
    print(f"{o.agent.value:9s} {o.side.value:4s} {o.price:6.1f} {o.volume:5.1f}  sector {book.sector(o)}")

# ASD puts every buy in demand and every sell in supply. WM moves the
# utility's speculative orders across (sector-2 buys become supply, sector-3
# sells become demand).
_, _, asd = clear_asd(book)
sup, dem, wm = clear_wm(book)
print("ASD clears at", asd.price, "EUR,", asd.volume, "MW")
print("WM  clears at", wm.price, "EUR,", wm.volume, "MW")

# This book is not balanced (more sector-3 sells than sector-2 buys), so the
# two prices differ. Decomposing with the shares read off the book:
params = generating_params(book)
r = decompose(wm_snapshot(book), params)
print(params)
print("FM clears at", r.fm_eq.price, "EUR,", r.fm_eq.volume, "MW; tau1 =", r.tau1)

# The whole pipeline side by side, one row per price.
print(" price   WSup   WDem   FSup   FDem")
for i, p in enumerate(sup.grid.prices):
    print(f"{p:6.1f} {sup.volumes[i]:6.1f} {dem.volumes[i]:6.1f} "
          f"{r.fsup.volumes[i]:6.1f} {r.fdem.volumes[i]:6.1f}")

# With a balanced random book the round trip is exact.
book = random_book(7)
_, _, asd = clear_asd(book)
r = decompose(wm_snapshot(book), generating_params(book))
print("balanced book: ASD", (asd.price, asd.volume), "FM", (r.fm_eq.price, r.fm_eq.volume))
print("volume gap v_F - v_W =", volume_gap(r))

# Sweeping the utility's demand share phi1 moves v_F between v_W and v_C,
# while the price never moves.
snap = wm_snapshot(book)
for phi in np.linspace(0, 1, 6):
    p = DecompositionParams(0.0, 1.0, 0.5, phi, 0.0, 0.0)
    r = decompose(snap, p)
    print(f"phi1={phi:.1f}  p_F={r.fm_eq.price:6.1f}  v_F={r.fm_eq.volume:7.1f}")
print("inelastic limit v_C =", decompose(snap, INELASTIC_LIMIT).v_C)
