"""Panel construction: last-tick-before-limit prices, carry-forward, policies."""

import io

import numpy as np
import pytest

from conftest import make_spec, store_from_rows
from intraday.binning import (
    POLICY_ERROR,
    PricePanel,
    build_panel,
    export_panel_csv,
    subsample_panel,
)
from intraday.errors import DataError, EmptyPanelError, SessionMismatchError


def reference_bin_prices(times_ms, prices, limits_ms):
    """Linear-scan oracle: last tick strictly before each limit, else None.

    Deliberately naive (no sorting tricks, no bisection) so it can be checked
    by eye against the panel builder.
    """
    out = []
    for limit in limits_ms:
        best_t, best_p = None, None
        for t, p in zip(times_ms, prices):
            if t < limit and (best_t is None or t >= best_t):
                best_t, best_p = t, p
        out.append(best_p)
    return out


def day(hhmmss, ms=0):
    return f"2011-03-04T{hhmmss}.{ms:03d}"


def test_reference_oracle_by_hand():
    # limits 1000 and 2000; ticks at 500 and 1500
    assert reference_bin_prices([500, 1500], [10.0, 11.0], [1000, 2000]) == [10.0, 11.0]
    # tick exactly on a limit is not "strictly before" it
    assert reference_bin_prices([1000], [10.0], [1000, 2000]) == [None, 10.0]
    assert reference_bin_prices([], [], [1000]) == [None]


def test_three_ticks_one_minute_bins():
    rows = [
        ("AAA", day("10:00:30"), "100"),
        ("AAA", day("10:00:50"), "101"),
        ("AAA", day("10:02:10"), "102"),
    ]
    store = store_from_rows(rows, close_time="10:04:00")
    panel = build_panel(store)
    # limits 10:01..10:04; quiet second minute carries 101 forward
    assert panel.prices[0, 0].tolist() == [101.0, 101.0, 102.0, 102.0]
    assert panel.included[0, 0]
    assert panel.n_excluded == 0


def test_single_early_tick_carries_all_session():
    store = store_from_rows([("AAA", day("10:00:10"), "50")], close_time="11:00:00")
    panel = build_panel(store)
    assert panel.n_bins == 60
    assert np.all(panel.prices[0, 0] == 50.0)


def test_tick_on_limit_belongs_to_next_bin():
    rows = [
        ("AAA", day("10:00:10"), "10"),
        ("AAA", day("10:01:00"), "20"),  # exactly on the first limit
    ]
    store = store_from_rows(rows, close_time="10:02:00")
    panel = build_panel(store)
    assert panel.prices[0, 0].tolist() == [10.0, 20.0]


def test_late_first_tick_excludes_stock_day():
    rows = [
        ("AAA", day("10:05:00"), "10"),
        ("BBB", day("10:00:30"), "20"),
    ]
    store = store_from_rows(rows, close_time="11:00:00")
    panel = build_panel(store)
    aaa, bbb = panel.symbols.index("AAA"), panel.symbols.index("BBB")
    assert not panel.included[aaa, 0]
    assert np.isnan(panel.prices[aaa, 0]).all()
    assert panel.included[bbb, 0]
    assert panel.n_excluded == 1


def test_error_policy_names_offender():
    rows = [
        ("AAA", day("10:05:00"), "10"),
        ("BBB", day("10:00:30"), "20"),
    ]
    store = store_from_rows(rows, close_time="11:00:00")
    with pytest.raises(DataError, match="AAA on 2011-03-04"):
        build_panel(store, policy=POLICY_ERROR)


def test_unknown_policy_rejected():
    store = store_from_rows([("AAA", day("10:00:10"), "50")], close_time="11:00:00")
    with pytest.raises(ValueError, match="policy"):
        build_panel(store, policy="drop")


def test_all_excluded_is_empty_panel():
    store = store_from_rows([("AAA", day("10:30:00"), "10")], close_time="11:00:00")
    with pytest.raises(EmptyPanelError):
        build_panel(store)


def test_spec_mismatch_rejected():
    store = store_from_rows([("AAA", day("10:00:10"), "50")], close_time="11:00:00")
    other = make_spec(dates=("2011-03-07",), close_time="11:00:00")
    with pytest.raises(SessionMismatchError):
        build_panel(store, spec=other)


def test_coarser_spec_same_session_accepted():
    store = store_from_rows([("AAA", day("10:00:10"), "50")], close_time="11:00:00")
    coarse = store.spec.with_bin_seconds(300)
    panel = build_panel(store, spec=coarse)
    assert panel.n_bins == 12


def random_rows(rng, symbols, dates, n_per, open_s=36000, close_s=39600):
    rows = []
    for sym in symbols:
        for d in dates:
            times = rng.integers(open_s * 1000, close_s * 1000, size=n_per)
            for t in np.sort(times):
                hh, rem = divmod(int(t) // 1000, 3600)
                mm, ss = divmod(rem, 60)
                px = float(rng.uniform(10, 200))
                rows.append((sym, f"{d}T{hh:02d}:{mm:02d}:{ss:02d}.{int(t) % 1000:03d}", f"{px:.4f}"))
    return rows


def test_panel_matches_linear_scan_oracle():
    rng = np.random.default_rng(7)
    dates = ("2011-03-04", "2011-03-07")
    rows = random_rows(rng, ("AAA", "BBB", "CCC"), dates, n_per=35)
    store = store_from_rows(rows, dates=dates, close_time="11:00:00", bin_seconds=300)
    panel = build_panel(store)
    limits = panel.bin_limits_ms
    for s in range(store.n_symbols):
        for t in range(len(dates)):
            times, px = store.group(s, t)
            want = reference_bin_prices(times.tolist(), px.tolist(), limits.tolist())
            if want[0] is None:
                assert not panel.included[s, t]
                continue
            assert panel.included[s, t]
            assert panel.prices[s, t].tolist() == want


def test_every_price_is_a_real_tick():
    rng = np.random.default_rng(11)
    dates = ("2011-03-04",)
    rows = random_rows(rng, ("AAA", "BBB"), dates, n_per=20)
    store = store_from_rows(rows, dates=dates, close_time="11:00:00", bin_seconds=60)
    panel = build_panel(store)
    for s in range(store.n_symbols):
        if not panel.included[s, 0]:
            continue
        _, px = store.group(s, 0)
        assert set(panel.prices[s, 0].tolist()) <= set(px.tolist())


def opening_rows(rng, symbols, dates, n_per, close_s=39600):
    # one tick pinned at the open so every stock-day survives any bin width
    rows = []
    for sym in symbols:
        for d in dates:
            rows.append((sym, f"{d}T10:00:00.000", f"{rng.uniform(10, 200):.4f}"))
    return rows + random_rows(rng, symbols, dates, n_per, close_s=close_s)


def test_refinement_identity():
    # subsampling the fine grid at every 5th limit is the T=300 panel exactly
    rng = np.random.default_rng(3)
    dates = ("2011-03-04", "2011-03-07", "2011-03-08")
    rows = opening_rows(rng, ("AAA", "BBB", "CCC", "DDD"), dates, n_per=25)
    store = store_from_rows(rows, dates=dates, close_time="11:00:00", bin_seconds=60)
    fine = build_panel(store)
    coarse = build_panel(store, spec=store.spec.with_bin_seconds(300))
    sub = subsample_panel(fine, 5)
    assert sub.spec.bin_seconds == 300
    assert np.array_equal(sub.bin_limits_ms, coarse.bin_limits_ms)
    assert np.array_equal(sub.included, coarse.included)
    assert np.array_equal(sub.prices, coarse.prices, equal_nan=True)


def test_coarse_bins_can_rescue_late_starters():
    # first tick at 10:02 misses the 10:01 limit but not the 10:05 one; where
    # both grids include the stock-day, shared-limit prices agree exactly
    rows = [
        ("AAA", day("10:02:00"), "10"),
        ("AAA", day("10:40:00"), "11"),
        ("BBB", day("10:00:20"), "20"),
    ]
    store = store_from_rows(rows, close_time="11:00:00", bin_seconds=60)
    fine = build_panel(store)
    coarse = build_panel(store, spec=store.spec.with_bin_seconds(300))
    aaa, bbb = 0, 1
    assert not fine.included[aaa, 0] and coarse.included[aaa, 0]
    assert fine.included[bbb, 0] and coarse.included[bbb, 0]
    assert np.array_equal(fine.prices[bbb, 0, 4::5], coarse.prices[bbb, 0])


def test_subsample_factor_must_divide():
    store = store_from_rows([("AAA", day("10:00:10"), "50")], close_time="11:00:00")
    panel = build_panel(store)  # 60 bins
    with pytest.raises(ValueError, match="does not divide"):
        subsample_panel(panel, 7)
    same = subsample_panel(panel, 1)
    assert np.array_equal(same.prices, panel.prices, equal_nan=True)


def test_ticks_outside_session_do_not_change_panel():
    base = [
        ("AAA", day("10:00:30"), "100"),
        ("AAA", day("10:30:00"), "105"),
    ]
    extra = base + [
        ("AAA", day("09:15:00"), "999"),
        ("AAA", day("11:00:01"), "999"),
    ]
    p1 = build_panel(store_from_rows(base, close_time="11:00:00"))
    p2 = build_panel(store_from_rows(extra, close_time="11:00:00"))
    assert np.array_equal(p1.prices, p2.prices, equal_nan=True)
    assert not np.any(p2.prices == 999.0)


def test_views_are_readonly_slices():
    rng = np.random.default_rng(5)
    dates = ("2011-03-04", "2011-03-07")
    rows = random_rows(rng, ("AAA", "BBB"), dates, n_per=15)
    store = store_from_rows(rows, dates=dates, close_time="11:00:00", bin_seconds=300)
    panel = build_panel(store)

    for t in range(panel.n_days):
        px, flags = panel.day_view(t)
        assert px.shape == (panel.n_symbols, panel.n_bins)
        assert np.array_equal(px, panel.prices[:, t, :], equal_nan=True)
        assert np.array_equal(flags, panel.included[:, t])
        with pytest.raises(ValueError):
            px[0, 0] = 1.0

    for s in range(panel.n_symbols):
        px, flags = panel.stock_view(s)
        assert px.shape == (panel.n_days, panel.n_bins)
        assert np.array_equal(px, panel.prices[s], equal_nan=True)

    with pytest.raises(IndexError):
        panel.day_view(panel.n_days)
    with pytest.raises(IndexError):
        panel.stock_view(-1)


def test_export_rows_and_header():
    rows = [
        ("AAA", day("10:00:30"), "100"),
        ("BBB", day("10:30:00"), "20"),  # excluded: first tick after 10:01
    ]
    store = store_from_rows(rows, close_time="11:00:00")
    panel = build_panel(store)
    buf = io.StringIO()
    n = export_panel_csv(panel, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "symbol,date,bin_index,bin_limit,price"
    assert n == int(panel.included.sum()) * panel.n_bins == 60
    assert len(lines) == n + 1
    assert lines[1] == "AAA,2011-03-04,1,10:01:00,100"
    assert all(row.startswith("AAA,") for row in lines[1:])
