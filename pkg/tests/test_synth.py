"""Tick generator: determinism, statistical fidelity, planted anomalies."""

import io
import json
import re

import numpy as np
import pytest

from conftest import make_spec
from intraday.binning import build_panel
from intraday.market_data import parse_ticks
from intraday.observables import compute_returns
from intraday.synth import (
    Injection,
    ProfileSpec,
    SynthConfig,
    _unit_draws,
    generate,
    generate_text,
    implied_correlation,
)


def parse_generated(text, truth, bin_seconds=60):
    spec = make_spec(
        dates=truth.dates,
        bin_seconds=bin_seconds,
        open_time=truth.session_open,
        close_time=truth.session_close,
    )
    return parse_ticks(io.StringIO(text), spec)


# ---------------------------------------------------------------- determinism


def test_output_is_byte_identical_across_runs():
    cfg = SynthConfig(n_stocks=4, n_days=3, seed=42, close_time="11:00:00", beta=0.5)
    t1, g1 = generate_text(cfg)
    t2, g2 = generate_text(cfg)
    assert t1 == t2
    assert g1.to_json() == g2.to_json()


def test_seed_changes_output():
    cfg_a = SynthConfig(n_stocks=2, n_days=1, seed=1, close_time="10:30:00")
    cfg_b = SynthConfig(n_stocks=2, n_days=1, seed=2, close_time="10:30:00")
    assert generate_text(cfg_a)[0] != generate_text(cfg_b)[0]


def test_truth_json_round_trips():
    cfg = SynthConfig(
        n_stocks=3,
        n_days=2,
        seed=7,
        close_time="10:30:00",
        anomalies=(Injection(kind="rogue_stock", target=1, magnitude=3.0),),
    )
    _, truth = generate_text(cfg)
    payload = json.loads(truth.to_json(extra={"note": 1}))
    assert payload["seed"] == 7
    assert payload["note"] == 1
    assert payload["anomalies"][0]["entity_id"] == "S001"
    assert payload["implied_correlation"] == 0.0


# ---------------------------------------------------------------- bookkeeping


def test_emission_counts_match_parsed_store():
    cfg = SynthConfig(n_stocks=3, n_days=2, seed=11, close_time="10:30:00", rate_per_min=4.0)
    text, truth = generate_text(cfg)
    store = parse_generated(text, truth)
    counts = store.counts()
    assert store.symbols == truth.symbols
    for s, sym in enumerate(truth.symbols):
        for d, day in enumerate(truth.dates):
            assert counts[s, d] == truth.emission_counts[sym][day]


def test_dates_are_business_days():
    cfg = SynthConfig(n_stocks=1, n_days=5, seed=0, start_date="2011-03-01")
    assert cfg.dates()[0].isoformat() == "2011-03-01"
    # the first weekend is skipped: Mar 5/6 are Sat/Sun
    assert [d.isoformat() for d in cfg.dates()] == [
        "2011-03-01", "2011-03-02", "2011-03-03", "2011-03-04", "2011-03-07",
    ]
    assert all(d.weekday() < 5 for d in cfg.dates())


def test_rows_are_grouped_by_day_then_symbol_in_time_order():
    cfg = SynthConfig(n_stocks=3, n_days=2, seed=13, close_time="10:20:00", rate_per_min=5.0)
    text, truth = generate_text(cfg)
    rows = [line.split(",") for line in text.splitlines()[1:]]
    keys = [(r[1][:10], r[0]) for r in rows]
    assert keys == sorted(keys)  # date blocks, symbol blocks inside
    for sym in truth.symbols:
        for day in truth.dates:
            stamps = [r[1] for r in rows if r[0] == sym and r[1].startswith(day)]
            assert stamps == sorted(stamps)


def test_price_format_is_fixed_four_decimals():
    cfg = SynthConfig(n_stocks=2, n_days=1, seed=17, close_time="10:15:00")
    text, _ = generate_text(cfg)
    for line in text.splitlines()[1:]:
        assert re.fullmatch(r"S\d+,2011-03-01T\d{2}:\d{2}:\d{2}\.\d{3},\d+\.\d{4}", line)


def test_opening_tick_pins_session_start():
    cfg = SynthConfig(n_stocks=2, n_days=1, seed=19, close_time="10:30:00", rate_per_min=0.5)
    text, _ = generate_text(cfg)
    first = {}
    for line in text.splitlines()[1:]:
        sym, stamp, price = line.split(",")
        first.setdefault(sym, (stamp, price))
    for sym, (stamp, price) in first.items():
        assert stamp.endswith("T10:00:00.000")
        assert price == "100.0000"

    bare = SynthConfig(
        n_stocks=2, n_days=1, seed=19, close_time="10:30:00",
        rate_per_min=0.5, ensure_opening_tick=False,
    )
    text2, _ = generate_text(bare)
    assert "T10:00:00.000" not in text2  # arrivals start strictly after the open


def test_high_rate_leaves_no_quiet_minute():
    cfg = SynthConfig(n_stocks=2, n_days=1, seed=23, close_time="11:00:00", rate_per_min=30.0)
    text, truth = generate_text(cfg)
    store = parse_generated(text, truth)
    for s in range(2):
        times, _ = store.group(s, 0)
        gaps = np.diff(times)
        assert gaps.max() < 60_000


# ---------------------------------------------------------------- statistics


def pooled_return_std(text, truth, bin_seconds):
    store = parse_generated(text, truth, bin_seconds=bin_seconds)
    panel = build_panel(store)
    vals = compute_returns(panel).values
    vals = vals[np.isfinite(vals)]
    return float(vals.std()), vals.size


def test_flat_profile_returns_scale_with_sqrt_t():
    cfg = SynthConfig(n_stocks=10, n_days=6, seed=31, close_time="11:00:00", rate_per_min=6.0)
    text, truth = generate_text(cfg)
    for t in (30, 300):
        got, n = pooled_return_std(text, truth, t)
        want = cfg.profile.base_vol * np.sqrt(t)
        band = 3.0 * want / np.sqrt(2.0 * n)
        assert abs(got - want) < band, f"T={t}: {got:.3e} vs {want:.3e} +- {band:.3e}"


def test_zero_beta_returns_are_uncorrelated():
    from intraday.moments import cross_section_moments
    from intraday.observables import normalize_returns
    from intraday.spectrum import correlation_matrix, mean_offdiag

    cfg = SynthConfig(n_stocks=20, n_days=12, seed=37, close_time="11:00:00", rate_per_min=3.0)
    text, truth = generate_text(cfg)
    store = parse_generated(text, truth, bin_seconds=300)
    panel = build_panel(store)
    ret = compute_returns(panel)
    norm = normalize_returns(ret, cross_section_moments(ret).volatility)
    rhos = [mean_offdiag(correlation_matrix(norm, k)) for k in range(norm.n_points)]
    assert abs(float(np.mean(rhos))) < 0.05


def test_factor_loading_sets_pair_correlation():
    from intraday.moments import cross_section_moments
    from intraday.observables import normalize_returns
    from intraday.spectrum import correlation_matrix, mean_offdiag

    cfg = SynthConfig(
        n_stocks=20, n_days=12, seed=41, close_time="11:00:00",
        rate_per_min=3.0, beta=0.6,
    )
    assert implied_correlation(cfg) == pytest.approx(0.36)
    text, truth = generate_text(cfg)
    store = parse_generated(text, truth, bin_seconds=300)
    panel = build_panel(store)
    ret = compute_returns(panel)
    norm = normalize_returns(ret, cross_section_moments(ret).volatility)
    rhos = [mean_offdiag(correlation_matrix(norm, k)) for k in range(norm.n_points)]
    assert float(np.mean(rhos)) == pytest.approx(0.36, abs=0.05)


def test_student_t_innovations_have_unit_variance():
    rng = np.random.default_rng(43)
    draws = _unit_draws(rng, "t", 5.0, 200_000)
    assert abs(float(draws.std()) - 1.0) < 0.02
    # heavier tail than gaussian at matched variance
    assert np.mean(np.abs(draws) > 3.0) > np.mean(np.abs(rng.standard_normal(200_000)) > 3.0)


def test_crash_day_shifts_only_its_day():
    cfg = SynthConfig(
        n_stocks=30, n_days=4, seed=47, close_time="12:00:00", rate_per_min=2.0,
        anomalies=(Injection(kind="crash_day", target=2, magnitude=-0.05),),
    )
    text, truth = generate_text(cfg)
    store = parse_generated(text, truth)
    for d in range(4):
        moves = []
        for s in range(30):
            times, px = store.group(s, d)
            moves.append(np.log(px[-1] / px[0]))
        mean_move = float(np.mean(moves))
        if d == 2:
            assert mean_move == pytest.approx(-0.05, abs=0.01)
        else:
            assert abs(mean_move) < 0.01


def test_rogue_stock_runs_five_times_hotter():
    cfg = SynthConfig(
        n_stocks=10, n_days=4, seed=53, close_time="12:00:00", rate_per_min=2.0,
        anomalies=(Injection(kind="rogue_stock", target=7, magnitude=5.0),),
    )
    text, truth = generate_text(cfg)
    store = parse_generated(text, truth, bin_seconds=300)
    panel = build_panel(store)
    vals = compute_returns(panel).values
    stds = np.array([np.nanstd(vals[s]) for s in range(10)])
    others = np.delete(stds, 7)
    assert 4.0 < stds[7] / np.median(others) < 6.0


# ---------------------------------------------------------------- profiles


def test_ushape_profile_shape_and_sampling():
    prof = ProfileSpec(kind="ushape", base_vol=1e-4)
    v = prof.per_second(36_000_000, 3600)
    assert v.shape == (3600,)
    assert v[0] == pytest.approx(2e-4, rel=0.03)
    assert v.min() == pytest.approx(1e-4, rel=0.03)
    assert v[-1] == pytest.approx(1.5e-4, rel=0.03)
    assert np.argmin(v) == pytest.approx(1800, abs=60)

    cfg = SynthConfig(n_stocks=1, n_days=1, seed=3, close_time="11:00:00",
                      profile=prof)
    _, truth = generate_text(cfg)
    assert len(truth.profile_per_minute) == 60
    assert truth.profile_per_minute[0] == pytest.approx(2e-4, rel=0.03)
    assert truth.profile_kind == "ushape"


def test_table_profile_interpolates_and_validates():
    knots = (("10:00:00", 1e-4), ("11:00:00", 3e-4))
    prof = ProfileSpec(kind="table", knots=knots)
    v = prof.per_second(36_000_000, 3600)
    assert v[0] == pytest.approx(1e-4, rel=0.01)
    assert v[1800] == pytest.approx(2e-4, rel=0.01)
    assert v[-1] == pytest.approx(3e-4, rel=0.01)

    with pytest.raises(ValueError, match="two knots"):
        ProfileSpec(kind="table", knots=(("10:00:00", 1e-4),)).per_second(36_000_000, 60)
    bad = (("11:00:00", 1e-4), ("10:00:00", 2e-4))
    with pytest.raises(ValueError, match="increasing"):
        ProfileSpec(kind="table", knots=bad).per_second(36_000_000, 3600)
    with pytest.raises(ValueError, match="profile kind"):
        ProfileSpec(kind="wedge").per_second(36_000_000, 60)


# ---------------------------------------------------------------- validation


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_stocks=0, n_days=1, seed=0)
    with pytest.raises(ValueError, match="beta"):
        SynthConfig(n_stocks=1, n_days=1, seed=0, beta=1.0)
    with pytest.raises(ValueError, match="rate"):
        SynthConfig(n_stocks=1, n_days=1, seed=0, rate_per_min=0.0)
    with pytest.raises(ValueError, match="innovation"):
        SynthConfig(n_stocks=1, n_days=1, seed=0, innovation="cauchy")
    with pytest.raises(ValueError, match="dof"):
        SynthConfig(n_stocks=1, n_days=1, seed=0, innovation="t", t_dof=2.0)
    with pytest.raises(ValueError, match="base_price"):
        SynthConfig(n_stocks=1, n_days=1, seed=0, base_price=-1.0)
    with pytest.raises(ValueError, match="out of range"):
        SynthConfig(n_stocks=2, n_days=2, seed=0,
                    anomalies=(Injection(kind="rogue_stock", target=2, magnitude=2.0),))
    with pytest.raises(ValueError, match="injection kind"):
        Injection(kind="flash_crash", target=0, magnitude=1.0)
    with pytest.raises(ValueError, match="positive"):
        Injection(kind="rogue_stock", target=0, magnitude=0.0)
    with pytest.raises(ValueError, match=">= 0"):
        Injection(kind="crash_day", target=-1, magnitude=-0.05)


def test_session_must_be_whole_seconds():
    cfg = SynthConfig(n_stocks=1, n_days=1, seed=0, close_time="09:00:00")
    with pytest.raises(ValueError, match="after open"):
        generate(cfg, io.StringIO())
