"""Command line front end.

Subcommands cover the full pipeline: bin prices, robust seasonality curves,
correlation spectra, bin size sweeps, anomaly screens, and the synthetic tick
generator. Every run writes its delimited outputs plus a manifest.json that
records row counts and sha256 digests; nothing in the outputs depends on the
clock, the host, or the thread count, so reruns are byte-identical.

Exit codes: 0 success, 2 usage or configuration error, 3 data error
(malformed or insufficient input), 4 numeric error (degenerate statistics).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .anomaly import (
    DEFAULT_STATISTICS,
    KNOWN_STATISTICS,
    day_scores,
    export_scores_csv,
    stock_scores,
    summary_dict,
)
from .binning import POLICY_ERROR, POLICY_EXCLUDE, build_panel, export_panel_csv
from .errors import DataError, NumericError
from .market_data import (
    SessionSpec,
    build_store,
    coverage_report,
    observed_dates,
    read_tick_frame,
)
from .moments import (
    STAT_VOLATILITY,
    cross_section_moments,
    export_curves_csv,
    export_day_paths_csv,
    export_stock_paths_csv,
    single_stock_moments,
    stock_average,
    time_average,
    volatility_proxies,
)
from .observables import (
    KIND_NORMALIZED,
    KIND_RELATIVE,
    KIND_RETURNS,
    compute_relative_prices,
    compute_returns,
    normalize_returns,
)
from .sweep import (
    DEFAULT_GRID,
    export_overlap_csv,
    export_sweep_curves_csv,
    kurtosis_vs_binsize,
    overlap_table,
    run_sweep,
)
from . import synth
from .timeutil import business_days, parse_date

logger = logging.getLogger(__name__)

_CURVE_ORDER = ("mean", "volatility", "skewness", "kurtosis", "abs_mean")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(
    out_dir: Path, command: str, params: dict, outputs, figures=(), inputs=()
) -> Path:
    """Record what a run produced. Intentionally carries no timestamps, so a
    rerun with identical inputs and flags writes identical bytes."""
    manifest = {
        "command": command,
        "version": __version__,
        "inputs": list(inputs),
        "parameters": params,
        "outputs": [
            {"path": p.name, "rows": rows, "sha256": _sha256(p)} for p, rows in outputs
        ],
        "figures": sorted(f.name for f in figures),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _parse_dates_arg(text: str):
    """Either 'START:COUNT' (business days) or comma-separated ISO dates."""
    if ":" in text:
        start, count = text.split(":", 1)
        return business_days(parse_date(start), int(count))
    return tuple(parse_date(part) for part in text.split(","))


def _load_store(args):
    frame, stamp_kind = read_tick_frame(args.ticks)
    if args.dates:
        dates = _parse_dates_arg(args.dates)
    elif stamp_kind == "epoch_ms":
        raise ValueError(
            "--dates is required when timestamps are epoch milliseconds; "
            "the calendar cannot be inferred from day offsets alone"
        )
    else:
        dates = observed_dates(frame)
    spec = SessionSpec.create(
        dates=dates,
        bin_seconds=args.bin_seconds,
        open_time=args.open_time,
        close_time=args.close_time,
        preopen_seconds=args.preopen_seconds,
    )
    return build_store(frame, spec), spec


def _session_params(args, spec: SessionSpec) -> dict:
    return {
        "open": args.open_time,
        "close": args.close_time,
        "bin_seconds": spec.bin_seconds,
        "dates": spec.date_strings(),
        "policy": args.policy,
    }


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, exporter, *exporter_args) -> tuple[Path, int]:
    with open(path, "w", newline="") as fh:
        rows = exporter(*exporter_args, fh)
    return path, rows


def _build_observables(panel, kind: str, kurtosis_skew_term: bool = True):
    if kind == KIND_RETURNS:
        return compute_returns(panel)
    if kind == KIND_RELATIVE:
        return compute_relative_prices(panel)
    if kind == KIND_NORMALIZED:
        returns = compute_returns(panel)
        csm = cross_section_moments(returns, kurtosis_skew_term=kurtosis_skew_term)
        return normalize_returns(returns, csm.statistic(STAT_VOLATILITY))
    raise ValueError(f"unknown observable kind {kind!r}")


def cmd_bins(args) -> int:
    store, spec = _load_store(args)
    panel = build_panel(store, policy=args.policy)
    out = _out_dir(args)

    outputs = [_write_csv(out / "bins.csv", export_panel_csv, panel)]
    cov = coverage_report(store)
    cov_path = out / "coverage.csv"
    cov.to_csv(cov_path, index=False, lineterminator="\n")
    outputs.append((cov_path, len(cov)))

    figures = []
    if args.figures:
        from . import report

        figures = report.save_coverage_figure(panel, out)

    params = _session_params(args, spec)
    params["n_excluded_stock_days"] = panel.n_excluded
    _write_manifest(out, "bins", params, outputs, figures, inputs=[args.ticks])
    print(f"bins: {spec.n_bins} bins x {store.n_symbols} stocks x {spec.n_days} days"
          f" ({panel.n_excluded} stock-days excluded)")
    return 0


def cmd_moments(args) -> int:
    store, spec = _load_store(args)
    panel = build_panel(store, policy=args.policy)
    skew_term = args.cross_kurtosis == "adjusted"
    obs = _build_observables(panel, args.observable, kurtosis_skew_term=skew_term)

    ssm = single_stock_moments(obs)
    csm = cross_section_moments(obs, kurtosis_skew_term=skew_term)
    sa = stock_average(ssm)
    ta = time_average(csm)
    ordered = [sa[s] for s in _CURVE_ORDER if s in sa]
    ordered += [ta[s] for s in _CURVE_ORDER if s in ta]

    out = _out_dir(args)
    outputs = [_write_csv(out / "curves.csv", export_curves_csv, ordered)]
    if args.per_stock:
        outputs.append(_write_csv(out / "stock_paths.csv", export_stock_paths_csv, ssm))
    if args.per_day:
        outputs.append(_write_csv(out / "day_paths.csv", export_day_paths_csv, csm))

    figures = []
    if args.figures:
        from . import report

        figures = report.save_curve_figures(ta, out, f"curves_{args.observable}")
        if args.observable == KIND_RETURNS:
            figures += report.save_proxy_figure(
                volatility_proxies(obs, kurtosis_skew_term=skew_term), out
            )

    params = _session_params(args, spec)
    params.update({"observable": args.observable, "cross_kurtosis": args.cross_kurtosis})
    _write_manifest(out, "moments", params, outputs, figures, inputs=[args.ticks])
    print(f"moments: {args.observable}, {len(ordered)} curves over {obs.n_points} points")
    return 0


def cmd_spectrum(args) -> int:
    # numba compilation lives behind this import; only spectrum runs pay it
    from .spectrum import draw_subsets, export_mean_corr_csv, export_spectrum_csv, spectrum_curves

    store, spec = _load_store(args)
    panel = build_panel(store, policy=args.policy)
    normalized = _build_observables(panel, KIND_NORMALIZED)

    n = store.n_symbols
    if args.subsets:
        specs = []
        for part in args.subsets.split(","):
            pieces = part.split(":")
            if len(pieces) != 3:
                raise ValueError(f"bad subset spec {part!r}, want LABEL:MODE:SIZE")
            label, mode, size = pieces
            mode = {"random": "rand"}.get(mode, mode)
            specs.append((label, mode, int(size)))
    else:
        specs = [("all", "first", n)]
    subsets = draw_subsets(n, specs, seed=args.seed)

    result = spectrum_curves(normalized, subsets, top_count=args.top, threads=args.threads)

    out = _out_dir(args)
    outputs = [
        _write_csv(out / "spectrum.csv", export_spectrum_csv, result),
        _write_csv(out / "mean_corr.csv", export_mean_corr_csv, result),
    ]

    figures = []
    if args.figures:
        from . import report

        figures = report.save_spectrum_figures(result, out)

    params = _session_params(args, spec)
    params.update(
        {
            "subsets": [
                {"label": s.label, "mode": s.mode, "size": s.size} for s in subsets
            ],
            "top": args.top,
            "seed": args.seed,
        }
    )
    _write_manifest(out, "spectrum", params, outputs, figures, inputs=[args.ticks])
    gaps = sum(result.gap_counts.values())
    print(f"spectrum: {len(subsets)} subsets x {normalized.n_points} bins, {gaps} gaps")
    return 0


def cmd_sweep(args) -> int:
    grid = tuple(int(t) for t in args.t_grid.split(","))
    kinds = tuple(args.observables.split(","))
    stats = tuple(args.stats.split(","))

    store, spec = _load_store(args)
    result = run_sweep(
        store,
        grid=grid,
        kinds=kinds,
        policy=args.policy,
        kurtosis_skew_term=args.cross_kurtosis == "adjusted",
        threads=args.threads,
    )
    scores = overlap_table(result, statistics=stats)

    out = _out_dir(args)
    outputs = [
        _write_csv(out / "sweep_curves.csv", export_sweep_curves_csv, result),
        _write_csv(out / "overlap.csv", export_overlap_csv, scores),
    ]
    if KIND_RETURNS in kinds:
        central_kurt = kurtosis_vs_binsize(result)
        kurt_path = out / "kurtosis_by_binsize.csv"
        with open(kurt_path, "w", newline="") as fh:
            fh.write("T_seconds,central_mean_kurtosis\n")
            for t in result.grid:
                v = central_kurt[t]
                fh.write(f"{t},{v:.12g}\n" if v == v else f"{t},\n")
        outputs.append((kurt_path, len(result.grid)))

    figures = []
    if args.figures:
        from . import report

        figures = report.save_sweep_figures(result, out, statistics=stats)

    params = _session_params(args, spec)
    params.update({"t_grid": list(grid), "observables": list(kinds), "statistics": list(stats),
                   "cross_kurtosis": args.cross_kurtosis})
    params["bin_seconds"] = list(grid)  # the sweep overrides the single value
    _write_manifest(out, "sweep", params, outputs, figures, inputs=[args.ticks])
    worst = max((s.max_rel_dev for s in scores if s.max_rel_dev == s.max_rel_dev), default=float("nan"))
    print(f"sweep: {len(grid)} bin sizes, worst overlap deviation {worst:.4g}")
    return 0


def cmd_anomaly(args) -> int:
    store, spec = _load_store(args)
    panel = build_panel(store, policy=args.policy)
    skew_term = args.cross_kurtosis == "adjusted"
    obs = _build_observables(panel, args.observable, kurtosis_skew_term=skew_term)
    stats = tuple(args.stats.split(","))

    if args.entity == "days":
        report_obj = day_scores(obs, statistics=stats, kurtosis_skew_term=skew_term)
    else:
        report_obj = stock_scores(obs, statistics=stats)

    out = _out_dir(args)
    outputs = [_write_csv(out / "anomaly.csv", export_scores_csv, report_obj)]
    summary = summary_dict(report_obj, top_n=args.top)
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    outputs.append((summary_path, len(summary["top"])))

    figures = []
    if args.figures:
        from . import report

        figures = report.save_anomaly_figure(report_obj, out)

    params = _session_params(args, spec)
    params.update({"entity": args.entity, "observable": args.observable, "statistics": list(stats)})
    _write_manifest(out, "anomaly", params, outputs, figures, inputs=[args.ticks])

    for ident, score, rank in report_obj.top(args.top):
        shown = f"{score:.4g}" if score == score else "n/a"
        print(f"rank {rank}: {report_obj.entity_kind} {ident} combined={shown}")
    return 0


def cmd_synth(args) -> int:
    profile = synth.ProfileSpec(kind=args.profile, base_vol=args.base_vol)
    probe = synth.SynthConfig(
        n_stocks=args.stocks,
        n_days=args.days,
        seed=args.seed,
        open_time=args.open_time,
        close_time=args.close_time,
        start_date=args.start_date,
        rate_per_min=args.rate_per_min,
        profile=profile,
        innovation=args.innovation,
        t_dof=args.t_dof,
        beta=args.beta,
        drift_per_day=args.drift_per_day,
        base_price=args.base_price,
        ensure_opening_tick=not args.no_opening_tick,
    )

    injections = []
    dates = [d.isoformat() for d in probe.dates()]
    symbols = list(probe.symbols())
    for text in args.crash_day or ():
        date_str, mag = text.rsplit(":", 1)
        if date_str not in dates:
            raise ValueError(f"crash day {date_str} is not in the generated calendar")
        injections.append(
            synth.Injection(synth.CRASH_DAY, dates.index(date_str), float(mag))
        )
    for text in args.rogue_stock or ():
        sym, mag = text.rsplit(":", 1)
        if sym not in symbols:
            raise ValueError(f"rogue stock {sym} is not in the generated universe")
        injections.append(
            synth.Injection(synth.ROGUE_STOCK, symbols.index(sym), float(mag))
        )
    config = dataclasses.replace(probe, anomalies=tuple(injections))

    out = _out_dir(args)
    ticks_path = out / "ticks.csv"
    with open(ticks_path, "w", newline="") as fh:
        truth = synth.generate(config, fh)
    n_ticks = sum(sum(per_day.values()) for per_day in truth.emission_counts.values())
    truth_path = out / "truth.json"
    truth_path.write_text(truth.to_json())

    figures = []
    if args.figures:
        from . import report

        figures = report.save_profile_figure(truth, out)

    params = {
        "stocks": args.stocks,
        "days": args.days,
        "seed": args.seed,
        "start_date": args.start_date,
        "open": args.open_time,
        "close": args.close_time,
        "rate_per_min": args.rate_per_min,
        "profile": args.profile,
        "base_vol": args.base_vol,
        "beta": args.beta,
        "innovation": args.innovation,
        "drift_per_day": args.drift_per_day,
        "anomalies": truth.anomalies,
    }
    _write_manifest(out, "synth", params, [(ticks_path, n_ticks), (truth_path, 1)], figures)
    print(f"synth: {n_ticks} ticks for {args.stocks} stocks x {args.days} days -> {ticks_path}")
    return 0


def _add_session_options(p: argparse.ArgumentParser, include_policy: bool = True):
    p.add_argument("--ticks", required=True, help="input tick CSV (symbol,timestamp,price)")
    p.add_argument("--out", required=True, help="output directory, created if missing")
    p.add_argument("--open", dest="open_time", default="10:00:00", metavar="HH:MM[:SS]",
                   help="session open")
    p.add_argument("--close", dest="close_time", default="16:00:00", metavar="HH:MM[:SS]",
                   help="session close")
    p.add_argument("--bin-seconds", type=int, default=300, help="bin width in seconds")
    p.add_argument("--dates", default=None,
                   help="trading calendar: 'd1,d2,...' ISO dates or 'START:COUNT' business days; "
                        "inferred from the data for ISO timestamps, required for epoch-ms")
    p.add_argument("--preopen-seconds", type=int, default=0,
                   help="accept ticks this many seconds before the open")
    if include_policy:
        p.add_argument("--policy", choices=(POLICY_EXCLUDE, POLICY_ERROR), default=POLICY_EXCLUDE,
                       help="what to do with stock-days that have no tick before the first limit")
    p.add_argument("--figures", action="store_true", help="render PNG figures next to the CSVs")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intraday",
        description="Intraday seasonality analytics: binned prices, robust cross-sectional "
                    "moments, correlation spectra, bin size sweeps, and anomaly screens.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text,
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(func=func)
        return p

    p = add("bins", cmd_bins, "bin tick prices onto the session grid")
    _add_session_options(p)

    p = add("moments", cmd_moments, "robust seasonality curves for one observable kind")
    _add_session_options(p)
    p.add_argument("--observable", choices=(KIND_RETURNS, KIND_RELATIVE, KIND_NORMALIZED),
                   default=KIND_RETURNS, help="observable to analyze")
    p.add_argument("--cross-kurtosis", choices=("adjusted", "plain"), default="adjusted",
                   help="include the squared-skewness term in cross-sectional kurtosis")
    p.add_argument("--per-stock", action="store_true", help="also write per-stock curves")
    p.add_argument("--per-day", action="store_true", help="also write per-day curves")

    p = add("spectrum", cmd_spectrum, "correlation matrix eigenvalues per bin")
    _add_session_options(p)
    p.add_argument("--subsets", default=None, metavar="LABEL:MODE:SIZE[,...]",
                   help="stock subsets to compare (mode: first|rand); default is the full universe")
    p.add_argument("--top", type=int, default=5, help="eigenvalues to keep per bin")
    p.add_argument("--seed", type=int, default=0, help="seed for random subset draws")
    p.add_argument("--threads", type=int, default=1, help="worker threads (output-invariant)")

    p = add("sweep", cmd_sweep, "repeat the pipeline over a grid of bin sizes")
    _add_session_options(p)
    p.add_argument("--T-grid", "--t-grid", dest="t_grid",
                   default=",".join(str(t) for t in DEFAULT_GRID),
                   help="comma-separated bin sizes in seconds")
    p.add_argument("--observables", default=f"{KIND_RETURNS},{KIND_RELATIVE}",
                   help="observable kinds to sweep")
    p.add_argument("--stats", default="mean,volatility",
                   help="statistics compared at shared bin limits")
    p.add_argument("--cross-kurtosis", choices=("adjusted", "plain"), default="adjusted",
                   help="include the squared-skewness term in cross-sectional kurtosis")
    p.add_argument("--threads", type=int, default=1, help="worker threads (output-invariant)")

    p = add("anomaly", cmd_anomaly, "leave-one-out screening of days or stocks")
    _add_session_options(p)
    p.add_argument("--entity", choices=("days", "stocks"), default="days",
                   help="what to screen")
    p.add_argument("--observable", choices=(KIND_RETURNS, KIND_RELATIVE, KIND_NORMALIZED),
                   default=KIND_RELATIVE, help="observable the scores are built on")
    p.add_argument("--stats", default=",".join(DEFAULT_STATISTICS),
                   help=f"statistics to combine (from: {','.join(KNOWN_STATISTICS)})")
    p.add_argument("--cross-kurtosis", choices=("adjusted", "plain"), default="adjusted",
                   help="include the squared-skewness term in cross-sectional kurtosis")
    p.add_argument("--top", type=int, default=5, help="entities to print and keep in the summary")

    p = add("synth", cmd_synth, "generate a synthetic tick file with known structure")
    p.add_argument("--out", required=True, help="output directory, created if missing")
    p.add_argument("--stocks", type=int, default=10, help="universe size")
    p.add_argument("--days", type=int, default=5, help="number of business days")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--start-date", default="2011-03-01", help="first business day (ISO)")
    p.add_argument("--open", dest="open_time", default="10:00:00", metavar="HH:MM[:SS]",
                   help="session open")
    p.add_argument("--close", dest="close_time", default="16:00:00", metavar="HH:MM[:SS]",
                   help="session close")
    p.add_argument("--rate-per-min", type=float, default=6.0, help="mean tick arrivals per minute")
    p.add_argument("--profile", choices=("flat", "ushape"), default="flat",
                   help="per-second volatility profile")
    p.add_argument("--base-vol", type=float, default=5e-5, help="log-vol per sqrt(second)")
    p.add_argument("--beta", type=float, default=0.0, help="common factor loading in [0, 1)")
    p.add_argument("--innovation", choices=("gaussian", "t"), default="gaussian",
                   help="innovation law")
    p.add_argument("--t-dof", type=float, default=3.0, help="degrees of freedom for t innovations")
    p.add_argument("--drift-per-day", type=float, default=0.0, help="log drift per session")
    p.add_argument("--base-price", type=float, default=100.0, help="opening price level")
    p.add_argument("--crash-day", action="append", metavar="DATE:MAG",
                   help="plant a drift ramp on a day (repeatable)")
    p.add_argument("--rogue-stock", action="append", metavar="SYMBOL:MAG",
                   help="multiply one stock's moves (repeatable)")
    p.add_argument("--no-opening-tick", action="store_true",
                   help="do not force a tick at the session open")
    p.add_argument("--figures", action="store_true", help="render PNG figures next to the CSVs")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        return args.func(args)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
