"""Synthetic tick generator with known ground truth.

One-factor log-price model on a per-second lattice: each stock-day draws
Poisson-ish arrival times (exponential gaps rounded up to whole seconds, so
the common factor is well-defined at every arrival), and the log price moves
per tick interval by

    drift * dt/S  +  g * ( beta * dW_common  +  sqrt(1 - beta^2) * dW_idio )

where both shock legs integrate the squared volatility profile over the
interval, so a bin return over T seconds has standard deviation
profile * sqrt(T) under a flat profile and any two stocks correlate at beta^2
at every bin size. Innovations are Gaussian or unit-variance Student-t.

Determinism: every random stream is derived from (seed, stream tag, stock,
day), so output is byte-identical for a given config regardless of generation
order. Injected anomalies (a drift ramp on one day, a volatility multiple on
one stock) are recorded in the ground truth next to the emission counts.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
import pandas as pd

from .timeutil import business_days, format_time_of_day, parse_date, parse_time_of_day

CRASH_DAY = "crash_day"
ROGUE_STOCK = "rogue_stock"

_STREAM_COMMON = 1
_STREAM_STOCK_DAY = 2

_TIME_LUT: np.ndarray | None = None


def _time_strings() -> np.ndarray:
    """'HH:MM:SS.000' for every second of the day, built once."""
    global _TIME_LUT
    if _TIME_LUT is None:
        _TIME_LUT = np.array(
            [format_time_of_day(s * 1000, with_millis=True) for s in range(86400)], dtype="U12"
        )
    return _TIME_LUT


@dataclass(frozen=True)
class ProfileSpec:
    """Deterministic per-second volatility profile, in log-vol per sqrt(second).

    kinds:
      flat: constant ``base_vol``.
      ushape: ``base_vol`` times a U-shaped multiplier, cosine-interpolated
          through 2.0 at the open, 1.0 at the midday trough, 1.5 at the close.
      table: linear interpolation through (time, vol) knots.
    """

    kind: str = "flat"
    base_vol: float = 5e-5
    mult_open: float = 2.0
    mult_trough: float = 1.0
    mult_close: float = 1.5
    knots: tuple[tuple[str, float], ...] = ()

    def per_second(self, open_ms: int, session_seconds: int) -> np.ndarray:
        """Volatility for each one-second step of the session."""
        u = (np.arange(session_seconds) + 0.5) / session_seconds
        if self.kind == "flat":
            return np.full(session_seconds, self.base_vol)
        if self.kind == "ushape":
            first = self.mult_open + (self.mult_trough - self.mult_open) * 0.5 * (
                1.0 - np.cos(np.pi * np.clip(u / 0.5, 0.0, 1.0))
            )
            second = self.mult_trough + (self.mult_close - self.mult_trough) * 0.5 * (
                1.0 - np.cos(np.pi * np.clip((u - 0.5) / 0.5, 0.0, 1.0))
            )
            mult = np.where(u < 0.5, first, second)
            return self.base_vol * mult
        if self.kind == "table":
            if len(self.knots) < 2:
                raise ValueError("table profile needs at least two knots")
            xs = np.array([(parse_time_of_day(t) - open_ms) / 1000.0 for t, _ in self.knots])
            ys = np.array([v for _, v in self.knots], dtype=np.float64)
            if np.any(np.diff(xs) <= 0):
                raise ValueError("table profile knots must be strictly increasing in time")
            return np.interp(u * session_seconds, xs, ys)
        raise ValueError(f"unknown profile kind {self.kind!r}")


@dataclass(frozen=True)
class Injection:
    """One planted anomaly: a drift ramp on a day or a volatility multiple on a stock."""

    kind: str
    target: int  # day index for crash_day, stock index for rogue_stock
    magnitude: float

    def __post_init__(self):
        if self.kind not in (CRASH_DAY, ROGUE_STOCK):
            raise ValueError(f"unknown injection kind {self.kind!r}")
        if self.target < 0:
            raise ValueError("injection target index must be >= 0")
        if self.kind == ROGUE_STOCK and self.magnitude <= 0:
            raise ValueError("rogue_stock magnitude must be positive")


@dataclass(frozen=True)
class SynthConfig:
    n_stocks: int
    n_days: int
    seed: int
    open_time: str = "10:00:00"
    close_time: str = "16:00:00"
    start_date: str = "2011-03-01"
    rate_per_min: float = 6.0
    profile: ProfileSpec = field(default_factory=ProfileSpec)
    innovation: str = "gaussian"  # 'gaussian' or 't'
    t_dof: float = 3.0
    beta: float = 0.0
    drift_per_day: float = 0.0
    base_price: float = 100.0
    ensure_opening_tick: bool = True
    anomalies: tuple[Injection, ...] = ()

    def __post_init__(self):
        if self.n_stocks < 1 or self.n_days < 1:
            raise ValueError("need at least one stock and one day")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        if self.rate_per_min <= 0:
            raise ValueError("rate_per_min must be positive")
        if self.innovation not in ("gaussian", "t"):
            raise ValueError(f"unknown innovation law {self.innovation!r}")
        if self.innovation == "t" and self.t_dof <= 2.0:
            raise ValueError("student-t innovations need dof > 2 for finite variance")
        if self.base_price <= 0:
            raise ValueError("base_price must be positive")
        for a in self.anomalies:
            limit = self.n_days if a.kind == CRASH_DAY else self.n_stocks
            if a.target >= limit:
                raise ValueError(f"{a.kind} target {a.target} out of range (< {limit})")

    def symbols(self) -> tuple[str, ...]:
        width = max(3, len(str(self.n_stocks - 1)))
        return tuple(f"S{i:0{width}d}" for i in range(self.n_stocks))

    def dates(self) -> tuple[dt.date, ...]:
        return business_days(parse_date(self.start_date), self.n_days)


@dataclass
class GroundTruth:
    """What the generator planted; the reference side for detection tests."""

    seed: int
    symbols: tuple[str, ...]
    dates: tuple[str, ...]
    session_open: str
    session_close: str
    rate_per_min: float
    beta: float
    implied_correlation: float
    innovation: str
    drift_per_day: float
    profile_kind: str
    profile_per_minute: list[float]
    anomalies: list[dict]
    emission_counts: dict[str, dict[str, int]]

    def to_json(self, extra: dict | None = None) -> str:
        payload = {
            "seed": self.seed,
            "symbols": list(self.symbols),
            "dates": list(self.dates),
            "session_open": self.session_open,
            "session_close": self.session_close,
            "rate_per_min": self.rate_per_min,
            "beta": self.beta,
            "implied_correlation": self.implied_correlation,
            "innovation": self.innovation,
            "drift_per_day": self.drift_per_day,
            "profile_kind": self.profile_kind,
            "profile_per_minute": self.profile_per_minute,
            "anomalies": self.anomalies,
            "emission_counts": self.emission_counts,
        }
        if extra:
            payload.update(extra)
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def implied_correlation(config: SynthConfig) -> float:
    """Pairwise correlation of synchronous returns implied by the factor loading."""
    return config.beta * config.beta


def _unit_draws(rng: np.random.Generator, law: str, dof: float, size: int) -> np.ndarray:
    if law == "gaussian":
        return rng.standard_normal(size)
    return rng.standard_t(dof, size) / np.sqrt(dof / (dof - 2.0))


def _arrival_seconds(rng: np.random.Generator, rate_per_sec: float, session_seconds: int) -> np.ndarray:
    """Arrival offsets in whole seconds, ascending, within (0, session]."""
    expected = max(16, int(session_seconds * rate_per_sec * 1.3) + 16)
    gaps = rng.exponential(1.0 / rate_per_sec, size=expected)
    steps = np.maximum(1, np.ceil(gaps)).astype(np.int64)
    times = np.cumsum(steps)
    while times.size and times[-1] <= session_seconds:
        more = rng.exponential(1.0 / rate_per_sec, size=expected)
        steps = np.maximum(1, np.ceil(more)).astype(np.int64)
        times = np.concatenate([times, times[-1] + np.cumsum(steps)])
    return times[times <= session_seconds]


def generate(config: SynthConfig, out: TextIO) -> GroundTruth:
    """Write the tick CSV for a config and return its ground truth."""
    open_ms = parse_time_of_day(config.open_time)
    close_ms = parse_time_of_day(config.close_time)
    if close_ms <= open_ms:
        raise ValueError("close must be after open")
    if (close_ms - open_ms) % 1000:
        raise ValueError("session length must be whole seconds")
    session_seconds = (close_ms - open_ms) // 1000

    symbols = config.symbols()
    dates = config.dates()
    vol = config.profile.per_second(open_ms, session_seconds)
    var_cum = np.concatenate([[0.0], np.cumsum(vol * vol)])

    crash = {a.target: a.magnitude for a in config.anomalies if a.kind == CRASH_DAY}
    rogue = {a.target: a.magnitude for a in config.anomalies if a.kind == ROGUE_STOCK}

    rate_per_sec = config.rate_per_min / 60.0
    beta = config.beta
    idio_scale = np.sqrt(1.0 - beta * beta)
    counts = np.zeros((config.n_stocks, config.n_days), dtype=np.int64)

    time_lut = _time_strings()

    out.write("symbol,timestamp,price\n")
    for d, date in enumerate(dates):
        drift_d = config.drift_per_day + crash.get(d, 0.0)
        if beta > 0.0:
            rng_c = np.random.default_rng(np.random.SeedSequence([config.seed, _STREAM_COMMON, d]))
            eps_c = _unit_draws(rng_c, config.innovation, config.t_dof, session_seconds)
            w_common = np.concatenate([[0.0], np.cumsum(vol * eps_c)])
        else:
            w_common = None
        date_prefix = date.isoformat() + "T"

        day_frames = []
        for s, symbol in enumerate(symbols):
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, _STREAM_STOCK_DAY, s, d]))
            ticks = _arrival_seconds(rng, rate_per_sec, session_seconds)
            if config.ensure_opening_tick:
                ticks = np.concatenate([[0], ticks]) if (ticks.size == 0 or ticks[0] != 0) else ticks
            if ticks.size == 0:
                continue
            bounds = np.concatenate([[0], ticks])
            dts = np.diff(bounds).astype(np.float64)
            idio_sd = np.sqrt(var_cum[ticks] - var_cum[bounds[:-1]])
            shocks = idio_scale * idio_sd * _unit_draws(rng, config.innovation, config.t_dof, ticks.size)
            if w_common is not None:
                shocks = shocks + beta * (w_common[ticks] - w_common[bounds[:-1]])
            if s in rogue:
                shocks = shocks * rogue[s]
            dlog = drift_d * dts / session_seconds + shocks
            prices = config.base_price * np.exp(np.cumsum(dlog))
            counts[s, d] = ticks.size

            sec_of_day = ticks + open_ms // 1000
            stamps = np.char.add(date_prefix, time_lut[sec_of_day])
            day_frames.append(
                pd.DataFrame({"symbol": symbol, "timestamp": stamps, "price": prices})
            )
        if day_frames:
            chunk = pd.concat(day_frames, ignore_index=True)
            chunk.to_csv(out, index=False, header=False, float_format="%.4f")

    anomalies = []
    for a in config.anomalies:
        entity = dates[a.target].isoformat() if a.kind == CRASH_DAY else symbols[a.target]
        anomalies.append(
            {"kind": a.kind, "target": a.target, "entity_id": entity, "magnitude": a.magnitude}
        )

    per_minute = vol[:: 60][: session_seconds // 60] if session_seconds >= 60 else vol[:1]
    return GroundTruth(
        seed=config.seed,
        symbols=symbols,
        dates=tuple(d.isoformat() for d in dates),
        session_open=format_time_of_day(open_ms),
        session_close=format_time_of_day(close_ms),
        rate_per_min=config.rate_per_min,
        beta=beta,
        implied_correlation=implied_correlation(config),
        innovation=config.innovation if config.innovation == "gaussian" else f"t({config.t_dof:g})",
        drift_per_day=config.drift_per_day,
        profile_kind=config.profile.kind,
        profile_per_minute=[float(f"{v:.10g}") for v in per_minute],
        anomalies=anomalies,
        emission_counts={
            sym: {dates[d].isoformat(): int(counts[s, d]) for d in range(config.n_days)}
            for s, sym in enumerate(symbols)
        },
    )


def generate_text(config: SynthConfig) -> tuple[str, GroundTruth]:
    """Convenience wrapper returning the CSV as one string."""
    import io

    buf = io.StringIO()
    truth = generate(config, buf)
    return buf.getvalue(), truth
