"""Clock arithmetic helpers.

All session logic runs on a single local clock: times of day are integer
milliseconds since midnight, dates are `datetime.date`. No timezone handling
anywhere by design.
"""

from __future__ import annotations

import datetime as dt

MS_PER_SECOND = 1000
MS_PER_DAY = 86_400_000

_EPOCH = dt.date(1970, 1, 1)


def parse_time_of_day(text: str) -> int:
    """Parse 'HH:MM', 'HH:MM:SS' or 'HH:MM:SS.mmm' into ms since midnight."""
    parts = text.strip().split(":")
    if len(parts) not in (2, 3):
        raise ValueError(f"bad time of day: {text!r}")
    try:
        hours = int(parts[0])
        minutes = int(parts[1])
        millis = 0
        seconds = 0
        if len(parts) == 3:
            sec_part = parts[2]
            if "." in sec_part:
                sec_str, frac = sec_part.split(".", 1)
                seconds = int(sec_str)
                millis = int(frac.ljust(3, "0")[:3])
            else:
                seconds = int(sec_part)
    except ValueError as exc:
        raise ValueError(f"bad time of day: {text!r}") from exc
    if not (0 <= hours < 24 and 0 <= minutes < 60 and 0 <= seconds < 60):
        raise ValueError(f"bad time of day: {text!r}")
    return ((hours * 60 + minutes) * 60 + seconds) * MS_PER_SECOND + millis


def format_time_of_day(ms: int, with_millis: bool = False) -> str:
    """Render ms since midnight as 'HH:MM:SS' (or with '.mmm')."""
    ms = int(ms)
    seconds, millis = divmod(ms, MS_PER_SECOND)
    hours, rem = divmod(seconds, 3600)
    minutes, seconds = divmod(rem, 60)
    out = f"{hours:02d}:{minutes:02d}:{seconds:02d}"
    if with_millis:
        out += f".{millis:03d}"
    return out


def parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def date_to_epoch_days(d: dt.date) -> int:
    return (d - _EPOCH).days


def epoch_days_to_date(days: int) -> dt.date:
    return _EPOCH + dt.timedelta(days=int(days))


def business_days(start: dt.date, count: int) -> tuple[dt.date, ...]:
    """The first `count` weekdays on or after `start`. Weekends skipped, no holiday calendar."""
    out: list[dt.date] = []
    day = start
    while len(out) < count:
        if day.weekday() < 5:
            out.append(day)
        day += dt.timedelta(days=1)
    return tuple(out)
