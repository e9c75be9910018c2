"""Leave-one-out screening for days or stocks that break the shared pattern.

Each entity's seasonal curve is z-scored per bin against the mean and
population spread of all *other* entities, and the root mean square of those
z-scores is its anomaly score. Bins where the reference spread vanishes or
either side is missing are skipped and counted. Scores combine across
statistics by plain averaging, and ranks are dense from the top.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .errors import SampleTooSmallError
from .moments import (
    STAT_KURTOSIS,
    STAT_MEAN,
    STAT_SKEWNESS,
    STAT_VOLATILITY,
    cross_section_moments,
    single_stock_moments,
)
from .observables import ObservablePanel

logger = logging.getLogger(__name__)

ENTITY_DAY = "day"
ENTITY_STOCK = "stock"

DEFAULT_STATISTICS = (STAT_MEAN, STAT_VOLATILITY)
KNOWN_STATISTICS = (STAT_MEAN, STAT_VOLATILITY, STAT_SKEWNESS, STAT_KURTOSIS)


@dataclass
class AnomalyReport:
    """Scores, per-statistic detail, and ranks for one screening run."""

    entity_kind: str
    entity_ids: list[str]
    statistics: tuple[str, ...]
    scores: dict[str, np.ndarray]  # statistic -> (E,)
    skipped: dict[str, np.ndarray]  # statistic -> (E,) bins not scored
    combined: np.ndarray  # (E,)
    ranks: np.ndarray  # (E,) 1 = most anomalous

    def top(self, n: int = 5) -> list[tuple[str, float, int]]:
        """The n highest-ranked entities as (id, combined score, rank)."""
        order = np.argsort(self.ranks)
        return [
            (self.entity_ids[i], float(self.combined[i]), int(self.ranks[i]))
            for i in order[:n]
        ]


def _loo_rms_z(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Leave-one-out RMS z-score per row of an (E, P) matrix.

    Returns (scores, skipped bin counts). The reference for row e is the
    per-column mean and population spread over every other row; columns are
    skipped when the row value is missing, fewer than two peers remain, or
    the peer spread is zero.
    """
    e, p = values.shape
    finite = np.isfinite(values)
    x = np.where(finite, values, 0.0)
    # Center on the grand column mean first; the leave-one-out variance is
    # then a one-pass formula on small residuals instead of raw levels.
    cnt = finite.sum(axis=0).astype(np.float64)
    grand = np.divide(x.sum(axis=0), cnt, out=np.zeros(p), where=cnt > 0)
    y = np.where(finite, values - grand, 0.0)

    s1 = y.sum(axis=0)
    s2 = (y * y).sum(axis=0)
    cnt_o = cnt - finite  # peers per (row, column)
    s1_o = s1 - y
    s2_o = s2 - y * y
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_o = s1_o / cnt_o
        var_o = s2_o / cnt_o - mean_o * mean_o
    spread = np.sqrt(np.maximum(var_o, 0.0))

    usable = finite & (cnt_o >= 2) & (spread > 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(usable, (y - mean_o) / np.where(usable, spread, 1.0), 0.0)
    n_used = usable.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.sqrt((z * z).sum(axis=1) / n_used)
    scores = np.where(n_used > 0, scores, np.nan)
    return scores, (p - n_used).astype(np.int64)


def _combine(scores: dict[str, np.ndarray], n_entities: int) -> np.ndarray:
    stack = np.vstack([scores[s] for s in scores]) if scores else np.empty((0, n_entities))
    finite = np.isfinite(stack)
    total = np.where(finite, stack, 0.0).sum(axis=0)
    cnt = finite.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        combined = total / cnt
    return np.where(cnt > 0, combined, np.nan)


def _rank_desc(combined: np.ndarray) -> np.ndarray:
    """Ranks with 1 for the largest score; NaN sinks to the bottom, ties keep
    entity order."""
    key = np.where(np.isnan(combined), -np.inf, combined)
    order = np.argsort(-key, kind="stable")
    ranks = np.empty(combined.shape[0], dtype=np.int64)
    ranks[order] = np.arange(1, combined.shape[0] + 1)
    return ranks


def _check_statistics(statistics: Sequence[str]) -> tuple[str, ...]:
    stats = tuple(statistics)
    if not stats:
        raise ValueError("no statistics selected")
    for s in stats:
        if s not in KNOWN_STATISTICS:
            raise ValueError(f"unknown statistic {s!r} (choose from {', '.join(KNOWN_STATISTICS)})")
    return stats


def day_scores(
    obs: ObservablePanel,
    statistics: Sequence[str] = DEFAULT_STATISTICS,
    kurtosis_skew_term: bool = True,
) -> AnomalyReport:
    """Screen days: each day's cross-sectional curves against all other days."""
    stats = _check_statistics(statistics)
    if obs.spec.n_days < 3:
        raise SampleTooSmallError(
            f"day screening needs at least 3 days, got {obs.spec.n_days}"
        )
    cross = cross_section_moments(obs, kurtosis_skew_term=kurtosis_skew_term)
    scores: dict[str, np.ndarray] = {}
    skipped: dict[str, np.ndarray] = {}
    for s in stats:
        scores[s], skipped[s] = _loo_rms_z(cross.statistic(s))
    combined = _combine(scores, obs.spec.n_days)
    return AnomalyReport(
        entity_kind=ENTITY_DAY,
        entity_ids=list(obs.spec.date_strings()),
        statistics=stats,
        scores=scores,
        skipped=skipped,
        combined=combined,
        ranks=_rank_desc(combined),
    )


def stock_scores(
    obs: ObservablePanel, statistics: Sequence[str] = DEFAULT_STATISTICS
) -> AnomalyReport:
    """Screen stocks: each stock's day-averaged curves against its peers."""
    stats = _check_statistics(statistics)
    n = len(obs.symbols)
    if n < 3:
        raise SampleTooSmallError(f"stock screening needs at least 3 stocks, got {n}")
    single = single_stock_moments(obs)
    scores: dict[str, np.ndarray] = {}
    skipped: dict[str, np.ndarray] = {}
    for s in stats:
        scores[s], skipped[s] = _loo_rms_z(single.statistic(s))
    combined = _combine(scores, n)
    return AnomalyReport(
        entity_kind=ENTITY_STOCK,
        entity_ids=list(obs.symbols),
        statistics=stats,
        scores=scores,
        skipped=skipped,
        combined=combined,
        ranks=_rank_desc(combined),
    )


def export_scores_csv(report: AnomalyReport, out: TextIO) -> int:
    """Rows: entity_kind,entity_id,statistic,score,rank, best rank first.

    Per-statistic rows carry the entity's combined rank; a 'combined' row
    closes each entity block.
    """
    out.write("entity_kind,entity_id,statistic,score,rank\n")
    order = np.argsort(report.ranks)
    n_rows = 0
    for i in order:
        ident = report.entity_ids[i]
        rank = report.ranks[i]
        for s in report.statistics:
            v = report.scores[s][i]
            val = f"{v:.12g}" if np.isfinite(v) else ""
            out.write(f"{report.entity_kind},{ident},{s},{val},{rank}\n")
            n_rows += 1
        v = report.combined[i]
        val = f"{v:.12g}" if np.isfinite(v) else ""
        out.write(f"{report.entity_kind},{ident},combined,{val},{rank}\n")
        n_rows += 1
    return n_rows


def summary_dict(report: AnomalyReport, top_n: int = 5) -> dict:
    """JSON-ready digest: ranking head plus skipped-bin accounting."""
    return {
        "entity_kind": report.entity_kind,
        "n_entities": len(report.entity_ids),
        "statistics": list(report.statistics),
        "top": [
            {
                "entity_id": ident,
                "combined_score": score if np.isfinite(score) else None,
                "rank": rank,
            }
            for ident, score, rank in report.top(top_n)
        ],
        "skipped_bins": {s: int(report.skipped[s].sum()) for s in report.statistics},
    }
