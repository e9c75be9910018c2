"""Equal-time correlation matrices and their eigenvalue spectra, per bin.

Correlations are taken across days between normalized returns of stock pairs.
When stock-days are missing, each pair falls back to its own complete-case day
set. The eigensolver is a cyclic Jacobi rotation scheme with a fixed sweep
order: deterministic, self-contained, and fast enough via numba for a few
hundred stocks. Convergence is declared when the off-diagonal Frobenius norm
drops below 1e-10 * M; 50 sweeps is the hard budget.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np
from numba import njit

from .errors import (
    DataError,
    DegenerateStockError,
    EigenConvergenceError,
    IntradayError,
    NumericError,
)
from .observables import KIND_NORMALIZED, ObservablePanel

logger = logging.getLogger(__name__)

MAX_SWEEPS = 50

MODE_FIRST = "first"
MODE_RANDOM = "rand"


@njit(cache=True, nogil=True)
def _jacobi_cyclic(a: np.ndarray, tol: float, max_sweeps: int):
    """Diagonalize symmetric `a` in place; returns (sweeps_used, off_norm, ok)."""
    m = a.shape[0]
    sweeps = 0
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(m - 1):
            for j in range(i + 1, m):
                off += a[i, j] * a[i, j]
        off = np.sqrt(2.0 * off)
        if off <= tol:
            return sweeps, off, True
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for i in range(m):
                    aip = a[i, p]
                    aiq = a[i, q]
                    a[i, p] = c * aip - s * aiq
                    a[i, q] = s * aip + c * aiq
                for i in range(m):
                    api = a[p, i]
                    aqi = a[q, i]
                    a[p, i] = c * api - s * aqi
                    a[q, i] = s * api + c * aqi
                a[p, q] = 0.0
                a[q, p] = 0.0
        sweeps += 1
    off = 0.0
    for i in range(m - 1):
        for j in range(i + 1, m):
            off += a[i, j] * a[i, j]
    off = np.sqrt(2.0 * off)
    return sweeps, off, off <= tol


def eigen_spectrum(matrix: np.ndarray, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, descending.

    Raises NumericError for non-symmetric input and EigenConvergenceError
    (with the final residual) if the sweep budget runs out.
    """
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NumericError(f"matrix must be square, got shape {a.shape}")
    m = a.shape[0]
    scale = float(np.abs(a).max()) if m else 0.0
    if m and float(np.abs(a - a.T).max()) > 1e-12 * max(scale, 1.0):
        raise NumericError("matrix is not symmetric")
    work = np.ascontiguousarray(a).copy()  # rotations run in place
    tol = 1e-10 * max(m, 1)
    sweeps, off, ok = _jacobi_cyclic(work, tol, max_sweeps)
    if not ok:
        raise EigenConvergenceError(
            f"rotation solver missed tolerance {tol:.3e} after {max_sweeps} sweeps", residual=float(off)
        )
    return np.sort(np.diag(work))[::-1].copy()


def mean_offdiag(matrix: np.ndarray) -> float:
    """Average off-diagonal entry; the unit diagonal is excluded."""
    m = matrix.shape[0]
    if m < 2:
        raise NumericError("mean off-diagonal needs at least a 2x2 matrix")
    return float((matrix.sum() - np.trace(matrix)) / (m * (m - 1)))


def correlation_matrix(
    normalized: ObservablePanel,
    point_idx: int,
    subset_indices: np.ndarray | None = None,
) -> np.ndarray:
    """Correlation across days of normalized returns at one bin.

    Missing stock-days reduce each pair to its common included days. Raises
    DataError when a pair has fewer than two common days and
    DegenerateStockError when a member shows zero time dispersion at the bin.
    """
    if normalized.kind != KIND_NORMALIZED:
        raise ValueError(f"expected a normalized panel, got kind={normalized.kind!r}")
    if subset_indices is None:
        subset_indices = np.arange(len(normalized.symbols))
    idx = np.asarray(subset_indices, dtype=np.int64)
    v = normalized.values[idx, :, point_idx]
    finite = np.isfinite(v)
    m = v.shape[0]

    if finite.all():
        d = v.shape[1]
        if d < 2:
            raise DataError("correlations need at least two days")
        vc = v - v.mean(axis=1, keepdims=True)
        norm = np.sqrt((vc * vc).sum(axis=1))
        zero = np.flatnonzero(norm == 0.0)
        if zero.size:
            sym = normalized.symbols[int(idx[zero[0]])]
            raise DegenerateStockError(
                f"stock {sym} has zero time dispersion at point {point_idx + 1}"
            )
        c = (vc @ vc.T) / np.outer(norm, norm)
    else:
        f = finite.astype(np.float64)
        x0 = np.where(finite, v, 0.0)
        n_ab = f @ f.T
        if (n_ab < 2).any():
            a, b = np.argwhere(n_ab < 2)[0]
            raise DataError(
                f"insufficient overlapping days for pair "
                f"({normalized.symbols[int(idx[a])]}, {normalized.symbols[int(idx[b])]}) "
                f"at point {point_idx + 1}"
            )
        s_a = x0 @ f.T  # sum of a over days shared with b
        s_ab = x0 @ x0.T
        q_a = (x0 * x0) @ f.T
        mean_a = s_a / n_ab
        cov = s_ab / n_ab - mean_a * mean_a.T
        var_a = q_a / n_ab - mean_a * mean_a
        bad = np.flatnonzero((np.minimum(var_a, var_a.T) <= 0.0).any(axis=1))
        if bad.size:
            sym = normalized.symbols[int(idx[bad[0]])]
            raise DegenerateStockError(
                f"stock {sym} has zero time dispersion on some shared day set at point {point_idx + 1}"
            )
        c = cov / np.sqrt(var_a * var_a.T)

    c = (c + c.T) * 0.5  # kill last-ulp asymmetry from the matmuls
    np.fill_diagonal(c, 1.0)
    return c


@dataclass(frozen=True)
class StockSubset:
    """A named slice of the universe used for spectrum comparisons."""

    label: str
    mode: str
    indices: np.ndarray  # ascending positions into the universe

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])


def draw_subsets(
    n_universe: int, specs: Sequence[tuple[str, str, int]], seed: int
) -> list[StockSubset]:
    """Build subsets from (label, mode, size) specs.

    'first' takes the first `size` symbols in universe order; 'rand' draws
    uniformly without replacement from its own (seed, position) stream, so a
    subset's membership does not depend on its neighbors in the list.
    """
    out = []
    for i, (label, mode, size) in enumerate(specs):
        size = int(size)
        if size < 1 or size > n_universe:
            raise DataError(f"subset {label!r} wants {size} of {n_universe} stocks")
        if mode == MODE_FIRST:
            idx = np.arange(size, dtype=np.int64)
        elif mode == MODE_RANDOM:
            rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
            idx = np.sort(rng.choice(n_universe, size=size, replace=False).astype(np.int64))
        else:
            raise ValueError(f"unknown subset mode {mode!r} (use first|rand)")
        out.append(StockSubset(label=label, mode=mode, indices=idx))
    return out


@dataclass
class SpectrumResult:
    """Per-bin eigenvalue curves and mean correlations for each subset."""

    subsets: list[StockSubset]
    point_times_ms: np.ndarray
    bin_seconds: int
    open_ms: int
    n_universe: int
    top_count: int
    eigenvalues: dict[str, np.ndarray]  # label -> (P, top_count), NaN gaps
    mean_corr: dict[str, np.ndarray]  # label -> (P,)
    gap_counts: dict[str, int]

    def bin_indices(self) -> np.ndarray:
        step = self.bin_seconds * 1000
        return ((self.point_times_ms - self.open_ms) // step).astype(np.int64)


def spectrum_curves(
    normalized: ObservablePanel,
    subsets: Sequence[StockSubset],
    top_count: int = 5,
    threads: int = 1,
) -> SpectrumResult:
    """Eigenvalue and mean-correlation curves per subset across all bins.

    Per-bin failures (degenerate stock, too few shared days) become gaps and
    are counted, not fatal. Output is independent of `threads`.
    """
    p = normalized.n_points
    eig = {s.label: np.full((p, top_count), np.nan) for s in subsets}
    rho = {s.label: np.full(p, np.nan) for s in subsets}
    gaps = {s.label: 0 for s in subsets}

    def work(job: tuple[int, StockSubset]):
        k, sub = job
        try:
            c = correlation_matrix(normalized, k, sub.indices)
            lam = eigen_spectrum(c)
        except IntradayError as exc:
            return k, sub.label, None, None, str(exc)
        take = min(top_count, lam.shape[0])
        return k, sub.label, lam[:take], mean_offdiag(c) if sub.size > 1 else None, None

    jobs = [(k, sub) for sub in subsets for k in range(p)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    for k, label, lam, rho_k, err in results:
        if err is not None:
            gaps[label] += 1
            logger.warning("spectrum gap at point %d for subset %s: %s", k + 1, label, err)
            continue
        eig[label][k, : lam.shape[0]] = lam
        if rho_k is not None:
            rho[label][k] = rho_k

    return SpectrumResult(
        subsets=list(subsets),
        point_times_ms=normalized.point_times_ms.copy(),
        bin_seconds=normalized.spec.bin_seconds,
        open_ms=normalized.spec.open_ms,
        n_universe=len(normalized.symbols),
        top_count=top_count,
        eigenvalues=eig,
        mean_corr=rho,
        gap_counts=gaps,
    )


def export_spectrum_csv(result: SpectrumResult, out: TextIO) -> int:
    """Rows: bin_index,subset,eig_rank,eigenvalue,eig_over_N,eig_over_N0."""
    out.write("bin_index,subset,eig_rank,eigenvalue,eig_over_N,eig_over_N0\n")
    idx = result.bin_indices()
    n_rows = 0
    for sub in result.subsets:
        lam = result.eigenvalues[sub.label]
        n0 = sub.size
        for k in range(lam.shape[0]):
            for r in range(result.top_count):
                v = lam[k, r]
                if not np.isfinite(v):
                    continue
                out.write(
                    f"{idx[k]},{sub.label},{r + 1},{v:.12g},"
                    f"{v / result.n_universe:.12g},{v / n0:.12g}\n"
                )
                n_rows += 1
    return n_rows


def export_mean_corr_csv(result: SpectrumResult, out: TextIO) -> int:
    """Rows: bin_index,subset,mean_offdiag (gaps keep an empty field)."""
    out.write("bin_index,subset,mean_offdiag\n")
    idx = result.bin_indices()
    n_rows = 0
    for sub in result.subsets:
        rho = result.mean_corr[sub.label]
        for k in range(rho.shape[0]):
            val = f"{rho[k]:.12g}" if np.isfinite(rho[k]) else ""
            out.write(f"{idx[k]},{sub.label},{val}\n")
            n_rows += 1
    return n_rows
