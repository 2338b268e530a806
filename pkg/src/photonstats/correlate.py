"""Coincidence counting and TCSPC histogramming on picosecond timestamp streams.

The pair counter never forms the O(N^2) set of pairs.  For every start
event it keeps one pointer per bin edge into the stop stream; because start
times only increase, each pointer only moves forward and the count in a
bin is the difference of two neighbouring pointers.  Narrow bins near zero
delay, where few stop events fall, are instead filled by walking the stop
events between two pointers, which is cheaper than maintaining an edge
pointer per bin.  The split between the two regimes is chosen per call
from the stop-stream rate.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .simulate import TimestampStream

__all__ = [
    "CorrelationHistogram", "DecayHistogram",
    "linear_bins", "hybrid_bins", "correlate", "count_pairs",
    "tcspc_histogram", "windowed_rates", "overlap_weights",
]


@dataclass
class CorrelationHistogram:
    """Coincidence counts of stop-minus-start delays and their normalized g2.

    ``norm_constant`` is the factor ``c`` with ``g2 = counts / (c * weights)``
    where ``weights`` are the overlap-corrected bin widths (see
    :func:`overlap_weights`).
    """
    bin_edges: np.ndarray
    counts: np.ndarray
    g2: np.ndarray
    g2_err: np.ndarray
    normalization: str
    norm_constant: float
    duration: int = 0
    n_start: int = 0
    n_stop: int = 0

    @property
    def valid(self) -> bool:
        return bool(np.all(np.isfinite(self.g2)))

    @property
    def centers(self) -> np.ndarray:
        """Bin centers in ps."""
        e = self.bin_edges.astype(float)
        return 0.5 * (e[1:] + e[:-1])

    @property
    def centers_ns(self) -> np.ndarray:
        return self.centers / 1000.0

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def renormalized(self, normalization: str, plateau_from: Optional[float] = None):
        """Same counts under another normalization mode."""
        return _normalize(self.bin_edges, self.counts, self.duration, self.n_start,
                          self.n_stop, normalization, plateau_from)


@dataclass
class DecayHistogram:
    """Arrival-time histogram relative to the excitation sync (ps)."""
    bin_edges: np.ndarray
    counts: np.ndarray
    sync_period: int
    total_sweeps: int

    @property
    def centers_ns(self) -> np.ndarray:
        e = self.bin_edges.astype(float)
        return 0.5 * (e[1:] + e[:-1]) / 1000.0


# --------------------------------------------------------------------------
# bin layouts

def linear_bins(tau_max: int, width: int) -> np.ndarray:
    """Symmetric integer edges (ps) with a bin centered on zero delay.

    ``width`` should be even so that the edges stay integral.
    """
    width = int(width)
    if width <= 0 or tau_max <= 0:
        raise ValueError("tau_max and width must be positive")
    half = width // 2
    n = int(np.ceil((tau_max - half) / width))
    pos = half + width * np.arange(n + 1, dtype=np.int64)
    return np.concatenate([-pos[::-1], pos])


def hybrid_bins(linear_width: int = 256, linear_max: int = 100_000,
                log_max: int = 10_000_000_000, per_decade: int = 12) -> np.ndarray:
    """Linear bins around zero delay continued by log-spaced bins out to ``log_max`` (ps)."""
    lin = linear_bins(linear_max, linear_width)
    start = int(lin[-1])
    if log_max <= start:
        return lin
    n = int(np.ceil(per_decade * np.log10(log_max / start)))
    log_edges = np.rint(start * np.logspace(0, np.log10(log_max / start), n + 1)).astype(np.int64)
    log_edges = np.unique(log_edges[log_edges > start])
    pos = np.concatenate([lin[lin > 0], log_edges])
    return np.concatenate([-pos[::-1], pos])


def overlap_weights(edges: np.ndarray, duration: int) -> np.ndarray:
    """``integral over each bin of (T - |tau|)``: expected-pair weight for stationary streams."""
    T = float(duration)
    tau = np.clip(np.asarray(edges, dtype=float), -T, T)
    F = T * tau - np.sign(tau) * tau * tau / 2.0
    return np.diff(F)


# --------------------------------------------------------------------------
# counting kernels

@numba.njit(cache=True, nogil=True)
def _find_bin(edges, lo, hi, d):
    # largest k in [lo, hi) with edges[k] <= d
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if edges[mid] <= d:
            lo = mid
        else:
            hi = mid
    return lo


@numba.njit(cache=True, nogil=True)
def _count_chunk(ta, tb, edges, eff, i0, i1, start, stop, counts):
    """Accumulate pairs for start events ``ta[start:stop]`` into ``counts``.

    ``eff`` are the edges as left-closed integer thresholds (see
    :func:`count_pairs`).  Edges ``0..i0`` and ``i1..K`` carry stop-stream
    pointers; bins ``i0..i1-1`` are filled by walking events.
    """
    K = edges.size - 1
    nb = tb.size
    n_ptr = (i0 + 1) + (K - i1 + 1)
    eidx = np.empty(n_ptr, dtype=np.int64)
    for k in range(i0 + 1):
        eidx[k] = k
    for k in range(i1, K + 1):
        eidx[i0 + 1 + k - i1] = k
    ptr = np.empty(n_ptr, dtype=np.int64)
    if start >= stop:
        return
    t0 = ta[start]
    for m in range(n_ptr):
        ptr[m] = np.searchsorted(tb, t0 + eff[eidx[m]], side="left")
    uniform = False
    w = np.int64(0)
    if i1 > i0:
        w = edges[i0 + 1] - edges[i0]
        uniform = True
        for k in range(i0, i1):
            if edges[k + 1] - edges[k] != w:
                uniform = False
                break
    for i in range(start, stop):
        t = ta[i]
        for m in range(n_ptr):
            thr = t + eff[eidx[m]]
            j = ptr[m]
            while j < nb and tb[j] < thr:
                j += 1
            ptr[m] = j
        # pointer-delimited bins left of the walked block
        for m in range(i0):
            counts[m] += ptr[m + 1] - ptr[m]
        # walked block between edges i0 and i1
        if i1 > i0:
            j = ptr[i0]
            jend = ptr[i0 + 1]
            base = edges[i0]
            while j < jend:
                d = tb[j] - t
                if uniform:
                    off = d - base
                    k = i0 + off // w
                    # a negative delay on an edge belongs to the bin below it
                    if d < 0 and off % w == 0 and k > i0:
                        k -= 1
                else:
                    k = _find_bin(eff, i0, i1, d)
                counts[k] += 1
                j += 1
        # pointer-delimited bins right of the block
        for m in range(i0 + 1, n_ptr - 1):
            k = eidx[m]
            counts[k] += ptr[m + 1] - ptr[m]


def _walk_block(edges: np.ndarray, stop_rate: float) -> tuple[int, int]:
    """Contiguous bin range where walking events beats per-edge pointers.

    Walking bin ``k`` costs ``rate * width_k`` per start event, a pointer
    costs about one; the best block is a maximum-sum subarray of
    ``1 - rate * width``.
    """
    gain = 1.0 - stop_rate * np.diff(edges).astype(float)
    best, best_lo, best_hi = 0.0, 0, 0
    run, run_lo = 0.0, 0
    for k, g in enumerate(gain):
        if run <= 0:
            run, run_lo = 0.0, k
        run += g
        if run > best:
            best, best_lo, best_hi = run, run_lo, k + 1
    return best_lo, best_hi


def count_pairs(ta: np.ndarray, tb: np.ndarray, edges: np.ndarray,
                n_chunks: int = 1, n_workers: Optional[int] = None,
                block: Optional[tuple[int, int]] = None) -> np.ndarray:
    """Integer counts of pairs per delay bin, ``delay = tb - ta``.

    Bins are closed on the side nearer zero delay: ``[lo, hi)`` when
    ``lo >= 0``, ``(lo, hi]`` when ``hi <= 0`` and ``(lo, hi)`` for a bin
    around zero (a delay of exactly 0 on an edge goes to the bin above).
    Swapping the channels and mirroring the edges therefore mirrors the
    counts exactly.  ``ta`` and ``tb`` must be sorted ascending.  The start
    events are cut into ``n_chunks`` pieces counted independently (in
    threads when ``n_workers > 1``) and summed, so the result does not
    depend on either setting.
    """
    ta = np.ascontiguousarray(ta, dtype=np.int64)
    tb = np.ascontiguousarray(tb, dtype=np.int64)
    edges = np.ascontiguousarray(edges, dtype=np.int64)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    for name, t in (("start", ta), ("stop", tb)):
        if t.size > 1 and np.any(np.diff(t) < 0):
            raise ValueError(f"{name} stream is not sorted")
    nbins = edges.size - 1
    if ta.size == 0 or tb.size == 0:
        return np.zeros(nbins, dtype=np.int64)
    if block is None:
        span = max(int(tb[-1] - tb[0]), 1)
        block = _walk_block(edges, tb.size / span)
    i0, i1 = block
    # integer times: d <= e is d < e + 1
    eff = np.where(edges < 0, edges + 1, edges)
    n_chunks = max(1, min(int(n_chunks), ta.size))
    bounds = np.linspace(0, ta.size, n_chunks + 1).astype(np.int64)
    partial = np.zeros((n_chunks, nbins), dtype=np.int64)

    def run(c):
        _count_chunk(ta, tb, edges, eff, i0, i1, bounds[c], bounds[c + 1], partial[c])

    if n_workers and n_workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(run, range(n_chunks)))
    else:
        for c in range(n_chunks):
            run(c)
    return partial.sum(axis=0)


# --------------------------------------------------------------------------
# normalized correlation

def _normalize(edges, counts, duration, n_a, n_b, normalization, plateau_from):
    w = overlap_weights(edges, duration)
    counts = np.asarray(counts, dtype=np.int64)
    if normalization == "rate":
        c = n_a * n_b / float(duration) ** 2 if duration > 0 else 0.0
    elif normalization == "plateau":
        edges_f = np.abs(edges.astype(float))
        inner = np.minimum(edges_f[1:], edges_f[:-1])
        start = edges_f.max() / 10.0 if plateau_from is None else float(plateau_from)
        sel = (inner >= start) & (w > 0)
        c = float(np.mean(counts[sel] / w[sel])) if sel.any() else 0.0
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    denom = c * w
    with np.errstate(divide="ignore", invalid="ignore"):
        if c > 0:
            g2 = counts / denom
            err = np.sqrt(np.maximum(counts, 1)) / denom
        else:
            g2 = np.full(counts.shape, np.nan)
            err = np.full(counts.shape, np.nan)
    return CorrelationHistogram(np.asarray(edges, dtype=np.int64), counts, g2, err,
                                normalization, float(c), int(duration), int(n_a), int(n_b))


def correlate(a: TimestampStream, b: TimestampStream, bins: Optional[np.ndarray] = None,
              normalization: str = "rate", plateau_from: Optional[float] = None,
              n_chunks: int = 1, n_workers: Optional[int] = None) -> CorrelationHistogram:
    """Cross-correlate two channels into a normalized g2 histogram.

    Delays are ``t_b - t_a`` in ps; negative delays are pairs where the stop
    channel fired first.  Both streams are cut to their common acquisition
    window ``[0, T]``.  ``rate`` normalization divides by the uncorrelated
    expectation ``N_a N_b / T^2 * integral(T - |tau|)``; ``plateau``
    normalization rescales so that bins beyond ``plateau_from`` (ps,
    default a tenth of the largest delay) average to one.  If either stream
    is empty the histogram carries NaN g2 values and ``valid`` is False.
    """
    edges = hybrid_bins() if bins is None else np.asarray(bins, dtype=np.int64)
    T = min(a.duration, b.duration)
    ta = a.times[a.times <= T] if a.duration > T else a.times
    tb = b.times[b.times <= T] if b.duration > T else b.times
    counts = count_pairs(ta, tb, edges, n_chunks=n_chunks, n_workers=n_workers)
    return _normalize(edges, counts, T, ta.size, tb.size, normalization, plateau_from)


# --------------------------------------------------------------------------
# TCSPC and rate traces

def tcspc_histogram(stream: TimestampStream, sync_period: int, bin_width: int,
                    offset: int = 0) -> DecayHistogram:
    """Histogram of ``(t - offset) mod sync_period``; every event lands in exactly one bin."""
    if not sync_period > bin_width > 0:
        raise ValueError("need sync_period > bin_width > 0")
    edges = np.arange(0, sync_period, bin_width, dtype=np.int64)
    edges = np.append(edges, np.int64(sync_period))
    phase = np.mod(stream.times - np.int64(offset), np.int64(sync_period))
    idx = np.searchsorted(edges, phase, side="right") - 1
    counts = np.bincount(idx, minlength=edges.size - 1).astype(np.int64)
    sweeps = int(np.ceil(stream.duration / sync_period)) if stream.duration else 0
    return DecayHistogram(edges, counts, int(sync_period), sweeps)


def windowed_rates(stream: TimestampStream, window: int) -> np.ndarray:
    """Counts/s in consecutive non-overlapping windows of ``window`` ps."""
    if window <= 0:
        raise ValueError("window must be positive")
    n = stream.duration // window
    if n == 0:
        return np.zeros(0)
    t = stream.times[stream.times < n * window]
    counts = np.bincount(t // window, minlength=n)[:n]
    return counts / (window * 1e-12)
