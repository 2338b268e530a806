"""Shared oracles and statistics for the test suite."""
import numpy as np

from photonstats.correlate import correlate
from photonstats.models import G2Params, ThreeLevelRates, emission_rate, rates_to_g2_params
from photonstats.simulate import TimestampStream


def brute_force_counts(ta, tb, edges, chunk=1000):
    """O(N^2) pair counting of every ``tb - ta`` delay.

    Bins are closed towards zero delay: ``[lo, hi)`` for ``d >= 0`` and
    ``(lo, hi]`` for ``d < 0``.
    """
    ta, tb, edges = (np.asarray(v, dtype=np.int64) for v in (ta, tb, edges))
    counts = np.zeros(edges.size - 1, dtype=np.int64)
    for i in range(0, ta.size, chunk):
        d = (tb[None, :] - ta[i:i + chunk, None]).ravel()
        d = d[(d >= edges[0]) & (d <= edges[-1])]
        pos, neg = d[d >= 0], d[d < 0]
        kp = np.searchsorted(edges, pos, side="right") - 1
        kn = np.searchsorted(edges, neg, side="left") - 1
        k = np.concatenate([kp, kn])
        k = k[(k >= 0) & (k < counts.size)]
        counts += np.bincount(k, minlength=counts.size)
    return counts


def fano_factor(rates: ThreeLevelRates, efficiency: float = 1.0) -> float:
    """Long-window count variance over mean, ``1 + 2 R int_0^inf (g2 - 1) dtau``."""
    g = rates_to_g2_params(rates)
    R = efficiency * emission_rate(rates)
    return 1.0 + 2.0 * R * (g.a * g.tau2 - (1.0 + g.a) * g.tau1)


def block_g2(a: TimestampStream, b: TimestampStream, edges, n_blocks: int) -> np.ndarray:
    """g2 of each of ``n_blocks`` consecutive, independent acquisition blocks."""
    L = a.duration // n_blocks
    cuts = np.arange(n_blocks + 1, dtype=np.int64) * L
    ia, ib = np.searchsorted(a.times, cuts), np.searchsorted(b.times, cuts)
    rows = []
    for j in range(n_blocks):
        x = TimestampStream(a.times[ia[j]:ia[j + 1]] - j * L, L - 1)
        y = TimestampStream(b.times[ib[j]:ib[j + 1]] - j * L, L - 1)
        rows.append(correlate(x, y, edges).g2)
    return np.array(rows)


def covariance_chi2(blocks: np.ndarray, model: np.ndarray) -> float:
    """Reduced chi2 of the block-mean g2 against ``model`` using the block covariance.

    Hotelling scaling makes the statistic F-distributed with mean close to
    one when the model is correct, whatever the correlations between bins.
    """
    K, p = blocks.shape
    d = blocks.mean(axis=0) - model
    S = np.cov(blocks, rowvar=False)
    t2 = K * d @ np.linalg.solve(S, d)
    return float(t2 * (K - p) / (p * (K - 1)))


def g2_shape(rates: ThreeLevelRates) -> G2Params:
    return rates_to_g2_params(rates)
