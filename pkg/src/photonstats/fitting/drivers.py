"""Fit drivers for saturation scans, g2 histograms, decay curves and spectra."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import nnls
from scipy.signal import find_peaks, peak_widths, savgol_filter

from ..correlate import CorrelationHistogram, DecayHistogram, overlap_weights
from ..models import (DetectionParams, DoubleDefectParams, G2Params, LifetimeParams,
                      SaturationParams, g2_double_defect, lifetime_model)
from ..spectra import LorentzianLine, Spectrum, lorentzian
from .lsq import FitInputError, FitResult, fit_least_squares

__all__ = [
    "bin_average", "poisson_errors",
    "fit_saturation",
    "G2Fit", "fit_g2", "g2_initial_guess",
    "fit_lifetime", "LifetimeComparison", "compare_models",
    "SpectrumFit", "fit_spectrum", "spectrum_initial_lines", "z_from_spectrum",
    "AIC_THRESHOLD",
]

#: AIC difference above which the two-exponential decay is preferred.
AIC_THRESHOLD = 10.0

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)


def poisson_errors(counts) -> np.ndarray:
    """``sqrt(counts)``, with empty bins given the error of a single count."""
    c = np.asarray(counts, dtype=float)
    return np.sqrt(np.maximum(c, 1.0))


def _reweighted(model, x, y, exposure, fit: FitResult, bounds, fixed=(), passes: int = 6) -> FitResult:
    """Refit with errors from the model rather than the data until the weights settle.

    ``y * exposure`` are Poisson counts.  Weights taken from the observed
    counts pull fits low where counts are small; holding the weights at
    the previous model and iterating converges to the Poisson
    maximum-likelihood solution.
    """
    for _ in range(passes):
        mu = np.asarray(model(x, **fit.parameters), dtype=float) * exposure
        err = np.sqrt(np.maximum(mu, 0.1)) / exposure
        new = fit_least_squares(model, (x, y, err), fit.parameters, bounds, fixed=fixed)
        shift = max(abs(new[k] - fit[k]) / max(new.standard_errors[k], 1e-300) for k in new.free)
        fit = new
        if shift < 1e-3:
            break
    return fit


def bin_average(fn, edges, nodes: int = 6) -> np.ndarray:
    """Mean of ``fn`` over each bin ``[edges[k], edges[k+1])`` by Gauss-Legendre quadrature.

    Bins that straddle zero are integrated in two halves so that the kink
    of functions of ``|x|`` does not spoil the rule.
    """
    e = np.asarray(edges, dtype=float)
    return _bin_average_pairs(fn, np.column_stack([e[:-1], e[1:]]), nodes)


# --------------------------------------------------------------------------
# saturation

def fit_saturation(power, rate, integration_time: float = 1.0) -> tuple[SaturationParams, FitResult]:
    """Fit count rate vs power with a saturating emitter plus linear background.

    Rates are weighted by Poisson errors of the counts collected in
    ``integration_time`` seconds per point, taken from the model at the
    optimum (see :func:`_reweighted`).
    """
    P = np.asarray(power, dtype=float)
    R = np.asarray(rate, dtype=float)
    if P.shape != R.shape or P.ndim != 1:
        raise FitInputError("power and rate must be 1-d arrays of equal length")
    if np.unique(P).size < 4:
        raise FitInputError("a saturation fit needs at least four distinct powers")
    if np.any(P < 0) or not np.all(np.isfinite(R)):
        raise FitInputError("powers must be >= 0 and rates finite")
    err = poisson_errors(R * integration_time) / integration_time

    # profile the linear amplitudes over a log grid of saturation powers
    best = None
    pos = P[P > 0]
    for ps in np.geomspace(pos.min() / 10, pos.max() * 10, 80):
        basis = np.column_stack([P / (ps + P), P]) / err[:, None]
        coef, rnorm = nnls(basis, R / err)
        if coef[0] > 0 and (best is None or rnorm < best[0]):
            best = (rnorm, ps, coef)
    if best is None:
        raise FitInputError("no saturating component found in the data")
    _, ps0, (is0, cb0) = best

    def model(x, i_sat, p_sat, c_back):
        return i_sat * x / (p_sat + x) + c_back * x

    bounds = dict(i_sat=(0, None), p_sat=(0, None), c_back=(0, None))
    fit = fit_least_squares(model, (P, R, err), dict(i_sat=is0, p_sat=ps0, c_back=cb0), bounds)
    fit = _reweighted(model, P, R, integration_time, fit, bounds)
    p = fit.parameters
    return SaturationParams(p["i_sat"], p["p_sat"], p["c_back"]), fit


# --------------------------------------------------------------------------
# g2

@dataclass
class G2Fit:
    """Double-emitter fit of a g2 histogram with the single-emitter comparison.

    ``zero_delay_residual`` is the mean normalized residual ``(data - model)
    / err`` of the single-emitter fit over bins within ``zero_window`` ns of
    zero delay; a large positive value means that model sits below the data
    at zero delay.
    """
    params: DoubleDefectParams
    double: FitResult
    single: FitResult
    zero_delay_residual: float
    zero_window: float
    fit_mask: np.ndarray = field(repr=False, default=None)

    @property
    def chi2_ratio(self) -> float:
        """Reduced chi2 of the single-emitter model over that of the double model."""
        return self.single.redchi / self.double.redchi


def g2_initial_guess(tau_ns: np.ndarray, g2: np.ndarray) -> dict[str, float]:
    """Rough ``tau1, tau2, a`` from the shape of a measured g2."""
    t = np.abs(np.asarray(tau_ns, dtype=float))
    g = np.asarray(g2, dtype=float)
    order = np.argsort(t)
    t, g = t[order], g[order]
    k = max(3, t.size // 200) | 1
    gs = np.convolve(g, np.ones(k) / k, mode="same")
    ipk = int(np.argmax(gs[: max(t.size - k, 1)]))
    a0 = max(gs[ipk] - 1.0, 0.05)
    g0 = gs[0]
    half = g0 + 0.5 * (min(gs[ipk], 1.0 + a0) - g0)
    rise = np.nonzero(gs[: ipk + 1] >= half)[0]
    tau1 = t[rise[0]] / np.log(2) if rise.size and t[rise[0]] > 0 else max(t[1], 1e-3)
    tail = np.nonzero((np.arange(t.size) > ipk) & (gs - 1.0 < a0 / np.e))[0]
    tau2 = t[tail[0]] if tail.size else 10 * tau1
    tau2 = max(tau2, 3 * tau1)
    return dict(tau1=float(max(tau1, 1e-3)), tau2=float(tau2), a=float(a0))


def fit_g2(hist: CorrelationHistogram, p: float = 1.0, z: float = 0.0,
           sigma: Optional[float] = None, *, init: Optional[dict] = None,
           tau_max: Optional[float] = None, fit_z: bool = False,
           zero_window: Optional[float] = None) -> G2Fit:
    """Fit ``tau1, tau2, a`` of the double-emitter g2 with ``p``, ``z`` and ``sigma`` pinned.

    ``sigma`` (ns) is the width of the coincidence timing response and must
    be given; it comes from an independent IRF measurement.  The model is
    averaged over each histogram bin and weighted by model variances.
    ``tau_max`` (ns) restricts the fit to ``|tau| <= tau_max``.  With
    ``fit_z`` the mixing fraction is a free
    parameter in ``[0, 0.5]`` (the model is symmetric in ``z <-> 1 - z``).
    The same data are also fitted with ``z = 0`` for comparison.
    """
    if sigma is None:
        raise ValueError("fit_g2 needs the measured IRF width sigma (ns)")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    DetectionParams(p, sigma)  # validates p
    if not 0 <= z <= 1:
        raise ValueError("z must lie in [0, 1]")
    if not hist.valid:
        raise FitInputError("histogram has no valid normalization")
    edges = hist.bin_edges / 1000.0
    centers = 0.5 * (edges[1:] + edges[:-1])
    mask = np.isfinite(hist.g2)
    if tau_max is not None:
        mask &= (np.abs(edges[:-1]) <= tau_max) & (np.abs(edges[1:]) <= tau_max)
    sel = np.nonzero(mask)[0]
    edge_pairs = np.column_stack([edges[:-1][sel], edges[1:][sel]])
    y, err = hist.g2[sel], hist.g2_err[sel]
    # expected uncorrelated counts per bin: g2 * exposure is a Poisson count
    exposure = hist.norm_constant * overlap_weights(hist.bin_edges, hist.duration)[sel]

    def model(x, tau1, tau2, a, z):
        params = DoubleDefectParams(z, G2Params(tau1, tau2, a), DetectionParams(p, sigma))
        return _bin_average_pairs(lambda t: g2_double_defect(t, params), x)

    start = init or g2_initial_guess(centers[sel], y)
    bounds = dict(tau1=(1e-4, 1e5), tau2=(1e-3, 1e9), a=(0.0, 1e3), z=(0.0, 0.5))

    def run(fixed_z, zval):
        best = None
        for f2 in (1.0, 0.3, 3.0):
            s = dict(tau1=start["tau1"], tau2=max(start["tau2"] * f2, 1.5 * start["tau1"]),
                     a=start["a"], z=zval)
            s = {k: float(np.clip(v, *bounds[k])) for k, v in s.items()}
            fixed = ("z",) if fixed_z else ()
            r = fit_least_squares(model, (edge_pairs, y, err), s, bounds, fixed=fixed)
            if best is None or r.chi2 < best.chi2:
                best = r
        return _reweighted(model, edge_pairs, y, exposure, best, bounds, fixed)

    z_fold = min(z, 1.0 - z)
    double = run(not fit_z, z_fold if not fit_z else max(z_fold, 0.1))
    single = run(True, 0.0)

    zw = zero_window if zero_window is not None else max(2.0 * sigma, 0.5)
    central = np.abs(centers[sel]) <= zw
    resid = single.residuals
    # residuals are (data - model)/err
    zero_res = float(np.mean(resid[central])) if central.any() else float("nan")

    dp = double.parameters
    z_out = z if not fit_z else dp["z"]
    params = DoubleDefectParams(z_out, G2Params(dp["tau1"], dp["tau2"], dp["a"]),
                                DetectionParams(p, sigma))
    return G2Fit(params, double, single, zero_res, zw, mask)


def _bin_average_pairs(fn, pairs: np.ndarray, nodes: int = 6) -> np.ndarray:
    """``bin_average`` for an explicit (n, 2) array of bin bounds."""
    xg, wg = (_GL_NODES, _GL_WEIGHTS) if nodes == 6 else np.polynomial.legendre.leggauss(nodes)
    lo, hi = pairs[:, 0], pairs[:, 1]
    split = (lo < 0) & (hi > 0)
    segs_lo = np.concatenate([lo, np.zeros(split.sum())])
    segs_hi = np.concatenate([np.where(split, 0.0, hi), hi[split]])
    owner = np.concatenate([np.arange(lo.size), np.nonzero(split)[0]])
    mid, half = 0.5 * (segs_lo + segs_hi), 0.5 * (segs_hi - segs_lo)
    vals = fn((mid[:, None] + half[:, None] * xg[None, :]).ravel())
    integral = (vals.reshape(mid.size, -1) * wg).sum(axis=1) * half
    return np.bincount(owner, weights=integral, minlength=lo.size) / (hi - lo)


# --------------------------------------------------------------------------
# lifetime

def _lifetime_model_fn(n, sigma, mode):
    def model(x, y0, t0, A1, t1, A2=None, t2=None):
        comps = [(A1, t1)] if n == 1 else [(A1, t1), (A2, t2)]
        total = np.full(x.shape, y0)
        lp = LifetimeParams(0.0, t0, sigma, [(max(A, 1e-300), ti) for A, ti in comps])
        return total + lifetime_model(x, lp, mode)
    return model


def _lifetime_start(x, y):
    ipk = int(np.argmax(y))
    peak = y[ipk]
    pre = y[: max(ipk - 5, 1)]
    y0 = float(np.median(pre)) if pre.size else 0.0
    rise = np.nonzero(y[: ipk + 1] >= y0 + 0.5 * (peak - y0))[0]
    t0 = float(x[rise[0]]) if rise.size else float(x[ipk])
    tail = (x > x[ipk]) & (y - y0 > 0.05 * (peak - y0)) & (y > 0)
    if tail.sum() >= 3:
        slope = np.polyfit(x[tail], np.log(np.maximum(y[tail] - y0, 1.0)), 1)[0]
        tau = -1.0 / slope if slope < 0 else (x[-1] - x[0]) / 5
    else:
        tau = (x[-1] - x[0]) / 10
    return max(y0, 0.0), t0, max(peak - y0, 1.0) / 2.0, float(tau)


def fit_lifetime(hist: DecayHistogram, n: int = 1, sigma: Optional[float] = None,
                 mode: str = "exact", t_range: Optional[tuple[float, float]] = None
                 ) -> tuple[LifetimeParams, FitResult]:
    """Fit a one- or two-exponential decay with the IRF width ``sigma`` (ns) pinned.

    Counts are Poisson weighted with model variances.  A two-component fit whose time constants
    collapse (less than 5 % apart) or whose smaller amplitude vanishes is
    reported as degenerate and replaced by the one-component fit; the
    returned ``FitResult.message`` then starts with ``"degenerate"``.
    """
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    if sigma is None:
        raise ValueError("fit_lifetime needs the measured IRF width sigma (ns)")
    counts = np.asarray(hist.counts, dtype=float)
    if counts.sum() <= 0:
        raise FitInputError("histogram contains no counts")
    x = hist.centers_ns
    sel = np.ones(x.size, dtype=bool) if t_range is None else (x >= t_range[0]) & (x <= t_range[1])
    x, y = x[sel], counts[sel]
    err = poisson_errors(y)
    y0, t0, A, tau = _lifetime_start(x, y)
    span = x[-1] - x[0]
    bounds = dict(y0=(0.0, None), t0=(x[0] - span, x[-1]), A1=(0.0, None), t1=(1e-3, 10 * span),
                  A2=(0.0, None), t2=(1e-3, 10 * span))
    model = _lifetime_model_fn(n, sigma, mode)
    if n == 1:
        fit = fit_least_squares(model, (x, y, err), dict(y0=y0, t0=t0, A1=A, t1=tau), bounds)
        fit = _reweighted(model, x, y, 1.0, fit, bounds)
    else:
        fit = None
        for fa, fb, share in ((0.3, 1.2, 0.5), (0.15, 1.0, 0.3), (0.5, 2.0, 0.7)):
            s = dict(y0=y0, t0=t0, A1=A * share, t1=tau * fa, A2=A * (1 - share), t2=tau * fb)
            r = fit_least_squares(model, (x, y, err), s, bounds)
            if fit is None or r.chi2 < fit.chi2:
                fit = r
        fit = _reweighted(model, x, y, 1.0, fit, bounds)
        p = fit.parameters
        t_lo, t_hi = sorted((p["t1"], p["t2"]))
        amps = (p["A1"], p["A2"])
        if abs(t_hi - t_lo) < 0.05 * t_hi or min(amps) < 1e-6 * max(amps):
            lp, single = fit_lifetime(hist, 1, sigma, mode, t_range)
            single.message = f"degenerate two-component fit; {single.message}"
            return lp, single
    p = fit.parameters
    comps = [(p["A1"], p["t1"])] + ([(p["A2"], p["t2"])] if n == 2 else [])
    comps = [(max(Ai, 1e-300), ti) for Ai, ti in comps]
    return LifetimeParams(p["y0"], p["t0"], sigma, comps), fit


@dataclass
class LifetimeComparison:
    mono: tuple[LifetimeParams, FitResult]
    bi: tuple[LifetimeParams, FitResult]
    delta_chi2: float
    delta_aic: float
    preferred: int

    @property
    def chi2_ratio(self) -> float:
        """Reduced chi2 of the one-component fit over that of the two-component fit."""
        return self.mono[1].redchi / self.bi[1].redchi


def compare_models(hist: DecayHistogram, sigma: Optional[float] = None, mode: str = "exact",
                   t_range: Optional[tuple[float, float]] = None) -> LifetimeComparison:
    """Fit one and two exponentials and pick the model by AIC (threshold 10)."""
    mono = fit_lifetime(hist, 1, sigma, mode, t_range)
    bi = fit_lifetime(hist, 2, sigma, mode, t_range)
    d_chi2 = mono[1].chi2 - bi[1].chi2
    d_aic = mono[1].aic - bi[1].aic
    degenerate = bi[0].n == 1
    preferred = 2 if (not degenerate and d_aic > AIC_THRESHOLD) else 1
    return LifetimeComparison(mono, bi, d_chi2, d_aic, preferred)


# --------------------------------------------------------------------------
# spectra

@dataclass
class SpectrumFit:
    lines: list[LorentzianLine]
    baseline: Optional[tuple[float, float]]
    fit: FitResult

    def center_errors(self) -> list[float]:
        return [self.fit.standard_errors[f"c{i}"] for i in range(len(self.lines))]


def _peak_seeds(lam, y):
    """Smoothed local maxima as (center, fwhm, area) rows, most prominent first."""
    step = float(np.median(np.diff(lam)))
    ys = savgol_filter(y, 7, 2) if y.size >= 7 else y.astype(float)
    base = np.percentile(ys, 5)
    span = ys.max() - base
    noise = np.sqrt(max(np.median(np.abs(y)), 1.0))
    peaks, props = find_peaks(ys, prominence=max(0.02 * span, 5 * noise))
    if peaks.size == 0:
        peaks = np.array([int(np.argmax(ys))])
        prom = np.array([span])
    else:
        prom = props["prominences"]
    peaks = peaks[np.argsort(prom)[::-1]]
    widths = np.maximum(peak_widths(ys, peaks, rel_height=0.5)[0] * step, 2 * step)
    heights = np.maximum(ys[peaks] - base, 1.0)
    return [[lam[pk], w, h * np.pi * w / 2.0] for pk, w, h in zip(peaks, widths, heights)]


def _split(seed):
    c, w, A = seed
    d = 0.2 * w
    return [[c - d, 0.6 * w, A / 2], [c + d, 0.6 * w, A / 2]]


def _grow(lam, y, err, seeds, n_lines, baseline):
    """Add seeds at the largest smoothed residual until there are ``n_lines``."""
    while len(seeds) < n_lines:
        lines = [LorentzianLine(c, w, A) for c, w, A in seeds]
        fit = _fit_lines(lam, y, err, lines, baseline)
        resid = savgol_filter(fit.residuals, 7, 2) if y.size >= 7 else fit.residuals
        k = int(np.argmax(resid))
        p = fit.parameters
        cur = [[p[f"c{i}"], p[f"w{i}"], p[f"A{i}"]] for i in range(len(seeds))]
        near = [i for i, s in enumerate(cur) if abs(s[0] - lam[k]) < 0.5 * s[1]]
        if near:
            i = near[0]
            cur[i: i + 1] = _split(cur[i])
        else:
            ref = min(cur, key=lambda s: abs(s[0] - lam[k]))
            w = ref[1]
            h = max(resid[k] * err[k], 1.0)
            cur.append([lam[k], w, h * np.pi * w / 2.0])
        seeds = cur
    return seeds


def spectrum_initial_lines(spec: Spectrum, n_lines: int, baseline: bool = False) -> list[LorentzianLine]:
    """Starting lines from smoothed local maxima ranked by prominence.

    Two seed sets are tried: the most prominent maxima as they are, and the
    same list with the strongest peak replaced by a doublet split by 0.4 of
    its FWHM (an unresolved pair).  Missing seeds are added one at a time at
    the largest positive residual of a provisional fit; a residual maximum
    inside an existing line splits that line instead.  The set whose full
    fit has the lower chi2 is returned, as fitted.
    """
    lam, y = spec.wavelengths, spec.counts
    err = poisson_errors(y)
    found = _peak_seeds(lam, y)
    candidates = [found[:n_lines]]
    if n_lines >= 2:
        candidates.append(_split(found[0]) + found[1:n_lines - 1])
    best = None
    for seeds in candidates:
        seeds = _grow(lam, y, err, [list(s) for s in seeds], n_lines, baseline)
        lines = [LorentzianLine(float(c), float(min(max(w, 1e-9), lam[-1] - lam[0])), float(max(A, 1e-9)))
                 for c, w, A in seeds]
        fit = _fit_lines(lam, y, err, lines, baseline)
        if best is None or fit.chi2 < best[0].chi2:
            p = fit.parameters
            found = [LorentzianLine(p[f"c{i}"], p[f"w{i}"], max(p[f"A{i}"], 1e-9)) for i in range(n_lines)]
            best = (fit, found)
    return sorted(best[1], key=lambda ln: ln.center)


def _fit_lines(lam, y, err, lines, baseline):
    n_lines = len(lines)
    step = float(np.median(np.diff(lam)))
    width_span = lam[-1] - lam[0]
    x0 = lam[0]

    def model(x, **p):
        out = np.zeros_like(x)
        for i in range(n_lines):
            out += lorentzian(x, p[f"c{i}"], p[f"w{i}"], p[f"A{i}"])
        if baseline:
            out += p["b0"] + p["b1"] * (x - x0)
        return out

    start, bounds = {}, {}
    for i, ln in enumerate(lines):
        start[f"c{i}"], bounds[f"c{i}"] = float(np.clip(ln.center, lam[0], lam[-1])), (lam[0], lam[-1])
        start[f"w{i}"], bounds[f"w{i}"] = min(max(ln.fwhm, step), width_span), (0.5 * step, width_span)
        start[f"A{i}"], bounds[f"A{i}"] = ln.area, (0.0, None)
    if baseline:
        start["b0"] = float(max(np.percentile(y, 5), 0.0))
        start["b1"] = 0.0
    fit = fit_least_squares(model, (lam, y, err), start, bounds)
    return _reweighted(model, lam, y, 1.0, fit, bounds)


def fit_spectrum(spec: Spectrum, n_lines: int = 4,
                 init: Union[str, Sequence[LorentzianLine]] = "auto",
                 baseline: bool = False) -> SpectrumFit:
    """Sum-of-Lorentzians fit, optionally on a linear baseline.

    Returns lines sorted by center wavelength (line 1 first, highest energy).
    The baseline is ``offset + slope * (lambda - lambda_min)``.  Lines that
    collapse onto each other, or whose area is below three standard errors,
    are flagged in ``fit.message`` and clear ``fit.converged``.
    """
    if n_lines < 1:
        raise ValueError("n_lines must be >= 1")
    lam, y = spec.wavelengths, spec.counts
    if not np.all(np.isfinite(y)):
        raise FitInputError("spectrum contains NaN counts")
    if isinstance(init, str):
        if init != "auto":
            raise ValueError(f"unknown init {init!r}")
        lines = spectrum_initial_lines(spec, n_lines, baseline)
    else:
        lines = list(init)
    if len(lines) != n_lines:
        raise ValueError("initial line list does not match n_lines")
    if any(not lam[0] <= ln.center <= lam[-1] for ln in lines):
        raise ValueError("initial line centers must lie within the wavelength grid")
    fit = _fit_lines(lam, y, poisson_errors(y), lines, baseline)
    p = fit.parameters
    found = sorted(((p[f"c{i}"], p[f"w{i}"], p[f"A{i}"], i) for i in range(n_lines)))
    # keep parameter names aligned with the sorted line order
    _relabel(fit, [f[3] for f in found], n_lines)
    out = [LorentzianLine(c, w, max(A, 1e-300)) for c, w, A, _ in found]
    notes = []
    for a, b in zip(out, out[1:]):
        if b.center - a.center < 0.1 * min(a.fwhm, b.fwhm):
            notes.append(f"lines at {a.center:.2f} and {b.center:.2f} nm are degenerate")
    for i, ln in enumerate(out):
        # a line fitted to noise has an area consistent with zero
        if ln.area < 3.0 * fit.standard_errors[f"A{i}"]:
            notes.append(f"line at {ln.center:.2f} nm is not significant (area below 3 standard errors)")
    if notes:
        fit.converged = False
        fit.message = "; ".join([fit.message] + notes)
    bl = (p["b0"], p["b1"]) if baseline else None
    return SpectrumFit(out, bl, fit)


def _relabel(fit: FitResult, order: list[int], n_lines: int) -> None:
    """Rename per-line parameters so that index ``k`` is the k-th line by wavelength."""
    if order == list(range(n_lines)):
        return
    rename = {}
    for new, old in enumerate(order):
        for key in ("c", "w", "A"):
            rename[f"{key}{old}"] = f"{key}{new}"
    back = {v: k for k, v in rename.items()}
    old_free = list(fit.free)
    perm = [old_free.index(back.get(n, n)) for n in old_free]
    fit.parameters = {k: fit.parameters[back.get(k, k)] for k in fit.parameters}
    fit.standard_errors = {k: fit.standard_errors[back.get(k, k)] for k in fit.standard_errors}
    fit.covariance = fit.covariance[np.ix_(perm, perm)]


def z_from_spectrum(lines: Sequence[LorentzianLine], zpl_indices: tuple[int, int] = (0, 1)) -> float:
    """Intensity share of the first ZPL line: ``area_i / (area_i + area_j)``."""
    i, j = zpl_indices
    ai, aj = lines[i].area, lines[j].area
    if ai + aj <= 0:
        raise ValueError("zero total area")
    return ai / (ai + aj)

