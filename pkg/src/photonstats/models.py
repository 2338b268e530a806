"""Closed-form photon-statistics models.

Every function here is pure.  Delays and lifetimes are in nanoseconds,
powers in mW, count rates in counts/s.  Functions accept scalars or numpy
arrays for the time argument and broadcast.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erf, erfc, erfcx

__all__ = [
    "G2Params", "DetectionParams", "DoubleDefectParams", "SaturationParams",
    "LifetimeParams", "ThreeLevelRates", "DegenerateRatesWarning",
    "HC_MEV_NM",
    "g2_three_level", "g2_background_forward", "g2_background_invert",
    "g2_with_jitter", "g2_double_defect", "mixing_floor",
    "saturation_curve", "signal_fraction_at_power",
    "lifetime_model", "gauss_exp_conv",
    "rates_to_g2_params", "steady_state", "emission_rate",
    "saturation_from_rates",
    "wavelength_to_energy", "line_separations",
]

#: Planck constant times speed of light over e, in meV*nm.
HC_MEV_NM = 1_239_841.98

_SQRT2 = np.sqrt(2.0)


class DegenerateRatesWarning(RuntimeWarning):
    """Two relaxation eigenvalues of a rate set coincide."""


@dataclass(frozen=True)
class G2Params:
    """Three-level correlation shape: antibunching time, bunching time, bunching amplitude."""
    tau1: float
    tau2: float
    a: float = 0.0

    def __post_init__(self):
        if not self.tau1 > 0 or not self.tau2 > 0:
            raise ValueError(f"time constants must be positive, got {self.tau1}, {self.tau2}")
        if not self.a >= 0:
            raise ValueError(f"bunching amplitude must be >= 0, got {self.a}")


@dataclass(frozen=True)
class DetectionParams:
    p: float = 1.0
    sigma_irf: float = 0.0
    dark_rate: float = 0.0

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ValueError(f"signal fraction p must lie in (0, 1], got {self.p}")
        if not self.sigma_irf >= 0:
            raise ValueError(f"sigma_irf must be >= 0, got {self.sigma_irf}")
        if not self.dark_rate >= 0:
            raise ValueError(f"dark_rate must be >= 0, got {self.dark_rate}")


@dataclass(frozen=True)
class DoubleDefectParams:
    """Two independent emitters with a shared correlation shape.

    ``z`` is the intensity fraction of emitter 1; the model is symmetric
    under ``z -> 1 - z``.
    """
    z: float
    shared: G2Params
    detection: DetectionParams = field(default_factory=DetectionParams)

    def __post_init__(self):
        if not 0 <= self.z <= 1:
            raise ValueError(f"z must lie in [0, 1], got {self.z}")


@dataclass(frozen=True)
class SaturationParams:
    i_sat: float
    p_sat: float
    c_back: float = 0.0

    def __post_init__(self):
        if not self.i_sat > 0 or not self.p_sat > 0:
            raise ValueError("i_sat and p_sat must be positive")
        if not self.c_back >= 0:
            raise ValueError("c_back must be >= 0")


@dataclass(frozen=True)
class LifetimeParams:
    """Decay-curve parameters.

    ``components`` holds ``(amplitude, time_constant)`` pairs and is stored
    sorted by time constant.
    """
    y0: float
    t0: float
    sigma: float
    components: tuple[tuple[float, float], ...]

    def __post_init__(self):
        comps = tuple(sorted(((float(A), float(t)) for A, t in self.components),
                             key=lambda c: c[1]))
        if len(comps) not in (1, 2):
            raise ValueError("one or two decay components are supported")
        if any(t <= 0 for _, t in comps):
            raise ValueError("time constants must be positive")
        if any(A <= 0 for A, _ in comps):
            raise ValueError("amplitudes must be positive")
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")
        object.__setattr__(self, "components", comps)

    @property
    def n(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class ThreeLevelRates:
    """Kinetic rates (1/ns) of a ground / excited / shelving-level emitter."""
    k_exc: float
    k_rad: float
    k_isc: float = 0.0
    k_res: float = 0.0

    def __post_init__(self):
        if not self.k_rad > 0:
            raise ValueError("k_rad must be positive")
        if min(self.k_exc, self.k_isc, self.k_res) < 0:
            raise ValueError("rates must be non-negative")

    def scaled(self, factor: float) -> "ThreeLevelRates":
        """All rates multiplied by ``factor`` (a pure time rescaling)."""
        return ThreeLevelRates(self.k_exc * factor, self.k_rad * factor,
                               self.k_isc * factor, self.k_res * factor)

    def with_pump(self, k_exc: float) -> "ThreeLevelRates":
        return ThreeLevelRates(k_exc, self.k_rad, self.k_isc, self.k_res)

    def matrix(self) -> np.ndarray:
        """Generator ``M`` of ``dP/dt = M P`` over (ground, excited, shelf)."""
        return np.array([
            [-self.k_exc, self.k_rad, self.k_res],
            [self.k_exc, -(self.k_rad + self.k_isc), 0.0],
            [0.0, self.k_isc, -self.k_res],
        ])


# --------------------------------------------------------------------------
# correlation functions

def g2_three_level(tau, params: G2Params):
    """Intrinsic three-level g2: ``1 - (1+a) exp(-|tau|/tau1) + a exp(-|tau|/tau2)``."""
    t = np.abs(np.asarray(tau, dtype=float))
    a = params.a
    # expm1 form keeps g2(0) == 0 exactly and is accurate at small delays
    return -(1.0 + a) * np.expm1(-t / params.tau1) + a * np.expm1(-t / params.tau2)


def _check_p(p):
    if not 0 < p <= 1:
        raise ValueError(f"signal fraction p must lie in (0, 1], got {p}")


def g2_background_forward(g_intrinsic, p: float):
    """Map an emitter-only g2 to the value measured with uncorrelated background."""
    _check_p(p)
    g = np.asarray(g_intrinsic, dtype=float)
    return 1.0 + p * p * (g - 1.0)


def g2_background_invert(g_measured, p: float):
    """Background correction: recover the emitter-only g2 from a measured one."""
    _check_p(p)
    g = np.asarray(g_measured, dtype=float)
    return (g - (1.0 - p * p)) / (p * p)


def _half_conv(x, t, sigma):
    """``exp(sigma^2/2t^2 - x/t) * erfc((sigma/t - x/sigma)/sqrt 2)``, overflow-safe.

    This is twice the convolution of a one-sided decay ``H(x) exp(-x/t)``
    with a unit-area Gaussian of width ``sigma``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(x.shape)
    # for u >= 0 the exponent collapses to -x^2/(2 sigma^2) once erfc is scaled
    with np.errstate(over="ignore"):
        u = (sigma / t - x / sigma) / _SQRT2
        pos = u >= 0
        out[pos] = np.exp(-0.5 * (x[pos] / sigma) ** 2) * erfcx(u[pos])
        neg = ~pos
        out[neg] = np.exp(0.5 * (sigma / t) ** 2 - x[neg] / t) * erfc(u[neg])
    return out


def gauss_exp_conv(tau, t: float, sigma: float):
    """Convolution of ``exp(-|tau|/t)`` with a unit-area Gaussian of width ``sigma``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if sigma == 0:
        return np.exp(-np.abs(tau) / t)
    return 0.5 * (_half_conv(tau, t, sigma) + _half_conv(-tau, t, sigma))


def g2_with_jitter(tau, params: G2Params, p: float = 1.0, sigma: float = 0.0):
    """Background-corrected g2 convolved with a Gaussian timing response.

    ``sigma`` is the standard deviation of the coincidence response in ns.
    ``sigma == 0`` returns the unconvolved model unchanged.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return g2_background_forward(g2_three_level(tau, params), p)
    scalar = np.ndim(tau) == 0
    a = params.a
    g_conv = (1.0 - (1.0 + a) * gauss_exp_conv(tau, params.tau1, sigma)
              + a * gauss_exp_conv(tau, params.tau2, sigma))
    out = g2_background_forward(g_conv, p)
    return out[0] if scalar else out


def mixing_floor(z: float) -> float:
    """Constant cross-correlation term ``2 z (1 - z)`` of two independent emitters."""
    return 2.0 * z * (1.0 - z)


def g2_double_defect(tau, params: DoubleDefectParams):
    """g2 of two independent emitters sharing one correlation shape."""
    det = params.detection
    single = g2_with_jitter(tau, params.shared, det.p, det.sigma_irf)
    if params.z in (0.0, 1.0):
        return single
    m = mixing_floor(params.z)
    return (1.0 - m) * single + m


# --------------------------------------------------------------------------
# saturation

def saturation_curve(power, params: SaturationParams):
    """Count rate vs excitation power: saturating emitter plus linear background."""
    P = np.asarray(power, dtype=float)
    if np.any(P < 0):
        raise ValueError("power must be >= 0")
    return params.i_sat * P / (params.p_sat + P) + params.c_back * P


def signal_fraction_at_power(power: float, params: SaturationParams, dark_rate: float = 0.0) -> float:
    """Emitter share ``S / (S + B + D)`` of the detected count rate at ``power``."""
    if not power > 0:
        raise ValueError("power must be positive")
    s = params.i_sat * power / (params.p_sat + power)
    total = s + params.c_back * power + dark_rate
    if total <= 0:
        raise ValueError("total count rate is zero")
    return s / total


# --------------------------------------------------------------------------
# lifetime

def lifetime_model(t, params: LifetimeParams, mode: str = "printed"):
    """TCSPC decay curve with a Gaussian turn-on.

    ``mode="printed"`` evaluates
    ``y0 + (1 - erf(-(t - t0)/sigma)) * sum A_i exp(-(t - t0)/t_i)``.
    ``mode="exact"`` uses the true Gaussian-exponential convolution,
    ``y0 + sum A_i exp(-(t-t0)/t_i) erfc((sigma/t_i - (t-t0)/sigma)/sqrt 2)``.
    Amplitudes are scaled so that both modes share the late-time tail
    ``y0 + 2 sum A_i exp(-(t-t0)/t_i)``.
    """
    if mode not in ("printed", "exact"):
        raise ValueError(f"unknown mode {mode!r}")
    t = np.asarray(t, dtype=float)
    dt = np.atleast_1d(t - params.t0)
    sigma = params.sigma
    total = np.full(dt.shape, float(params.y0))
    for A, ti in params.components:
        if sigma == 0:
            # both modes reduce to 2 H(dt), with erfc(0) = 1 at dt = 0
            step = np.where(dt > 0, 2.0, np.where(dt == 0, 1.0, 0.0))
            with np.errstate(over="ignore", invalid="ignore"):
                total += A * np.where(step > 0, step * np.exp(-dt / ti), 0.0)
        elif mode == "exact":
            total += A * np.exp(-0.5 * (sigma / ti) ** 2) * _half_conv(dt, ti, sigma)
        else:
            x = -dt / sigma
            term = np.empty_like(dt)
            big = x > 0
            # erfc(x) exp(-dt/ti) with erfc(x) = erfcx(x) exp(-x^2) for x > 0
            term[big] = erfcx(x[big]) * np.exp(-x[big] ** 2 - dt[big] / ti)
            term[~big] = (1.0 - erf(x[~big])) * np.exp(-dt[~big] / ti)
            total += A * term
    return total[0] if np.ndim(t) == 0 else total


# --------------------------------------------------------------------------
# kinetics

def steady_state(rates: ThreeLevelRates) -> np.ndarray:
    """Stationary (ground, excited, shelf) populations."""
    k = rates
    if k.k_isc == 0:
        # shelf unreachable: two-level populations whatever k_res is
        return np.array([k.k_rad, k.k_exc, 0.0]) / (k.k_exc + k.k_rad)
    c = _char_c(rates)
    if c <= 0:
        raise ValueError("rate set has no unique steady state")
    return np.array([k.k_res * (k.k_rad + k.k_isc), k.k_exc * k.k_res, k.k_exc * k.k_isc]) / c


def emission_rate(rates: ThreeLevelRates) -> float:
    """Stationary photon emission rate (1/ns), before any detection losses."""
    return rates.k_rad * steady_state(rates)[1]


def saturation_from_rates(rates: ThreeLevelRates, pump_per_mw: float,
                          efficiency: float = 1.0) -> SaturationParams:
    """Saturation parameters implied by a kinetic model with ``k_exc = pump_per_mw * P``.

    Returns rates in counts/s and powers in mW.
    """
    k = rates
    if k.k_isc == 0:
        return SaturationParams(efficiency * k.k_rad * 1e9, k.k_rad / pump_per_mw, 0.0)
    if k.k_res <= 0:
        raise ValueError("k_res must be positive for a finite saturation rate")
    i_sat = efficiency * k.k_rad * k.k_res / (k.k_isc + k.k_res) * 1e9
    p_sat = k.k_res * (k.k_rad + k.k_isc) / ((k.k_isc + k.k_res) * pump_per_mw)
    return SaturationParams(i_sat, p_sat, 0.0)


def _char_c(k: ThreeLevelRates) -> float:
    return k.k_exc * k.k_isc + k.k_exc * k.k_res + k.k_rad * k.k_res + k.k_isc * k.k_res


def rates_to_g2_params(rates: ThreeLevelRates) -> G2Params:
    """Map kinetic rates to the correlation shape of the conditional excited population.

    After a detection the emitter is in its ground state; the excited
    population then relaxes with the two nonzero eigenvalues of the rate
    matrix.  Near-degenerate eigenvalues (relative gap below 1e-9) give
    ``a = 0`` with the merged time constant and emit a
    :class:`DegenerateRatesWarning`.
    """
    k = rates
    if k.k_exc <= 0:
        raise ValueError("k_exc must be positive for any emission")
    if k.k_isc == 0:
        tau = 1.0 / (k.k_exc + k.k_rad)
        return G2Params(tau, tau, 0.0)
    if k.k_res == 0:
        raise ValueError("shelving level without return rate traps the emitter")
    b = k.k_exc + k.k_rad + k.k_isc + k.k_res
    c = _char_c(k)
    disc = b * b - 4.0 * c
    if disc < -1e-18 * b * b:
        raise ValueError("rate matrix has complex eigenvalues; no two-exponential form")
    root = math.sqrt(max(disc, 0.0))
    fast = -(b + root) / 2.0
    slow = c / fast  # product of roots; avoids cancellation in -(b - root)/2
    if root <= 1e-9 * b:
        warnings.warn("near-degenerate relaxation eigenvalues; returning a = 0",
                      DegenerateRatesWarning, stacklevel=2)
        tau = 2.0 / b
        return G2Params(tau, tau, 0.0)
    a = (slow + k.k_res) * fast / (k.k_res * (slow - fast))
    if a < 0:
        # shelf empties faster than the excited state relaxes; not of the a >= 0 form
        raise ValueError(f"rate set gives a negative bunching amplitude ({a:.3g})")
    return G2Params(-1.0 / fast, -1.0 / slow, float(a))


# --------------------------------------------------------------------------
# spectra

def wavelength_to_energy(wavelength):
    """Photon energy in meV for a vacuum wavelength in nm."""
    lam = np.asarray(wavelength, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("wavelength must be positive")
    return HC_MEV_NM / lam


def line_separations(centers: Sequence[float]) -> np.ndarray:
    """Energy of each line below line 1 (meV); line 1 maps to zero."""
    e = wavelength_to_energy(np.asarray(centers, dtype=float))
    return e[0] - e
