"""Stochastic photon-stream generation.

Emitters are simulated event by event (competing exponential clocks, no
time stepping).  Times are produced in picoseconds as ``int64``.  All
randomness flows from a single integer seed; independent sub-streams are
derived with :class:`numpy.random.SeedSequence` spawn keys so that
reordering calls never changes a result.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np

from .models import ThreeLevelRates, steady_state
from .spectra import PolarizedLine, Spectrum, lorentzian, malus_factor

__all__ = [
    "TimestampStream", "SimulationConfig",
    "simulate_emitter", "simulate_double", "simulate_pulsed", "simulate",
    "add_background", "apply_detection", "split_hbt", "merge_streams",
    "simulate_spectrum", "pulsed_irf_sigma",
]

PS_PER_NS = 1000.0

# spawn keys for derived random streams
_KEY_EMITTER = 1
_KEY_BACKGROUND = 10
_KEY_DETECTION = 11
_KEY_SPLIT = 12


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(key)))


@dataclass
class TimestampStream:
    """Detection times of one channel.

    ``times`` are strictly increasing integers in ``[0, duration]`` (ps).
    ``sources`` optionally tags each event with its origin: 0 for
    background, ``k`` for emitter ``k``.  It is bookkeeping for simulated
    data only and is never written to disk.
    """
    times: np.ndarray
    duration: int
    channel: int = 0
    sources: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.ascontiguousarray(self.times, dtype=np.int64)
        self.duration = int(self.duration)
        if self.times.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        if self.times.size:
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("times must be strictly increasing")
            if self.times[0] < 0 or self.times[-1] > self.duration:
                raise ValueError("times must lie within [0, duration]")
        if self.sources is not None:
            self.sources = np.asarray(self.sources, dtype=np.int8)
            if self.sources.shape != self.times.shape:
                raise ValueError("sources must align with times")

    def __len__(self):
        return self.times.size

    @property
    def rate(self) -> float:
        """Mean count rate in counts/s."""
        return self.times.size / (self.duration * 1e-12) if self.duration else 0.0

    def count_from(self, source: int) -> int:
        if self.sources is None:
            raise ValueError("stream carries no provenance")
        return int(np.count_nonzero(self.sources == source))

    def realized_z(self) -> float:
        """Fraction of emitter photons that came from emitter 1."""
        n1, n2 = self.count_from(1), self.count_from(2)
        return n1 / (n1 + n2) if n1 + n2 else float("nan")

    def realized_p(self) -> float:
        """Fraction of events that came from any emitter."""
        if self.sources is None:
            raise ValueError("stream carries no provenance")
        return float(np.count_nonzero(self.sources > 0)) / len(self) if len(self) else float("nan")

    def _subset(self, mask) -> "TimestampStream":
        src = None if self.sources is None else self.sources[mask]
        return TimestampStream(self.times[mask], self.duration, self.channel, src)


@dataclass
class SimulationConfig:
    """Acquisition settings shared by the stream simulators.

    Times in ps, background in counts/s.  ``mode`` is ``"cw"`` or
    ``"pulsed"``; pulsed mode uses ``rep_period`` and ``pulse_width``.
    ``emitter_efficiency`` scales the collection efficiency of each emitter
    relative to ``detection_efficiency``.
    """
    duration: int
    emitters: tuple[ThreeLevelRates, ...] = ()
    background_rate: float = 0.0
    detection_efficiency: float = 1.0
    jitter_sigma: float = 0.0
    dead_time: int = 0
    seed: int = 0
    mode: str = "cw"
    rep_period: int = 100_000
    pulse_width: int = 200
    emitter_efficiency: tuple[float, ...] = ()

    def __post_init__(self):
        self.emitters = tuple(self.emitters)
        self.emitter_efficiency = tuple(float(e) for e in self.emitter_efficiency)
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        if not 0 < self.detection_efficiency <= 1:
            raise ValueError("detection_efficiency must lie in (0, 1]")
        if len(self.emitters) > 2:
            raise ValueError("at most two emitters are supported")
        if self.emitter_efficiency and len(self.emitter_efficiency) != len(self.emitters):
            raise ValueError("emitter_efficiency needs one entry per emitter")
        if any(not 0 < e * self.detection_efficiency <= 1 for e in self.emitter_efficiency):
            raise ValueError("effective per-emitter efficiency must lie in (0, 1]")
        if self.background_rate < 0 or self.jitter_sigma < 0 or self.dead_time < 0:
            raise ValueError("background_rate, jitter_sigma and dead_time must be >= 0")
        if self.mode not in ("cw", "pulsed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "pulsed" and not self.rep_period > self.pulse_width > 0:
            raise ValueError("pulsed mode needs rep_period > pulse_width > 0")

    def efficiency_of(self, index: int) -> float:
        rel = self.emitter_efficiency[index] if self.emitter_efficiency else 1.0
        return self.detection_efficiency * rel


# --------------------------------------------------------------------------
# helpers

def _dedupe_sorted(times: np.ndarray, sources: Optional[np.ndarray]):
    """Drop events sharing a picosecond with their predecessor."""
    if times.size < 2:
        return times, sources
    keep = np.empty(times.size, dtype=bool)
    keep[0] = True
    np.not_equal(times[1:], times[:-1], out=keep[1:])
    if keep.all():
        return times, sources
    return times[keep], (None if sources is None else sources[keep])


def merge_streams(*streams: TimestampStream, channel: int = 0) -> TimestampStream:
    """Time-ordered union of streams; coincident picoseconds keep the first event."""
    if not streams:
        raise ValueError("nothing to merge")
    duration = max(s.duration for s in streams)
    times = np.concatenate([s.times for s in streams])
    have_src = all(s.sources is not None for s in streams)
    src = np.concatenate([s.sources for s in streams]) if have_src else None
    order = np.argsort(times, kind="stable")
    times = times[order]
    src = None if src is None else src[order]
    times, src = _dedupe_sorted(times, src)
    return TimestampStream(times, duration, channel, src)


def _thin(times_ps: np.ndarray, efficiency: float, rng: np.random.Generator) -> np.ndarray:
    if efficiency >= 1.0:
        return times_ps
    return times_ps[rng.random(times_ps.size) < efficiency]


# --------------------------------------------------------------------------
# continuous-wave emitters

def _cw_emission_times(rates: ThreeLevelRates, duration_ns: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Radiative emission times (ns) of one emitter started in its steady state.

    Every excitation cycle starts and ends in the ground state, so the cycle
    durations are i.i.d.: ground wait + excited dwell (+ shelf dwell after an
    intersystem crossing).  That makes the whole trajectory a cumulative sum.
    """
    k = rates
    if duration_ns <= 0 or k.k_exc <= 0:
        return np.empty(0)
    k_out = k.k_rad + k.k_isc
    p_rad = k.k_rad / k_out
    if k.k_isc > 0 and k.k_res <= 0:
        raise ValueError("shelving level without return rate traps the emitter")

    # initial state drawn from the stationary distribution
    state = rng.choice(3, p=steady_state(k)) if k.k_isc > 0 else \
        rng.choice(2, p=[k.k_rad / (k.k_exc + k.k_rad), k.k_exc / (k.k_exc + k.k_rad)])
    t = 0.0
    first = []
    if state == 2:
        t = rng.exponential(1.0 / k.k_res)
    elif state == 1:
        d = rng.exponential(1.0 / k_out)
        if rng.random() < p_rad:
            first.append(d)
            t = d
        else:
            t = d + rng.exponential(1.0 / k.k_res)

    mean_cycle = 1.0 / k.k_exc + 1.0 / k_out + ((1 - p_rad) / k.k_res if k.k_isc > 0 else 0.0)
    chunk = int(min(max(1.2 * duration_ns / mean_cycle + 64, 1024), 1 << 21))
    out = [np.asarray(first)]
    while t <= duration_ns:
        wait = rng.exponential(1.0 / k.k_exc, chunk)
        dwell = rng.exponential(1.0 / k_out, chunk)
        if k.k_isc > 0:
            radiative = rng.random(chunk) < p_rad
            shelf = np.where(radiative, 0.0, rng.exponential(1.0 / k.k_res, chunk))
        else:
            radiative = np.ones(chunk, dtype=bool)
            shelf = 0.0
        emit_offset = wait + dwell
        ends = np.cumsum(emit_offset + shelf)
        starts = ends - (emit_offset + shelf)
        emission = t + starts + emit_offset
        out.append(emission[radiative])
        t += ends[-1]
    times = np.concatenate(out)
    return times[times <= duration_ns]


def _to_ps(times_ns: np.ndarray, duration: int) -> np.ndarray:
    ps = np.rint(times_ns * PS_PER_NS).astype(np.int64)
    return ps[(ps >= 0) & (ps <= duration)]


def simulate_emitter(rates: ThreeLevelRates, config: SimulationConfig,
                     *, index: int = 0) -> TimestampStream:
    """Detected photons of one continuous-wave excited emitter.

    ``index`` selects the emitter slot (random sub-stream, relative
    efficiency, provenance tag ``index + 1``).
    """
    if config.mode != "cw":
        raise ValueError("simulate_emitter handles continuous-wave excitation; use simulate_pulsed")
    if config.duration == 0:
        return TimestampStream(np.empty(0, np.int64), 0, sources=np.empty(0, np.int8))
    rng = _rng(config.seed, _KEY_EMITTER, index)
    t_ns = _cw_emission_times(rates, config.duration / PS_PER_NS, rng)
    ps = _thin(_to_ps(t_ns, config.duration), config.efficiency_of(index), rng)
    ps, _ = _dedupe_sorted(ps, None)
    return TimestampStream(ps, config.duration, sources=np.full(ps.size, index + 1, np.int8))


def simulate_double(rates1: ThreeLevelRates, rates2: ThreeLevelRates,
                    config: SimulationConfig) -> TimestampStream:
    """Merged photons of two independent emitters (provenance tags 1 and 2)."""
    cfg = config
    if len(cfg.emitter_efficiency) not in (0, 2):
        raise ValueError("emitter_efficiency needs two entries")
    sim = simulate_pulsed if cfg.mode == "pulsed" else simulate_emitter
    s1 = sim(rates1, cfg, index=0)
    s2 = sim(rates2, cfg, index=1)
    return merge_streams(s1, s2)


# --------------------------------------------------------------------------
# pulsed excitation

@numba.njit(cache=True)
def _pulsed_kernel(ready, n_geom, offset, decay, branch, shelf,
                   rep, width, p_rad, duration, out):
    """Advance one emitter through pre-drawn cycles; returns (n_out, ready, done)."""
    n = 0
    for i in range(n_geom.size):
        m = np.ceil(ready / rep) + (n_geom[i] - 1)
        x = m * rep + offset[i] * width
        if x > duration:
            return n, ready, True
        t = x + decay[i]
        if branch[i] < p_rad:
            out[n] = t
            n += 1
            ready = t
        else:
            ready = t + shelf[i]
    return n, ready, False


def simulate_pulsed(rates: ThreeLevelRates, config: SimulationConfig,
                    *, index: int = 0) -> TimestampStream:
    """Detected photons of one emitter under periodic pulsed excitation.

    Pulse ``m`` starts at ``m * rep_period``.  A pulse finding the emitter
    in its ground state excites it with probability
    ``1 - exp(-k_exc * pulse_width)`` at a uniformly drawn time within the
    pulse; the decay then races radiative emission against intersystem
    crossing.
    """
    cfg = config
    if cfg.mode != "pulsed":
        raise ValueError("simulate_pulsed needs a pulsed-mode configuration")
    if cfg.duration == 0 or rates.k_exc <= 0:
        return TimestampStream(np.empty(0, np.int64), cfg.duration, sources=np.empty(0, np.int8))
    k = rates
    rng = _rng(cfg.seed, _KEY_EMITTER, index)
    rep = cfg.rep_period / PS_PER_NS
    width = cfg.pulse_width / PS_PER_NS
    duration = cfg.duration / PS_PER_NS
    q = -np.expm1(-k.k_exc * width)
    k_out = k.k_rad + k.k_isc
    p_rad = k.k_rad / k_out
    res = k.k_res if k.k_res > 0 else 1e-300

    chunk = int(min(max(1.2 * duration / rep * q + 64, 1024), 1 << 20))
    parts, ready, done = [], 0.0, False
    while not done:
        n_geom = rng.geometric(q, chunk).astype(np.float64)
        offset = rng.random(chunk)
        decay = rng.exponential(1.0 / k_out, chunk)
        branch = rng.random(chunk)
        shelf = rng.exponential(1.0 / res, chunk)
        buf = np.empty(chunk)
        n, ready, done = _pulsed_kernel(ready, n_geom, offset, decay, branch, shelf,
                                        rep, width, p_rad, duration, buf)
        parts.append(buf[:n])
    t_ns = np.concatenate(parts)
    ps = _thin(_to_ps(t_ns, cfg.duration), cfg.efficiency_of(index), rng)
    ps, _ = _dedupe_sorted(ps, None)
    return TimestampStream(ps, cfg.duration, sources=np.full(ps.size, index + 1, np.int8))


def pulsed_irf_sigma(jitter_sigma: float, pulse_width: float) -> float:
    """Width of the effective timing response: Gaussian jitter plus a flat pulse."""
    return float(np.sqrt(jitter_sigma ** 2 + pulse_width ** 2 / 12.0))


# --------------------------------------------------------------------------
# background and detection

def add_background(stream: TimestampStream, rate: float, duration: Optional[int] = None,
                   seed: int = 0) -> TimestampStream:
    """Merge homogeneous Poisson arrivals (``rate`` in counts/s) into ``stream``."""
    if rate < 0:
        raise ValueError("rate must be >= 0")
    duration = stream.duration if duration is None else int(duration)
    if rate == 0 or duration == 0:
        return stream
    rng = _rng(seed, _KEY_BACKGROUND)
    n = rng.poisson(rate * duration * 1e-12)
    bg = np.sort(rng.integers(0, duration, n, endpoint=True))
    bg, _ = _dedupe_sorted(bg, None)
    src = stream.sources if stream.sources is not None else np.ones(len(stream), np.int8)
    base = TimestampStream(stream.times, max(stream.duration, duration), stream.channel, src)
    merged = merge_streams(base, TimestampStream(bg, duration, sources=np.zeros(bg.size, np.int8)),
                           channel=stream.channel)
    return merged


@numba.njit(cache=True)
def _dead_time_mask(times, dead_time):
    keep = np.zeros(times.size, dtype=np.bool_)
    last = np.int64(-1)
    have = False
    for i in range(times.size):
        if not have or times[i] - last >= dead_time:
            keep[i] = True
            last = times[i]
            have = True
    return keep


def apply_detection(stream: TimestampStream, jitter_sigma: float = 0.0, dead_time: int = 0,
                    seed: int = 0) -> TimestampStream:
    """Gaussian timing jitter (ps) followed by a non-paralyzable dead time (ps).

    Jittered times are rounded to whole picoseconds and re-sorted; events
    pushed outside ``[0, duration]`` are lost.
    """
    if jitter_sigma < 0 or dead_time < 0:
        raise ValueError("jitter_sigma and dead_time must be >= 0")
    out = stream
    if jitter_sigma > 0 and len(stream):
        rng = _rng(seed, _KEY_DETECTION, stream.channel)
        t = stream.times + np.rint(rng.normal(0.0, jitter_sigma, len(stream))).astype(np.int64)
        order = np.argsort(t, kind="stable")
        t = t[order]
        src = None if stream.sources is None else stream.sources[order]
        inside = (t >= 0) & (t <= stream.duration)
        t = t[inside]
        src = None if src is None else src[inside]
        t, src = _dedupe_sorted(t, src)
        out = TimestampStream(t, stream.duration, stream.channel, src)
    if dead_time > 0 and len(out):
        out = out._subset(_dead_time_mask(out.times, np.int64(dead_time)))
    return out


def split_hbt(stream: TimestampStream, seed: int = 0) -> tuple[TimestampStream, TimestampStream]:
    """Route each event to channel 0 or 1 with probability 1/2 (a 50:50 beamsplitter)."""
    rng = _rng(seed, _KEY_SPLIT)
    to_b = rng.random(len(stream)) < 0.5
    a = stream._subset(~to_b)
    b = stream._subset(to_b)
    a.channel, b.channel = 0, 1
    return a, b


def simulate(config: SimulationConfig) -> TimestampStream:
    """Full single-detector chain: emitters, background, jitter and dead time."""
    cfg = config
    if not cfg.emitters:
        s = TimestampStream(np.empty(0, np.int64), cfg.duration, sources=np.empty(0, np.int8))
    elif len(cfg.emitters) == 1:
        sim = simulate_pulsed if cfg.mode == "pulsed" else simulate_emitter
        s = sim(cfg.emitters[0], cfg)
    else:
        s = simulate_double(cfg.emitters[0], cfg.emitters[1], cfg)
    s = add_background(s, cfg.background_rate, cfg.duration, cfg.seed)
    return apply_detection(s, cfg.jitter_sigma, cfg.dead_time, cfg.seed)


# --------------------------------------------------------------------------
# spectra

def simulate_spectrum(lines: Sequence[PolarizedLine], analyzer_angle: Optional[float],
                      grid, exposure: float = 1.0, noise_seed: Optional[int] = None,
                      baseline: Optional[tuple[float, float]] = None) -> Spectrum:
    """Polarization-resolved multi-Lorentzian spectrum.

    Each line is weighted by its Malus factor for the given analyzer angle
    (degrees, ``None`` for no analyzer).  ``baseline`` adds a linear
    background ``offset + slope * (lambda - grid[0])`` in counts per bin.
    Expected counts are multiplied by ``exposure``; with a ``noise_seed``
    every bin is then Poisson sampled.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly ascending")
    expected = np.zeros_like(grid)
    for pl in lines:
        w = malus_factor(analyzer_angle, pl.dipole_angle, pl.visibility)
        ln = pl.line
        expected += w * lorentzian(grid, ln.center, ln.fwhm, ln.area)
    if baseline is not None:
        offset, slope = baseline
        expected += offset + slope * (grid - grid[0])
    expected = np.clip(expected * exposure, 0.0, None)
    if noise_seed is None:
        counts = expected
    else:
        counts = np.random.default_rng(noise_seed).poisson(expected).astype(float)
    return Spectrum(grid, counts, analyzer_angle)
