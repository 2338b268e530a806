import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from photonstats.correlate import correlate, linear_bins, tcspc_histogram
from photonstats.fitting.drivers import bin_average, compare_models
from photonstats.models import (
    G2Params, ThreeLevelRates, emission_rate, g2_background_forward, g2_three_level,
    g2_with_jitter, rates_to_g2_params,
)
from photonstats.simulate import (
    SimulationConfig, TimestampStream, add_background, apply_detection, pulsed_irf_sigma,
    simulate, simulate_double, simulate_emitter, simulate_pulsed, simulate_spectrum, split_hbt,
)
from photonstats.spectra import LorentzianLine, PolarizedLine, lorentzian_sum

from helpers import block_g2, covariance_chi2, fano_factor

TWO_LEVEL = ThreeLevelRates(0.1, 0.25)
REFERENCE = ThreeLevelRates(0.1, 0.25, 0.01, 0.001)


def empty(duration=1000):
    return TimestampStream(np.empty(0, np.int64), duration)


class TestStreamType:
    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            TimestampStream(np.array([5, 3]), 10)
        with pytest.raises(ValueError):
            TimestampStream(np.array([3, 3]), 10)

    def test_rejects_outside(self):
        with pytest.raises(ValueError):
            TimestampStream(np.array([3, 11]), 10)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimulationConfig(duration=10, detection_efficiency=0.0)
        with pytest.raises(ValueError):
            SimulationConfig(duration=10, mode="pulsed", rep_period=100, pulse_width=200)
        with pytest.raises(ValueError):
            simulate_emitter(TWO_LEVEL, SimulationConfig(duration=10, mode="pulsed"))


class TestEmitter:
    def test_deterministic(self):
        cfg = SimulationConfig(duration=2_000_000_000, emitters=(REFERENCE, TWO_LEVEL),
                               background_rate=1e5, jitter_sigma=300.0, dead_time=20_000,
                               detection_efficiency=0.3, seed=11)
        a, b = simulate(cfg), simulate(cfg)
        assert np.array_equal(a.times, b.times) and np.array_equal(a.sources, b.sources)
        c = simulate(SimulationConfig(**{**cfg.__dict__, "seed": 12}))
        assert not np.array_equal(a.times[:100], c.times[:100])

    def test_zero_duration(self):
        s = simulate(SimulationConfig(duration=0, emitters=(TWO_LEVEL,)))
        assert len(s) == 0 and s.duration == 0

    def test_two_level_intervals(self):
        # detected intervals are the sum of an excitation and an emission wait
        s = simulate_emitter(TWO_LEVEL, SimulationConfig(duration=2_000_000_000, seed=3))
        dt = np.diff(s.times) / 1000.0
        ke, kr = TWO_LEVEL.k_exc, TWO_LEVEL.k_rad
        cdf = lambda t: 1 - (kr * np.exp(-ke * t) - ke * np.exp(-kr * t)) / (kr - ke)
        assert stats.kstest(dt, cdf).pvalue > 1e-3

    @pytest.mark.parametrize("rates", [TWO_LEVEL, REFERENCE])
    def test_mean_rate(self, rates):
        eff, T = 0.2, 20_000_000_000
        s = simulate_emitter(rates, SimulationConfig(duration=T, detection_efficiency=eff, seed=5))
        expect = eff * emission_rate(rates) * T / 1000.0
        if rates.k_isc == 0:
            assert emission_rate(rates) == pytest.approx(rates.k_exc * rates.k_rad / (rates.k_exc + rates.k_rad))
        sd = np.sqrt(expect * fano_factor(rates, eff))
        assert abs(len(s) - expect) < 3 * sd

    @pytest.mark.parametrize("rates,duration", [
        (REFERENCE, 200_000_000_000),
        (ThreeLevelRates(0.3, 0.3, 0.01, 0.001), 200_000_000_000),
        (TWO_LEVEL, 30_000_000_000),
    ])
    def test_self_consistent_g2(self, rates, duration):
        # bins are correlated for bunched light, so use the covariance of 400 independent blocks
        s = simulate_emitter(rates, SimulationConfig(duration=duration, seed=0))
        assert len(s) >= 1_000_000
        a, b = split_hbt(s, 0)
        pos = np.unique(np.concatenate([np.arange(0, 20_000, 1000),
                                        np.rint(np.geomspace(20_000, 4_000_000, 31))]).astype(np.int64))
        edges = np.concatenate([-pos[::-1], pos[1:]])
        g = rates_to_g2_params(rates)
        model = bin_average(lambda t: g2_three_level(t, g), edges / 1000.0)
        chi2 = covariance_chi2(block_g2(a, b, edges, 400), model)
        assert 0.7 <= chi2 <= 1.4


class TestDouble:
    def test_equal_rates(self):
        cfg = SimulationConfig(duration=1_000_000_000, detection_efficiency=0.5, seed=2)
        s = simulate_double(TWO_LEVEL, TWO_LEVEL, cfg)
        n = s.count_from(1) + s.count_from(2)
        assert abs(s.realized_z() - 0.5) < 4 * np.sqrt(0.25 / n)

    def test_scaled_rates(self):
        # emitter 2 scaled to give 30 % of the photons
        f = 3.0 / 7.0
        cfg = SimulationConfig(duration=1_000_000_000, seed=4)
        s = simulate_double(TWO_LEVEL, TWO_LEVEL.scaled(f), cfg)
        n = s.count_from(1) + s.count_from(2)
        assert abs(s.realized_z() - 0.7) < 4 * np.sqrt(0.21 / n)

    def test_rate_sanity(self):
        r2 = ThreeLevelRates(0.2, 0.4, 0.02, 0.002)
        eff, T = 0.1, 20_000_000_000
        s = simulate(SimulationConfig(duration=T, emitters=(REFERENCE, r2), detection_efficiency=eff, seed=9))
        expect = [eff * emission_rate(r) * T / 1000.0 for r in (REFERENCE, r2)]
        var = sum(e * fano_factor(r, eff) for e, r in zip(expect, (REFERENCE, r2)))
        assert abs(len(s) - sum(expect)) < 3 * np.sqrt(var)

    @pytest.mark.parametrize("z", [0.2, 0.35, 0.5])
    def test_mixing_floor(self, z):
        k = ThreeLevelRates(0.05, 0.05)
        cfg = SimulationConfig(duration=100_000_000_000, emitters=(k, k), seed=int(100 * z),
                               emitter_efficiency=(z / (1 - z), 1.0))
        s = simulate(cfg)
        a, b = split_hbt(s, 1)
        edges = linear_bins(3000, 200)
        h = correlate(a, b, edges)
        zr = s.realized_z()
        i0 = int(np.argmin(np.abs(h.centers)))
        assert abs(h.g2[i0] - 2 * zr * (1 - zr)) < 3 * h.g2_err[i0]
        assert abs(np.min(h.g2) - 2 * z * (1 - z)) < 3 * h.g2_err[np.argmin(h.g2)] + 0.01


class TestBackground:
    def test_zero_rate_is_identity(self):
        s = simulate_emitter(TWO_LEVEL, SimulationConfig(duration=10_000_000, seed=1))
        assert add_background(s, 0.0) is s

    def test_pure_background_is_flat(self):
        bg = add_background(empty(2_000_000_000_000), 1e6, seed=3)
        a, b = split_hbt(bg, 3)
        h = correlate(a, b, linear_bins(100_000, 2000))
        assert np.all(np.abs(h.g2 - 1) < 5 * h.g2_err)

    def test_equal_signal_and_background(self):
        k = ThreeLevelRates(0.05, 0.05)
        bg_rate = emission_rate(k) * 1e9
        s = simulate(SimulationConfig(duration=100_000_000_000, emitters=(k,),
                                      background_rate=bg_rate, seed=8))
        p_closed = 0.5
        p = s.realized_p()
        assert abs(p - p_closed) < 3 * np.sqrt(0.25 / len(s))
        a, b = split_hbt(s, 8)
        edges = linear_bins(2000, 200)
        h = correlate(a, b, edges)
        g = rates_to_g2_params(k)
        model = bin_average(lambda t: g2_background_forward(g2_three_level(t, g), p), edges / 1000.0)
        i0 = int(np.argmin(np.abs(h.centers)))
        assert abs(h.g2[i0] - model[i0]) < 3 * h.g2_err[i0]
        assert model[i0] == pytest.approx(1 - p**2, abs=0.01)


class TestDetection:
    def test_identity(self):
        s = simulate_emitter(TWO_LEVEL, SimulationConfig(duration=10_000_000, seed=1))
        assert apply_detection(s, 0.0, 0) is s

    def test_dead_time_limit(self):
        bg = add_background(empty(1_000_000_000), 1e9, seed=5)
        tau_d = 100_000
        out = apply_detection(bg, 0.0, tau_d)
        R = len(bg) / 1e-3
        rate = len(out) / 1e-3
        assert rate == pytest.approx(R / (1 + R * tau_d * 1e-12), rel=0.01)
        assert rate == pytest.approx(1e12 / tau_d, rel=0.02)
        assert np.all(np.diff(out.times) >= tau_d)

    def test_jitter_lifts_zero_delay(self):
        k = ThreeLevelRates(0.5, 1.0)
        sigma_det = 490.0 / np.sqrt(2)
        s = simulate(SimulationConfig(duration=10_000_000_000, emitters=(k,),
                                      jitter_sigma=sigma_det, seed=2))
        a, b = split_hbt(s, 2)
        edges = linear_bins(5000, 200)
        h = correlate(a, b, edges)
        g = rates_to_g2_params(k)
        model = bin_average(lambda t: g2_with_jitter(t, g, 1.0, 0.49), edges / 1000.0)
        ideal = bin_average(lambda t: g2_three_level(t, g), edges / 1000.0)
        i0 = int(np.argmin(np.abs(h.centers)))
        assert abs(h.g2[i0] - model[i0]) < 3 * h.g2_err[i0]
        assert h.g2[i0] - ideal[i0] > 5 * h.g2_err[i0]
        assert 0.7 <= covariance_chi2(block_g2(a, b, edges, 400), model) <= 1.4


class TestSplit:
    def test_empty(self):
        a, b = split_hbt(empty())
        assert len(a) == len(b) == 0 and (a.channel, b.channel) == (0, 1)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31))
    def test_partition(self, seed):
        s = simulate_emitter(TWO_LEVEL, SimulationConfig(duration=100_000_000, seed=1))
        a, b = split_hbt(s, seed)
        assert np.array_equal(np.sort(np.concatenate([a.times, b.times])), s.times)
        n = len(s)
        assert abs(len(a) - n / 2) < 5 * np.sqrt(n) / 2


class TestPulsed:
    def cfg(self, **kw):
        base = dict(duration=200_000_000_000, mode="pulsed", rep_period=100_000, pulse_width=200,
                    detection_efficiency=0.1, seed=1)
        base.update(kw)
        return SimulationConfig(**base)

    def test_mono_slope(self):
        s = simulate_pulsed(ThreeLevelRates(0.5, 0.25), self.cfg(detection_efficiency=1.0))
        h = tcspc_histogram(s, 100_000, 256)
        t, c = h.centers_ns, h.counts.astype(float)
        tail = (t > 1.0) & (t < 16.0)
        assert c[tail].min() > 150
        w = np.sqrt(c[tail])
        coef, cov = np.polyfit(t[tail], np.log(c[tail]), 1, w=w, cov="unscaled")
        assert abs(coef[0] + 0.25) < 3 * np.sqrt(cov[0, 0])

    def test_photons_within_pulses(self):
        s = simulate_pulsed(ThreeLevelRates(0.5, 0.25), self.cfg(duration=1_000_000_000))
        assert len(s) > 0
        assert np.all(s.times <= s.duration)

    def test_two_emitters_biexponential(self):
        cfg = self.cfg(duration=500_000_000_000, jitter_sigma=np.sqrt(490**2 - 200**2 / 12))
        s = simulate(SimulationConfig(**{**cfg.__dict__,
                                         "emitters": (ThreeLevelRates(0.5, 1 / 1.7), ThreeLevelRates(0.5, 1 / 4.5))}))
        h = tcspc_histogram(s, 100_000, 128, offset=-5000)
        cmp = compare_models(h, sigma=0.49, t_range=(0, 60))
        assert cmp.preferred == 2
        t = sorted(tc for _, tc in cmp.bi[0].components)
        assert t[0] == pytest.approx(1.7, rel=0.1) and t[1] == pytest.approx(4.5, rel=0.1)

    def test_irf_width(self):
        assert pulsed_irf_sigma(300.0, 0.0) == 300.0
        assert pulsed_irf_sigma(0.0, 120.0) == pytest.approx(120 / np.sqrt(12))


class TestSpectrum:
    grid = np.arange(600.0, 700.0, 0.05)

    def test_malus_zero(self):
        pl = PolarizedLine(LorentzianLine(650.0, 2.0, 1000.0), dipole_angle=30.0, visibility=1.0)
        sp = simulate_spectrum([pl], 120.0, self.grid)
        assert np.max(np.abs(sp.counts)) < 1e-9

    def test_no_analyzer_is_plain_sum(self):
        lines = [LorentzianLine(640.0, 2.0, 1e4), LorentzianLine(645.0, 2.0, 5e3),
                 LorentzianLine(660.0, 6.0, 3e3), LorentzianLine(668.0, 6.0, 2e3)]
        sp = simulate_spectrum([PolarizedLine(l, 17.0, 0.8) for l in lines], None, self.grid)
        np.testing.assert_allclose(sp.counts, lorentzian_sum(self.grid, lines), rtol=1e-14)

    def test_analyzer_shifts_weights(self):
        l1, l2 = LorentzianLine(645.0, 2.0, 1e4), LorentzianLine(650.0, 2.0, 1e4)
        lines = [PolarizedLine(l1, 0.0, 0.9), PolarizedLine(l2, 90.0, 0.9)]

        def ratio(angle):
            sp = simulate_spectrum(lines, angle, self.grid)
            return sp.counts[np.argmin(np.abs(self.grid - 645))] / sp.counts[np.argmin(np.abs(self.grid - 650))]

        assert ratio(0.0) > 5 and ratio(90.0) < 0.2
        assert ratio(45.0) == pytest.approx(1.0, rel=1e-9)

    def test_noise_is_reproducible(self):
        pl = [PolarizedLine(LorentzianLine(650.0, 2.0, 1e5))]
        a = simulate_spectrum(pl, None, self.grid, noise_seed=4)
        b = simulate_spectrum(pl, None, self.grid, noise_seed=4)
        assert np.array_equal(a.counts, b.counts)
        assert np.all(a.counts == np.round(a.counts))
