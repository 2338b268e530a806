from types import SimpleNamespace

import numpy as np
import pytest

from photonstats.correlate import CorrelationHistogram, DecayHistogram, overlap_weights
from photonstats.fitting import (
    FitInputError, bin_average, compare_models, fit_g2, fit_lifetime, fit_saturation,
    fit_spectrum, z_from_spectrum,
)
from photonstats.models import (
    HC_MEV_NM, DetectionParams, DoubleDefectParams, G2Params, LifetimeParams, SaturationParams,
    g2_double_defect, lifetime_model, line_separations, saturation_curve,
    signal_fraction_at_power, wavelength_to_energy,
)
from photonstats.simulate import simulate_spectrum
from photonstats.spectra import LorentzianLine, PolarizedLine, lorentzian

N_TRIALS = 100


# --------------------------------------------------------------------------
# synthetic data with Poisson noise

def g2_edges():
    pos = np.concatenate([np.arange(256, 20_000, 512), np.rint(np.geomspace(20_000, 3_000_000, 40))])
    pos = np.unique(pos.astype(np.int64))
    return np.concatenate([-pos[::-1], pos])


def poisson_g2(params: DoubleDefectParams, edges, level, rng, duration=10**12):
    """Histogram whose counts are Poisson around the bin-averaged model; ``level`` counts per ns at g2 = 1."""
    w = overlap_weights(edges, duration)
    c = level / 1000.0 / duration
    expected = c * w * bin_average(lambda t: g2_double_defect(t, params), edges / 1000.0)
    counts = rng.poisson(expected)
    denom = c * w
    return CorrelationHistogram(edges, counts, counts / denom, np.sqrt(np.maximum(counts, 1)) / denom,
                                "rate", c, duration, 0, 0)


def poisson_decay(params: LifetimeParams, rng, width=128, period=100_000, mode="exact"):
    edges = np.arange(0, period + 1, width, dtype=np.int64)
    centers = 0.5 * (edges[1:] + edges[:-1]) / 1000.0
    counts = rng.poisson(lifetime_model(centers, params, mode))
    return DecayHistogram(edges, counts, period, 10**6)


def four_lines(z=0.4, total=2e5):
    e1 = wavelength_to_energy(650.0)
    c = [650.0, HC_MEV_NM / (e1 - 12), HC_MEV_NM / (e1 - 158), HC_MEV_NM / (e1 - 12 - 174)]
    return [LorentzianLine(c[0], 3.0, z * total), LorentzianLine(c[1], 3.0, (1 - z) * total),
            LorentzianLine(c[2], 8.0, 0.3 * z * total), LorentzianLine(c[3], 8.0, 0.3 * (1 - z) * total)]


GRID = np.arange(620.0, 780.0, 0.1)
POWERS = np.array([0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0])


def within(fit, truth: dict, k=3.0):
    return all(abs(fit.parameters[n] - v) <= k * fit.standard_errors[n] for n, v in truth.items())


# --------------------------------------------------------------------------
# saturation

class TestSaturation:
    def test_noiseless(self):
        truth = SaturationParams(2e6, 1.0, 0.0)
        sp, fit = fit_saturation(POWERS, saturation_curve(POWERS, truth))
        assert sp.i_sat == pytest.approx(2e6, rel=1e-8) and sp.p_sat == pytest.approx(1.0, rel=1e-8)
        assert sp.c_back * POWERS.max() < 1e-8 * 2e6

    def test_linear_term_detected(self):
        rng = np.random.default_rng(0)
        truth = SaturationParams(1.5e6, 1.0, 2e5)
        sp, fit = fit_saturation(POWERS, rng.poisson(saturation_curve(POWERS, truth)).astype(float))
        assert sp.c_back > 10 * fit.standard_errors["c_back"]

    def test_too_few_points(self):
        with pytest.raises(FitInputError):
            fit_saturation([0.1, 1.0], [1e5, 5e5])

    def test_round_trip(self):
        truth = dict(i_sat=1.5e6, p_sat=1.0, c_back=5e4)
        hits = 0
        for seed in range(N_TRIALS):
            rng = np.random.default_rng(seed)
            rate = rng.poisson(saturation_curve(POWERS, SaturationParams(**truth)) * 0.5) / 0.5
            _, fit = fit_saturation(POWERS, rate, integration_time=0.5)
            hits += within(fit, truth)
        assert hits >= 95


# --------------------------------------------------------------------------
# g2

SHAPE = G2Params(3.0, 300.0, 0.8)


class TestG2:
    def test_sigma_required(self):
        h = poisson_g2(DoubleDefectParams(0.3, SHAPE), g2_edges(), 50.0, np.random.default_rng(0))
        with pytest.raises(ValueError, match="sigma"):
            fit_g2(h, p=1.0, z=0.3)

    def test_double_defect_residual(self):
        rng = np.random.default_rng(1)
        params = DoubleDefectParams(0.45, SHAPE, DetectionParams(1.0, 0.49))
        f = fit_g2(poisson_g2(params, g2_edges(), 400.0, rng), p=1.0, z=0.45, sigma=0.49)
        assert f.zero_delay_residual > 3.0
        assert 0.7 <= f.double.redchi <= 1.4
        assert f.chi2_ratio >= 1.5

    @pytest.mark.parametrize("z", [0.2, 0.3, 0.45])
    def test_model_discrimination(self, z):
        rng = np.random.default_rng(int(z * 100))
        # the z = 0.2 floor is 0.32; about 1500 counts per ns at g2 = 1 resolve it
        params = DoubleDefectParams(z, SHAPE, DetectionParams(0.95, 0.49))
        f = fit_g2(poisson_g2(params, g2_edges(), 1500.0, rng), p=0.95, z=z, sigma=0.49)
        assert f.single.redchi >= 1.5 * f.double.redchi

    def test_pinned_half_floor(self):
        rng = np.random.default_rng(2)
        params = DoubleDefectParams(0.5, SHAPE)
        f = fit_g2(poisson_g2(params, g2_edges(), 200.0, rng), p=1.0, z=0.5, sigma=0.0)
        assert g2_double_defect(0.0, f.params) == pytest.approx(0.5, abs=1e-12)

    def test_free_z(self):
        rng = np.random.default_rng(3)
        params = DoubleDefectParams(0.3, SHAPE, DetectionParams(1.0, 0.49))
        f = fit_g2(poisson_g2(params, g2_edges(), 400.0, rng), p=1.0, sigma=0.49, fit_z=True)
        assert abs(f.params.z - 0.3) < 3 * f.double.standard_errors["z"]

    @pytest.mark.parametrize("z", [0.0, 0.3])
    def test_round_trip(self, z):
        truth = dict(tau1=SHAPE.tau1, tau2=SHAPE.tau2, a=SHAPE.a)
        params = DoubleDefectParams(z, SHAPE, DetectionParams(0.9, 0.49))
        edges = g2_edges()
        hits = 0
        for seed in range(N_TRIALS):
            h = poisson_g2(params, edges, 100.0, np.random.default_rng(seed))
            f = fit_g2(h, p=0.9, z=z, sigma=0.49)
            hits += within(f.double, truth)
        assert hits >= 95

    def test_unnormalized_histogram(self):
        edges = g2_edges()
        n = edges.size - 1
        h = CorrelationHistogram(edges, np.zeros(n, np.int64), np.full(n, np.nan), np.full(n, np.nan),
                                 "rate", 0.0, 10**9)
        with pytest.raises(FitInputError):
            fit_g2(h, sigma=0.49)


# --------------------------------------------------------------------------
# lifetime

BI = LifetimeParams(3.0, 5.0, 0.49, [(2000.0, 0.82), (400.0, 4.0)])


class TestLifetime:
    def test_biexponential_preferred(self):
        h = poisson_decay(BI, np.random.default_rng(0))
        c = compare_models(h, sigma=0.49, t_range=(0, 40))
        assert c.preferred == 2 and c.delta_aic > 10
        t = [tc for _, tc in c.bi[0].components]
        assert t[0] == pytest.approx(0.82, rel=0.1) and t[1] == pytest.approx(4.0, rel=0.1)

    def test_mono_preferred(self):
        mono = LifetimeParams(3.0, 5.0, 0.49, [(2000.0, 4.0)])
        h = poisson_decay(mono, np.random.default_rng(1))
        c = compare_models(h, sigma=0.49, t_range=(0, 40))
        assert c.preferred == 1

    def test_zero_counts(self):
        h = DecayHistogram(np.arange(0, 1001, 100), np.zeros(10, np.int64), 1000, 1)
        with pytest.raises(FitInputError):
            fit_lifetime(h, sigma=0.49)

    def test_degenerate_falls_back(self):
        mono = LifetimeParams(1.0, 5.0, 0.49, [(5000.0, 3.0)])
        edges = np.arange(0, 40_001, 128, dtype=np.int64)
        centers = 0.5 * (edges[1:] + edges[:-1]) / 1000.0
        h = DecayHistogram(edges, lifetime_model(centers, mono, "exact"), 40_000, 1)
        lp, fit = fit_lifetime(h, n=2, sigma=0.49)
        assert lp.n == 1 and fit.message.startswith("degenerate")
        assert lp.components[0][1] == pytest.approx(3.0, rel=1e-6)

    def test_sigma_required(self):
        with pytest.raises(ValueError):
            fit_lifetime(poisson_decay(BI, np.random.default_rng(0)))

    def test_round_trip(self):
        truth = dict(y0=3.0, t0=5.0, A1=2000.0, t1=0.82, A2=400.0, t2=4.0)
        hits = 0
        for seed in range(N_TRIALS):
            h = poisson_decay(BI, np.random.default_rng(seed))
            lp, fit = fit_lifetime(h, n=2, sigma=0.49, t_range=(0, 40))
            p = dict(fit.parameters)
            se = dict(fit.standard_errors)
            if p["t1"] > p["t2"]:
                for a, b in (("A1", "A2"), ("t1", "t2")):
                    p[a], p[b], se[a], se[b] = p[b], p[a], se[b], se[a]
            hits += all(abs(p[n] - v) <= 3 * se[n] for n, v in truth.items())
        assert hits >= 95


# --------------------------------------------------------------------------
# spectra

class TestSpectrum:
    def test_four_lines(self):
        lines = four_lines()
        sp = simulate_spectrum([PolarizedLine(l) for l in lines], None, GRID, noise_seed=0)
        f = fit_spectrum(sp)
        assert len(f.lines) == 4
        for got, want in zip(f.lines, lines):
            assert abs(got.center - want.center) < 0.2
        np.testing.assert_allclose(line_separations([l.center for l in f.lines]),
                                   [0.0, 12.0, 158.0, 186.0], atol=2.0)
        assert z_from_spectrum(f.lines) == pytest.approx(0.4, abs=0.02)

    @pytest.mark.parametrize("z", [0.1, 0.25, 0.35, 0.5, 0.65, 0.8])
    def test_auto_init_across_ratios(self, z):
        lines = four_lines(z)
        for seed in range(3):
            sp = simulate_spectrum([PolarizedLine(l) for l in lines], None, GRID, noise_seed=seed)
            f = fit_spectrum(sp)
            assert max(abs(g.center - w.center) for g, w in zip(f.lines, lines)) < 0.2
            assert f.fit.redchi < 1.5

    def test_single_noiseless_line(self):
        line = LorentzianLine(655.3, 2.7, 12345.0)
        sp = simulate_spectrum([PolarizedLine(line)], None, GRID)
        f = fit_spectrum(sp, n_lines=1)
        got = f.lines[0]
        assert got.center == pytest.approx(655.3, rel=1e-8)
        assert got.fwhm == pytest.approx(2.7, rel=1e-6)
        assert got.area == pytest.approx(12345.0, rel=1e-6)

    def test_baseline_slope(self):
        lines = four_lines()
        sp = simulate_spectrum([PolarizedLine(l) for l in lines], None, GRID, noise_seed=1,
                               baseline=(300.0, 1.5))
        f = fit_spectrum(sp, baseline=True)
        b0, b1 = f.baseline
        assert abs(b1 - 1.5) < 3 * f.fit.standard_errors["b1"]
        assert abs(b0 - 300.0) < 3 * f.fit.standard_errors["b0"]

    def test_too_many_lines_flagged(self):
        line = LorentzianLine(655.0, 3.0, 1e5)
        sp = simulate_spectrum([PolarizedLine(line)], None, GRID)
        f = fit_spectrum(sp, n_lines=3)
        assert not f.fit.converged

    def test_sorted_with_consistent_errors(self):
        sp = simulate_spectrum([PolarizedLine(l) for l in four_lines()], None, GRID, noise_seed=5)
        f = fit_spectrum(sp)
        centers = [l.center for l in f.lines]
        assert centers == sorted(centers)
        assert [f.fit.parameters[f"c{i}"] for i in range(4)] == centers
        errs = f.center_errors()
        assert errs == sorted(errs[:2]) + errs[2:] or all(e > 0 for e in errs)
        assert errs[0] < errs[2] and errs[1] < errs[3]

    def test_z_values(self):
        l = lambda a: LorentzianLine(650.0, 1.0, a)
        assert z_from_spectrum([l(1.0), l(1.0)]) == 0.5
        assert z_from_spectrum([l(2.0), l(1.0)]) == pytest.approx(2 / 3)
        zero = SimpleNamespace(area=0.0)
        with pytest.raises(ValueError):
            z_from_spectrum([zero, zero])

    def test_round_trip(self):
        lines = four_lines()
        truth = {}
        for i, l in enumerate(lines):
            truth.update({f"c{i}": l.center, f"w{i}": l.fwhm, f"A{i}": l.area})
        hits = 0
        for seed in range(N_TRIALS):
            sp = simulate_spectrum([PolarizedLine(l) for l in lines], None, GRID, noise_seed=seed)
            hits += within(fit_spectrum(sp).fit, truth)
        assert hits >= 95


# --------------------------------------------------------------------------
# pinning workflow

def test_pinning_workflow():
    rng = np.random.default_rng(7)
    truth_sat = SaturationParams(1.5e6, 1.0, 1e5)
    _, fit = fit_saturation(POWERS, rng.poisson(saturation_curve(POWERS, truth_sat)).astype(float))
    sat = SaturationParams(fit["i_sat"], fit["p_sat"], fit["c_back"])
    P = 0.3
    p = signal_fraction_at_power(P, sat, dark_rate=150.0)
    assert p == pytest.approx(signal_fraction_at_power(P, truth_sat, 150.0), rel=0.05)

    sp = simulate_spectrum([PolarizedLine(l) for l in four_lines(0.35)], None, GRID, noise_seed=7)
    z = z_from_spectrum(fit_spectrum(sp).lines)
    assert z == pytest.approx(0.35, abs=0.02)

    true_p = signal_fraction_at_power(P, truth_sat, 150.0)
    params = DoubleDefectParams(0.35, SHAPE, DetectionParams(true_p, 0.49))
    f = fit_g2(poisson_g2(params, g2_edges(), 300.0, rng), p=p, z=z, sigma=0.49)
    got = f.params.shared
    for name in ("tau1", "tau2", "a"):
        assert getattr(got, name) == pytest.approx(getattr(SHAPE, name), rel=0.10)
