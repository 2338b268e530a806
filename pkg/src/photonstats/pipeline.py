"""End-to-end reproduction: saturation scan, spectrum, g2 with pinned parameters.

The scene is built from a :class:`~photonstats.config.RunConfig`: one or
two emitters sharing the same kinetics, pumped at ``pump_per_mw * P``, with
the intensity split ``z`` set through their relative collection
efficiencies, plus background proportional to power and detector dark
counts.  Each stage fits what a lab would measure and the final g2 fit uses
``p``, ``z`` and ``sigma`` from the earlier stages.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import io
from .config import RunConfig
from .correlate import correlate, hybrid_bins, linear_bins
from .fitting.drivers import fit_g2, fit_saturation, fit_spectrum, z_from_spectrum
from .fitting.lsq import FitInputError
from .models import (HC_MEV_NM, SaturationParams, ThreeLevelRates,
                     line_separations, rates_to_g2_params, saturation_from_rates,
                     signal_fraction_at_power, wavelength_to_energy)
from .simulate import SimulationConfig, simulate, simulate_spectrum, split_hbt
from .spectra import LorentzianLine, PolarizedLine

__all__ = ["PipelineError", "StageResult", "PipelineResult", "emitter_rates",
           "simulation_config", "spectrum_lines", "derive_seed", "run_pipeline", "bins_from_config"]

_STAGE_KEYS = {"saturation": 1, "spectrum": 2, "g2": 3, "split": 4}


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage, self.cause = stage, cause
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass
class StageResult:
    name: str
    values: dict[str, Any]
    checks: dict[str, bool] = field(default_factory=dict)
    converged: bool = True

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


@dataclass
class PipelineResult:
    scenario: str
    stages: list[StageResult]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.stages)

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.stages)

    def stage(self, name: str) -> StageResult:
        return next(s for s in self.stages if s.name == name)

    def as_report(self) -> dict:
        rep: dict[str, Any] = {"scenario": self.scenario, "passed": self.passed,
                               "converged": self.converged}
        for s in self.stages:
            block = dict(s.values)
            block.update({f"check_{k}": v for k, v in s.checks.items()})
            rep[s.name] = block
        return rep


def derive_seed(seed: int, *key: int) -> int:
    """Independent 63-bit child seed for a pipeline stage."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def emitter_rates(cfg: RunConfig, power: float, index: int = 0) -> ThreeLevelRates:
    """Kinetic rates of emitter ``index`` at excitation power ``power`` (mW)."""
    base = cfg.section("emitter")
    if index == 1:
        for k, v in cfg.section("emitter2").items():
            if v is not None:
                base[k] = v
    return ThreeLevelRates(base["pump_per_mw"] * power, base["k_rad"], base["k_isc"], base["k_res"])


def _relative_efficiencies(cfg: RunConfig) -> tuple[float, ...]:
    if cfg["source.n_emitters"] == 1:
        return ()
    z = cfg["source.z"]
    if z <= 0.5:
        return (z / (1.0 - z), 1.0)
    return (1.0, (1.0 - z) / z)


def simulation_config(cfg: RunConfig, power: float, duration: int, seed: int) -> SimulationConfig:
    """Acquisition at ``power`` with background ``background_per_mw * P + dark_rate``.

    With two emitters of equal kinetics, emitter 1 contributes the fraction
    ``source.z`` of the emitter photons.
    """
    n = cfg["source.n_emitters"]
    return SimulationConfig(
        duration=int(duration),
        emitters=tuple(emitter_rates(cfg, power, i) for i in range(n)),
        background_rate=cfg["source.background_per_mw"] * power + cfg["detection.dark_rate"],
        detection_efficiency=cfg["detection.efficiency"],
        jitter_sigma=cfg["detection.jitter_ps"],
        dead_time=cfg["detection.dead_time_ps"],
        seed=seed,
        mode=cfg["source.mode"],
        rep_period=cfg["source.rep_period_ps"],
        pulse_width=cfg["source.pulse_width_ps"],
        emitter_efficiency=_relative_efficiencies(cfg),
    )


def spectrum_lines(cfg: RunConfig) -> list[LorentzianLine]:
    """Generating lines: ZPL of emitter 1, its sideband, then the same for emitter 2."""
    s = cfg.section("spectrum")
    two = cfg["source.n_emitters"] == 2
    z = cfg["source.z"] if two else 1.0
    e1 = float(wavelength_to_energy(s["zpl_nm"]))
    e2 = e1 - s["zpl_split_mev"]
    A = s["total_area"] / (1.0 + s["sideband_ratio"])
    lines = [LorentzianLine(s["zpl_nm"], s["zpl_fwhm_nm"], z * A),
             LorentzianLine(HC_MEV_NM / (e1 - s["sideband1_mev"]), s["sideband_fwhm_nm"],
                            z * A * s["sideband_ratio"])]
    if two:
        lines += [LorentzianLine(HC_MEV_NM / e2, s["zpl_fwhm_nm"], (1 - z) * A),
                  LorentzianLine(HC_MEV_NM / (e2 - s["sideband2_mev"]), s["sideband_fwhm_nm"],
                                 (1 - z) * A * s["sideband_ratio"])]
    return sorted(lines, key=lambda ln: ln.center)


def bins_from_config(cfg: RunConfig) -> np.ndarray:
    c = cfg.section("correlate")
    if c["bins"] == "hybrid":
        return hybrid_bins(c["bin_width_ps"])
    return linear_bins(c["tau_max_ps"], c["bin_width_ps"])


def _rel(x, truth):
    return abs(x / truth - 1.0)


def _stage(name):
    def wrap(fn):
        def run(*args, **kw):
            try:
                return fn(*args, **kw)
            except PipelineError:
                raise
            except (ValueError, FitInputError, ArithmeticError, OSError) as exc:
                raise PipelineError(name, exc) from exc
        return run
    return wrap


@_stage("saturation")
def _saturation_stage(cfg: RunConfig, out: Path, seed: int):
    powers = np.array(cfg["saturation.powers_mw"])
    dwell = cfg["saturation.dwell_ps"]
    rates = []
    for i, P in enumerate(powers):
        sc = simulation_config(cfg, P, dwell, derive_seed(seed, _STAGE_KEYS["saturation"], i))
        rates.append(len(simulate(sc)) / (dwell * 1e-12))
    rates = np.array(rates)
    t_int = dwell * 1e-12
    io.write_saturation(out / "saturation.csv", powers, rates, t_int)
    params, fit = fit_saturation(powers, rates, t_int)

    n = cfg["source.n_emitters"]
    rel = _relative_efficiencies(cfg) or (1.0,)
    eff = cfg["detection.efficiency"]
    beta = cfg["emitter.pump_per_mw"]
    truth = [saturation_from_rates(emitter_rates(cfg, 0.0, i), beta, eff * rel[i]) for i in range(n)]
    i_true = sum(t.i_sat for t in truth)
    p_true = truth[0].p_sat
    P_op = cfg["source.power_mw"]
    dark = cfg["detection.dark_rate"]
    p_fit = signal_fraction_at_power(P_op, params, dark)
    true_sat = SaturationParams(i_true, p_true, cfg["source.background_per_mw"])
    p_model = signal_fraction_at_power(P_op, true_sat, dark)
    values = dict(i_sat=params.i_sat, i_sat_err=fit.standard_errors["i_sat"], i_sat_true=i_true,
                  p_sat=params.p_sat, p_sat_err=fit.standard_errors["p_sat"], p_sat_true=p_true,
                  c_back=params.c_back, c_back_err=fit.standard_errors["c_back"],
                  c_back_true=true_sat.c_back, redchi=fit.redchi,
                  p_at_operating_power=p_fit, p_model=p_model, message=fit.message)
    se = fit.standard_errors["c_back"]
    checks = {"i_sat_within": _rel(params.i_sat, i_true) <= cfg["checks.saturation_rel"],
              "p_sat_within": _rel(params.p_sat, p_true) <= cfg["checks.saturation_rel"],
              "c_back_detection": (params.c_back > 3 * se) == (true_sat.c_back > 0)}
    return StageResult("saturation", values, checks, converged=fit.converged), p_fit


@_stage("spectrum")
def _spectrum_stage(cfg: RunConfig, out: Path, seed: int):
    s = cfg.section("spectrum")
    gen = spectrum_lines(cfg)
    grid = np.arange(s["grid_start_nm"], s["grid_stop_nm"] + 0.5 * s["grid_step_nm"], s["grid_step_nm"])
    baseline = tuple(s["baseline"]) if any(s["baseline"]) else None
    spec = simulate_spectrum([PolarizedLine(ln, 0.0, 0.0) for ln in gen], None, grid,
                             noise_seed=derive_seed(seed, _STAGE_KEYS["spectrum"]), baseline=baseline)
    io.write_spectrum(out / "spectrum.csv", spec)
    fit = fit_spectrum(spec, len(gen), baseline=s["fit_baseline"])
    centers = [ln.center for ln in fit.lines]
    values = {f"center{i + 1}_nm": c for i, c in enumerate(centers)}
    values.update({f"center{i + 1}_true_nm": ln.center for i, ln in enumerate(gen)})
    values.update({f"delta_e1{i + 1}_mev": float(d) for i, d in enumerate(line_separations(centers)) if i})
    checks = {"centers": max(abs(a - b.center) for a, b in zip(centers, gen)) <= 0.2}
    if cfg["source.n_emitters"] == 2:
        # ZPLs are the two bluest lines
        z = z_from_spectrum(fit.lines, (0, 1))
        values["z"] = z
    else:
        z = 0.0
        values["z"] = 0.0
    values["redchi"] = fit.fit.redchi
    values["message"] = fit.fit.message
    return StageResult("spectrum", values, checks, converged=fit.fit.converged), z


@_stage("g2")
def _g2_stage(cfg: RunConfig, out: Path, seed: int, p_fit: float, z_spec: float):
    P_op = cfg["source.power_mw"]
    sc = simulation_config(cfg, P_op, cfg["acquisition.duration_ps"], derive_seed(seed, _STAGE_KEYS["g2"]))
    stream = simulate(sc)
    ext = "csv" if cfg["run.timestamp_format"] == "csv" else "pht"
    io.write_timestamps(out / f"stream.{ext}", [stream])
    a, b = split_hbt(stream, derive_seed(seed, _STAGE_KEYS["split"]))
    hist = correlate(a, b, bins_from_config(cfg), cfg["correlate.normalization"],
                     cfg["correlate.plateau_from_ps"])
    io.write_histogram(out / "g2_histogram.csv", hist)
    sigma = cfg["fit.sigma_ns"]
    if sigma is None:
        raise ValueError("fit.sigma_ns (IRF width) is required for the g2 fit")
    two = cfg["source.n_emitters"] == 2
    res = fit_g2(hist, p_fit, z_spec, sigma, tau_max=cfg["fit.tau_max_ns"])
    truth = rates_to_g2_params(emitter_rates(cfg, P_op))
    d = res.double
    rel = cfg["checks.g2_rel"]
    values = {}
    for k in ("tau1", "tau2", "a"):
        values[k] = d[k]
        values[f"{k}_err"] = d.standard_errors[k]
        values[f"{k}_true"] = getattr(truth, k)
    z_true = stream.realized_z() if two else 0.0
    p_true = stream.realized_p()
    values.update(photons=len(stream), z_pinned=z_spec, z_true=z_true, p_pinned=p_fit, p_true=p_true,
                  sigma_pinned=sigma, redchi_double=d.redchi, redchi_single=res.single.redchi,
                  zero_delay_residual=res.zero_delay_residual, message=d.message)
    checks = {f"{k}_within": _rel(d[k], getattr(truth, k)) <= rel for k in ("tau1", "tau2", "a")}
    checks["z_within"] = abs(z_spec - z_true) <= cfg["checks.z_abs"]
    checks["p_within"] = _rel(p_fit, p_true) <= cfg["checks.p_rel"]
    converged = d.converged
    if not two:
        free = fit_g2(hist, p_fit, 0.0, sigma, tau_max=cfg["fit.tau_max_ns"], fit_z=True)
        values["z_free"] = free.params.z
        values["z_free_err"] = free.double.standard_errors["z"]
        checks["z_free_consistent_with_zero"] = free.params.z <= cfg["checks.z_abs"]
        converged = converged and free.double.converged
    return StageResult("g2", values, checks, converged=converged)


def run_pipeline(cfg: RunConfig, out_dir: Path, seed: Optional[int] = None) -> PipelineResult:
    """Run all stages for one scenario, writing every intermediate file to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if seed is not None:
        cfg = cfg.with_overrides({"run.seed": str(seed)})
    cfg.write(out / "run_config.txt")
    seed = cfg["run.seed"]
    sat, p_fit = _saturation_stage(cfg, out, seed)
    spec, z_spec = _spectrum_stage(cfg, out, seed)
    g2 = _g2_stage(cfg, out, seed, p_fit, z_spec)
    result = PipelineResult(cfg["run.scenario"], [sat, spec, g2])
    io.write_kv(out / "pipeline_report.txt", result.as_report())
    return result

