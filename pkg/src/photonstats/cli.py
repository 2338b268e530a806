"""Command-line entry point: ``photonstats {simulate,correlate,tcspc,fit,pipeline}``.

Exit codes: 0 success, 1 pipeline ran but a recovery check failed,
2 input, format or configuration error, 3 fit did not converge (the report
is still written), 4 I/O failure.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io
from .config import SCENARIOS, ConfigError, RunConfig, load_config
from .correlate import correlate, hybrid_bins, linear_bins, tcspc_histogram
from .fitting.drivers import (compare_models, fit_g2, fit_lifetime, fit_saturation, fit_spectrum,
                              z_from_spectrum)
from .fitting.lsq import FitInputError, FitResult
from .models import (DetectionParams, DoubleDefectParams, G2Params, g2_double_defect,
                     lifetime_model, line_separations, rates_to_g2_params, saturation_curve,
                     signal_fraction_at_power)
from .pipeline import PipelineError, run_pipeline, simulation_config
from .simulate import simulate, split_hbt
from .spectra import lorentzian_sum

EXIT_OK, EXIT_CHECKS, EXIT_INPUT, EXIT_NOCONV, EXIT_IO = 0, 1, 2, 3, 4


class _Fail(Exception):
    def __init__(self, code: int, msg: str):
        self.code = code
        super().__init__(msg)


def _out_dir(args, cfg: Optional[RunConfig] = None) -> Path:
    d = (cfg or load_config()).output_dir(args.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config)
    overrides = {}
    for item in args.set or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = val.strip()
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = str(args.seed)
    return cfg.with_overrides(overrides) if overrides else cfg


def _fit_report(fit: FitResult, model: str, extra: Optional[dict] = None) -> dict:
    rep = {"model": model, "converged": fit.converged, "message": fit.message,
           "chi2": fit.chi2, "dof": fit.dof, "redchi": fit.redchi, "aic": fit.aic,
           "n_iterations": fit.n_iterations,
           "parameters": dict(fit.parameters), "standard_errors": dict(fit.standard_errors)}
    if extra:
        rep.update(extra)
    return rep


# --------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    cfg.write(out / "run_config.txt")
    P = cfg["source.power_mw"]
    sc = simulation_config(cfg, P, cfg["acquisition.duration_ps"], cfg["run.seed"])
    if sc.duration == 0:
        print("warning: duration is 0, writing an empty stream", file=sys.stderr)
    stream = simulate(sc)
    ext = "csv" if cfg["run.timestamp_format"] == "csv" else "pht"
    path = out / f"stream.{ext}"
    io.write_timestamps(path, [stream])
    truth: dict = {"stream": path.name, "seed": cfg["run.seed"], "mode": sc.mode,
                   "duration_ps": sc.duration, "photons": len(stream),
                   "n_emitters": len(sc.emitters), "power_mw": P,
                   "background_rate": sc.background_rate, "jitter_sigma_ps": sc.jitter_sigma,
                   "coincidence_sigma_ns": float(np.sqrt(2.0) * sc.jitter_sigma / 1000.0),
                   "z_config": cfg["source.z"] if len(sc.emitters) == 2 else 0.0}
    if len(stream):
        truth["p_realized"] = stream.realized_p()
        if len(sc.emitters) == 2:
            truth["z_realized"] = stream.realized_z()
    for i, r in enumerate(sc.emitters):
        block = {"k_exc": r.k_exc, "k_rad": r.k_rad, "k_isc": r.k_isc, "k_res": r.k_res,
                 "efficiency": sc.efficiency_of(i), "lifetime_ns": 1.0 / (r.k_rad + r.k_isc)}
        if sc.mode == "cw" and r.k_exc > 0:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                g = rates_to_g2_params(r)
            block.update(tau1=g.tau1, tau2=g.tau2, a=g.a)
        truth[f"emitter{i + 1}"] = block
    io.write_kv(out / "stream_truth.txt", truth)
    print(f"wrote {path} ({len(stream)} events)")
    return EXIT_OK


# --------------------------------------------------------------------------
# correlate / tcspc

def _read_streams(paths: Sequence[str]):
    streams = []
    for p in paths:
        streams.extend(io.read_timestamps(p))
    return streams


def cmd_correlate(args) -> int:
    streams = _read_streams(args.inputs)
    if len(streams) == 1:
        a, b = split_hbt(streams[0], args.split_seed)
        source = "hbt_split"
    elif len(streams) == 2:
        a, b = streams
        if a.duration != b.duration:
            raise _Fail(EXIT_INPUT, "the two channels have different durations")
        source = "cross"
    else:
        raise _Fail(EXIT_INPUT, f"expected one or two channels, found {len(streams)}")
    if args.bins == "hybrid":
        edges = hybrid_bins(args.bin_width_ps)
    else:
        edges = linear_bins(args.tau_max_ps, args.bin_width_ps)
    hist = correlate(a, b, edges, args.normalization, args.plateau_from_ps)
    out = Path(args.output) if args.output else _out_dir(args) / "g2_histogram.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_histogram(out, hist)
    io.write_kv(out.with_name(out.stem + "_options.txt"), {
        "inputs": ",".join(str(Path(p).resolve()) for p in args.inputs), "source": source,
        "bins": args.bins, "bin_width_ps": args.bin_width_ps, "tau_max_ps": args.tau_max_ps,
        "normalization": args.normalization,
        "plateau_from_ps": "" if args.plateau_from_ps is None else args.plateau_from_ps,
        "split_seed": args.split_seed})
    print(f"wrote {out} ({len(edges) - 1} bins, {int(hist.counts.sum())} pairs)")
    return EXIT_OK


def cmd_tcspc(args) -> int:
    streams = _read_streams(args.inputs)
    s = streams[args.channel]
    hist = tcspc_histogram(s, args.sync_period_ps, args.bin_width_ps, args.offset_ps)
    out = Path(args.output) if args.output else _out_dir(args) / "decay_histogram.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_decay(out, hist)
    print(f"wrote {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# fit

def _finish_fit(args, kind: str, report: dict, curve: dict, converged: bool) -> int:
    out = _out_dir(args)
    io.write_kv(out / f"fit_{kind}_report.txt", report)
    io.write_table(out / f"fit_{kind}_curve.csv", curve)
    print(f"wrote {out / f'fit_{kind}_report.txt'}")
    if not converged:
        print(f"fit did not converge: {report.get('message', '')}", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


def cmd_fit_g2(args) -> int:
    if args.sigma is None:
        raise _Fail(EXIT_INPUT, "fit g2 needs --sigma: the IRF width in ns from an independent "
                                "measurement (it is pinned, not fitted)")
    hist = io.read_histogram(args.input)
    res = fit_g2(hist, args.p, args.z, args.sigma, tau_max=args.tau_max_ns, fit_z=args.fit_z)
    d = res.double
    extra = {"pinned": {"p": args.p, "z": res.params.z if args.fit_z else args.z, "sigma_ns": args.sigma},
             "comparison": {"single_chi2": res.single.chi2, "single_dof": res.single.dof,
                            "single_redchi": res.single.redchi, "double_redchi": d.redchi,
                            "chi2_ratio": res.chi2_ratio, "single_tau1": res.single["tau1"],
                            "single_tau2": res.single["tau2"], "single_a": res.single["a"],
                            "zero_delay_residual": res.zero_delay_residual,
                            "zero_window_ns": res.zero_window}}
    report = _fit_report(d, "double_defect_g2", extra)
    sel = res.fit_mask
    tau = hist.centers_ns[sel]
    model = g2_double_defect(tau, res.params)
    single = g2_double_defect(tau, DoubleDefectParams(0.0, G2Params(res.single["tau1"], res.single["tau2"],
                                                                     res.single["a"]),
                                                      DetectionParams(args.p, args.sigma)))
    curve = {"tau_ns": tau, "g2": hist.g2[sel], "g2_err": hist.g2_err[sel],
             "model_double": model, "model_single": single}
    return _finish_fit(args, "g2", report, curve, d.converged and res.single.converged)


def _decay_input(args):
    path = Path(args.input)
    if path.suffix.lower() == ".csv":
        try:
            return io.read_decay(path)
        except io.FormatError as exc:
            if "header" not in str(exc):
                raise
    if args.sync_period_ps is None:
        raise _Fail(EXIT_INPUT, "timestamp input needs --sync-period-ps")
    s = io.read_timestamps(path)[0]
    return tcspc_histogram(s, args.sync_period_ps, args.bin_width_ps, args.offset_ps)


def cmd_fit_lifetime(args) -> int:
    if args.sigma is None:
        raise _Fail(EXIT_INPUT, "fit lifetime needs --sigma: the IRF width in ns")
    hist = _decay_input(args)
    t_range = None
    if args.t_min_ns is not None or args.t_max_ns is not None:
        x = hist.centers_ns
        t_range = (args.t_min_ns if args.t_min_ns is not None else x[0],
                   args.t_max_ns if args.t_max_ns is not None else x[-1])
    if args.n == "auto":
        cmp = compare_models(hist, args.sigma, args.mode, t_range)
        params, fit = cmp.bi if cmp.preferred == 2 else cmp.mono
        extra = {"comparison": {"preferred_n": cmp.preferred, "delta_chi2": cmp.delta_chi2,
                                "delta_aic": cmp.delta_aic, "chi2_ratio": cmp.chi2_ratio,
                                "mono_redchi": cmp.mono[1].redchi, "bi_redchi": cmp.bi[1].redchi,
                                "bi_message": cmp.bi[1].message}}
        converged = cmp.mono[1].converged and (cmp.bi[1].converged or cmp.bi[0].n == 1)
    else:
        params, fit = fit_lifetime(hist, int(args.n), args.sigma, args.mode, t_range)
        extra = {}
        converged = fit.converged
    extra["lifetimes"] = {f"t{i + 1}_ns": t for i, (_, t) in enumerate(params.components)}
    extra["mode"] = args.mode
    report = _fit_report(fit, f"lifetime_n{params.n}", extra)
    x = hist.centers_ns
    sel = np.ones(x.size, bool) if t_range is None else (x >= t_range[0]) & (x <= t_range[1])
    curve = {"t_ns": x[sel], "counts": hist.counts[sel],
             "model": lifetime_model(x[sel], params, args.mode)}
    return _finish_fit(args, "lifetime", report, curve, converged)


def cmd_fit_saturation(args) -> int:
    P, R, t_int = io.read_saturation(args.input)
    params, fit = fit_saturation(P, R, t_int)
    se = fit.standard_errors["c_back"]
    extra = {"c_back_significance": params.c_back / se if se > 0 else float("inf")}
    if args.power is not None:
        extra["p_at_power"] = signal_fraction_at_power(args.power, params, args.dark_rate)
    report = _fit_report(fit, "saturation", extra)
    curve = {"power_mw": P, "rate_cps": R, "model": saturation_curve(P, params)}
    return _finish_fit(args, "saturation", report, curve, fit.converged)


def cmd_fit_spectrum(args) -> int:
    spec = io.read_spectrum(args.input)
    res = fit_spectrum(spec, args.n, baseline=args.baseline)
    centers = [ln.center for ln in res.lines]
    extra = {"lines": {f"line{i + 1}": f"{ln.center!r} {ln.fwhm!r} {ln.area!r}"
                       for i, ln in enumerate(res.lines)},
             "separations_mev": {f"delta_e1{i + 1}": float(d)
                                 for i, d in enumerate(line_separations(centers)) if i}}
    if args.zpl and args.n >= 2:
        i, j = (int(v) for v in args.zpl.split(","))
        extra["z"] = z_from_spectrum(res.lines, (i, j))
    report = _fit_report(res.fit, f"lorentzian_x{args.n}", extra)
    model = lorentzian_sum(spec.wavelengths, res.lines)
    if res.baseline is not None:
        model = model + res.baseline[0] + res.baseline[1] * (spec.wavelengths - spec.wavelengths[0])
    curve = {"wavelength_nm": spec.wavelengths, "counts": spec.counts, "model": model}
    return _finish_fit(args, "spectrum", report, curve, res.fit.converged)


# --------------------------------------------------------------------------
# pipeline

def cmd_pipeline(args) -> int:
    base = _load_cfg(args)
    out = _out_dir(args, base)
    if args.scenario == "all" or (args.scenario is None and base["run.scenario"] == "custom"
                                  and args.config is None):
        names = list(SCENARIOS)
    elif args.scenario is not None:
        names = [args.scenario]
    else:
        names = [base["run.scenario"]]
    summary, ok, conv = {}, True, True
    for name in names:
        cfg = base if name == base["run.scenario"] else base.with_overrides({"run.scenario": name})
        target = out / name if len(names) > 1 else out
        try:
            res = run_pipeline(cfg, target)
        except PipelineError as exc:
            print(f"[{name}] {exc}", file=sys.stderr)
            code = EXIT_IO if isinstance(exc.cause, OSError) else EXIT_INPUT
            raise _Fail(code, f"scenario {name}: {exc}") from exc
        for st in res.stages:
            for check, passed in st.checks.items():
                print(f"[{name}] {st.name}.{check}: {'PASS' if passed else 'FAIL'}")
        summary[name] = {"passed": res.passed, "converged": res.converged}
        ok &= res.passed
        conv &= res.converged
    io.write_kv(out / "pipeline_summary.txt", summary)
    if not conv:
        return EXIT_NOCONV
    return EXIT_OK if ok else EXIT_CHECKS


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="photonstats", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=False):
        p.add_argument("-o", "--output-dir",
                       help="output directory (default: $PHOTONSTATS_OUTPUT_DIR or cwd)")
        if config:
            p.add_argument("-c", "--config", help="run configuration file (section.key = value)")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="override one configuration key; repeatable")
            p.add_argument("--seed", type=int, help="override run.seed")

    p = sub.add_parser("simulate", help="simulate a timestamp stream from a configuration")
    common(p, config=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("correlate", help="coincidence histogram and normalized g2")
    p.add_argument("inputs", nargs="+", help="timestamp file(s); one channel is HBT-split")
    p.add_argument("--bins", choices=("linear", "hybrid"), default="hybrid")
    p.add_argument("--bin-width-ps", type=int, default=256)
    p.add_argument("--tau-max-ps", type=int, default=1_000_000)
    p.add_argument("--normalization", choices=("rate", "plateau"), default="rate")
    p.add_argument("--plateau-from-ps", type=float)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--output", help="histogram CSV path")
    common(p)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("tcspc", help="decay histogram relative to a periodic sync")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--sync-period-ps", type=int, required=True)
    p.add_argument("--bin-width-ps", type=int, default=64)
    p.add_argument("--offset-ps", type=int, default=0)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--output")
    common(p)
    p.set_defaults(func=cmd_tcspc)

    fit = sub.add_parser("fit", help="fit a model to measured data")
    fsub = fit.add_subparsers(dest="kind", required=True)

    p = fsub.add_parser("g2", help="double-emitter g2 with pinned p, z and sigma")
    p.add_argument("input", help="histogram CSV")
    p.add_argument("--sigma", type=float, help="IRF width in ns (required)")
    p.add_argument("--p", type=float, default=1.0, help="signal fraction from the saturation fit")
    p.add_argument("--z", type=float, default=0.0, help="intensity fraction from the spectrum fit")
    p.add_argument("--tau-max-ns", type=float)
    p.add_argument("--fit-z", action="store_true", help="fit z instead of pinning it")
    common(p)
    p.set_defaults(func=cmd_fit_g2)

    p = fsub.add_parser("lifetime", help="one- or two-exponential TCSPC decay")
    p.add_argument("input", help="decay CSV or timestamp file")
    p.add_argument("--sigma", type=float, help="IRF width in ns (required)")
    p.add_argument("--n", choices=("auto", "1", "2"), default="auto")
    p.add_argument("--mode", choices=("exact", "printed"), default="exact")
    p.add_argument("--sync-period-ps", type=int)
    p.add_argument("--bin-width-ps", type=int, default=64)
    p.add_argument("--offset-ps", type=int, default=0)
    p.add_argument("--t-min-ns", type=float)
    p.add_argument("--t-max-ns", type=float)
    common(p)
    p.set_defaults(func=cmd_fit_lifetime)

    p = fsub.add_parser("saturation", help="count rate against power")
    p.add_argument("input")
    p.add_argument("--power", type=float, help="report the signal fraction p at this power (mW)")
    p.add_argument("--dark-rate", type=float, default=0.0)
    common(p)
    p.set_defaults(func=cmd_fit_saturation)

    p = fsub.add_parser("spectrum", help="sum of Lorentzian lines")
    p.add_argument("input")
    p.add_argument("--n", type=int, default=4, help="number of lines (default 4)")
    p.add_argument("--baseline", action="store_true", help="add a linear baseline")
    p.add_argument("--zpl", default="0,1", help="indices of the two ZPL lines for z")
    common(p)
    p.set_defaults(func=cmd_fit_spectrum)

    p = sub.add_parser("pipeline", help="saturation, spectrum and g2 stages end to end")
    p.add_argument("--scenario", choices=tuple(SCENARIOS) + ("all",))
    common(p, config=True)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except io.FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, FitInputError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        name = getattr(exc, "filename", None)
        where = f" ({name})" if name else ""
        print(f"I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
