"""Run configuration: plain ``section.key = value`` text with a fixed schema."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

__all__ = ["ConfigError", "RunConfig", "SCHEMA", "SCENARIOS", "parse_config", "load_config",
           "OUTPUT_DIR_ENV"]

#: Environment variable naming the default output directory.
OUTPUT_DIR_ENV = "PHOTONSTATS_OUTPUT_DIR"


class ConfigError(ValueError):
    """Unknown key, bad value or malformed line in a run configuration."""


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _opt_float(text: str) -> Optional[float]:
    return None if text.strip() in ("", "none") else float(text)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _int(text: str) -> int:
    # accept 1e9-style literals for picosecond durations
    v = float(text) if any(c in text for c in ".eE") else int(text)
    if int(v) != v:
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


# key -> (parser, default text, is_path)
SCHEMA: dict[str, tuple[Callable[[str], Any], str, bool]] = {
    "run.seed": (_int, "1", False),
    "run.output_dir": (str, "", True),
    "run.scenario": (_choice("custom", "single", "double", "double_background"), "custom", False),
    "run.timestamp_format": (_choice("pht", "csv"), "pht", False),

    "emitter.k_rad": (float, "0.3", False),
    "emitter.k_isc": (float, "0.01", False),
    "emitter.k_res": (float, "0.001", False),
    "emitter.pump_per_mw": (float, "0.028181818181818183", False),
    "emitter2.k_rad": (_opt_float, "", False),
    "emitter2.k_isc": (_opt_float, "", False),
    "emitter2.k_res": (_opt_float, "", False),

    "source.n_emitters": (_int, "1", False),
    "source.z": (float, "0.5", False),
    "source.power_mw": (float, "0.3", False),
    "source.background_per_mw": (float, "0.0", False),
    "source.mode": (_choice("cw", "pulsed"), "cw", False),
    "source.rep_period_ps": (_int, "100000", False),
    "source.pulse_width_ps": (_int, "200", False),

    "detection.efficiency": (float, "0.1", False),
    "detection.jitter_ps": (float, "346.4823227814083", False),
    "detection.dark_rate": (float, "150.0", False),
    "detection.dead_time_ps": (_int, "0", False),

    "acquisition.duration_ps": (_int, "4000000000000", False),

    "correlate.bins": (_choice("linear", "hybrid"), "linear", False),
    "correlate.bin_width_ps": (_int, "2048", False),
    "correlate.tau_max_ps": (_int, "8000000", False),
    "correlate.normalization": (_choice("rate", "plateau"), "rate", False),
    "correlate.plateau_from_ps": (_opt_float, "", False),

    "tcspc.bin_width_ps": (_int, "64", False),
    "tcspc.offset_ps": (_int, "-5000", False),

    "saturation.powers_mw": (_floats, "0.05,0.1,0.2,0.3,0.5,0.7,1.0,1.5,2.0,3.0,5.0,8.0", False),
    "saturation.dwell_ps": (_int, "100000000000", False),

    "spectrum.zpl_nm": (float, "650.0", False),
    "spectrum.zpl_split_mev": (float, "12.0", False),
    "spectrum.sideband1_mev": (float, "158.0", False),
    "spectrum.sideband2_mev": (float, "174.0", False),
    "spectrum.zpl_fwhm_nm": (float, "3.0", False),
    "spectrum.sideband_fwhm_nm": (float, "8.0", False),
    "spectrum.sideband_ratio": (float, "0.3", False),
    "spectrum.total_area": (float, "200000.0", False),
    "spectrum.grid_start_nm": (float, "620.0", False),
    "spectrum.grid_stop_nm": (float, "780.0", False),
    "spectrum.grid_step_nm": (float, "0.1", False),
    "spectrum.baseline": (_floats, "0.0,0.0", False),
    "spectrum.fit_baseline": (_bool, "false", False),

    "fit.sigma_ns": (_opt_float, "0.49", False),
    "fit.tau_max_ns": (_opt_float, "", False),
    "fit.lifetime_mode": (_choice("exact", "printed"), "exact", False),

    "checks.z_abs": (float, "0.02", False),
    "checks.p_rel": (float, "0.05", False),
    "checks.g2_rel": (float, "0.10", False),
    "checks.saturation_rel": (float, "0.05", False),
}

#: Canned scenarios; their values sit between the schema defaults and user keys.
SCENARIOS: dict[str, dict[str, str]] = {
    "single": {"source.n_emitters": "1"},
    "double": {"source.n_emitters": "2", "source.z": "0.4"},
    "double_background": {"source.n_emitters": "2", "source.z": "0.4",
                          "source.background_per_mw": "390000.0",
                          "spectrum.baseline": "300.0,1.5", "spectrum.fit_baseline": "true"},
}


@dataclass
class RunConfig:
    """Typed view of a configuration; ``values`` maps ``section.key`` to parsed values."""
    values: dict[str, Any]
    text: dict[str, str]
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def section(self, name: str) -> dict[str, Any]:
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.values.items() if k.startswith(pre)}

    def with_overrides(self, overrides: Mapping[str, str]) -> "RunConfig":
        text = dict(self.text)
        text.update(overrides)
        return _build(text, self.base_dir)

    def output_dir(self, cli_value: Optional[str] = None) -> Path:
        """``--output-dir``, else ``run.output_dir``, else the environment default, else cwd."""
        if cli_value:
            return Path(cli_value).resolve()
        if self.values["run.output_dir"]:
            return Path(self.values["run.output_dir"])
        env = os.environ.get(OUTPUT_DIR_ENV)
        return Path(env).resolve() if env else Path.cwd()

    def dumps(self) -> str:
        """Every key with its resolved value, one per line."""
        lines = []
        for key in SCHEMA:
            val = self.values[key]
            if isinstance(val, tuple):
                shown = ",".join(repr(v) for v in val)
            elif val is None:
                shown = ""
            elif isinstance(val, bool):
                shown = "true" if val else "false"
            elif isinstance(val, float):
                shown = repr(val)
            else:
                shown = str(val)
            lines.append(f"{key} = {shown}".rstrip())
        return "\n".join(lines) + "\n"

    def write(self, path: os.PathLike) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def _build(text: Mapping[str, str], base_dir: Path) -> RunConfig:
    merged = {k: d for k, (_, d, _) in SCHEMA.items()}
    scenario = text.get("run.scenario", merged["run.scenario"])
    if scenario in SCENARIOS:
        merged.update(SCENARIOS[scenario])
    merged.update(text)
    values = {}
    for key, raw in merged.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        parser, _, is_path = SCHEMA[key]
        try:
            val = parser(raw.strip())
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        if is_path and val:
            p = Path(val).expanduser()
            val = str(p if p.is_absolute() else (base_dir / p).resolve())
        values[key] = val
    _validate(values)
    return RunConfig(values, dict(text), base_dir)


def _validate(v: dict) -> None:
    if v["source.n_emitters"] not in (1, 2):
        raise ConfigError("source.n_emitters must be 1 or 2")
    if not 0 < v["source.z"] < 1:
        raise ConfigError("source.z must lie strictly between 0 and 1")
    if not 0 < v["detection.efficiency"] <= 1:
        raise ConfigError("detection.efficiency must lie in (0, 1]")
    if v["acquisition.duration_ps"] < 0:
        raise ConfigError("acquisition.duration_ps must be >= 0")
    if len(v["spectrum.baseline"]) != 2:
        raise ConfigError("spectrum.baseline needs offset,slope")
    if len(v["saturation.powers_mw"]) < 4:
        raise ConfigError("saturation.powers_mw needs at least four powers")


def parse_config(source: str, base_dir: Optional[os.PathLike] = None) -> RunConfig:
    """Parse configuration text; ``#`` starts a comment."""
    text: dict[str, str] = {}
    for lineno, line in enumerate(source.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or "." not in key:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        if key in text:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        text[key] = val.strip()
    return _build(text, Path(base_dir) if base_dir else Path.cwd())


def load_config(path: Optional[os.PathLike] = None) -> RunConfig:
    """Read a configuration file; ``None`` gives the defaults."""
    if path is None:
        return parse_config("")
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), p.resolve().parent)
