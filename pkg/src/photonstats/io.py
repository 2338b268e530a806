"""Readers and writers for timestamp, histogram, spectrum and report files.

Floats are written with ``repr`` so every file survives a read/write
round trip byte for byte.  Timestamp files come in two flavours, chosen
by extension: ``.csv`` text or the ``PHT1`` binary layout

    magic  b"PHT1"
    u16    channel_count
    u64    duration_ps
    per channel: u64 event_count, then event_count x u64 times_ps

with all integers little-endian.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .correlate import CorrelationHistogram, DecayHistogram
from .simulate import TimestampStream
from .spectra import Spectrum

__all__ = [
    "FormatError", "MAGIC",
    "write_timestamps", "read_timestamps",
    "write_histogram", "read_histogram",
    "write_decay", "read_decay",
    "write_spectrum", "read_spectrum",
    "write_saturation", "read_saturation",
    "write_kv", "read_kv",
    "write_table", "read_table",
    "fmt",
]

MAGIC = b"PHT1"
PathLike = Union[str, os.PathLike]


class FormatError(ValueError):
    """Malformed input file; ``offset`` is the byte position of the problem."""

    def __init__(self, path, offset: int, what: str):
        self.path, self.offset = str(path), int(offset)
        super().__init__(f"{path}: byte {offset}: {what}")


def fmt(v) -> str:
    """Text form of one value: ``repr`` for floats, ``str`` for the rest."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# --------------------------------------------------------------------------
# timestamps

def _is_csv(path: PathLike) -> bool:
    return Path(path).suffix.lower() == ".csv"


def write_timestamps(path: PathLike, streams: Sequence[TimestampStream]) -> None:
    """Write one or more channels sharing one acquisition duration."""
    streams = list(streams)
    if not streams:
        raise ValueError("nothing to write")
    duration = streams[0].duration
    if any(s.duration != duration for s in streams):
        raise ValueError("all channels must share one duration")
    if _is_csv(path):
        lines = [f"# duration_ps={duration}", f"# channels={len(streams)}", "channel,time_ps"]
        for idx, s in enumerate(streams):
            lines.extend(f"{idx},{t}" for t in s.times.tolist())
        Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
        return
    if len(streams) > 0xFFFF:
        raise ValueError("too many channels")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HQ", len(streams), duration))
        for s in streams:
            fh.write(struct.pack("<Q", s.times.size))
            fh.write(s.times.astype("<u8").tobytes())


def read_timestamps(path: PathLike) -> list[TimestampStream]:
    """Read every channel of a timestamp file; channel ids are 0, 1, ..."""
    if _is_csv(path):
        return _read_timestamps_csv(path)
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(path, 0, f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 14:
        raise FormatError(path, len(data), "truncated header")
    n_ch, duration = struct.unpack_from("<HQ", data, 4)
    pos = 14
    out = []
    for ch in range(n_ch):
        if pos + 8 > len(data):
            raise FormatError(path, pos, f"truncated event count of channel {ch}")
        (n,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        end = pos + 8 * n
        if end > len(data):
            raise FormatError(path, pos, f"channel {ch} announces {n} events past end of file")
        t = np.frombuffer(data, dtype="<u8", count=n, offset=pos).astype(np.int64)
        _check_times(path, t, duration, pos, 8)
        out.append(TimestampStream(t, duration, ch))
        pos = end
    if pos != len(data):
        raise FormatError(path, pos, "trailing bytes after last channel")
    return out


def _check_times(path, t, duration, base, stride, offsets=None):
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if bad.size:
        k = int(bad[0]) + 1
        off = offsets[k] if offsets is not None else base + stride * k
        raise FormatError(path, off, "timestamps not strictly increasing")
    out = np.nonzero((t < 0) | (t > duration))[0]
    if out.size:
        k = int(out[0])
        off = offsets[k] if offsets is not None else base + stride * k
        raise FormatError(path, off, "timestamp outside [0, duration]")


def _lines(path: PathLike):
    """(byte offset, text) of every line."""
    data = Path(path).read_bytes()
    pos = 0
    for raw in data.split(b"\n"):
        start = pos
        pos += len(raw) + 1
        if raw.endswith(b"\r"):
            raw = raw[:-1]
        try:
            yield start, raw.decode("ascii")
        except UnicodeDecodeError:
            raise FormatError(path, start, "non-ASCII content") from None


def _parse_table(path: PathLike, header: Sequence[str], optional: Sequence[str] = (),
                 any_extra: bool = False):
    """Comment dict, column names and rows (with offsets) of a CSV file."""
    meta, cols, rows, offsets = {}, None, [], []
    for off, line in _lines(path):
        if not line.strip():
            continue
        if line.startswith("#"):
            if cols is not None:
                raise FormatError(path, off, "comment after header row")
            key, sep, val = line[1:].strip().partition("=")
            if not sep:
                raise FormatError(path, off, "comment lines must read '# key=value'")
            meta[key.strip()] = val.strip()
            continue
        fields = line.split(",")
        if cols is None:
            cols = [f.strip() for f in fields]
            want = list(header)
            unknown = [c for c in cols[len(want):] if c not in optional]
            if cols[: len(want)] != want or (unknown and not any_extra):
                raise FormatError(path, off, f"header must be {','.join(want)}")
            continue
        if len(fields) != len(cols):
            raise FormatError(path, off, f"expected {len(cols)} fields, found {len(fields)}")
        rows.append(fields)
        offsets.append(off)
    if cols is None:
        raise FormatError(path, 0, "missing header row")
    return meta, cols, rows, offsets


def _column(path, rows, offsets, j, kind):
    out = []
    for fields, off in zip(rows, offsets):
        try:
            out.append(kind(fields[j]))
        except ValueError:
            raise FormatError(path, off, f"cannot parse {fields[j]!r}") from None
    return np.array(out, dtype=np.int64 if kind is int else float)


def _meta_int(path, meta, key, default=None):
    if key not in meta:
        if default is None:
            raise FormatError(path, 0, f"missing '# {key}=' line")
        return default
    try:
        return int(meta[key])
    except ValueError:
        raise FormatError(path, 0, f"bad value for {key}") from None


def _read_timestamps_csv(path):
    meta, _, rows, offsets = _parse_table(path, ["channel", "time_ps"])
    ch = _column(path, rows, offsets, 0, int)
    t = _column(path, rows, offsets, 1, int)
    duration = _meta_int(path, meta, "duration_ps", int(t.max()) if t.size else 0)
    offsets = np.asarray(offsets)
    out = []
    n_ch = _meta_int(path, meta, "channels", int(ch.max()) + 1 if ch.size else 1)
    if ch.size and (ch.min() < 0 or ch.max() >= n_ch):
        k = int(np.argmax((ch < 0) | (ch >= n_ch)))
        raise FormatError(path, int(offsets[k]), f"channel id {ch[k]} outside 0..{n_ch - 1}")
    for c in range(n_ch):
        sel = ch == c
        _check_times(path, t[sel], duration, 0, 0, offsets[sel])
        out.append(TimestampStream(t[sel], duration, c))
    return out


# --------------------------------------------------------------------------
# generic tables

def write_table(path: PathLike, columns: Mapping[str, Iterable], meta: Optional[Mapping] = None) -> None:
    """CSV with optional ``# key=value`` lines, a header row and one row per entry."""
    lines = [f"# {k}={fmt(v)}" for k, v in (meta or {}).items()]
    names = list(columns)
    lines.append(",".join(names))
    cols = [np.asarray(columns[n]) for n in names]
    n = cols[0].shape[0] if cols else 0
    if any(c.shape[0] != n for c in cols):
        raise ValueError("columns differ in length")
    conv = [c.tolist() for c in cols]
    for i in range(n):
        lines.append(",".join(fmt(c[i]) for c in conv))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_table(path: PathLike, header: Sequence[str],
               extra: bool = False) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a CSV written by :func:`write_table`; all columns as float.

    ``header`` lists the leading columns; further columns are accepted
    only with ``extra=True``.
    """
    meta, cols, rows, offsets = _parse_table(path, header, any_extra=extra)
    return meta, {c: _column(path, rows, offsets, j, float) for j, c in enumerate(cols)}


# --------------------------------------------------------------------------
# histograms

_HIST_COLS = ["tau_ps", "counts", "g2", "g2_err", "bin_lo_ps", "bin_hi_ps"]


def write_histogram(path: PathLike, hist: CorrelationHistogram) -> None:
    e = hist.bin_edges
    write_table(path, {
        "tau_ps": hist.centers,
        "counts": hist.counts,
        "g2": hist.g2.astype(float),
        "g2_err": hist.g2_err.astype(float),
        "bin_lo_ps": e[:-1],
        "bin_hi_ps": e[1:],
    }, meta=dict(normalization=hist.normalization, norm_constant=float(hist.norm_constant),
                 duration_ps=hist.duration, n_start=hist.n_start, n_stop=hist.n_stop))


def read_histogram(path: PathLike) -> CorrelationHistogram:
    meta, cols, rows, offsets = _parse_table(path, _HIST_COLS)
    lo = _column(path, rows, offsets, 4, int)
    hi = _column(path, rows, offsets, 5, int)
    if lo.size == 0:
        raise FormatError(path, 0, "histogram has no bins")
    bad = np.nonzero(lo[1:] != hi[:-1])[0]
    if bad.size:
        raise FormatError(path, offsets[bad[0] + 1], "bins are not contiguous")
    if np.any(hi <= lo):
        raise FormatError(path, offsets[int(np.argmax(hi <= lo))], "empty or reversed bin")
    try:
        norm_c = float(meta.get("norm_constant", "nan"))
    except ValueError:
        raise FormatError(path, 0, "bad norm_constant") from None
    return CorrelationHistogram(
        np.append(lo, hi[-1]), _column(path, rows, offsets, 1, int),
        _column(path, rows, offsets, 2, float), _column(path, rows, offsets, 3, float),
        meta.get("normalization", "rate"), norm_c,
        _meta_int(path, meta, "duration_ps", 0), _meta_int(path, meta, "n_start", 0),
        _meta_int(path, meta, "n_stop", 0))


_DECAY_COLS = ["t_ns", "counts", "bin_lo_ps", "bin_hi_ps"]


def write_decay(path: PathLike, hist: DecayHistogram) -> None:
    e = hist.bin_edges
    write_table(path, {"t_ns": hist.centers_ns, "counts": hist.counts,
                       "bin_lo_ps": e[:-1], "bin_hi_ps": e[1:]},
                meta=dict(sync_period_ps=hist.sync_period, total_sweeps=hist.total_sweeps))


def read_decay(path: PathLike) -> DecayHistogram:
    meta, cols, rows, offsets = _parse_table(path, _DECAY_COLS)
    lo = _column(path, rows, offsets, 2, int)
    hi = _column(path, rows, offsets, 3, int)
    if lo.size == 0:
        raise FormatError(path, 0, "histogram has no bins")
    bad = np.nonzero(lo[1:] != hi[:-1])[0]
    if bad.size:
        raise FormatError(path, offsets[bad[0] + 1], "bins are not contiguous")
    return DecayHistogram(np.append(lo, hi[-1]), _column(path, rows, offsets, 1, int),
                          _meta_int(path, meta, "sync_period_ps"),
                          _meta_int(path, meta, "total_sweeps", 0))


# --------------------------------------------------------------------------
# spectra and saturation scans

def write_spectrum(path: PathLike, spec: Spectrum) -> None:
    meta = {} if spec.analyzer_angle is None else {"analyzer_angle_deg": float(spec.analyzer_angle)}
    write_table(path, {"wavelength_nm": spec.wavelengths, "counts": spec.counts}, meta)


def read_spectrum(path: PathLike) -> Spectrum:
    meta, cols = read_table(path, ["wavelength_nm", "counts"])
    angle = meta.get("analyzer_angle_deg")
    lam = cols["wavelength_nm"]
    if np.any(np.diff(lam) <= 0):
        raise FormatError(path, 0, "wavelength grid must be strictly ascending")
    return Spectrum(lam, cols["counts"], None if angle is None else float(angle))


def write_saturation(path: PathLike, power, rate, integration_time: float = 1.0) -> None:
    write_table(path, {"power_mw": np.asarray(power, float), "rate_cps": np.asarray(rate, float)},
                meta=dict(integration_time_s=float(integration_time)))


def read_saturation(path: PathLike) -> tuple[np.ndarray, np.ndarray, float]:
    meta, cols = read_table(path, ["power_mw", "rate_cps"])
    try:
        t_int = float(meta.get("integration_time_s", "1.0"))
    except ValueError:
        raise FormatError(path, 0, "bad integration_time_s") from None
    return cols["power_mw"], cols["rate_cps"], t_int


# --------------------------------------------------------------------------
# key = value text

def write_kv(path: PathLike, items: Mapping) -> None:
    """Human-readable ``key = value`` lines; nested mappings become ``[section]`` blocks."""
    lines = []
    flat = [(k, v) for k, v in items.items() if not isinstance(v, Mapping)]
    lines.extend(f"{k} = {fmt(v)}" for k, v in flat)
    for k, v in items.items():
        if isinstance(v, Mapping):
            lines.append(f"[{k}]")
            lines.extend(f"{kk} = {fmt(vv)}" for kk, vv in v.items())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _value(text: str):
    if text in ("true", "false"):
        return text == "true"
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def read_kv(path: PathLike) -> dict:
    """Inverse of :func:`write_kv`; values parsed as bool, int, float or str."""
    out: dict = {}
    section = out
    data = Path(path).read_bytes()
    pos = 0
    for raw in data.split(b"\n"):
        off = pos
        pos += len(raw) + 1
        line = raw.decode("utf-8").strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = out.setdefault(line[1:-1].strip(), {})
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise FormatError(path, off, "expected 'key = value'")
        section[key.strip()] = _value(val.strip())
    return out
