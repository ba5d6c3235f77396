"""File formats: CSV traces and tables, JSON reports, atomic writes.

CSV files may start with ``#``-prefixed metadata lines of the form
``# key = value``; third-party readers can skip them as comments. The
first non-comment line is the header.
"""

from __future__ import annotations

import json
import math
import os
import tempfile

import numpy as np

from .core import DomainError, Spectrum

SPECTRUM_COLUMNS = ("frequency_hz", "delta_i_a")
TRANSMISSION_COLUMNS = ("frequency_hz", "t_linear")
POWER_COLUMNS = ("frequency_hz", "power_dbm", "clipped")
PEAK_COLUMNS = ("b_set_t", "f_r_hz", "sigma_f_hz")
MAP_COLUMNS = ("x_nm", "y_nm", "density", "detected", "amplitude_a", "sigma_amplitude_a", "f_r_hz")


class FormatError(DomainError):
    """Malformed input file; the message names the offending line."""


def atomic_write_text(path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x) -> str:
    return repr(float(x))


def format_csv(columns, rows, meta: dict | None = None) -> str:
    lines = [f"# {k} = {v}" for k, v in (meta or {}).items()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _num(v) for v in row))
    return "\n".join(lines) + "\n"


def parse_csv(text: str, columns, source: str = "<csv>", optional=(),
              allow_nan: bool = False) -> tuple[dict, list[str], np.ndarray]:
    """Parse a numeric CSV with optional ``#`` metadata.

    ``columns`` must all be present in the header; names in ``optional``
    may also appear. ``allow_nan`` admits ``nan`` cells. Returns
    (meta, header, data) with data shaped (rows, len(header)).
    """
    meta: dict[str, str] = {}
    header = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body and header is None:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            missing = [c for c in columns if c not in cells]
            extra = [c for c in cells if c not in columns and c not in optional]
            if missing or extra:
                raise FormatError(f"{source}:{lineno}: expected header {','.join(columns)}, got {line!r}")
            header = cells
            continue
        if len(cells) != len(header):
            raise FormatError(f"{source}:{lineno}: expected {len(header)} fields, got {len(cells)}")
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise FormatError(f"{source}:{lineno}: non-numeric value in {line!r}") from None
        if not all(math.isfinite(v) or (allow_nan and math.isnan(v)) for v in vals):
            raise FormatError(f"{source}:{lineno}: non-finite value in {line!r}")
        rows.append(vals)
    if header is None:
        raise FormatError(f"{source}: no header line")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return meta, header, data


def read_text(path) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def sniff_header(text: str) -> list[str] | None:
    for raw in text.splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            return [c.strip() for c in line.split(",")]
    return None


# --- spectra -----------------------------------------------------------------

def _meta_value(v: str):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def spectrum_to_csv(s: Spectrum) -> str:
    return format_csv(SPECTRUM_COLUMNS, zip(s.freqs, s.values), dict(s.meta))


def spectrum_from_csv(text: str, source: str = "<csv>") -> Spectrum:
    meta, header, data = parse_csv(text, SPECTRUM_COLUMNS, source)
    cols = [header.index(c) for c in SPECTRUM_COLUMNS]
    if len(data) < 2:
        raise FormatError(f"{source}: a spectrum needs at least two rows")
    f, v = data[:, cols[0]], data[:, cols[1]]
    if np.any(np.diff(f) <= 0):
        bad = int(np.argmax(np.diff(f) <= 0)) + 1
        raise FormatError(f"{source}: frequencies not strictly increasing at data row {bad + 1}")
    return Spectrum(f, v, {k: _meta_value(x) for k, x in meta.items()})


def write_spectrum(path, s: Spectrum) -> None:
    atomic_write_text(path, spectrum_to_csv(s))


def read_spectrum(path) -> Spectrum:
    return spectrum_from_csv(read_text(path), os.fspath(path))


# --- RF tables ---------------------------------------------------------------

def read_transmission_csv(path) -> tuple[np.ndarray, np.ndarray]:
    _, header, data = parse_csv(read_text(path), TRANSMISSION_COLUMNS, os.fspath(path))
    return data[:, header.index("frequency_hz")], data[:, header.index("t_linear")]


def transmission_to_csv(freqs, t_linear, meta=None) -> str:
    return format_csv(TRANSMISSION_COLUMNS, zip(freqs, t_linear), meta)


def power_table_to_csv(table, meta=None) -> str:
    rows = ((f, p, "1" if c else "0") for f, p, c in zip(table.freqs, table.power_dbm, table.clipped))
    return format_csv(POWER_COLUMNS, rows, meta)


def read_power_table(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    _, header, data = parse_csv(read_text(path), POWER_COLUMNS[:2], os.fspath(path), optional=("clipped",))
    clipped = data[:, header.index("clipped")] > 0 if "clipped" in header else np.zeros(len(data), bool)
    return data[:, header.index("frequency_hz")], data[:, header.index("power_dbm")], clipped


def peaks_to_csv(rows, meta=None) -> str:
    return format_csv(PEAK_COLUMNS, rows, meta)


def read_peaks(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    _, header, data = parse_csv(read_text(path), PEAK_COLUMNS, os.fspath(path))
    return tuple(data[:, header.index(c)] for c in PEAK_COLUMNS)


# --- JSON --------------------------------------------------------------------

def to_jsonable(obj):
    """Plain-Python copy of ``obj``; NaN and infinities become None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    atomic_write_text(path, dumps(obj))


def read_json(path, source: str | None = None):
    try:
        return json.loads(read_text(path))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{source or os.fspath(path)}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def map_to_csv(points, meta=None) -> str:
    rows = ((p.x, p.y, p.density, "1" if p.detected else "0", p.amplitude, p.sigma_amplitude, p.f_r)
            for p in points)
    return format_csv(MAP_COLUMNS, rows, meta)


def read_map(path) -> dict[str, np.ndarray]:
    _, header, data = parse_csv(read_text(path), MAP_COLUMNS, os.fspath(path), allow_nan=True)
    return {c: data[:, header.index(c)] for c in MAP_COLUMNS}
