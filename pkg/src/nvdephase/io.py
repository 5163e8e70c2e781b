"""
File formats: coherence traces (CSV / JSON), posterior draws (CSV) and
results bundles (JSON). Every write goes to a temporary file in the target
directory and is moved into place with ``os.replace``.

Trace CSV layout::

    # phi_rad=0.5
    # seed=7
    # units: t_us=us, x=1, y=1
    t_us,x,y
    0.0,1.0,0.0

Columns are ``t_us, x, y`` or ``t_us, r``. The time column may instead be
``t_ns``, ``t_ms`` or ``t_s``; it is converted to microseconds.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DataIOError, ValidationError
from .trace import CoherenceTrace

TIME_COLUMNS = {"t_us": 1.0, "t_ns": 1e-3, "t_ms": 1e3, "t_s": 1e6}
TIME_UNITS = {"us": 1.0, "ns": 1e-3, "ms": 1e3, "s": 1e6}
SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# atomic writes
# ---------------------------------------------------------------------------

def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc
    return path


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(obj):
    # JSON has no inf/nan; encode them as strings so files stay standard
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=False, default=_json_default) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def read_json(path):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                              f"{exc.msg}") from None


def fingerprint(*parts) -> str:
    """sha256 over the canonical JSON of ``parts``."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, (bytes, bytearray)):
            h.update(part)
        else:
            h.update(json.dumps(_clean(part), sort_keys=True, default=_json_default).encode())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def _infer_format(path, format):
    if format:
        if format not in ("csv", "json"):
            raise ValidationError(f"format must be 'csv' or 'json', got {format!r}")
        return format
    suffix = Path(path).suffix.lower()
    return "json" if suffix == ".json" else "csv"


def trace_to_dict(trace: CoherenceTrace) -> dict:
    d = {"t_us": trace.times.tolist()}
    if trace.has_quadratures:
        d["x"] = trace.x.tolist()
        d["y"] = trace.y.tolist()
    if trace.r is not None:
        d["r"] = trace.r.tolist()
    d["phi_rad"] = trace.phi
    d["seed"] = trace.seed
    d["normalization"] = dict(trace.normalization)
    d["units"] = {"t_us": "us", "x": "1", "y": "1", "r": "1", "phi_rad": "rad"}
    return d


def trace_from_dict(d: dict, time_unit=None, calibration=None, source="<dict>") -> CoherenceTrace:
    if not isinstance(d, dict):
        raise ValidationError(f"{source}: trace must be a JSON object")
    tkey = next((k for k in TIME_COLUMNS if k in d), None)
    if tkey is None and "t" in d:
        tkey = "t"
    if tkey is None:
        raise ValidationError(f"{source}: missing time field (one of {sorted(TIME_COLUMNS)})")
    factor = _time_factor(tkey, time_unit, source)
    chans = {}
    for name in ("x", "y", "r"):
        if d.get(name) is not None:
            try:
                chans[name] = np.asarray(d[name], dtype=float)
            except (TypeError, ValueError):
                raise ValidationError(f"{source}: field {name!r} is not numeric") from None
    try:
        times = np.asarray(d[tkey], dtype=float) * factor
    except (TypeError, ValueError):
        raise ValidationError(f"{source}: field {tkey!r} is not numeric") from None
    norm = dict(d.get("normalization") or {"scale": 1.0, "offset": 0.0})
    chans, norm = _apply_calibration(chans, norm, calibration)
    try:
        return CoherenceTrace(times, phi=d.get("phi_rad", d.get("phi")), seed=d.get("seed"),
                              normalization=norm, **chans)
    except ValidationError as exc:
        raise ValidationError(f"{source}: {exc}") from None


def _time_factor(column, time_unit, source):
    if time_unit is not None:
        if time_unit not in TIME_UNITS:
            raise ValidationError(f"unknown time unit {time_unit!r}; use one of {sorted(TIME_UNITS)}")
        return TIME_UNITS[time_unit]
    if column in TIME_COLUMNS:
        return TIME_COLUMNS[column]
    raise ValidationError(f"{source}: time column {column!r} has no declared unit; "
                          "name it t_us/t_ns/t_ms/t_s or pass a time unit")


def _apply_calibration(chans, norm, calibration):
    """Map raw readout to normalized coherence: ``value = (raw - offset) / scale``."""
    if not calibration:
        return chans, norm
    scale = float(calibration.get("scale", 1.0))
    offset = float(calibration.get("offset", 0.0))
    if not scale or not math.isfinite(scale):
        raise ValidationError(f"calibration scale must be finite and non-zero, got {scale!r}")
    out = {}
    for name, v in chans.items():
        # quadratures are centred at zero; the offset only applies to magnitudes
        out[name] = (v - offset) / scale if name == "r" else v / scale
    return out, {"scale": scale, "offset": offset}


def _parse_comment(line, meta):
    body = line.lstrip("#").strip()
    if body.lower().startswith("units:"):
        meta["units"] = body[6:].strip()
        return
    if "=" in body:
        key, _, val = body.partition("=")
        meta[key.strip()] = val.strip()


def load_trace(path, format=None, time_unit=None, calibration=None) -> CoherenceTrace:
    """Read a trace from CSV or JSON.

    Parameters
    ----------
    path : str or Path
    format : {'csv', 'json'}, optional
        Inferred from the suffix when omitted.
    time_unit : {'us', 'ns', 'ms', 's'}, optional
        Overrides the unit implied by the time column name.
    calibration : dict, optional
        ``{"scale": s, "offset": o}`` for raw readout; stored values are
        ``(raw - o) / s``.

    Raises
    ------
    ValidationError
        Missing columns, malformed numbers (with line and column) or
        non-increasing / duplicated times (with the offending row).
    DataIOError
        The file cannot be read.
    """
    fmt = _infer_format(path, format)
    if fmt == "json":
        return trace_from_dict(read_json(path), time_unit, calibration, source=str(path))
    return _parse_csv(_read_text(path), str(path), time_unit, calibration)


def _parse_csv(text, source, time_unit=None, calibration=None):
    meta = {}
    header = None
    header_line = 0
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            _parse_comment(line, meta)
            continue
        cells = next(csv.reader([line]))
        cells = [c.strip() for c in cells]
        if header is None:
            header, header_line = cells, lineno
            continue
        if len(cells) != len(header):
            raise ValidationError(f"{source}: line {lineno}: expected {len(header)} columns, "
                                  f"got {len(cells)}")
        vals = []
        for col, cell in enumerate(cells, start=1):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ValidationError(f"{source}: line {lineno}, column {col} "
                                      f"({header[col - 1]}): malformed number {cell!r}") from None
        rows.append((lineno, vals))
    if header is None:
        raise ValidationError(f"{source}: no header row")
    if not rows:
        raise ValidationError(f"{source}: no data rows")
    tcol = next((c for c in header if c in TIME_COLUMNS or c == "t"), None)
    if tcol is None:
        raise ValidationError(f"{source}: line {header_line}: missing time column "
                              f"(one of {sorted(TIME_COLUMNS)})")
    has_xy = "x" in header and "y" in header
    if not has_xy and "r" not in header:
        raise ValidationError(f"{source}: line {header_line}: need columns x,y or r")
    factor = _time_factor(tcol, time_unit, source)
    data = np.array([v for _, v in rows])
    idx = {name: header.index(name) for name in header}
    times = data[:, idx[tcol]] * factor
    for k in range(1, times.size):
        if times[k] <= times[k - 1]:
            what = "duplicated timestamp" if times[k] == times[k - 1] else "time decreases"
            raise ValidationError(f"{source}: line {rows[k][0]} (data row {k}): {what} "
                                  f"{data[k, idx[tcol]]!r}")
    chans = {}
    if has_xy:
        chans["x"], chans["y"] = data[:, idx["x"]], data[:, idx["y"]]
    if "r" in idx:
        chans["r"] = data[:, idx["r"]]
    norm = {"scale": float(meta.get("scale", 1.0)), "offset": float(meta.get("offset", 0.0))}
    chans, norm = _apply_calibration(chans, norm, calibration)
    phi = meta.get("phi_rad")
    seed = meta.get("seed")
    try:
        return CoherenceTrace(times, phi=float(phi) if phi not in (None, "") else None,
                              seed=int(seed) if seed not in (None, "", "None") else None,
                              normalization=norm, **chans)
    except ValidationError as exc:
        raise ValidationError(f"{source}: {exc}") from None


def trace_to_csv(trace: CoherenceTrace) -> str:
    buf = _io.StringIO()
    if trace.phi is not None:
        buf.write(f"# phi_rad={_fmt(trace.phi)}\n")
    if trace.seed is not None:
        buf.write(f"# seed={int(trace.seed)}\n")
    norm = trace.normalization
    if norm != {"scale": 1.0, "offset": 0.0}:
        buf.write(f"# scale={_fmt(norm['scale'])}\n# offset={_fmt(norm['offset'])}\n")
    cols = ["t_us"]
    chans = [trace.times]
    if trace.has_quadratures:
        cols += ["x", "y"]
        chans += [trace.x, trace.y]
    if trace.r is not None:
        cols.append("r")
        chans.append(trace.r)
    units = {"t_us": "us", "x": "1", "y": "1", "r": "1"}
    buf.write("# units: " + ", ".join(f"{c}={units[c]}" for c in cols) + "\n")
    buf.write(",".join(cols) + "\n")
    for row in zip(*chans):
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def save_trace(trace: CoherenceTrace, path, format=None) -> Path:
    """Write a trace; float values use ``repr`` so a reload is exact."""
    fmt = _infer_format(path, format)
    if fmt == "json":
        return write_json(path, trace_to_dict(trace))
    return atomic_write_text(path, trace_to_csv(trace))


# ---------------------------------------------------------------------------
# draws
# ---------------------------------------------------------------------------

def draws_to_csv(samples, units=None) -> str:
    """One row per draw: chain, iteration, then one column per parameter."""
    units = units or {}
    buf = _io.StringIO()
    buf.write(f"# sampler={samples.sampler}\n# warmup={samples.warmup}\n")
    buf.write(f"# seed={samples.diagnostics.get('seed', '')}\n")
    buf.write("# units: chain=1, iteration=1, "
              + ", ".join(f"{n}={units.get(n, '1')}" for n in samples.names) + "\n")
    buf.write(",".join(["chain", "iteration"] + list(samples.names)) + "\n")
    C, N, _ = samples.chains.shape
    for c in range(C):
        block = samples.chains[c]
        for i in range(N):
            buf.write(f"{c},{samples.warmup + i}," + ",".join(_fmt(v) for v in block[i]) + "\n")
    return buf.getvalue()


def write_draws(samples, path, units=None) -> Path:
    return atomic_write_text(path, draws_to_csv(samples, units))


def read_draws(path):
    """Load a draws CSV back into :class:`PosteriorSamples`."""
    from .inference.samplers import PosteriorSamples

    text = _read_text(path)
    meta, header, rows = {}, None, []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            _parse_comment(line, meta)
            continue
        cells = line.split(",")
        if header is None:
            header = cells
            if header[:2] != ["chain", "iteration"]:
                raise ValidationError(f"{path}: line {lineno}: draws CSV must start with "
                                      "chain,iteration columns")
            continue
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise ValidationError(f"{path}: line {lineno}: malformed number") from None
    if header is None or not rows:
        raise ValidationError(f"{path}: no draws")
    arr = np.array(rows)
    chain_ids = arr[:, 0].astype(int)
    n_chains = int(chain_ids.max()) + 1
    counts = np.bincount(chain_ids, minlength=n_chains)
    if np.any(counts != counts[0]):
        raise ValidationError(f"{path}: chains have unequal draw counts {counts.tolist()}")
    chains = np.stack([arr[chain_ids == c, 2:] for c in range(n_chains)])
    seed = meta.get("seed")
    return PosteriorSamples(
        names=header[2:], chains=chains, seeds=[], acceptance=np.full(n_chains, np.nan),
        warmup=int(meta.get("warmup", 0) or 0), sampler=meta.get("sampler", "mh"),
        diagnostics={"seed": int(seed) if seed not in (None, "") else None})


# ---------------------------------------------------------------------------
# results bundle
# ---------------------------------------------------------------------------

@dataclass
class ResultsBundle:
    """Self-describing output of a fit or measurement run."""

    kind: str
    config: dict
    seed: int | None
    fingerprint: str = ""
    summaries: dict = field(default_factory=dict)
    nm_reports: list = field(default_factory=list)
    predictive: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    created_utc: str = ""
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "seed": self.seed,
            "input_fingerprint": self.fingerprint,
            "config": self.config,
            "summaries": self.summaries,
            "nm_reports": self.nm_reports,
            "predictive": self.predictive,
            "extra": self.extra,
            "created_utc": self.created_utc or datetime.now(timezone.utc).isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultsBundle":
        try:
            return cls(kind=d["kind"], config=d.get("config", {}), seed=d.get("seed"),
                       fingerprint=d.get("input_fingerprint", ""),
                       summaries=d.get("summaries", {}), nm_reports=d.get("nm_reports", []),
                       predictive=d.get("predictive", {}), extra=d.get("extra", {}),
                       created_utc=d.get("created_utc", ""),
                       schema_version=d.get("schema_version", SCHEMA_VERSION))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed results bundle: {exc}") from None

    def save(self, path) -> Path:
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "ResultsBundle":
        return cls.from_dict(read_json(path))


def load_config(path) -> dict:
    """Read a JSON run configuration."""
    cfg = read_json(path)
    if not isinstance(cfg, dict):
        raise ValidationError(f"{path}: configuration must be a JSON object")
    return cfg
