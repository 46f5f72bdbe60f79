"""Tabular report output (CSV or JSON) with fixed 12-significant-digit floats."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, fields, is_dataclass
from pathlib import Path

from .errors import ConfigError

FLOAT_DIGITS = 12
FORMATS = ("csv", "json")


def _as_dict(rec) -> dict:
    if is_dataclass(rec):
        return asdict(rec)
    if isinstance(rec, dict):
        return dict(rec)
    raise ConfigError(f"cannot report a {type(rec).__name__}")


def columns_of(records) -> list[str]:
    first = records[0]
    if is_dataclass(first):
        return [f.name for f in fields(first)]
    cols = list(first)
    for r in records[1:]:
        cols += [k for k in r if k not in cols]
    return cols


def fmt_float(v: float) -> str:
    return f"{v:.{FLOAT_DIGITS}g}"


def _cell(v):
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return fmt_float(v)
    if v is None:
        return ""
    if hasattr(v, "item"):  # numpy scalar
        return _cell(v.item())
    return str(v)


def _json_value(v):
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return v
    if hasattr(v, "item"):
        return _json_value(v.item())
    if isinstance(v, float):
        if not math.isfinite(v):
            return fmt_float(v)
        return float(fmt_float(v))
    return str(v)


def render(records, fmt: str = "csv") -> str:
    """Report text; identical input gives byte-identical output."""
    if not records:
        raise ConfigError("no records to report")
    if fmt not in FORMATS:
        raise ConfigError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    rows = [_as_dict(r) for r in records]
    cols = columns_of(records)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in cols])
        return buf.getvalue()
    data = [{c: _json_value(r.get(c)) for c in cols} for r in rows]
    return json.dumps(data, indent=1) + "\n"


def emit_report(records, fmt: str, out_path) -> Path:
    """Write ``records`` (dataclasses or dicts) to ``out_path``; returns the path."""
    text = render(records, fmt)
    out = Path(out_path)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    return out


def _parse(s: str):
    if s == "":
        return None
    if s in ("True", "False"):
        return s == "True"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_report(path, record_type=None, fmt: str | None = None) -> list:
    """Read a report back; rows become ``record_type`` instances when given."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    if fmt == "json":
        rows = json.loads(path.read_text())
        for r in rows:
            for k, v in r.items():
                if isinstance(v, str) and v in ("inf", "-inf", "nan"):
                    r[k] = float(v)
    else:
        with path.open(newline="") as fh:
            rows = [{k: _parse(v) for k, v in r.items()} for r in csv.DictReader(fh)]
    if record_type is None:
        return rows
    return [record_type(**r) for r in rows]


def round_sig(v, digits: int = FLOAT_DIGITS):
    """``v`` as it reads back from a report (floats at ``digits`` significant digits)."""
    if isinstance(v, float) and math.isfinite(v):
        return float(f"{v:.{digits}g}")
    return v
