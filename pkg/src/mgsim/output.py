"""Run output: column-oriented time series and deterministic CSV emission."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

FLOAT_FMT = "{:.12g}"   # 12 significant digits; write->read->write is a fixed point


@dataclass
class TimeSeries:
    columns: list
    rows: list = field(default_factory=list)       # row-major floats
    meta: dict = field(default_factory=dict)       # str -> str, no timestamps

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate column names")

    def append(self, row):
        if len(row) != len(self.columns):
            raise ValueError(f"row arity {len(row)} != {len(self.columns)} columns")
        self.rows.append(list(row))

    def index(self, name: str) -> int:
        return self.columns.index(name)

    def column(self, name: str) -> list:
        i = self.index(name)
        return [r[i] for r in self.rows]

    @property
    def times(self) -> list:
        return self.column("t")

    def validate(self):
        t = self.times
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("time column must be strictly increasing")

    def window_mean(self, name: str, t_min: float) -> float:
        """Mean of a column over rows with t >= t_min."""
        i = self.index(name)
        it = self.index("t")
        vals = [r[i] for r in self.rows if r[it] >= t_min]
        if not vals:
            raise ValueError(f"no samples at t >= {t_min}")
        return sum(vals) / len(vals)

    def steady(self, name: str, fraction: float = 0.1) -> float:
        """Mean of the final `fraction` of the run (steady-state estimate)."""
        t = self.times
        t_min = t[-1] - fraction * (t[-1] - t[0])
        return self.window_mean(name, t_min)

    def device_kinds(self) -> dict:
        """id -> kind mapping recorded in the metadata."""
        out = {}
        spec = self.meta.get("devices", "")
        for part in spec.split(","):
            if "=" in part:
                ident, kind = part.split("=", 1)
                out[ident.strip()] = kind.strip()
        return out


def serialize_csv(ts: TimeSeries) -> str:
    buf = io.StringIO()
    for key in sorted(ts.meta):
        buf.write(f"# {key}: {ts.meta[key]}\n")
    buf.write(",".join(ts.columns))
    buf.write("\n")
    for row in ts.rows:
        buf.write(",".join(FLOAT_FMT.format(v) for v in row))
        buf.write("\n")
    return buf.getvalue()


def write_csv(ts: TimeSeries, destination) -> int:
    """Write the series as CSV; returns bytes written.

    destination may be a path or a binary file object. Metadata goes into
    leading ``# key: value`` lines; the data section is header + rows with
    12-significant-digit values and \\n newlines.
    """
    data = serialize_csv(ts).encode()
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        Path(destination).write_bytes(data)
    return len(data)


def read_csv(source) -> TimeSeries:
    """Inverse of write_csv (path, text, or file object)."""
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode()
    else:
        p = Path(source)
        text = p.read_text() if p.exists() else str(source)
    meta = {}
    columns = None
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                k, v = body.split(":", 1)
                meta[k.strip()] = v.strip()
            continue
        if columns is None:
            columns = [c.strip() for c in line.split(",")]
            continue
        rows.append([float(v) for v in line.split(",")])
    if columns is None:
        raise ValueError("CSV has no header row")
    ts = TimeSeries(columns=columns, meta=meta)
    for r in rows:
        ts.append(r)
    return ts
