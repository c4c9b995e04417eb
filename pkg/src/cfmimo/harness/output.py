"""Tabular results: CSV with 17 significant digits plus an exact JSON mirror."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else format_value(v)
    return v


class Table:
    """Ordered columns and rows; every row must fill every column."""

    def __init__(self, columns):
        if len(set(columns)) != len(columns):
            raise ValueError("duplicate column names")
        self.columns = list(columns)
        self.rows: list[dict] = []

    def add(self, **row):
        missing = set(self.columns) - set(row)
        extra = set(row) - set(self.columns)
        if missing or extra:
            raise ValueError(f"row mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return [r[name] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([format_value(r[c]) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"columns": self.columns,
               "rows": [[_json_value(r[c]) for c in self.columns] for r in self.rows]}
        return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def read_csv(text: str) -> tuple[list[str], list[list[str]]]:
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], rows[1:]


def write_results(table: Table, path, mirror: bool = True) -> list[Path]:
    """Write CSV (or JSON when the suffix is .json); ``mirror`` adds the other format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    as_json = path.suffix.lower() == ".json"
    path.write_text(table.to_json() if as_json else table.to_csv())
    written = [path]
    if mirror:
        other = path.with_suffix(".csv" if as_json else ".json")
        other.write_text(table.to_csv() if as_json else table.to_json())
        written.append(other)
    return written
