"""Functional datasets: CSV with a JSON-encoded functional column."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .functional import Functional, functional_from_dict

__all__ = ["Dataset", "read_dataset", "write_dataset", "format_float"]


def format_float(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class Dataset:
    functionals: tuple
    values: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.functionals)

    def prefix(self, n: int) -> "Dataset":
        """The first ``n`` data pairs (nested-data projection)."""
        if not 0 <= n <= len(self):
            raise ValueError(f"prefix length {n} outside [0, {len(self)}]")
        vals = None if self.values is None else self.values[:n].copy()
        return Dataset(self.functionals[:n], vals)


def _rows(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    return list(csv.DictReader(lines))


def read_dataset(path, require_values: bool = True) -> Dataset:
    """Read ``functional,value`` rows; ``#`` lines are comments."""
    text = Path(path).read_text()
    rows = _rows(text)
    if rows and "functional" not in rows[0]:
        raise ValueError(f"{path}: missing 'functional' column")
    Ls, vals = [], []
    for i, row in enumerate(rows, start=2):
        try:
            Ls.append(functional_from_dict(json.loads(row["functional"])))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}: bad functional on row {i}: {exc}") from exc
        v = row.get("value")
        if v not in (None, ""):
            vals.append(float(v))
    if require_values and len(vals) != len(Ls):
        raise ValueError(f"{path}: every row needs a value")
    values = np.array(vals) if len(vals) == len(Ls) and Ls else (np.zeros(0) if not Ls else None)
    return Dataset(tuple(Ls), values)


def write_dataset(path, functionals: Sequence[Functional], values=None, header: Sequence[str] = ()):
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["functional", "value"] if values is not None else ["functional"])
    for k, L in enumerate(functionals):
        cell = json.dumps(L.to_dict(), separators=(",", ":"))
        w.writerow([cell, format_float(values[k])] if values is not None else [cell])
    Path(path).write_text(buf.getvalue())
