"""CSV ingestion.

Cells are parsed with Python's ``float`` (locale independent, ``.`` decimal
point).  Empty cells and ``NA``/``NaN`` become NaN so the assembler can drop
those rows; any other non-numeric cell in a requested column is an error.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataError

MISSING = frozenset({"", "NA", "na", "NaN", "nan", "NULL", "null", "."})


class Table:
    """Column-oriented CSV contents; columns stay as text until requested."""

    def __init__(self, header: list[str], rows: list[list[str]], source: str = "<table>"):
        self.header = header
        self.source = source
        self._raw = {name: [r[i] for r in rows] for i, name in enumerate(header)}
        self.n = len(rows)

    @property
    def columns(self) -> list[str]:
        return list(self.header)

    def numeric(self, name: str) -> np.ndarray:
        try:
            cells = self._raw[name]
        except KeyError:
            raise DataError(f"variable {name} not found") from None
        out = np.empty(len(cells))
        for i, cell in enumerate(cells):
            cell = cell.strip()
            if cell in MISSING:
                out[i] = np.nan
                continue
            try:
                out[i] = float(cell)
            except ValueError:
                raise DataError(
                    f"{self.source}: non-numeric value {cell!r} in column {name!r}, row {i + 1}"
                ) from None
        return out

    def to_numeric(self, names: Iterable[str]) -> dict[str, np.ndarray]:
        return {name: self.numeric(name) for name in names}


def read_csv(path: str | Path) -> Table:
    path = Path(path)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}"
                )
            rows.append(row)
    return Table(header, rows, str(path))


def write_csv(path_or_fh, header: list[str], columns: list[np.ndarray]) -> None:
    """Write numeric columns with shortest round-trip float formatting."""
    cols = [np.asarray(c) for c in columns]
    n = len(cols[0]) if cols else 0
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(fmt_num(c[i]) for c in cols))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_fh, "write"):
        path_or_fh.write(text)
    else:
        Path(path_or_fh).write_text(text, encoding="utf-8")


def fmt_num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)
