"""Sample CSV files.

Column order is ``chain, iter`` followed by ``b[1]..b[p]``, ``rho[1]..rho[m]``,
``scale`` and, when monitored, ``mu[1]..mu[n]``.  The reader also accepts
exports from other tools: any header of the form ``node[index]`` or a bare
scalar node name is recognised, and ``chain``/``iter`` columns are optional.
"""

from __future__ import annotations

import csv
import io
import re
from pathlib import Path

import numpy as np

from .data import fmt_num
from .errors import SchemaError
from .sampler import SampleStore

_NODE = re.compile(r"^\s*([A-Za-z_.][A-Za-z0-9_.]*)\s*(?:\[\s*(\d+)\s*\])?\s*$")


def samples_csv_text(store: SampleStore) -> str:
    buf = io.StringIO()
    header = ["chain", "iter", *store.columns()]
    buf.write(",".join(header) + "\n")
    mat = store.matrix()
    for r in range(store.n_draws):
        cells = [str(int(store.chain[r]) + 1), str(int(store.iteration[r]))]
        cells += [fmt_num(v) for v in mat[r]]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def write_samples_csv(store: SampleStore, path: str | Path) -> None:
    Path(path).write_text(samples_csv_text(store), encoding="utf-8")


def parse_samples_csv(text: str, source: str = "<samples>") -> SampleStore:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(f"{source}: empty samples file") from None
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    try:
        mat = np.array([[float(c) for c in r] for r in rows], dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise SchemaError(f"{source}: non-numeric or ragged samples ({exc})") from None

    nodes: dict[str, dict[int, int]] = {}
    chain_col = iter_col = None
    for j, h in enumerate(header):
        if h.lower() == "chain":
            chain_col = j
            continue
        if h.lower() in ("iter", "iteration"):
            iter_col = j
            continue
        m = _NODE.match(h)
        if m is None:
            raise SchemaError(f"{source}: unrecognised column {h!r}")
        name, idx = m.group(1), int(m.group(2)) if m.group(2) else 1
        if idx in nodes.setdefault(name, {}):
            raise SchemaError(f"{source}: duplicate column {h!r}")
        nodes[name][idx] = j

    draws = {}
    for name, cols in nodes.items():
        dim = max(cols)
        if sorted(cols) != list(range(1, dim + 1)):
            raise SchemaError(f"{source}: node {name!r} has gaps in its indices")
        draws[name] = mat[:, [cols[i] for i in range(1, dim + 1)]]
    if "rho" not in draws and "lambda" in draws:
        draws["rho"] = np.log(draws["lambda"])

    chain = mat[:, chain_col].astype(np.int64) - 1 if chain_col is not None else np.zeros(len(rows), np.int64)
    iters = mat[:, iter_col].astype(np.int64) if iter_col is not None else np.arange(1, len(rows) + 1)
    order = ["b", "rho", "scale", "mu"]
    names = [n for n in order if n in draws] + [n for n in draws if n not in order]
    return SampleStore(names=names, draws=draws, chain=chain, iteration=iters)


def read_samples_csv(path: str | Path) -> SampleStore:
    return parse_samples_csv(Path(path).read_text(encoding="utf-8"), str(path))
