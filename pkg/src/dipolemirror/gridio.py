"""Plain-text grid files with a JSON header line.

One grid per file: a first line '# {...}' carrying metadata (rows, cols,
and whatever the owning type needs), then one whitespace-separated row of
values per line. Invalid pixels are written as nan.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DomainError

__all__ = ["write_grid", "read_grid"]


def write_grid(path, values: np.ndarray, header: dict):
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DomainError("grid must be two-dimensional")
    meta = dict(header)
    meta["rows"] = int(values.shape[0])
    meta["cols"] = int(values.shape[1])
    lines = ["# " + json.dumps(meta, sort_keys=True)]
    lines += [" ".join(f"{v:.9e}" for v in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid(path):
    """Return (values, header) from a grid file written by write_grid."""
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# {"):
        raise DomainError(f"{path}: missing JSON header line")
    header = json.loads(text[0][2:])
    rows = []
    for raw in text[1:]:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(tok) for tok in line.split()])
    values = np.array(rows, dtype=float)
    if values.shape != (header.get("rows"), header.get("cols")):
        raise DomainError(
            f"{path}: grid shape {values.shape} disagrees with header "
            f"({header.get('rows')}, {header.get('cols')})"
        )
    return values, header
