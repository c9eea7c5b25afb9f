"""Reader for the sausagelab result CSV (the wire format between tools).

The column set and order are a fixed contract; a file with any other
header is rejected, naming the first offending column.  Rows are kept as
plain dicts with floats parsed; nothing is ever written back.
"""

from __future__ import annotations

CSV_COLUMNS = ("experiment", "kind", "t", "delta", "r_sausage", "n_paths",
               "n_walkers", "seed", "mean", "std_error", "n", "wall_time_s",
               "diag_escape_rate", "diag_clip_count")

_FLOAT_COLUMNS = {"t", "delta", "r_sausage", "mean", "std_error",
                  "wall_time_s", "diag_escape_rate"}
_INT_COLUMNS = {"n_paths", "n_walkers", "seed", "n", "diag_clip_count"}


class SchemaError(ValueError):
    """Input file does not follow the result-CSV contract."""


def read_rows(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = lines[0].split(",")
    for i, (got, want) in enumerate(zip(header, CSV_COLUMNS)):
        if got != want:
            raise SchemaError(
                f"{path}: column {i} is {got!r}, expected {want!r}")
    if len(header) != len(CSV_COLUMNS):
        raise SchemaError(
            f"{path}: expected {len(CSV_COLUMNS)} columns, got {len(header)}")
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise SchemaError(f"{path}:{ln}: wrong field count")
        row: dict = {}
        for key, raw in zip(CSV_COLUMNS, parts):
            if key in _FLOAT_COLUMNS:
                row[key] = float(raw)
            elif key in _INT_COLUMNS:
                row[key] = int(raw)
            else:
                row[key] = raw
        rows.append(row)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def select(rows: list[dict], prefix: str) -> list[dict]:
    """Rows whose experiment id starts with the prefix, in file order."""
    return [r for r in rows if r["experiment"].startswith(prefix)]
