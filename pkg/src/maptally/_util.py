"""Small shared helpers: fixed-point percentage rendering, file digests,
and the labeled-matrix CSV layout used by cross-tab and joint-spec files.
"""

from __future__ import annotations

import csv
import hashlib
import io
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np


def round_half_up(value, places: int = 2) -> Decimal:
    """Round to `places` decimals with ties away from zero (0.005 -> 0.01).

    Floats are converted through repr so the printed value, not the
    binary expansion, is what gets rounded.
    """
    if not isinstance(value, Decimal):
        # float() first: numpy scalars are float subclasses whose repr
        # Decimal cannot parse
        value = (Decimal(repr(float(value))) if isinstance(value, float)
                 else Decimal(value))
    quantum = Decimal(1).scaleb(-places)
    return value.quantize(quantum, rounding=ROUND_HALF_UP)


def format_percent(value, places: int = 2) -> str:
    """Render a percentage with a fixed number of decimals, half-up."""
    return f"{round_half_up(value, places):.{places}f}"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def iter_csv_rows(path):
    """Yield rows of a CSV file, skipping blank lines and '#' comments."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for row in csv.reader(_strip_comments(handle)):
            if row:
                yield row


def _strip_comments(lines):
    for line in lines:
        if line.strip() and not line.lstrip().startswith("#"):
            yield line


def read_labeled_matrix(path) -> tuple[list[str], list[str], np.ndarray]:
    """Read a matrix CSV: header of column labels, first column row labels.

    The top-left header cell is ignored. Returns (row_labels,
    col_labels, float64 matrix).
    """
    rows = list(iter_csv_rows(path))
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    col_labels = [cell.strip() for cell in rows[0][1:]]
    row_labels = []
    data = []
    for row in rows[1:]:
        if len(row) != len(col_labels) + 1:
            raise ValueError(
                f"{path}: row {row[0]!r} has {len(row) - 1} cells, "
                f"expected {len(col_labels)}"
            )
        row_labels.append(row[0].strip())
        data.append([float(cell) for cell in row[1:]])
    return row_labels, col_labels, np.asarray(data, dtype=np.float64)


def write_labeled_matrix(path_or_handle, row_labels, col_labels, cells,
                         corner: str = "class") -> None:
    """Write a matrix CSV in the layout read_labeled_matrix accepts.

    `cells` is a sequence of rows whose entries are written with str(),
    so callers control number formatting.
    """
    own = not isinstance(path_or_handle, io.IOBase)
    handle = (open(path_or_handle, "w", encoding="utf-8", newline="")
              if own else path_or_handle)
    try:
        writer = csv.writer(handle)
        writer.writerow([corner, *col_labels])
        for label, row in zip(row_labels, cells):
            writer.writerow([label, *[str(cell) for cell in row]])
    finally:
        if own:
            handle.close()


def read_key_values(path) -> dict:
    """Read a plain key=value file ('#' comments and blank lines skipped)."""
    result = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(
                    f"{path}:{lineno}: expected 'key=value', got {stripped!r}")
            key, _, value = stripped.partition("=")
            result[key.strip()] = value.strip()
    return result


def ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
