"""CSV matrix interchange and file digests for the command-line tools.

Format: comma-delimited, decimal-point numbers, no thousands separators.
A single header row is auto-detected when every cell of the first row is
non-numeric. Values are written with 17 significant digits, so a write/read
round-trip reproduces float64 matrices exactly.
"""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np

from .dataset import Dataset


class CsvFormatError(ValueError):
    """Malformed CSV input; message carries line/column locations."""


def _parse_cell(cell: str):
    try:
        return float(cell)
    except ValueError:
        return None


def read_matrix_csv(path) -> np.ndarray:
    """Read a numeric matrix, raising CsvFormatError with line/column diagnostics."""
    p = Path(path)
    if not p.exists():
        raise CsvFormatError(f"{p}: no such file")
    rows: list[list[float]] = []
    width: int | None = None
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        for line_no, cells in enumerate(reader, start=1):
            if not cells or (len(cells) == 1 and cells[0].strip() == ""):
                continue
            parsed = [_parse_cell(c.strip()) for c in cells]
            if line_no == 1 and all(v is None for v in parsed):
                continue  # header row
            for col_no, v in enumerate(parsed, start=1):
                if v is None:
                    raise CsvFormatError(
                        f"{p}: line {line_no}, column {col_no}: non-numeric cell {cells[col_no - 1]!r}"
                    )
                if not np.isfinite(v):
                    raise CsvFormatError(
                        f"{p}: line {line_no}, column {col_no}: non-finite value {cells[col_no - 1]!r}"
                    )
            if width is None:
                width = len(parsed)
            elif len(parsed) != width:
                raise CsvFormatError(
                    f"{p}: line {line_no} has {len(parsed)} fields, expected {width}"
                )
            rows.append(parsed)  # type: ignore[arg-type]
    if not rows:
        raise CsvFormatError(f"{p}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def write_matrix_csv(path, matrix, header: list[str] | None = None) -> None:
    arr = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in arr:
            writer.writerow([f"{v:.17g}" for v in row])


def write_dataset_csv(data: Dataset, directory, prefix: str = "") -> dict[str, str]:
    """Export X/Y/Z to three CSVs in `directory`; returns the paths by role."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {}
    for role, arr in (("x", data.x), ("y", data.y), ("z", data.z)):
        p = d / f"{prefix}{role}.csv"
        write_matrix_csv(p, arr)
        paths[role] = str(p)
    return paths


def load_dataset_csv(x_path, y_path, z_path) -> Dataset:
    """Read three aligned CSVs into a Dataset; row-count mismatches name both files."""
    mats = {}
    for role, path in (("x", x_path), ("y", y_path), ("z", z_path)):
        mats[role] = read_matrix_csv(path)
    counts = {role: m.shape[0] for role, m in mats.items()}
    paths = {"x": x_path, "y": y_path, "z": z_path}
    roles = list(counts)
    for a, b in zip(roles, roles[1:]):
        if counts[a] != counts[b]:
            raise CsvFormatError(
                f"row-count mismatch: {paths[a]} has {counts[a]} rows, {paths[b]} has {counts[b]} rows"
            )
    return Dataset(x=mats["x"], y=mats["y"], z=mats["z"])


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
