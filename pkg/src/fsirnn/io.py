"""Dataset files.

The dataset CSV holds the grid ``t_1..t_D`` on its first row and one curve per
following row: ``D`` values, then the response (a real number, or a class
label ``1..H``). An optional header row is recognized by a non-numeric first
cell. Loaders for the public Tecator and phoneme files are included; nothing
is downloaded.
"""

from __future__ import annotations

import csv
import math
import re

import numpy as np

from .estimators import CurveDataset

__all__ = [
    "DataFormatError",
    "read_dataset",
    "read_curves",
    "write_dataset",
    "load_tecator",
    "load_phoneme",
    "PHONEMES",
]

PHONEMES = ("aa", "ao", "dcl", "iy", "sh")


class DataFormatError(ValueError):
    """Malformed data file; the message carries the offending line."""


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _rows(path):
    """Yield ``(line_number, cells)`` for nonblank rows, header skipped."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        first = True
        for cells in reader:
            cells = [c.strip() for c in cells]
            if not any(cells):
                continue
            if first:
                first = False
                if not _is_number(cells[0]):
                    continue
            yield reader.line_num, cells


def _floats(cells, line):
    try:
        vals = [float(c) for c in cells]
    except ValueError:
        bad = next(c for c in cells if not _is_number(c))
        raise DataFormatError(f"line {line}: non-numeric value {bad!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise DataFormatError(f"line {line}: non-finite value")
    return vals


def _parse(path, response_required: bool):
    rows = iter(_rows(path))
    try:
        line, cells = next(rows)
    except StopIteration:
        return None, np.zeros((0, 0)), None
    grid = np.array(_floats(cells, line))
    D = grid.size
    if D < 2 or np.any(np.diff(grid) <= 0):
        raise DataFormatError(f"line {line}: grid must have at least 2 strictly increasing values")
    curves, response = [], []
    for line, cells in rows:
        vals = _floats(cells, line)
        if len(vals) == D + 1:
            curves.append(vals[:D])
            response.append(vals[D])
        elif len(vals) == D and not response_required:
            curves.append(vals)
        else:
            want = f"{D + 1}" if response_required else f"{D} or {D + 1}"
            raise DataFormatError(f"line {line}: expected {want} values, found {len(vals)}")
    C = np.array(curves, dtype=float).reshape(len(curves), D)
    return grid, C, np.array(response, dtype=float) if len(response) == len(curves) else None


def read_dataset(path, task: str = "regression") -> CurveDataset:
    """Read a dataset CSV; raises :class:`DataFormatError` with a line number."""
    grid, curves, y = _parse(path, response_required=True)
    if grid is None:
        raise DataFormatError("line 1: empty file, expected the grid row")
    if len(curves) == 0:
        raise DataFormatError("no observations after the grid row")
    if task == "classification":
        if np.any(y != np.round(y)):
            bad = int(np.flatnonzero(y != np.round(y))[0])
            raise DataFormatError(f"observation {bad + 1}: class label {y[bad]!r} is not an integer")
        y = y.astype(int)
    try:
        return CurveDataset(grid, curves, y, task)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from exc


def read_curves(path):
    """Grid and curves of a file whose response column is optional.

    An empty file gives ``(None, empty array)``.
    """
    grid, curves, _ = _parse(path, response_required=False)
    return grid, curves


def write_dataset(path, data: CurveDataset) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([repr(float(t)) for t in data.grid])
        fmt = (lambda v: str(int(v))) if data.task == "classification" else (lambda v: repr(float(v)))
        for x, y in zip(data.curves, data.response):
            w.writerow([repr(float(v)) for v in x] + [fmt(y)])


def load_tecator(path, n: int = 215, response: str = "fat") -> CurveDataset:
    """Tecator meat spectra in the original StatLib text layout.

    Each sample is 125 numbers: 100 absorbances (850..1050 nm), 22 principal
    component scores, then moisture, fat and protein. Lines that contain
    anything other than numbers (the description header) are skipped.
    """
    col = {"moisture": 122, "fat": 123, "protein": 124}[response]
    numbers = []
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line in fh:
            toks = line.split()
            if toks and all(_is_number(t) for t in toks):
                numbers.extend(float(t) for t in toks)
    if len(numbers) % 125 or len(numbers) < 125 * n:
        raise DataFormatError(f"{path}: expected a multiple of 125 numbers covering {n} samples, found {len(numbers)}")
    block = np.array(numbers).reshape(-1, 125)[:n]
    return CurveDataset(np.linspace(850.0, 1050.0, 100), block[:, :100], block[:, col])


def load_phoneme(path) -> CurveDataset:
    """Phoneme log-periodograms (CSV with columns x.1..x.256, g, speaker)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        xcols = [i for i, h in enumerate(header) if re.fullmatch(r"x\.\d+", h.strip().strip('"'))]
        gcol = [h.strip().strip('"') for h in header].index("g")
        curves, labels = [], []
        for cells in reader:
            if not cells:
                continue
            g = cells[gcol].strip().strip('"')
            if g not in PHONEMES:
                raise DataFormatError(f"line {reader.line_num}: unknown phoneme {g!r}")
            curves.append([float(cells[i]) for i in xcols])
            labels.append(PHONEMES.index(g) + 1)
    return CurveDataset(np.arange(1.0, len(xcols) + 1.0), np.array(curves), np.array(labels), "classification")
