"""Reading samples and model tables; atomic CSV output."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from typing import Iterable, Sequence

import numpy as np

from .models import DistributionModel, piecewise

__all__ = ["ParseError", "load_sample", "load_table", "load_piecewise_model", "write_csv", "write_text"]


class ParseError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


def _number(tok: str, path, line) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(path, line, f"not a number: {tok!r}") from None
    if not math.isfinite(v):
        raise ParseError(path, line, f"non-finite value {tok!r}")
    return v


def _rows(path):
    with open(path, newline="") as fh:
        for i, raw in enumerate(fh, start=1):
            text = raw.strip()
            if text and not text.startswith("#"):
                yield i, text


def _is_header(tokens) -> bool:
    try:
        [float(t) for t in tokens]
    except ValueError:
        return True
    return False


def load_sample(path) -> np.ndarray:
    """Read a single-column CSV or whitespace-separated numbers.

    A non-numeric first row is taken as a header. NaN and infinities are rejected.
    """
    values = []
    first = True
    for i, text in _rows(path):
        if "," in text:
            tokens = [t.strip() for t in text.split(",")]
            if len(tokens) != 1 and not (len(tokens) == 2 and tokens[1] == ""):
                raise ParseError(path, i, f"expected one column, found {len(tokens)}")
            tokens = tokens[:1]
        else:
            tokens = text.split()
        if first and _is_header(tokens):
            first = False
            continue
        first = False
        values.extend(_number(t, path, i) for t in tokens)
    if not values:
        raise ParseError(path, 0, "no data values")
    return np.asarray(values)


def load_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column (u, x) CSV with strictly increasing columns."""
    us, xs = [], []
    first = True
    for i, text in _rows(path):
        tokens = [t.strip() for t in text.split(",")]
        if len(tokens) != 2:
            raise ParseError(path, i, f"expected two columns (u, x), found {len(tokens)}")
        if first and _is_header(tokens):
            first = False
            continue
        first = False
        u, x = (_number(t, path, i) for t in tokens)
        if us and (u <= us[-1] or x <= xs[-1]):
            raise ParseError(path, i, "columns must be strictly increasing")
        us.append(u)
        xs.append(x)
    if len(us) < 2:
        raise ParseError(path, 0, "table needs at least two rows")
    return np.asarray(us), np.asarray(xs)


def load_piecewise_model(path, loc: float = 0.0) -> DistributionModel:
    u, x = load_table(path)
    return piecewise(u, x, loc)


def _atomic(path, mode="w"):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    return os.fdopen(fd, mode, newline=""), tmp


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a CSV with a header row via temp file + rename."""
    fh, tmp = _atomic(path)
    try:
        with fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path, text: str) -> None:
    fh, tmp = _atomic(path)
    try:
        with fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
