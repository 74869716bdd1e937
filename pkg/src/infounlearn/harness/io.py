"""Persistence helpers: JSON reports, audit output tables, density traces."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, NamedTuple, Optional, Sequence, Union

import numpy as np

from ..densities import DataFormatError, Grid

PathLike = Union[str, Path]


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        # JSON has no infinities; tag them as strings
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        if math.isnan(f):
            return "nan"
        return f
    if isinstance(v, Path):
        return str(v)
    return v


def write_json(obj: Any, path: PathLike) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path: PathLike) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def num(v: Any) -> float:
    """Inverse of the JSON infinity tagging."""
    if isinstance(v, str):
        return float(v)
    return float(v)


class AuditTable(NamedTuple):
    bins: np.ndarray  # int output bin per row
    z: np.ndarray
    weights: np.ndarray


def write_outputs(path: PathLike, bins: np.ndarray, z: np.ndarray, weights: np.ndarray) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["output_bin", "z", "weight"])
        for b, g, wt in zip(bins, z, weights):
            w.writerow([int(b), int(g), repr(float(wt))])


def read_outputs(path: PathLike, n_bins: int = 20) -> AuditTable:
    """Read an audit table.

    Needs ``z`` and either ``output_bin`` (integer bins) or ``output``
    (continuous values, binned into ``n_bins`` uniform bins over the observed
    range).  An optional ``weight`` column gives per-row mass.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        cols = {name.strip(): i for i, name in enumerate(header)}
        if "z" not in cols or not ({"output_bin", "output"} & cols.keys()):
            raise DataFormatError(f"{path}: need columns z and output_bin (or output), got {header}")
        key = "output_bin" if "output_bin" in cols else "output"
        vals, zs, ws = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                vals.append(int(row[cols[key]]) if key == "output_bin" else float(row[cols[key]]))
                zs.append(int(row[cols["z"]]))
                ws.append(float(row[cols["weight"]]) if "weight" in cols else 1.0)
            except ValueError as exc:
                raise DataFormatError(f"{path}:{line_no}: {exc}") from None
            if zs[-1] not in (0, 1):
                raise DataFormatError(f"{path}:{line_no}: z must be 0 or 1")
            if not (ws[-1] >= 0 and math.isfinite(ws[-1])):
                raise DataFormatError(f"{path}:{line_no}: weight must be finite and non-negative")
            if key == "output" and not math.isfinite(vals[-1]):
                raise DataFormatError(f"{path}:{line_no}: non-finite output")
            if key == "output_bin" and vals[-1] < 0:
                raise DataFormatError(f"{path}:{line_no}: negative bin")
    if not vals:
        raise DataFormatError(f"{path}: no rows")
    z = np.array(zs, dtype=np.int64)
    weights = np.array(ws)
    if key == "output":
        bins = bin_uniform(np.array(vals), n_bins)
    else:
        bins = np.array(vals, dtype=np.int64)
    return AuditTable(bins, z, weights)


def bin_uniform(values: np.ndarray, n_bins: int, lo: Optional[float] = None, hi: Optional[float] = None) -> np.ndarray:
    """Bin index in ``0..n_bins-1`` over ``[lo, hi]`` (default: observed range)."""
    if n_bins < 1:
        raise ValueError("need at least one bin")
    v = np.asarray(values, dtype=float)
    lo = float(v.min()) if lo is None else lo
    hi = float(v.max()) if hi is None else hi
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.int64)
    idx = np.floor((v - lo) / (hi - lo) * n_bins).astype(np.int64)
    return np.clip(idx, 0, n_bins - 1)


def write_traces(path: PathLike, grid: Grid, rows: Iterable[tuple[int, str, np.ndarray]]) -> None:
    """Long-format density traces: ``epoch, side, x, value``."""
    xs = grid.points
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "side", "x", "value"])
        for epoch, side, values in rows:
            for x, v in zip(xs, values):
                w.writerow([epoch, side, repr(float(x)), repr(float(v))])


def write_rows(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
