"""Grid densities, categorical PMFs, tabular data and the grid KDE.

Every information quantity in the package is computed on one of two
supports: a uniform 1D grid (``GridDensity``) or a finite alphabet
(``CategoricalPMF``).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

_MASS_TOL = 1e-9
_PMF_TOL = 1e-12


class SupportMismatchError(ValueError):
    """Two distributions do not live on the same grid or alphabet."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``lo + k * dx`` for ``k = 0..n-1`` (endpoints inclusive)."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs n >= 2 points, got {self.n}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi <= self.lo:
            raise ValueError(f"invalid grid bounds [{self.lo}, {self.hi}]")

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return self.lo + self.dx * np.arange(self.n)


@dataclass(frozen=True, eq=False)
class GridDensity:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("density values must be finite and non-negative")
        mass = float(values.sum() * self.grid.dx)
        if abs(mass - 1.0) > _MASS_TOL:
            raise ValueError(f"density integrates to {mass!r}, not 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, grid: Grid) -> "GridDensity":
        return cls(grid, np.full(grid.n, 1.0 / (grid.n * grid.dx)))

    @property
    def masses(self) -> np.ndarray:
        """Probability mass carried by each grid point."""
        return self.values * self.grid.dx

    def to_csv(self, path: Union[str, Path]) -> None:
        write_grid_density(self, path)


@dataclass(frozen=True, eq=False)
class CategoricalPMF:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError("a PMF needs at least 2 categories")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValueError("probabilities must be finite and non-negative")
        total = float(probs.sum())
        if abs(total - 1.0) > _PMF_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> "CategoricalPMF":
        """Normalize non-negative weights into a PMF."""
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not total > 0:
            raise ValueError("weights must have positive total")
        return cls(w / total)

    @property
    def k(self) -> int:
        return self.probs.size


Distribution = Union[GridDensity, CategoricalPMF]


def masses_of(p: Distribution) -> np.ndarray:
    """Point masses: probs for a PMF, values * dx for a grid density."""
    if isinstance(p, GridDensity):
        return p.masses
    if isinstance(p, CategoricalPMF):
        return p.probs
    raise TypeError(f"not a distribution: {type(p).__name__}")


def check_common_support(*dists: Distribution) -> None:
    first = dists[0]
    for other in dists[1:]:
        if type(other) is not type(first):
            raise SupportMismatchError("cannot mix grid densities and categorical PMFs")
        if isinstance(first, GridDensity):
            if other.grid != first.grid:
                raise SupportMismatchError(f"grid mismatch: {first.grid} vs {other.grid}")
        elif other.k != first.k:
            raise SupportMismatchError(f"alphabet size mismatch: {first.k} vs {other.k}")


@dataclass(frozen=True, eq=False)
class TabularDataset:
    """Rows of (features, label, group)."""

    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    n_classes: int = field(default=0)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.labels)
        z = np.asarray(self.groups)
        if x.ndim != 2 or y.ndim != 1 or z.ndim != 1:
            raise ValueError("features must be 2D, labels and groups 1D")
        if not (x.shape[0] == y.shape[0] == z.shape[0]):
            raise ValueError(
                f"row counts differ: features {x.shape[0]}, labels {y.shape[0]}, groups {z.shape[0]}"
            )
        for name, col in (("labels", y), ("groups", z)):
            if col.size and (not np.all(np.equal(np.mod(col, 1), 0)) or col.min() < 0):
                raise ValueError(f"{name} must be non-negative integers")
        y = y.astype(np.int64)
        z = z.astype(np.int64)
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite feature value")
        k = self.n_classes or (int(y.max()) + 1 if y.size else 0)
        if y.size and y.max() >= k:
            raise ValueError(f"label {int(y.max())} out of range for {k} classes")
        for arr in (x, y, z):
            arr.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "groups", z)
        object.__setattr__(self, "n_classes", int(k))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_groups(self) -> int:
        return int(self.groups.max()) + 1 if len(self) else 0

    def subset(self, idx) -> "TabularDataset":
        idx = np.asarray(idx)
        return TabularDataset(
            self.features[idx], self.labels[idx], self.groups[idx], n_classes=self.n_classes
        )

    def require_all_groups(self) -> None:
        """Raise unless every group index 0..max is occupied."""
        counts = np.bincount(self.groups, minlength=self.n_groups)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            raise ValueError(f"groups {empty.tolist()} have no rows")


class DataFormatError(ValueError):
    """A CSV file does not match the expected schema."""


def read_dataset(path: Union[str, Path], n_classes: int = 0) -> TabularDataset:
    """Read ``f0..f{d-1}, y, z`` columns from a CSV with a header row."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        feat_cols = [h for h in header if h.startswith("f") and h[1:].isdigit()]
        feat_cols.sort(key=lambda h: int(h[1:]))
        expected = [f"f{i}" for i in range(len(feat_cols))]
        if not feat_cols or feat_cols != expected:
            raise DataFormatError(f"{path}: feature columns must be f0..f{{d-1}}, got {header}")
        for col in ("y", "z"):
            if col not in header:
                raise DataFormatError(f"{path}: missing column {col!r}")
        fi = [header.index(c) for c in feat_cols]
        yi, zi = header.index("y"), header.index("z")
        feats, ys, zs = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(row[i]) for i in fi]
                y, z = int(row[yi]), int(row[zi])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataFormatError(f"{path}:{lineno}: non-finite feature")
            if y < 0 or z < 0:
                raise DataFormatError(f"{path}:{lineno}: negative label or group")
            feats.append(vals)
            ys.append(y)
            zs.append(z)
    if not feats:
        raise DataFormatError(f"{path}: no data rows")
    return TabularDataset(np.array(feats), np.array(ys), np.array(zs), n_classes=n_classes)


def write_dataset(data: TabularDataset, path: Union[str, Path], extra: dict | None = None) -> None:
    """Write a dataset in the ``f0.., y, z`` schema plus optional extra columns."""
    extra = extra or {}
    header = [f"f{i}" for i in range(data.n_features)] + ["y", "z"] + list(extra)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        cols = list(extra.values())
        for i in range(len(data)):
            row = [repr(float(v)) for v in data.features[i]]
            row += [int(data.labels[i]), int(data.groups[i])]
            row += [c[i] for c in cols]
            w.writerow(row)


def write_grid_density(p: GridDensity, path: Union[str, Path]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "value"])
        for x, v in zip(p.grid.points, p.values):
            w.writerow([repr(float(x)), repr(float(v))])


def read_grid_density(path: Union[str, Path]) -> GridDensity:
    xs, vs = [], []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            xs.append(float(row["x"]))
            vs.append(float(row["value"]))
    grid = Grid(xs[0], xs[-1], len(xs))
    return GridDensity(grid, np.array(vs))


# KDE on a grid -------------------------------------------------------------


def effective_bandwidth(grid: Grid, bandwidth: float) -> float:
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    floor = 1e-12 * (grid.hi - grid.lo)
    if bandwidth < floor:
        logger.warning("bandwidth %g below %g; clamped", bandwidth, floor)
        return floor
    return float(bandwidth)


def kde_weights(samples: np.ndarray, grid: Grid, bandwidth: float) -> np.ndarray:
    """Kernel weights ``w[k, l]`` of sample ``l`` at grid point ``k``.

    Each column is a Gaussian kernel normalized to sum 1 over the grid, so a
    sample far outside ``[lo, hi]`` puts its mass on the nearest edge.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("no samples")
    if not np.all(np.isfinite(s)):
        raise ValueError("non-finite input")
    h = effective_bandwidth(grid, bandwidth)
    logk = -0.5 * ((grid.points[:, None] - s[None, :]) / h) ** 2
    logk -= logk.max(axis=0, keepdims=True)
    w = np.exp(logk)
    w /= w.sum(axis=0, keepdims=True)
    return w


def kde_on_grid(samples, grid: Grid, bandwidth: float) -> GridDensity:
    """Average of per-sample grid-normalized Gaussian kernels, divided by dx."""
    w = kde_weights(samples, grid, bandwidth)
    values = w.mean(axis=1) / grid.dx
    # exact unit mass up to rounding in the column sums
    values /= values.sum() * grid.dx
    return GridDensity(grid, values)


# Mixtures and distances ----------------------------------------------------


def mixture(components: Sequence[Distribution], weights: Sequence[float]) -> Distribution:
    """Pointwise convex combination of distributions on a common support."""
    if not components:
        raise ValueError("mixture of nothing")
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(components),):
        raise ValueError("one weight per component required")
    if np.any(w < 0) or abs(float(w.sum()) - 1.0) > _PMF_TOL:
        raise ValueError(f"weights must lie on the simplex, got {w.tolist()}")
    check_common_support(*components)
    first = components[0]
    if isinstance(first, GridDensity):
        values = sum(wi * c.values for wi, c in zip(w, components))
        values = values / (values.sum() * first.grid.dx)
        return GridDensity(first.grid, values)
    probs = sum(wi * c.probs for wi, c in zip(w, components))
    return CategoricalPMF(probs / probs.sum())


def tv_distance(p: Distribution, q: Distribution) -> float:
    check_common_support(p, q)
    return float(min(1.0, 0.5 * np.abs(masses_of(p) - masses_of(q)).sum()))


def empirical_pmf(labels, k: int, weights=None) -> CategoricalPMF:
    """Class frequencies of ``labels`` over ``k`` categories (optionally weighted)."""
    y = np.asarray(labels)
    if y.size == 0:
        raise ValueError("no labels")
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"label out of range for K={k}")
    counts = np.bincount(y.astype(np.int64), weights=weights, minlength=k).astype(float)
    return CategoricalPMF(counts / counts.sum())
