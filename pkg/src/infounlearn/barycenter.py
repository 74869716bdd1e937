"""Wasserstein-2 barycenters of empirical point clouds.

1D transport is exact (monotone rearrangement).  For d > 1 maps come from
a log-domain Sinkhorn plan followed by barycentric projection, and the
resulting distances are entropic estimates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .densities import TabularDataset

logger = logging.getLogger(__name__)

SORTED_1D = "sorted_1d"
BARYCENTRIC = "barycentric"


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, violation: float):
        self.violation = violation
        super().__init__(f"{message} (marginal violation {violation:.3e})")


class UncoveredPointError(ValueError):
    pass


class PointCloud:
    """``m`` points in ``R^d`` with simplex weights (uniform by default)."""

    def __init__(self, points, weights=None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("point cloud needs at least one point, shape (m, d)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite point")
        m = pts.shape[0]
        if weights is None:
            w = np.full(m, 1.0 / m)
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (m,) or np.any(w < 0):
                raise ValueError("weights must be a non-negative vector, one per point")
            if abs(float(w.sum()) - 1.0) > 1e-12:
                raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        self.points = pts
        self.weights = w

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def __repr__(self) -> str:
        return f"PointCloud(m={self.m}, d={self.d})"


@dataclass(frozen=True)
class TransportMap:
    """Table of images: ``images[i]`` is where ``source[i]`` is sent."""

    kind: str
    source: np.ndarray
    images: np.ndarray

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape == self.source.shape and np.array_equal(pts, self.source):
            return self.images.copy()
        table = {tuple(row): img for row, img in zip(self.source, self.images)}
        out = []
        for row in pts:
            key = tuple(row)
            if key not in table:
                raise UncoveredPointError(f"point {row} is outside the map's domain")
            out.append(table[key])
        return np.array(out).reshape(pts.shape[0], -1)


class Coupling(NamedTuple):
    plan: np.ndarray
    iterations: int
    marginal_violation: float


def _quantiles(sorted_x: np.ndarray, weights: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Inverted-CDF quantiles of a weighted sample already sorted along axis 0."""
    cdf = np.cumsum(weights)
    idx = np.searchsorted(cdf, levels, side="left")
    return sorted_x[np.minimum(idx, sorted_x.shape[0] - 1)]


def ot_map_1d(source: PointCloud, target: PointCloud) -> TransportMap:
    """Monotone rearrangement: the i-th order statistic goes to the i-th one.

    If the clouds differ in size (or the target is weighted) the target is
    resampled at the quantile levels ``(i + 1/2) / m`` first.
    """
    if source.d != 1 or target.d != 1:
        raise ValueError("ot_map_1d needs one-dimensional clouds")
    if not source.uniform:
        raise ValueError("ot_map_1d needs a uniformly weighted source")
    x = source.points[:, 0]
    order = np.argsort(x, kind="stable")
    t_order = np.argsort(target.points[:, 0], kind="stable")
    y = target.points[t_order, 0]
    if target.m != source.m or not target.uniform:
        levels = (np.arange(source.m) + 0.5) / source.m
        y = _quantiles(y, target.weights[t_order], levels)
    images = np.empty(source.m)
    images[order] = y
    return TransportMap(SORTED_1D, source.points.copy(), images[:, None])


def _w2_1d(a: PointCloud, b: PointCloud) -> float:
    x = np.sort(a.points[:, 0])
    y = np.sort(b.points[:, 0])
    if a.m == b.m and a.uniform and b.uniform:
        return math.sqrt(float(np.mean((x - y) ** 2)))
    # integrate (Qa(t) - Qb(t))^2 over the merged CDF breakpoints
    ia, ib = np.argsort(a.points[:, 0], kind="stable"), np.argsort(b.points[:, 0], kind="stable")
    ca, cb = np.cumsum(a.weights[ia]), np.cumsum(b.weights[ib])
    ca[-1] = cb[-1] = 1.0
    cuts = np.unique(np.concatenate(([0.0], ca, cb)))
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    qa = x[np.minimum(np.searchsorted(ca, mids), a.m - 1)]
    qb = y[np.minimum(np.searchsorted(cb, mids), b.m - 1)]
    return math.sqrt(float(np.sum(np.diff(cuts) * (qa - qb) ** 2)))


def _sq_cost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)


def default_reg(source: PointCloud, target: PointCloud) -> float:
    """0.5% of the largest squared distance, floored for coincident clouds."""
    return max(0.005 * float(np.max(_sq_cost(source.points, target.points))), 1e-12)


def w2_distance(a: PointCloud, b: PointCloud, reg: Optional[float] = None) -> float:
    """W2 between two clouds.  Exact in 1D; entropic estimate for d > 1."""
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")
    if a.d == 1:
        return _w2_1d(a, b)
    coupling = sinkhorn_plan(a, b, reg if reg is not None else default_reg(a, b))
    return math.sqrt(max(0.0, float(np.sum(coupling.plan * _sq_cost(a.points, b.points)))))


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    top = np.max(x, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    return np.squeeze(top, axis=axis) + np.log(np.sum(np.exp(x - top), axis=axis))


def round_to_marginals(plan: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project a near-feasible plan onto the exact coupling polytope.

    Rows and columns are scaled down to their targets, then the leftover
    mass is added back as a rank-one term (Altschuler et al., 2017).  The
    L1 change is at most twice the input marginal violation.
    """
    p = plan * np.minimum(1.0, a / np.maximum(plan.sum(axis=1), 1e-300))[:, None]
    p = p * np.minimum(1.0, b / np.maximum(p.sum(axis=0), 1e-300))[None, :]
    err_a = np.maximum(a - p.sum(axis=1), 0.0)
    err_b = np.maximum(b - p.sum(axis=0), 0.0)
    total = err_a.sum()
    if total > 0:
        p = p + np.outer(err_a, err_b) / total
    return p


def sinkhorn_plan(
    source: PointCloud, target: PointCloud, reg: float, max_iter: int = 10000, tol: float = 1e-5
) -> Coupling:
    """Entropic OT plan for squared Euclidean cost, iterated in the log domain.

    The regularization is annealed down to ``reg`` from the cost scale with
    warm-started potentials.  Once the row marginals match within ``tol``
    (columns are exact after each sweep) the plan is rounded onto the exact
    marginals; ``ConvergenceError`` is raised if ``tol`` is not reached in
    ``max_iter`` sweeps.
    """
    if not reg > 0:
        raise ValueError("reg must be positive")
    if source.d != target.d:
        raise ValueError(f"dimension mismatch: {source.d} vs {target.d}")
    cost = _sq_cost(source.points, target.points)
    a, b = source.weights, target.weights
    with np.errstate(divide="ignore"):
        la, lb = np.log(a), np.log(b)
    f = np.zeros(source.m)
    g = np.zeros(target.m)
    schedule = [reg]
    while schedule[-1] < float(cost.max()):
        schedule.append(schedule[-1] * 2.0)
    violation = math.inf
    it = 0
    for r in reversed(schedule):
        last = r == reg
        while it < max_iter:
            it += 1
            f = r * (la - _logsumexp((g[None, :] - cost) / r, axis=1))
            g = r * (lb - _logsumexp((f[:, None] - cost) / r, axis=0))
            plan = np.exp((f[:, None] + g[None, :] - cost) / r)
            violation = float(np.max(np.abs(plan.sum(axis=1) - a)))
            if violation <= tol:
                break
        if last and violation <= tol:
            plan = round_to_marginals(plan, a, b)
            final = max(float(np.max(np.abs(plan.sum(axis=1) - a))), float(np.max(np.abs(plan.sum(axis=0) - b))))
            return Coupling(plan, it, final)
    raise ConvergenceError(f"sinkhorn did not converge in {max_iter} iterations", violation)


def barycentric_projection(
    coupling: Coupling, target: PointCloud, source: Optional[PointCloud] = None
) -> TransportMap:
    """``T(x_i) = sum_j P_ij y_j / sum_j P_ij``; needs every row to carry mass.

    Pass ``source`` to make the map callable on the source points.
    """
    plan = coupling.plan
    if plan.shape[1] != target.m:
        raise ValueError("plan columns do not match the target cloud")
    mass = plan.sum(axis=1)
    if np.any(mass <= 0):
        raise ValueError(f"zero-mass row(s) in coupling: {np.flatnonzero(mass <= 0).tolist()}")
    if source is not None and source.m != plan.shape[0]:
        raise ValueError("plan rows do not match the source cloud")
    src = source.points.copy() if source is not None else np.full((plan.shape[0], target.d), np.nan)
    return TransportMap(BARYCENTRIC, src, (plan @ target.points) / mass[:, None])


def _transport(source: PointCloud, target: PointCloud, reg: Optional[float]) -> np.ndarray:
    """Images of every source point under the (estimated) optimal map."""
    if source.d == 1:
        return ot_map_1d(source, target).images
    r = reg if reg is not None else default_reg(source, target)
    return barycentric_projection(sinkhorn_plan(source, target, r), target, source).images


class BarycenterResult(NamedTuple):
    cloud: PointCloud
    converged: bool
    iterations: int
    residual: float
    approximate: bool


def mixture_init(groups: Sequence[PointCloud], size: int, seed: int) -> np.ndarray:
    """A seeded uniform subsample of the pooled groups."""
    pooled = np.concatenate([g.points for g in groups])
    rng = np.random.default_rng(seed)
    idx = rng.choice(pooled.shape[0], size=size, replace=size > pooled.shape[0])
    return pooled[idx]


def fixed_point_barycenter(
    groups: Sequence[PointCloud],
    weights: Optional[Sequence[float]] = None,
    tol: float = 1e-10,
    max_iter: int = 100,
    seed: int = 0,
    reg: Optional[float] = None,
) -> BarycenterResult:
    """Iterate ``X_new = sum_z w_z T_z(X)`` with ``T_z`` the map from X to group z.

    ``weights`` default to ``|X_z| / |X|``.  The residual is the W2 distance
    between successive iterates (exact in 1D; for d > 1 the pointwise
    pairing cost, an upper bound on W2).  Non-convergence is reported in
    the result, not raised.
    """
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    d = groups[0].d
    if any(g.d != d for g in groups):
        raise ValueError("groups differ in dimension")
    sizes = np.array([g.m for g in groups], dtype=float)
    w = sizes / sizes.sum() if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(groups),) or np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-12:
        raise ValueError("weights must lie on the simplex, one per group")
    bar = PointCloud(mixture_init(groups, int(sizes.max()), seed))
    residual = math.inf
    for it in range(1, max_iter + 1):
        new = sum(wz * _transport(bar, g, reg) for wz, g in zip(w, groups))
        new_cloud = PointCloud(new)
        if d == 1:
            residual = _w2_1d(bar, new_cloud)
        else:
            residual = math.sqrt(float(np.mean(np.sum((new - bar.points) ** 2, axis=1))))
        bar = new_cloud
        if residual < tol:
            return BarycenterResult(bar, True, it, residual, d > 1)
    logger.warning("barycenter did not converge: residual %.3e after %d iterations", residual, max_iter)
    return BarycenterResult(bar, False, max_iter, residual, d > 1)


def mccann_midpoint(x: PointCloud, transport: TransportMap) -> PointCloud:
    """``x/2 + T(x)/2`` pointwise."""
    return PointCloud(0.5 * x.points + 0.5 * transport(x.points), x.weights)


NEUTRALIZE_MODES = ("coordinate", "joint")


class Neutralized(NamedTuple):
    data: TabularDataset
    converged: bool
    approximate: bool


def neutralize_dataset(
    data: TabularDataset, tol: float = 1e-10, max_iter: int = 100, seed: int = 0,
    mode: str = "coordinate", reg: Optional[float] = None,
) -> Neutralized:
    """Replace every row's features by its image in the groups' barycenter.

    ``coordinate`` treats each feature column as a 1D problem with exact
    maps; ``joint`` transports full feature vectors with entropic plans.
    """
    if mode not in NEUTRALIZE_MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {NEUTRALIZE_MODES}")
    labels = np.unique(data.groups)
    if labels.size < 2:
        raise ValueError("neutralization needs at least two groups")
    rows = [np.flatnonzero(data.groups == z) for z in labels]
    if min(r.size for r in rows) < 2:
        raise ValueError("every group needs at least two rows")
    out = np.empty_like(data.features, dtype=float)
    converged = True
    columns = [[j] for j in range(data.n_features)] if mode == "coordinate" else [list(range(data.n_features))]
    for cols in columns:
        clouds = [PointCloud(data.features[np.ix_(r, cols)]) for r in rows]
        res = fixed_point_barycenter(clouds, tol=tol, max_iter=max_iter, seed=seed, reg=reg)
        converged &= res.converged
        for r, cloud in zip(rows, clouds):
            out[np.ix_(r, cols)] = _transport(cloud, res.cloud, reg)
    neutral = TabularDataset(out, data.labels.copy(), data.groups.copy(), n_classes=data.n_classes)
    return Neutralized(neutral, converged, mode == "joint")
