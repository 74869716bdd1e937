"""Unlearning objectives, training loops, stop rules and evaluation metrics.

Two families of objective share the same trade-off form
``(1 - lam) * utility + lam * regularizer``:

* classifier objectives act on softmax rows and use batch-mean PMFs;
* grid objectives act on scalar outputs through the grid KDE.

Marginal-pair convention: ``Z=1`` is retain-only, ``Z=0`` is the
retain/unlearn mixture with retain weight ``alpha = |R| / (|R| + |U|)``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .densities import (
    CategoricalPMF,
    Distribution,
    Grid,
    TabularDataset,
    check_common_support,
    mixture,
)
from .infotheory import mutual_info_mixture
from .smallnet import (
    LOG_FLOOR,
    MLP,
    ModelParams,
    OptimizerState,
    adam_step,
    backward,
    forward,
    grid_cross_entropy,
    grid_kl,
    kde_backward,
    kde_forward,
)

logger = logging.getLogger(__name__)


class Method(str, Enum):
    MARGINAL_MI = "marginal_mi"
    GRAD_DIFF = "grad_diff"
    KL_ANCHOR = "kl_anchor"
    FEATURE_MI = "feature_mi"


class StopKind(str, Enum):
    MI_RATIO = "mi_ratio"
    KD_RATIO = "kd_ratio"
    CHANCE_ACCURACY = "chance_accuracy"


@dataclass(frozen=True)
class EarlyStopRule:
    kind: StopKind
    threshold: float = 0.85
    margin: float = 0.02
    min_epochs: int = 1
    patience: int = 1
    n_classes: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", StopKind(self.kind))
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1]")
        if self.patience < 1 or self.min_epochs < 1:
            raise ValueError("patience and min_epochs must be >= 1")
        if self.kind is StopKind.CHANCE_ACCURACY and self.n_classes < 2:
            raise ValueError("chance-accuracy rule needs the class count")

    @classmethod
    def for_method(cls, method: Union[Method, str], n_classes: int = 0) -> "EarlyStopRule":
        """The stopping rule paired with each unlearning method."""
        method = Method(method)
        if method is Method.KL_ANCHOR:
            return cls(StopKind.KD_RATIO)
        if method is Method.GRAD_DIFF:
            return cls(StopKind.CHANCE_ACCURACY, patience=2, n_classes=n_classes)
        return cls(StopKind.MI_RATIO)


@dataclass(frozen=True)
class UnlearnConfig:
    lam: float = 0.5
    method: Method = Method.MARGINAL_MI
    epochs: int = 10
    batch_size: int = 128
    alpha: Optional[float] = None  # None: |R| / (|R| + |U|)
    prior: float = 0.5
    stop_rule: Optional[EarlyStopRule] = None
    seed: int = 0
    lr: float = 1e-3
    weight_decay: float = 1e-4
    c_max: float = 20.0
    val_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.alpha is not None and not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 < self.prior < 1.0:
            raise ValueError("prior must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


# Marginal pair and MI -----------------------------------------------------------


def build_marginal_pair(retain: Distribution, unlearn: Distribution, alpha: float):
    """``(P0, P1)`` with ``P1 = retain`` and ``P0 = alpha retain + (1 - alpha) unlearn``."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    check_common_support(retain, unlearn)
    return mixture([retain, unlearn], [alpha, 1.0 - alpha]), retain


def marginal_mi_loss(p0: Distribution, p1: Distribution, prior: float = 0.5) -> float:
    return mutual_info_mixture(p0, p1, prior)


def mi_margin(retain_probs: np.ndarray, unlearn_probs: np.ndarray, alpha: float, prior: float = 0.5) -> float:
    """Marginal MI of split-level softmax averages."""
    p_r = CategoricalPMF.from_weights(np.mean(retain_probs, axis=0))
    p_u = CategoricalPMF.from_weights(np.mean(unlearn_probs, axis=0))
    p0, p1 = build_marginal_pair(p_r, p_u, alpha)
    return marginal_mi_loss(p0, p1, prior)


def _flog(x: np.ndarray, floor: float = LOG_FLOOR):
    live = x > floor
    return np.log(np.where(live, x, floor)), live


def groups_mutual_info(dists: Sequence[np.ndarray], weights: Sequence[float], dx: float = 1.0):
    """``sum_z w_z KL(P_z || P)`` with ``P = sum_z w_z P_z``, and its gradient.

    ``dists`` are non-negative vectors on a common support (PMFs with
    ``dx=1`` or grid density values).  Returns ``(value, [dP_z])``.  Entries
    are clamped at the log floor consistently in value and gradient.
    """
    logs, lives = zip(*(_flog(np.asarray(d, dtype=float)) for d in dists))
    qs = [np.exp(lg) for lg in logs]
    mix = sum(w * q for w, q in zip(weights, qs))
    lm = np.log(mix)
    value = sum(w * float(np.sum(q * (lg - lm))) for w, q, lg in zip(weights, qs, logs)) * dx
    grads = [w * (lg - lm) * live * dx for w, lg, live in zip(weights, logs, lives)]
    return value, grads


# Loss values ------------------------------------------------------------------


class LossValue(NamedTuple):
    total: float
    utility: float
    reg: float
    grads: tuple  # one gradient array per model-output argument


def _ce_rows(probs: np.ndarray, labels: np.ndarray, c_max: float = math.inf):
    """Mean per-row cross-entropy, each row clamped at ``c_max``, and its gradient."""
    n = probs.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    rows = np.arange(n)
    py = probs[rows, labels]
    lp, live = _flog(py)
    per_row = -lp
    active = live & (per_row < c_max)
    value = float(np.mean(np.minimum(per_row, c_max)))
    grad = np.zeros_like(probs)
    grad[rows, labels] = np.where(active, -1.0 / (n * np.where(live, py, 1.0)), 0.0)
    return value, grad


def cross_entropy(probs: np.ndarray, labels) -> tuple[float, np.ndarray]:
    return _ce_rows(np.asarray(probs, dtype=float), np.asarray(labels, dtype=np.int64))


def _mean_rows_grad(g_mean: np.ndarray, n: int) -> np.ndarray:
    return np.broadcast_to(g_mean / n, (n, g_mean.size)).copy()


def loss_marginal(probs_r, labels_r, probs_u, lam: float, alpha: float, prior: float = 0.5) -> LossValue:
    """``(1 - lam) CE(retain) + lam I(S_margin; Z)`` on softmax rows.

    The MI uses batch-mean PMFs ``P1 = mean(probs_r)`` and
    ``P0 = alpha P1 + (1 - alpha) mean(probs_u)``.
    """
    probs_r = np.asarray(probs_r, dtype=float)
    probs_u = np.asarray(probs_u, dtype=float)
    if probs_r.shape[0] == 0 or probs_u.shape[0] == 0:
        raise ValueError("empty batch")
    ce, g_ce = _ce_rows(probs_r, np.asarray(labels_r, dtype=np.int64))
    p_r, p_u = probs_r.mean(axis=0), probs_u.mean(axis=0)
    p0 = alpha * p_r + (1.0 - alpha) * p_u
    mi, (d0, d1) = groups_mutual_info([p0, p_r], [1.0 - prior, prior])
    d_pr = d1 + alpha * d0
    d_pu = (1.0 - alpha) * d0
    g_r = (1.0 - lam) * g_ce + lam * _mean_rows_grad(d_pr, probs_r.shape[0])
    g_u = lam * _mean_rows_grad(d_pu, probs_u.shape[0])
    return LossValue((1.0 - lam) * ce + lam * mi, ce, mi, (g_r, g_u))


def loss_grad_diff(probs_r, labels_r, probs_u, labels_u, lam: float, c_max: float = 20.0) -> LossValue:
    """``(1 - lam) CE(retain) - lam CE(unlearn)``, unlearn CE clamped at ``c_max`` per row."""
    ce_r, g_r = _ce_rows(np.asarray(probs_r, dtype=float), np.asarray(labels_r, dtype=np.int64))
    ce_u, g_u = _ce_rows(np.asarray(probs_u, dtype=float), np.asarray(labels_u, dtype=np.int64), c_max)
    return LossValue(
        (1.0 - lam) * ce_r - lam * ce_u, ce_r, -ce_u, ((1.0 - lam) * g_r, -lam * g_u)
    )


def _kl_rows(teacher: np.ndarray, student: np.ndarray):
    """Mean over rows of ``KL(teacher_i || student_i)`` and gradient w.r.t. student."""
    n = student.shape[0]
    lt, live_t = _flog(teacher)
    ls, live_s = _flog(student)
    value = float(np.sum(teacher * (lt - ls))) / n
    grad = np.where(live_s, -teacher / np.where(live_s, student, 1.0), 0.0) / n
    return value, grad


def loss_kl_anchor(teacher_r, probs_r, probs_u, labels_u, lam: float, c_max: float = 20.0) -> LossValue:
    """``(1 - lam) E_retain KL(teacher || student) - lam CE(unlearn)``."""
    teacher_r = np.asarray(teacher_r, dtype=float)
    probs_r = np.asarray(probs_r, dtype=float)
    if teacher_r.shape != probs_r.shape:
        raise ValueError("teacher and student outputs differ in shape")
    kd, g_r = _kl_rows(teacher_r, probs_r)
    ce_u, g_u = _ce_rows(np.asarray(probs_u, dtype=float), np.asarray(labels_u, dtype=np.int64), c_max)
    return LossValue((1.0 - lam) * kd - lam * ce_u, kd, -ce_u, ((1.0 - lam) * g_r, -lam * g_u))


class FeatureMI(NamedTuple):
    value: float
    grad: np.ndarray
    skipped_groups: tuple


def feature_mi_loss(probs, groups, n_groups: Optional[int] = None) -> FeatureMI:
    """``I(S; Z) = sum_z p(z) KL(P_z || P)`` over batch softmax group means.

    Groups absent from the batch are skipped (weights renormalize over the
    present ones) and reported in ``skipped_groups``.
    """
    probs = np.asarray(probs, dtype=float)
    z = np.asarray(groups, dtype=np.int64)
    n = probs.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    n_groups = n_groups or int(z.max()) + 1
    present = [g for g in range(n_groups) if np.any(z == g)]
    skipped = tuple(g for g in range(n_groups) if g not in present)
    means = [probs[z == g].mean(axis=0) for g in present]
    weights = [np.count_nonzero(z == g) / n for g in present]
    value, dmeans = groups_mutual_info(means, weights)
    grad = np.zeros_like(probs)
    for g, d in zip(present, dmeans):
        rows = z == g
        grad[rows] = d / np.count_nonzero(rows)
    return FeatureMI(value, grad, skipped)


def loss_feature(probs, labels, groups, lam: float, n_groups: Optional[int] = None) -> LossValue:
    """``(1 - lam) CE(Y; S) + lam I(S; Z)`` on one batch."""
    ce, g_ce = cross_entropy(probs, labels)
    fmi = feature_mi_loss(probs, groups, n_groups)
    return LossValue((1.0 - lam) * ce + lam * fmi.value, ce, fmi.value, ((1.0 - lam) * g_ce + lam * fmi.grad,))


# Grid objectives for scalar outputs ----------------------------------------------


def loss_marginal_grid(
    out_r, out_u, target: np.ndarray, grid: Grid, bandwidth: float, lam: float, alpha: float, prior: float = 0.5
) -> LossValue:
    """``(1 - lam) H(target || p_f(Xr)) + lam I(S_margin; Z)`` through the grid KDE."""
    kr = kde_forward(out_r, grid, bandwidth)
    ku = kde_forward(out_u, grid, bandwidth)
    dx = grid.dx
    ce, _, d_ce = grid_cross_entropy(np.asarray(target), kr.values, dx)
    p0 = alpha * kr.values + (1.0 - alpha) * ku.values
    mi, (d0, d1) = groups_mutual_info([p0, kr.values], [1.0 - prior, prior], dx)
    dv_r = (1.0 - lam) * d_ce + lam * (d1 + alpha * d0)
    dv_u = lam * (1.0 - alpha) * d0
    return LossValue(
        (1.0 - lam) * ce + lam * mi, ce, mi, (kde_backward(kr, dv_r), kde_backward(ku, dv_u))
    )


def loss_grad_diff_grid(
    out_r, out_u, target_r: np.ndarray, target_u: np.ndarray, grid: Grid, bandwidth: float,
    lam: float, c_max: float = 20.0,
) -> LossValue:
    """``(1 - lam) H(p_Xr || p_f(Xr)) - lam min(H(p_Xu || p_f(Xu)), c_max)``."""
    kr = kde_forward(out_r, grid, bandwidth)
    ku = kde_forward(out_u, grid, bandwidth)
    ce_r, _, d_r = grid_cross_entropy(np.asarray(target_r), kr.values, grid.dx)
    ce_u, _, d_u = grid_cross_entropy(np.asarray(target_u), ku.values, grid.dx)
    if ce_u >= c_max:
        ce_u, d_u = c_max, np.zeros_like(d_u)
    return LossValue(
        (1.0 - lam) * ce_r - lam * ce_u, ce_r, -ce_u,
        (kde_backward(kr, (1.0 - lam) * d_r), kde_backward(ku, -lam * d_u)),
    )


def loss_kl_anchor_grid(
    out_r, out_u, anchor: np.ndarray, target_u: np.ndarray, grid: Grid, bandwidth: float,
    lam: float, c_max: float = 20.0,
) -> LossValue:
    """``(1 - lam) KL(p_f0(Xr) || p_f(Xr)) - lam min(H(p_Xu || p_f(Xu)), c_max)``."""
    kr = kde_forward(out_r, grid, bandwidth)
    ku = kde_forward(out_u, grid, bandwidth)
    kl, _, d_r = grid_kl(np.asarray(anchor), kr.values, grid.dx)
    ce_u, _, d_u = grid_cross_entropy(np.asarray(target_u), ku.values, grid.dx)
    if ce_u >= c_max:
        ce_u, d_u = c_max, np.zeros_like(d_u)
    return LossValue(
        (1.0 - lam) * kl - lam * ce_u, kl, -ce_u,
        (kde_backward(kr, (1.0 - lam) * d_r), kde_backward(ku, -lam * d_u)),
    )


def feature_mi_grid(outputs, groups, grid: Grid, bandwidth: float) -> FeatureMI:
    """Feature MI of scalar outputs, with per-group KDE densities on the grid."""
    s = np.asarray(outputs, dtype=float).ravel()
    z = np.asarray(groups, dtype=np.int64)
    present = [g for g in range(int(z.max()) + 1) if np.any(z == g)]
    skipped = tuple(g for g in range(int(z.max()) + 1) if g not in present)
    kdes = [kde_forward(s[z == g], grid, bandwidth) for g in present]
    weights = [np.count_nonzero(z == g) / s.size for g in present]
    value, dvals = groups_mutual_info([k.values for k in kdes], weights, grid.dx)
    grad = np.zeros_like(s)
    for g, k, d in zip(present, kdes, dvals):
        grad[z == g] = kde_backward(k, d)
    return FeatureMI(value, grad, skipped)


# Metrics ----------------------------------------------------------------------


def accuracy(probs, labels) -> float:
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


def acc_rand(probs, labels) -> float:
    """Accuracy of the randomized policy that samples the class from each row."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    return float(np.mean(probs[np.arange(labels.size), labels]))


def dp_gap(class1_probs, groups) -> float:
    """``|E[p_1 | Z=1] - E[p_1 | Z=0]|``."""
    p = np.asarray(class1_probs, dtype=float)
    z = np.asarray(groups)
    if not (np.any(z == 1) and np.any(z == 0)):
        raise ValueError("dp_gap needs both groups present")
    return float(abs(p[z == 1].mean() - p[z == 0].mean()))


def mean_kl_rows(teacher, student) -> float:
    return _kl_rows(np.asarray(teacher, dtype=float), np.asarray(student, dtype=float))[0]


# Trajectories and early stopping ------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    retain_acc: float
    unlearn_acc: float
    mi_margin: float
    loss_total: float = math.nan
    loss_utility: float = math.nan
    loss_reg: float = math.nan
    retain_acc_val: float = math.nan
    unlearn_acc_val: float = math.nan
    mi_margin_val: float = math.nan
    kd_val: float = math.nan


@dataclass
class FeatureRecord:
    epoch: int
    acc: float
    acc_rand: float
    dp_gap: float
    mi: float
    loss_total: float = math.nan
    loss_utility: float = math.nan
    loss_reg: float = math.nan
    skipped_batches: int = 0


@dataclass
class TrainTrajectory:
    """Epoch 0 is the pre-training baseline; ``records`` hold epochs 1..E."""

    baseline: Union[EpochRecord, FeatureRecord]
    records: list = field(default_factory=list)
    stopped_at: Optional[int] = None

    @property
    def all_records(self) -> list:
        return [self.baseline] + list(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.all_records], dtype=float)

    def to_csv(self, path: Union[str, Path]) -> None:
        rows = self.all_records
        names = [f.name for f in fields(rows[0])]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([_CSV_NAMES.get(n, n) for n in names])
            for r in rows:
                w.writerow([_fmt(getattr(r, n)) for n in names])


_CSV_NAMES = {"mi_margin": "mi_margin_nats", "mi_margin_val": "mi_margin_val_nats", "mi": "mi_nats"}


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class StopDecision(NamedTuple):
    stop: bool
    epoch: Optional[int] = None


def _stop_predicate(rule: EarlyStopRule, record, baseline) -> bool:
    if rule.kind is StopKind.MI_RATIO:
        return record.mi_margin_val <= rule.threshold * baseline.mi_margin_val
    if rule.kind is StopKind.KD_RATIO:
        return record.kd_val <= rule.threshold * baseline.kd_val
    return record.unlearn_acc_val <= 1.0 / rule.n_classes + rule.margin


def early_stop_check(rule: EarlyStopRule, trajectory: TrainTrajectory) -> StopDecision:
    """Stop at the first epoch >= min_epochs ending a run of ``patience`` hits."""
    streak = 0
    for rec in trajectory.records:
        streak = streak + 1 if _stop_predicate(rule, rec, trajectory.baseline) else 0
        if rec.epoch >= rule.min_epochs and streak >= rule.patience:
            return StopDecision(True, rec.epoch)
    return StopDecision(False)


# Data plumbing ------------------------------------------------------------------


def stratified_split(labels, frac: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Indices ``(train, val)`` with about ``frac`` of each label in val."""
    labels = np.asarray(labels)
    train, val = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_val = int(round(frac * idx.size))
        if idx.size > 1:
            n_val = min(n_val, idx.size - 1)
        else:
            n_val = 0
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def shuffled_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def paired_batches(n_r: int, n_u: int, batch_size: int, rng: np.random.Generator):
    """Retain mini-batches, each paired with a slice of the shuffled unlearn set."""
    r_batches = shuffled_batches(n_r, batch_size, rng)
    perm_u = rng.permutation(n_u)
    k = len(r_batches)
    if n_u < k:
        perm_u = np.resize(perm_u, k)
    return list(zip(r_batches, np.array_split(perm_u, k)))


def _check_model(params: ModelParams, *datasets: TabularDataset) -> None:
    if params.arch != MLP:
        raise ValueError("classifier training needs an mlp model")
    for d in datasets:
        if d.n_features != params.n_inputs:
            raise ValueError(f"dataset has {d.n_features} features, model expects {params.n_inputs}")
        if len(d) and d.labels.max() >= params.n_outputs:
            raise ValueError("label exceeds the model's class count")


def _probs(params: ModelParams, data: TabularDataset) -> np.ndarray:
    if len(data) == 0:
        return np.zeros((0, params.n_outputs))
    return forward(params, data.features)[0]


def _safe_acc(probs: np.ndarray, labels: np.ndarray) -> float:
    return accuracy(probs, labels) if labels.size else math.nan


def pretrain(
    params: ModelParams, data: TabularDataset, epochs: int, batch_size: int = 128, seed: int = 0,
    lr: float = 1e-3, weight_decay: float = 1e-4,
) -> ModelParams:
    """Plain cross-entropy training (the 'remembers everything' model)."""
    _check_model(params, data)
    rng = np.random.default_rng(seed)
    state = OptimizerState.for_params(params, lr=lr, weight_decay=weight_decay)
    for _ in range(epochs):
        for idx in shuffled_batches(len(data), batch_size, rng):
            out, cache = forward(params, data.features[idx])
            _, g = cross_entropy(out, data.labels[idx])
            params, state = adam_step(state, params, backward(params, cache, g))
    return params


class UnlearnSplits(NamedTuple):
    retain_train: TabularDataset
    retain_val: TabularDataset
    unlearn_train: TabularDataset
    unlearn_val: TabularDataset


def split_unlearn_data(retain: TabularDataset, unlearn: TabularDataset, frac: float, seed: int) -> UnlearnSplits:
    rng = np.random.default_rng(seed)
    r_tr, r_val = stratified_split(retain.labels, frac, rng)
    u_tr, u_val = stratified_split(unlearn.labels, frac, rng)
    return UnlearnSplits(retain.subset(r_tr), retain.subset(r_val), unlearn.subset(u_tr), unlearn.subset(u_val))


def resolve_alpha(config: UnlearnConfig, n_retain: int, n_unlearn: int) -> float:
    return config.alpha if config.alpha is not None else n_retain / (n_retain + n_unlearn)


def _unlearn_record(epoch, params, teacher, splits: UnlearnSplits, alpha, prior, losses=None) -> EpochRecord:
    pr, pu = _probs(params, splits.retain_train), _probs(params, splits.unlearn_train)
    pr_v, pu_v = _probs(params, splits.retain_val), _probs(params, splits.unlearn_val)
    rec = EpochRecord(
        epoch=epoch,
        retain_acc=_safe_acc(pr, splits.retain_train.labels),
        unlearn_acc=_safe_acc(pu, splits.unlearn_train.labels),
        mi_margin=mi_margin(pr, pu, alpha, prior),
        retain_acc_val=_safe_acc(pr_v, splits.retain_val.labels),
        unlearn_acc_val=_safe_acc(pu_v, splits.unlearn_val.labels),
    )
    if len(pr_v) and len(pu_v):
        rec.mi_margin_val = mi_margin(pr_v, pu_v, alpha, prior)
    if len(pr_v):
        rec.kd_val = mean_kl_rows(_probs(teacher, splits.retain_val), pr_v)
    if losses is not None:
        rec.loss_total, rec.loss_utility, rec.loss_reg = (float(np.mean(c)) for c in zip(*losses))
    return rec


def train_unlearn(
    config: UnlearnConfig, init: ModelParams, retain: TabularDataset, unlearn: TabularDataset
) -> tuple[ModelParams, TrainTrajectory]:
    """Regularized marginal data unlearning from a pre-trained classifier.

    ``init`` doubles as the frozen teacher of the ``kl_anchor`` method.  The
    stop rule, if any, is evaluated on stratified validation splits of the
    retain and unlearn sets.
    """
    _check_model(init, retain, unlearn)
    if config.method is Method.FEATURE_MI:
        raise ValueError("feature_mi is trained with train_feature")
    if len(retain) == 0 or len(unlearn) == 0:
        raise ValueError("retain and unlearn sets must be non-empty")
    splits = split_unlearn_data(retain, unlearn, config.val_fraction, config.seed)
    alpha = resolve_alpha(config, len(splits.retain_train), len(splits.unlearn_train))
    teacher = init.copy()
    params = init.copy()
    rng = np.random.default_rng(config.seed + 1)
    state = OptimizerState.for_params(params, lr=config.lr, weight_decay=config.weight_decay)
    traj = TrainTrajectory(_unlearn_record(0, params, teacher, splits, alpha, config.prior))
    rt, ut = splits.retain_train, splits.unlearn_train
    lam = config.lam
    for epoch in range(1, config.epochs + 1):
        losses = []
        for ridx, uidx in paired_batches(len(rt), len(ut), config.batch_size, rng):
            xr, yr = rt.features[ridx], rt.labels[ridx]
            xu, yu = ut.features[uidx], ut.labels[uidx]
            out_r, cache_r = forward(params, xr)
            out_u, cache_u = forward(params, xu)
            if config.method is Method.MARGINAL_MI:
                lv = loss_marginal(out_r, yr, out_u, lam, alpha, config.prior)
            elif config.method is Method.GRAD_DIFF:
                lv = loss_grad_diff(out_r, yr, out_u, yu, lam, config.c_max)
            else:
                lv = loss_kl_anchor(forward(teacher, xr)[0], out_r, out_u, yu, lam, config.c_max)
            g_r, g_u = lv.grads
            grads = backward(params, cache_r, g_r)
            gu = backward(params, cache_u, g_u)
            for a, b in zip(grads.layers, gu.layers):
                a.weights += b.weights
                a.biases += b.biases
            params, state = adam_step(state, params, grads)
            losses.append((lv.total, lv.utility, lv.reg))
        rec = _unlearn_record(epoch, params, teacher, splits, alpha, config.prior, losses)
        traj.records.append(rec)
        logger.info(
            "epoch %d: retain_acc=%.4f unlearn_acc=%.4f mi=%.3e", epoch, rec.retain_acc, rec.unlearn_acc, rec.mi_margin
        )
        if config.stop_rule is not None:
            decision = early_stop_check(config.stop_rule, traj)
            if decision.stop:
                traj.stopped_at = decision.epoch
                break
    return params, traj


def _feature_record(epoch, params, data: TabularDataset, losses=None, skipped=0) -> FeatureRecord:
    probs = _probs(params, data)
    rec = FeatureRecord(
        epoch=epoch,
        acc=accuracy(probs, data.labels),
        acc_rand=acc_rand(probs, data.labels),
        dp_gap=dp_gap(probs[:, 1], data.groups) if params.n_outputs > 1 else math.nan,
        mi=feature_mi_loss(probs, data.groups).value,
        skipped_batches=skipped,
    )
    if losses:
        rec.loss_total, rec.loss_utility, rec.loss_reg = (float(np.mean(c)) for c in zip(*losses))
    return rec


def train_feature(
    config: UnlearnConfig, init: ModelParams, dataset: TabularDataset, eval_data: Optional[TabularDataset] = None
) -> tuple[ModelParams, TrainTrajectory]:
    """Feature unlearning: ``(1 - lam) CE(Y; S) + lam I(S; Z)`` per mini-batch.

    The trajectory is measured on ``eval_data`` (default: the training set).
    """
    _check_model(init, dataset)
    if dataset.n_groups < 2:
        raise ValueError("feature unlearning needs at least two groups")
    eval_data = eval_data if eval_data is not None else dataset
    params = init.copy()
    rng = np.random.default_rng(config.seed + 1)
    state = OptimizerState.for_params(params, lr=config.lr, weight_decay=config.weight_decay)
    traj = TrainTrajectory(_feature_record(0, params, eval_data))
    n_groups = dataset.n_groups
    for epoch in range(1, config.epochs + 1):
        losses, skipped = [], 0
        for idx in shuffled_batches(len(dataset), config.batch_size, rng):
            out, cache = forward(params, dataset.features[idx])
            lv = loss_feature(out, dataset.labels[idx], dataset.groups[idx], config.lam, n_groups)
            if len(np.unique(dataset.groups[idx])) < n_groups:
                skipped += 1
            params, state = adam_step(state, params, backward(params, cache, lv.grads[0]))
            losses.append((lv.total, lv.utility, lv.reg))
        traj.records.append(_feature_record(epoch, params, eval_data, losses, skipped))
    return params, traj
