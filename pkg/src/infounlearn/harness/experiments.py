"""Experiment drivers behind the CLI subcommands.

Each driver is a pure function of its config (seed included) and input
files, writes its artifacts into ``out`` and returns a ``RunReport``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional

import numpy as np

from .. import barycenter as bc
from ..certificates import (
    VacuousCertificateError,
    compression_rate_certificate,
    empirical_sup_log_odds,
)
from ..densities import (
    CategoricalPMF,
    DataFormatError,
    Grid,
    GridDensity,
    TabularDataset,
    kde_on_grid,
    read_dataset,
    tv_distance,
    write_dataset,
)
from ..infotheory import mutual_info_mixture
from ..smallnet import (
    ModelParams,
    OptimizerState,
    adam_step,
    backward,
    forward,
    grid_cross_entropy,
    init_mlp,
    init_residual_scalar,
    kde_backward,
    kde_forward,
)
from ..unlearner import (
    EarlyStopRule,
    Method,
    StopKind,
    UnlearnConfig,
    build_marginal_pair,
    loss_grad_diff_grid,
    loss_kl_anchor_grid,
    loss_marginal_grid,
    paired_batches,
    shuffled_batches,
    pretrain,
    resolve_alpha,
    split_unlearn_data,
    train_feature,
    train_unlearn,
)
from .config import ConfigError
from .io import bin_uniform, read_outputs, write_json, write_outputs, write_rows, write_traces

logger = logging.getLogger(__name__)


class AuditFailure(RuntimeError):
    """The audit ran but the output fails the requested guarantee."""


class NonConvergence(RuntimeError):
    pass


@dataclass
class RunReport:
    command: str
    config: dict
    outputs: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    certificate: Optional[dict] = None
    wall_time: float = 0.0  # kept out of report.json so reruns stay byte-identical

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "outputs": self.outputs,
            "metrics": self.metrics,
            "certificate": self.certificate,
        }

    def save(self, out: Path) -> None:
        self.outputs["report"] = "report.json"
        write_json(self.to_dict(), out / "report.json")


def _prepare(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# Synthetic data -------------------------------------------------------------------


def forget_gaussian_data(L: float, n_r: int, n_u: int, mu: float, sigma: float, rng: np.random.Generator):
    """Uniform retain samples and truncated-Gaussian unlearn samples on [-L, L]."""
    if not (L > 0 and sigma > 0) or n_r < 1 or n_u < 1:
        raise ConfigError("need L > 0, sigma > 0 and positive sample counts")
    xr = rng.uniform(-L, L, n_r)
    parts, have = [], 0
    for _ in range(1000):
        draw = rng.normal(mu, sigma, max(2 * n_u, 64))
        draw = draw[np.abs(draw) <= L]
        parts.append(draw)
        have += draw.size
        if have >= n_u:
            break
    else:
        raise ConfigError("truncation interval has negligible Gaussian mass")
    return xr, np.concatenate(parts)[:n_u]


def make_blobs(n_classes: int, per_class: int, spread: float, rng: np.random.Generator) -> TabularDataset:
    """2D Gaussian blobs with centers on a circle of radius 3."""
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    centers = 3.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    y = np.repeat(np.arange(n_classes), per_class)
    x = centers[y] + spread * rng.normal(size=(y.size, 2))
    return TabularDataset(x, y, np.zeros(y.size, dtype=np.int64), n_classes=n_classes)


def make_feature_data(n: int, corr: float, rng: np.random.Generator) -> TabularDataset:
    """Binary Y and Z with ``corr(Y, Z) = corr`` and features carrying both.

    ``Y = Z`` with probability ``(1 + corr) / 2``; f0 is a noisy view of Y,
    f1 a noisy view of Z and f2 pure noise.
    """
    if not -1.0 <= corr <= 1.0:
        raise ConfigError("synthetic_corr must lie in [-1, 1]")
    z = rng.integers(0, 2, n)
    agree = rng.uniform(size=n) < (1.0 + corr) / 2.0
    y = np.where(agree, z, 1 - z)
    x = np.stack(
        [(2 * y - 1) + rng.normal(size=n), 1.5 * (2 * z - 1) + rng.normal(size=n), rng.normal(size=n)], axis=1
    )
    return TabularDataset(x, y, z, n_classes=2)


def make_shifted_groups(n: int, shift: float, rng: np.random.Generator) -> TabularDataset:
    """1D features: group 0 ~ N(0, 1), group 1 ~ N(shift, 1)."""
    z = np.repeat([0, 1], n)
    x = rng.normal(size=2 * n) + shift * z
    return TabularDataset(x[:, None], np.zeros(2 * n, dtype=np.int64), z)


# forget-gaussian -------------------------------------------------------------------

_GAUSSIAN_METHODS = {"marginal": "marginal", "marginal_mi": "marginal", "grad_diff": "grad_diff",
                     "kl": "kl", "kl_anchor": "kl"}


def _grid_stats(params, xr, xu, grid, h_y, alpha, prior) -> dict:
    fr = forward(params, xr)[0].ravel()
    fu = forward(params, xu)[0].ravel()
    kr = kde_on_grid(fr, grid, h_y)
    ku = kde_on_grid(fu, grid, h_y)
    p0, p1 = build_marginal_pair(kr, ku, alpha)
    return {
        "kr": kr,
        "ku": ku,
        "mi_margin": mutual_info_mixture(p0, p1, prior),
        "tv_unlearn_retain": tv_distance(ku, kr),
        "tv_retain_uniform": tv_distance(kr, GridDensity.uniform(grid)),
    }


def run_forget_gaussian(cfg: dict, out) -> RunReport:
    start = time.perf_counter()
    out = _prepare(out)
    method = _GAUSSIAN_METHODS.get(cfg["method"])
    if method is None:
        raise ConfigError(f"unknown method {cfg['method']!r}; use marginal, grad_diff or kl")
    if not 0.0 < cfg["alpha"] < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if not 0.0 <= cfg["lam"] <= 1.0:
        raise ConfigError("lam must lie in [0, 1]")
    rng = np.random.default_rng(cfg["seed"])
    L = cfg["L"]
    grid = Grid(-L, L, cfg["grid_points"])
    xr, xu = forget_gaussian_data(L, cfg["n_retain"], cfg["n_unlearn"], cfg["mu"], cfg["sigma"], rng)
    p_xr = kde_forward(xr, grid, cfg["h_x"]).values
    p_xu = kde_forward(xu, grid, cfg["h_x"]).values
    target = cfg["alpha"] * p_xr + (1.0 - cfg["alpha"]) * p_xu
    h_y = cfg["h_y"]
    hyper = {"lr": cfg["lr"], "weight_decay": cfg["weight_decay"]}

    # pretrain so that the retain outputs look like the mixture
    params = init_residual_scalar(cfg["seed"], width=cfg["width"], depth=cfg["depth"], in_range=L)
    state = OptimizerState.for_params(params, **hyper)
    bs = cfg["batch_size"] or xr.size
    for _ in range(cfg["pretrain_epochs"]):
        for idx in shuffled_batches(xr.size, bs, rng):
            out_r, cache = forward(params, xr[idx])
            k = kde_forward(out_r, grid, h_y)
            _, _, dq = grid_cross_entropy(target, k.values, grid.dx)
            params, state = adam_step(state, params, backward(params, cache, kde_backward(k, dq)[:, None]))
    pretrained = params.copy()

    malpha = cfg["marginal_alpha"] if cfg["marginal_alpha"] is not None else xr.size / (xr.size + xu.size)
    prior, lam = cfg["prior"], cfg["lam"]
    stats = _grid_stats(params, xr, xu, grid, h_y, malpha, prior)
    anchor = stats["kr"].values
    kr0 = stats["kr"]
    traces = [(0, "retain", stats["kr"].values), (0, "unlearn", stats["ku"].values)]
    rows = [(0, stats["mi_margin"], stats["tv_unlearn_retain"], stats["tv_retain_uniform"], 0.0,
             math.nan, math.nan, math.nan)]
    state = OptimizerState.for_params(params, **hyper)
    for epoch in range(1, cfg["epochs"] + 1):
        losses = []
        for ridx, uidx in paired_batches(xr.size, xu.size, bs, rng):
            out_r, cache_r = forward(params, xr[ridx])
            out_u, cache_u = forward(params, xu[uidx])
            if method == "marginal":
                lv = loss_marginal_grid(out_r, out_u, p_xr, grid, h_y, lam, malpha, prior)
            elif method == "grad_diff":
                lv = loss_grad_diff_grid(out_r, out_u, p_xr, p_xu, grid, h_y, lam, cfg["c_max"])
            else:
                lv = loss_kl_anchor_grid(out_r, out_u, anchor, p_xu, grid, h_y, lam, cfg["c_max"])
            grads = backward(params, cache_r, lv.grads[0][:, None])
            gu = backward(params, cache_u, lv.grads[1][:, None])
            for a, b in zip(grads.layers, gu.layers):
                a.weights += b.weights
                a.biases += b.biases
            params, state = adam_step(state, params, grads)
            losses.append((lv.total, lv.utility, lv.reg))
        stats = _grid_stats(params, xr, xu, grid, h_y, malpha, prior)
        tot, util, reg = (float(np.mean(c)) for c in zip(*losses))
        rows.append((epoch, stats["mi_margin"], stats["tv_unlearn_retain"], stats["tv_retain_uniform"],
                     tv_distance(stats["kr"], kr0), tot, util, reg))
        if epoch % max(1, cfg["trace_every"]) == 0 or epoch == cfg["epochs"]:
            traces += [(epoch, "retain", stats["kr"].values), (epoch, "unlearn", stats["ku"].values)]

    write_rows(out / "trajectory.csv",
               ["epoch", "mi_margin_nats", "tv_unlearn_retain", "tv_retain_uniform", "tv_retain_initial",
                "loss_total", "loss_utility", "loss_reg"], rows)
    write_traces(out / "traces.csv", grid, traces)
    pretrained.save(out / "pretrained.json")
    params.save(out / "model.json")
    mi0, mi1 = rows[0][1], rows[-1][1]
    metrics = {
        "mi_margin_initial": mi0,
        "mi_margin_final": mi1,
        "mi_ratio": mi1 / mi0 if mi0 > 0 else math.nan,
        "tv_unlearn_retain": rows[-1][2],
        "tv_retain_uniform": rows[-1][3],
        "tv_retain_initial": rows[-1][4],
        "marginal_alpha": malpha,
    }
    if method == "marginal":
        metrics["tv_below_threshold"] = rows[-1][2] < cfg["tv_threshold"]
    report = RunReport("forget-gaussian", dict(cfg), {
        "trajectory": "trajectory.csv", "traces": "traces.csv", "model": "model.json",
        "pretrained": "pretrained.json"}, metrics)
    report.wall_time = time.perf_counter() - start
    report.save(out)
    return report


# unlearn ----------------------------------------------------------------------------

_CLASSIFIER_METHODS = {"marginal": Method.MARGINAL_MI, "marginal_mi": Method.MARGINAL_MI,
                       "grad_diff": Method.GRAD_DIFF, "kl": Method.KL_ANCHOR, "kl_anchor": Method.KL_ANCHOR}


def _stop_rule(cfg: dict, method: Method, n_classes: int) -> Optional[EarlyStopRule]:
    name = cfg["stop_rule"].strip().lower()
    if name == "none":
        return None
    if name == "auto":
        rule = EarlyStopRule.for_method(method, n_classes)
        kind, patience = rule.kind, rule.patience
    else:
        try:
            kind = StopKind(name)
        except ValueError:
            raise ConfigError(f"unknown stop_rule {name!r}") from None
        patience = 2 if kind is StopKind.CHANCE_ACCURACY else 1
    try:
        return EarlyStopRule(kind, threshold=cfg["stop_threshold"], margin=cfg["stop_margin"],
                             min_epochs=cfg["min_epochs"], patience=cfg["patience"] or patience,
                             n_classes=n_classes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def audit_rows(retain_probs: np.ndarray, unlearn_probs: np.ndarray, alpha: float):
    """Rows ``(output_bin, z, weight)`` whose weighted group PMFs are the marginal pair.

    ``z=1`` carries the retain softmax mass; ``z=0`` carries the mixture,
    retain mass scaled by ``alpha / |R|`` and unlearn mass by
    ``(1 - alpha) / |U|``.
    """
    k = retain_probs.shape[1]
    nr, nu = retain_probs.shape[0], unlearn_probs.shape[0]
    bins = np.concatenate([np.tile(np.arange(k), nr), np.tile(np.arange(k), nr), np.tile(np.arange(k), nu)])
    z = np.concatenate([np.ones(nr * k, dtype=np.int64), np.zeros((nr + nu) * k, dtype=np.int64)])
    w = np.concatenate([
        retain_probs.ravel(), alpha * retain_probs.ravel() / nr, (1.0 - alpha) * unlearn_probs.ravel() / nu
    ])
    return bins, z, w


def run_unlearn_classifier(cfg: dict, out) -> RunReport:
    start = time.perf_counter()
    out = _prepare(out)
    method = _CLASSIFIER_METHODS.get(cfg["method"])
    if method is None:
        raise ConfigError(f"unknown method {cfg['method']!r}; use marginal_mi, grad_diff or kl_anchor")
    rng = np.random.default_rng(cfg["seed"])
    outputs = {}
    if cfg["retain"] or cfg["unlearn"]:
        if not (cfg["retain"] and cfg["unlearn"]):
            raise ConfigError("give both retain and unlearn files, or neither for synthetic data")
        retain = read_dataset(cfg["retain"])
        unlearn = read_dataset(cfg["unlearn"])
        if retain.n_features != unlearn.n_features:
            raise DataFormatError("retain and unlearn files have different feature counts")
    else:
        full = make_blobs(cfg["synthetic_classes"], cfg["synthetic_per_class"], cfg["synthetic_spread"], rng)
        if not 0 <= cfg["remove_class"] < cfg["synthetic_classes"]:
            raise ConfigError("remove_class out of range")
        retain = full.subset(np.flatnonzero(full.labels != cfg["remove_class"]))
        unlearn = full.subset(np.flatnonzero(full.labels == cfg["remove_class"]))
        write_dataset(retain, out / "retain.csv")
        write_dataset(unlearn, out / "unlearn.csv")
        outputs.update(retain="retain.csv", unlearn="unlearn.csv")
    n_classes = cfg["n_classes"] or int(max(retain.labels.max(), unlearn.labels.max())) + 1
    if cfg["model"]:
        init = ModelParams.load(cfg["model"])
    else:
        init = init_mlp([retain.n_features, *cfg["hidden"], n_classes], cfg["seed"])
        both = TabularDataset(np.vstack([retain.features, unlearn.features]),
                              np.concatenate([retain.labels, unlearn.labels]),
                              np.concatenate([retain.groups, unlearn.groups]), n_classes=n_classes)
        init = pretrain(init, both, cfg["pretrain_epochs"], cfg["batch_size"], cfg["seed"],
                        cfg["lr"], cfg["weight_decay"])
    init.save(out / "pretrained.json")
    try:
        config = UnlearnConfig(
            lam=cfg["lam"], method=method, epochs=cfg["epochs"], batch_size=cfg["batch_size"],
            alpha=cfg["alpha"], prior=cfg["prior"], stop_rule=_stop_rule(cfg, method, n_classes),
            seed=cfg["seed"], lr=cfg["lr"], weight_decay=cfg["weight_decay"], c_max=cfg["c_max"],
            val_fraction=cfg["val_fraction"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    params, traj = train_unlearn(config, init, retain, unlearn)
    traj.to_csv(out / "trajectory.csv")
    params.save(out / "model.json")

    splits = split_unlearn_data(retain, unlearn, config.val_fraction, config.seed)
    alpha = resolve_alpha(config, len(splits.retain_train), len(splits.unlearn_train))
    pr = forward(params, splits.retain_train.features)[0]
    pu = forward(params, splits.unlearn_train.features)[0]
    write_outputs(out / "outputs.csv", *audit_rows(pr, pu, alpha))
    outputs.update(trajectory="trajectory.csv", model="model.json", pretrained="pretrained.json",
                   outputs="outputs.csv")

    first, last = traj.baseline, traj.records[-1]
    metrics = {
        "retain_acc_initial": first.retain_acc, "retain_acc_final": last.retain_acc,
        "unlearn_acc_initial": first.unlearn_acc, "unlearn_acc_final": last.unlearn_acc,
        "mi_margin_initial": first.mi_margin, "mi_margin_final": last.mi_margin,
        "epochs_run": last.epoch, "stopped_at": traj.stopped_at, "alpha": alpha,
    }
    report = RunReport("unlearn", dict(cfg), outputs, metrics)
    failure = None
    try:
        cert = compression_rate_certificate(last.mi_margin, cfg["epsilon"], cfg["prior"])
        cert.save(out / "certificate.json")
        report.certificate = cert.to_dict()
        outputs["certificate"] = "certificate.json"
    except VacuousCertificateError as exc:
        metrics["certificate_error"] = str(exc)
        failure = exc
    report.wall_time = time.perf_counter() - start
    report.save(out)
    if failure is not None:
        raise AuditFailure(str(failure))
    return report


# feature-unlearn ---------------------------------------------------------------------


def run_feature_unlearn(cfg: dict, out) -> RunReport:
    start = time.perf_counter()
    out = _prepare(out)
    rng = np.random.default_rng(cfg["seed"])
    outputs = {}
    if cfg["data"]:
        data = read_dataset(cfg["data"], cfg["n_classes"])
    else:
        data = make_feature_data(cfg["synthetic_n"], cfg["synthetic_corr"], rng)
        write_dataset(data, out / "data.csv")
        outputs["data"] = "data.csv"
    if len(np.unique(data.groups)) < 2:
        raise DataFormatError("feature unlearning needs at least two groups")
    if not cfg["lams"]:
        raise ConfigError("lams is empty")
    perm = rng.permutation(len(data))
    n_test = int(round(cfg["test_fraction"] * len(data)))
    test, train = data.subset(np.sort(perm[:n_test])), data.subset(np.sort(perm[n_test:]))
    if n_test == 0:
        test = train
    init = init_mlp([data.n_features, *cfg["hidden"], max(2, data.n_classes)], cfg["seed"])
    frontier = []
    for i, lam in enumerate(cfg["lams"]):
        try:
            config = UnlearnConfig(lam=lam, method=Method.FEATURE_MI, epochs=cfg["epochs"],
                                   batch_size=cfg["batch_size"], seed=cfg["seed"], lr=cfg["lr"],
                                   weight_decay=cfg["weight_decay"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        _, traj = train_feature(config, init, train, eval_data=test)
        name = f"trajectory_lam{i}.csv"
        traj.to_csv(out / name)
        outputs[f"trajectory_lam{i}"] = name
        r = traj.records[-1]
        frontier.append((lam, r.acc, r.acc_rand, r.dp_gap, r.mi))
    write_rows(out / "frontier.csv", ["lam", "acc", "acc_rand", "dp_gap", "mi_nats"], frontier)
    outputs["frontier"] = "frontier.csv"
    gaps = [row[3] for row in frontier]
    tol = cfg["dp_tolerance"]
    metrics = {
        "dp_gap": gaps,
        "acc_rand": [row[2] for row in frontier],
        "dp_gap_non_increasing": all(b <= a + tol for a, b in zip(gaps, gaps[1:])),
    }
    report = RunReport("feature-unlearn", dict(cfg), outputs, metrics)
    report.wall_time = time.perf_counter() - start
    report.save(out)
    return report


# barycenter -----------------------------------------------------------------------------


def binned_sup_log_odds(values: np.ndarray, groups: np.ndarray, n_bins: int) -> float:
    """Largest pairwise sup-log-odds between per-group histograms of one feature."""
    bins = bin_uniform(values, n_bins)
    labels = np.unique(groups)
    pmfs = [CategoricalPMF.from_weights(np.bincount(bins[groups == g], minlength=n_bins)) for g in labels]
    return max(empirical_sup_log_odds(a, b) for a, b in combinations(pmfs, 2))


def group_w2(values: np.ndarray, groups: np.ndarray) -> dict:
    labels = np.unique(groups)
    return {
        f"{a}-{b}": bc.w2_distance(bc.PointCloud(values[groups == a]), bc.PointCloud(values[groups == b]))
        for a, b in combinations(labels, 2)
    }


def run_barycenter(cfg: dict, out) -> RunReport:
    start = time.perf_counter()
    out = _prepare(out)
    rng = np.random.default_rng(cfg["seed"])
    outputs = {}
    if cfg["data"]:
        data = read_dataset(cfg["data"])
    else:
        data = make_shifted_groups(cfg["synthetic_n"], cfg["synthetic_shift"], rng)
        write_dataset(data, out / "data.csv")
        outputs["data"] = "data.csv"
    if cfg["mode"] not in bc.NEUTRALIZE_MODES:
        raise ConfigError(f"mode must be one of {bc.NEUTRALIZE_MODES}")
    try:
        result = bc.neutralize_dataset(data, tol=cfg["tol"], max_iter=cfg["max_iter"], seed=cfg["seed"],
                                       mode=cfg["mode"], reg=cfg["reg"])
    except ValueError as exc:
        raise DataFormatError(str(exc)) from None
    neutral = result.data
    write_dataset(neutral, out / "neutralized.csv",
                  extra={"orig_row": list(range(len(neutral))), "group": neutral.groups.tolist()})
    outputs["neutralized"] = "neutralized.csv"
    features = []
    for j in range(data.n_features):
        features.append({
            "feature": j,
            "w2_pre": group_w2(data.features[:, j], data.groups),
            "w2_post": group_w2(neutral.features[:, j], neutral.groups),
            "sup_log_odds_pre": binned_sup_log_odds(data.features[:, j], data.groups, cfg["bins"]),
            "sup_log_odds_post": binned_sup_log_odds(neutral.features[:, j], neutral.groups, cfg["bins"]),
        })
    metrics = {
        "converged": result.converged,
        "approximate": result.approximate,
        "max_w2_post": max(max(f["w2_post"].values()) for f in features),
        "features": features,
    }
    report = RunReport("barycenter", dict(cfg), outputs, metrics)
    report.wall_time = time.perf_counter() - start
    report.save(out)
    if not result.converged:
        raise NonConvergence("barycenter iteration did not converge; last iterate written")
    return report


# audit --------------------------------------------------------------------------------------


def audit_table(table, prior: float = 0.5):
    """``(mu, sup_log_odds, {z: pmf})`` for a binned output table."""
    if not (np.any(table.z == 0) and np.any(table.z == 1)):
        raise DataFormatError("audit needs rows for both z=0 and z=1")
    # at least two bins; an empty bin carries no mass under either group
    k = max(2, int(table.bins.max()) + 1)
    pmfs = {}
    for g in (0, 1):
        sel = table.z == g
        counts = np.bincount(table.bins[sel], weights=table.weights[sel], minlength=k)
        if counts.sum() <= 0:
            raise DataFormatError(f"group z={g} has zero total weight")
        pmfs[g] = CategoricalPMF.from_weights(counts)
    mu = mutual_info_mixture(pmfs[0], pmfs[1], prior)
    sup = empirical_sup_log_odds(pmfs[0], pmfs[1])
    return mu, sup, pmfs


def run_audit(cfg: dict, out) -> RunReport:
    start = time.perf_counter()
    out = _prepare(out)
    if not cfg["outputs"]:
        raise ConfigError("audit needs an outputs file")
    if not cfg["epsilon"] > 0:
        raise ConfigError("epsilon must be positive")
    table = read_outputs(cfg["outputs"], cfg["bins"])
    mu, sup, _ = audit_table(table, cfg["prior"])
    metrics = {"mu_nats": mu, "sup_log_odds": sup, "epsilon": cfg["epsilon"], "passed": sup <= cfg["epsilon"]}
    report = RunReport("audit", dict(cfg), {}, metrics)
    failure = None
    try:
        cert = compression_rate_certificate(mu, cfg["epsilon"], cfg["prior"])
        cert.save(out / "certificate.json")
        report.certificate = cert.to_dict()
        report.outputs["certificate"] = "certificate.json"
    except VacuousCertificateError as exc:
        metrics["certificate_error"] = str(exc)
        failure = str(exc)
    if failure is None and sup > cfg["epsilon"]:
        failure = f"empirical sup-log-odds {sup:.6g} exceeds epsilon {cfg['epsilon']:g}"
    report.wall_time = time.perf_counter() - start
    report.save(out)
    if failure is not None:
        raise AuditFailure(failure)
    return report


RUNNERS = {
    "forget-gaussian": run_forget_gaussian,
    "unlearn": run_unlearn_classifier,
    "feature-unlearn": run_feature_unlearn,
    "barycenter": run_barycenter,
    "audit": run_audit,
}
