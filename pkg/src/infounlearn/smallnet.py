"""Two small differentiable models with hand-written reverse mode.

``mlp``             ReLU hidden layers, softmax head over K classes.
``residual_scalar`` f(x) = x + g(x) with g a ReLU network R -> R.

Also holds the Adam optimizer and the adjoint of the grid KDE, so that
grid losses can be pushed back onto the scalar samples that produced them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .densities import Grid, effective_bandwidth, kde_weights

MLP = "mlp"
RESIDUAL_SCALAR = "residual_scalar"
LOG_FLOOR = 1e-12


class ShapeError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, layer: int):
        self.layer = layer
        super().__init__(f"non-finite gradient in layer {layer}")


@dataclass
class Layer:
    weights: np.ndarray  # (n_in, n_out)
    biases: np.ndarray  # (n_out,)


@dataclass
class ModelParams:
    arch: str
    layers: list[Layer]
    seed: Optional[int] = None

    def __post_init__(self):
        if self.arch not in (MLP, RESIDUAL_SCALAR):
            raise ValueError(f"unknown architecture {self.arch!r}")
        for i, layer in enumerate(self.layers):
            if layer.weights.ndim != 2 or layer.biases.shape != (layer.weights.shape[1],):
                raise ShapeError(f"layer {i}: bias does not match weight columns")
            if i and layer.weights.shape[0] != self.layers[i - 1].weights.shape[1]:
                raise ShapeError(f"layer {i}: input width does not match previous layer")
        if self.arch == RESIDUAL_SCALAR and (self.n_inputs != 1 or self.n_outputs != 1):
            raise ShapeError("residual_scalar maps R -> R")

    @property
    def n_inputs(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].weights.shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.n_inputs] + [layer.weights.shape[1] for layer in self.layers]

    @property
    def n_params(self) -> int:
        return sum(layer.weights.size + layer.biases.size for layer in self.layers)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.arch,
            [Layer(layer.weights.copy(), layer.biases.copy()) for layer in self.layers],
            self.seed,
        )

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            self.arch,
            [Layer(np.zeros_like(layer.weights), np.zeros_like(layer.biases)) for layer in self.layers],
            self.seed,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([np.r_[layer.weights.ravel(), layer.biases] for layer in self.layers])

    def with_flat(self, vec: np.ndarray) -> "ModelParams":
        out = self.zeros_like()
        pos = 0
        for layer in out.layers:
            for arr in (layer.weights, layer.biases):
                arr[...] = vec[pos : pos + arr.size].reshape(arr.shape)
                pos += arr.size
        return out

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "sizes": self.sizes,
            "seed": self.seed,
            "layers": [
                {"weights": layer.weights.tolist(), "biases": layer.biases.tolist()}
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        layers = [
            Layer(np.array(ld["weights"], dtype=float).reshape(a, b), np.array(ld["biases"], dtype=float))
            for ld, a, b in zip(d["layers"], d["sizes"][:-1], d["sizes"][1:])
        ]
        return cls(d["arch"], layers, d.get("seed"))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ModelParams":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def init_mlp(sizes: Sequence[int], seed: int) -> ModelParams:
    """He-initialized ReLU MLP with a softmax head; ``sizes = [d, h1, ..., K]``."""
    if len(sizes) < 2 or sizes[-1] < 2:
        raise ValueError("need at least an input width and K >= 2 classes")
    rng = np.random.default_rng(seed)
    layers = [
        Layer(rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b)), np.zeros(b))
        for a, b in zip(sizes[:-1], sizes[1:])
    ]
    return ModelParams(MLP, layers, seed)


def init_residual_scalar(
    seed: int, width: int = 32, depth: int = 1, out_scale: float = 0.01, in_range: float = 3.0
) -> ModelParams:
    """Residual scalar net close to the identity.

    Hidden ReLU units get kinks spread over ``[-in_range, in_range]``; the
    branch's output layer is drawn from ``N(0, out_scale^2)`` so that
    ``|f(x) - x|`` starts small.  ``out_scale=0`` gives the exact identity.
    """
    rng = np.random.default_rng(seed)
    layers = []
    n_in = 1
    for i in range(depth):
        if i == 0:
            w = rng.choice([-1.0, 1.0], size=(1, width)) * rng.uniform(0.5, 1.5, size=(1, width))
            kinks = rng.uniform(-in_range, in_range, size=width)
            b = -w[0] * kinks
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, width))
            b = np.zeros(width)
        layers.append(Layer(w, b))
        n_in = width
    layers.append(Layer(rng.normal(0.0, out_scale, size=(n_in, 1)), np.zeros(1)))
    return ModelParams(RESIDUAL_SCALAR, layers, seed)


class ForwardCache(NamedTuple):
    inputs: list  # input to each layer
    pre: list  # pre-activation of each layer
    output: np.ndarray


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: ModelParams, inputs) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(inputs, dtype=float)
    if params.arch == RESIDUAL_SCALAR and x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != params.n_inputs:
        raise ShapeError(f"expected inputs of width {params.n_inputs}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    ins, pres = [], []
    h = x
    last = len(params.layers) - 1
    for i, layer in enumerate(params.layers):
        ins.append(h)
        a = h @ layer.weights + layer.biases
        pres.append(a)
        h = np.maximum(a, 0.0) if i < last else a
    out = softmax(h) if params.arch == MLP else x + h
    return out, ForwardCache(ins, pres, out)


def backward(params: ModelParams, cache: ForwardCache, output_gradient) -> ModelParams:
    """Parameter gradient of a scalar loss given ``dloss / doutputs``."""
    g = np.asarray(output_gradient, dtype=float)
    if g.shape != cache.output.shape:
        raise ShapeError(f"output gradient shape {g.shape} != output shape {cache.output.shape}")
    if params.arch == MLP:
        p = cache.output
        g = p * (g - np.sum(p * g, axis=1, keepdims=True))
    grads = params.zeros_like()
    for i in range(len(params.layers) - 1, -1, -1):
        if i < len(params.layers) - 1:
            g = g * (cache.pre[i] > 0)
        grads.layers[i].weights[...] = cache.inputs[i].T @ g
        grads.layers[i].biases[...] = g.sum(axis=0)
        if i:
            g = g @ params.layers[i].weights.T
    return grads


def predict(params: ModelParams, inputs) -> np.ndarray:
    return forward(params, inputs)[0]


# Adam ------------------------------------------------------------------------


@dataclass
class OptimizerState:
    m: ModelParams
    v: ModelParams
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams, **hyper) -> "OptimizerState":
        return cls(params.zeros_like(), params.zeros_like(), **hyper)


def adam_step(
    state: OptimizerState, params: ModelParams, grads: ModelParams
) -> tuple[ModelParams, OptimizerState]:
    """Bias-corrected Adam with decoupled weight decay."""
    for i, layer in enumerate(grads.layers):
        if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.biases))):
            raise NonFiniteGradientError(i)
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    new_p, new_m, new_v = params.copy(), state.m.copy(), state.v.copy()
    for lp, lm, lv, lg in zip(new_p.layers, new_m.layers, new_v.layers, grads.layers):
        for name in ("weights", "biases"):
            p, m, v, g = (getattr(x, name) for x in (lp, lm, lv, lg))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= state.lr * ((m / c1) / (np.sqrt(v / c2) + state.eps) + state.weight_decay * p)
    new_state = OptimizerState(
        new_m, new_v, state.lr, state.beta1, state.beta2, state.eps, state.weight_decay, t
    )
    return new_p, new_state


# KDE adjoint and grid losses --------------------------------------------------


class KDE(NamedTuple):
    """Grid KDE values with the kernel matrix kept for the backward pass."""

    values: np.ndarray
    weights: np.ndarray
    samples: np.ndarray
    grid: Grid
    bandwidth: float


def kde_forward(samples, grid: Grid, bandwidth: float) -> KDE:
    s = np.asarray(samples, dtype=float).ravel()
    h = effective_bandwidth(grid, bandwidth)
    w = kde_weights(s, grid, h)
    return KDE(w.mean(axis=1) / grid.dx, w, s, grid, h)


def kde_backward(kde: KDE, value_gradient: np.ndarray) -> np.ndarray:
    """Per-sample gradient given ``dloss / dvalues`` on the grid."""
    g = np.asarray(value_gradient, dtype=float)
    w = kde.weights
    a = (kde.grid.points[:, None] - kde.samples[None, :]) / kde.bandwidth**2
    abar = np.sum(w * a, axis=0)
    gw = np.sum(g[:, None] * w * a, axis=0) - np.sum(g[:, None] * w, axis=0) * abar
    return gw / (kde.samples.size * kde.grid.dx)


def _flog(x: np.ndarray, floor: float) -> tuple[np.ndarray, np.ndarray]:
    """``log(max(x, floor))`` and the mask where the clamp is inactive."""
    live = x > floor
    return np.log(np.where(live, x, floor)), live


def grid_cross_entropy(p: np.ndarray, q: np.ndarray, dx: float, floor: float = LOG_FLOOR):
    """``-sum p log q dx`` on density values; returns ``(value, dp, dq)``."""
    lq, live = _flog(q, floor)
    value = -float(np.sum(p * lq)) * dx
    dq = np.where(live, -p / np.where(live, q, 1.0), 0.0) * dx
    return value, -lq * dx, dq


def grid_kl(p: np.ndarray, q: np.ndarray, dx: float, floor: float = LOG_FLOOR):
    """``sum p log(p/q) dx`` on density values; returns ``(value, dp, dq)``."""
    lp, live_p = _flog(p, floor)
    ce, dp_ce, dq = grid_cross_entropy(p, q, dx, floor)
    neg_ent = float(np.sum(p * lp)) * dx
    dp = (lp + live_p) * dx + dp_ce
    return neg_ent + ce, dp, dq


def grid_mutual_info(p0: np.ndarray, p1: np.ndarray, prior: float, dx: float, floor: float = LOG_FLOOR):
    """Mixture MI ``prior KL(p1||P) + (1-prior) KL(p0||P)``; returns ``(value, dp0, dp1)``.

    Works on any non-negative vectors (grid values with ``dx``, or PMFs with
    ``dx=1``).  Entries are clamped below at ``floor`` consistently in value
    and gradient.
    """
    l0, live0 = _flog(p0, floor)
    l1, live1 = _flog(p1, floor)
    q0, q1 = np.exp(l0), np.exp(l1)
    mix = prior * q1 + (1.0 - prior) * q0
    lm = np.log(mix)
    value = (prior * float(np.sum(q1 * (l1 - lm))) + (1.0 - prior) * float(np.sum(q0 * (l0 - lm)))) * dx
    dp1 = prior * (l1 - lm) * live1 * dx
    dp0 = (1.0 - prior) * (l0 - lm) * live0 * dx
    return value, dp0, dp1


@dataclass(frozen=True)
class CrossEntropyTo:
    """``H(target || p_samples)``."""

    target: np.ndarray


@dataclass(frozen=True)
class KLFrom:
    """``KL(reference || p_samples)``."""

    reference: np.ndarray


@dataclass(frozen=True)
class MIMixture:
    """Mixture MI with the samples' density on the ``Z=1`` side."""

    partner: np.ndarray
    prior: float = 0.5


GridLoss = Union[CrossEntropyTo, KLFrom, MIMixture]


def kde_loss_gradient(samples, grid: Grid, bandwidth: float, loss: GridLoss) -> tuple[float, np.ndarray]:
    """Value of a grid loss of the samples' KDE and its gradient w.r.t. each sample."""
    kde = kde_forward(samples, grid, bandwidth)
    dx = grid.dx
    if isinstance(loss, CrossEntropyTo):
        value, _, dv = grid_cross_entropy(np.asarray(loss.target), kde.values, dx)
    elif isinstance(loss, KLFrom):
        value, _, dv = grid_kl(np.asarray(loss.reference), kde.values, dx)
    elif isinstance(loss, MIMixture):
        value, _, dv = grid_mutual_info(np.asarray(loss.partner), kde.values, loss.prior, dx)
    else:
        raise TypeError(f"unknown grid loss {loss!r}")
    return value, kde_backward(kde, dv)
