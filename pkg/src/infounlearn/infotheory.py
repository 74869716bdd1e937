"""Entropy, divergences and mutual information, in nats.

All functionals return plain floats in natural-log units.  A divergence
that is infinite because of an absolute-continuity failure is returned as
``math.inf`` rather than raised; callers test with ``math.isinf``.
"""

from __future__ import annotations

import math

import numpy as np

from .densities import (
    CategoricalPMF,
    Distribution,
    GridDensity,
    check_common_support,
    masses_of,
)

LN2 = math.log(2.0)


def to_bits(nats: float) -> float:
    return nats / LN2


def to_nats(bits: float) -> float:
    return bits * LN2


def _xlogy_sum(p: np.ndarray, q: np.ndarray) -> float:
    """Sum of ``p * log(q)`` with ``0 * log(anything) = 0``; -inf if p>0 where q=0."""
    m = p > 0
    if np.any(q[m] <= 0):
        return -math.inf
    return float(np.sum(p[m] * np.log(q[m])))


def entropy(p: CategoricalPMF) -> float:
    """Shannon entropy ``-sum p log p``."""
    return max(0.0, -_xlogy_sum(p.probs, p.probs))


def grid_entropy(p: GridDensity) -> float:
    """Discretized differential entropy ``-sum p(x_k) log p(x_k) dx``."""
    return -_xlogy_sum(p.values, p.values) * p.grid.dx


def kl_divergence(p: Distribution, q: Distribution) -> float:
    """KL(p || q).  On grids this is ``sum p log(p/q) dx`` on density values."""
    check_common_support(p, q)
    if isinstance(p, GridDensity):
        a, b, w = p.values, q.values, p.grid.dx
    else:
        a, b, w = p.probs, q.probs, 1.0
    m = a > 0
    if np.any(b[m] <= 0):
        return math.inf
    return max(0.0, float(np.sum(a[m] * np.log(a[m] / b[m]))) * w)


def cross_entropy_grid(p: GridDensity, q: GridDensity) -> float:
    """``-sum p(x_k) log q(x_k) dx``; infinite where q vanishes under p."""
    check_common_support(p, q)
    return -_xlogy_sum(p.values, q.values) * p.grid.dx


def mutual_info_mixture(p0: Distribution, p1: Distribution, prior: float = 0.5) -> float:
    """I(S; Z) for ``Z ~ Bernoulli(prior)``, ``S | Z=1 ~ p1``, ``S | Z=0 ~ p0``.

    Equals ``prior * KL(p1 || P) + (1 - prior) * KL(p0 || P)`` with the
    mixture ``P = prior * p1 + (1 - prior) * p0`` (a weighted Jensen-Shannon
    divergence), hence finite and at most ``H2(prior)``.
    """
    if not 0.0 < prior < 1.0:
        raise ValueError(f"prior must lie in (0, 1), got {prior}")
    check_common_support(p0, p1)
    a, b = masses_of(p0), masses_of(p1)
    mix = prior * b + (1.0 - prior) * a
    total = 0.0
    for weight, part in ((prior, b), (1.0 - prior, a)):
        m = part > 0
        total += weight * float(np.sum(part[m] * np.log(part[m] / mix[m])))
    return max(0.0, total)


def binary_entropy(p: float) -> float:
    """H2(p) in nats."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log1p(-p)


def binary_entropy_inv(y: float) -> float:
    """The unique ``x`` in ``[0, 1/2]`` with ``H2(x) = y``, by bisection."""
    if y < 0 or y > LN2 + 1e-15:
        raise ValueError(f"binary entropy {y} outside [0, ln 2]")
    if y <= 0.0:
        return 0.0
    if y >= LN2:
        return 0.5
    lo, hi = 0.0, 0.5
    # H2 is increasing on [0, 1/2]; bisect to float resolution
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if binary_entropy(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fano_accuracy_bound(prior: float, mi: float) -> float:
    """Upper bound on the Bayes accuracy of guessing a binary Z from the output.

    ``1 - H2^{-1}(max(0, H2(prior) - mi))`` with H2 inverted on ``[0, 1/2]``.
    """
    if not 0.0 < prior < 1.0:
        raise ValueError(f"prior must lie in (0, 1), got {prior}")
    residual = max(0.0, binary_entropy(prior) - max(0.0, mi))
    return 1.0 - binary_entropy_inv(residual)


def pinsker_bound(kl: float) -> float:
    """``sqrt(kl / 2)``, an upper bound on total variation."""
    if kl < 0:
        raise ValueError("KL must be non-negative")
    return math.sqrt(kl / 2.0)
