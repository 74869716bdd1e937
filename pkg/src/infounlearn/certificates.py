"""Closed-form unlearning guarantees and the empirical log-odds audit.

Every function here is a pure map from measured information quantities
(nats) to a bound.  Bounds that are probabilities or total-variation
distances are clamped to ``[0, 1]``; where the raw value matters for
auditing it is returned alongside.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence, Union

import numpy as np

from .densities import CategoricalPMF, check_common_support


class BoundName(str, Enum):
    COMPRESSION_RATE = "compression_rate"
    ODDS_INFERENCE = "odds_inference"
    EMPIRICAL_SUP = "empirical_sup"


class VacuousCertificateError(ValueError):
    """The measured information is too large for the bound to say anything."""

    def __init__(self, mu: float, epsilon: float, max_mu: float):
        self.mu = mu
        self.epsilon = epsilon
        self.max_mu = max_mu
        super().__init__(
            f"vacuous certificate: mu={mu:.6g} nats must be below {max_mu:.6g} for epsilon={epsilon:g}"
        )


class ClampedBound(NamedTuple):
    value: float
    raw: float

    @property
    def clamped(self) -> bool:
        return self.value != self.raw


class OddsBound(NamedTuple):
    probability: float
    log_odds_cap: float


class GroupBound(NamedTuple):
    kl_bound: float
    tv_bound: float


class TailBounds(NamedTuple):
    kl_tail: float
    tv_tail: float


@dataclass(frozen=True)
class UnlearningCertificate:
    mu_nats: float
    epsilon: float
    confidence: float
    bound_name: BoundName
    prior: float = 0.5
    clamped: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bound_name", BoundName(self.bound_name))
        if not self.mu_nats >= 0:
            raise ValueError("mu must be non-negative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if not 0.0 < self.prior < 1.0:
            raise ValueError("prior must lie in (0, 1)")
        if self.bound_name is BoundName.COMPRESSION_RATE:
            limit = max_admissible_mu(self.epsilon)
            if not self.mu_nats < limit:
                raise VacuousCertificateError(self.mu_nats, self.epsilon, limit)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bound_name"] = self.bound_name.value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "UnlearningCertificate":
        return cls(**d)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "UnlearningCertificate":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_prior(prior: float) -> None:
    if not 0.0 < prior < 1.0:
        raise ValueError(f"prior must lie in (0, 1), got {prior}")


def tv_from_mi_bound(mi: float, prior: float = 0.5) -> float:
    """TV between the two conditional output laws, ``sqrt(I / (2 pi (1 - pi)))``."""
    _check_prior(prior)
    return min(1.0, math.sqrt(max(0.0, mi) / (2.0 * prior * (1.0 - prior))))


def max_admissible_mu(epsilon: float) -> float:
    """``2 * ((e^eps - 1) / (e^eps + 1))^2``, the largest MI with a non-trivial certificate."""
    return 2.0 * math.tanh(epsilon / 2.0) ** 2


def compression_rate_confidence(mu: float, epsilon: float, *, sound: bool = False) -> float:
    """Probability that epsilon-marginal unlearning holds given ``I <= mu``.

    ``1 - (e^eps + 1)/(e^eps - 1) * sqrt(mu / 2)`` (equal priors).  With
    ``sound=True`` the adversary-advantage constant ``sqrt(2 mu)`` is used
    instead of ``sqrt(mu / 2)``; see the README for why the default constant
    can be optimistic.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if mu < 0:
        raise ValueError("mu must be non-negative")
    limit = max_admissible_mu(epsilon)
    if sound:
        limit /= 4.0
    if not mu < limit:
        raise VacuousCertificateError(mu, epsilon, limit)
    coth = 1.0 / math.tanh(epsilon / 2.0)
    advantage = math.sqrt(2.0 * mu) if sound else math.sqrt(mu / 2.0)
    return min(1.0, max(0.0, 1.0 - coth * advantage))


def odds_inference_probability(mi: float, eps: float, *, sound: bool = False) -> OddsBound:
    """Lower bound on P(|posterior log-odds| <= log((1+eps)/(1-eps))).

    The probability is ``max(0, 1 - sqrt(mi / 2) / eps)``, or with
    ``sound=True`` ``max(0, 1 - sqrt(2 mi) / eps)``.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    advantage = math.sqrt(2.0 * max(0.0, mi)) if sound else math.sqrt(max(0.0, mi) / 2.0)
    prob = max(0.0, 1.0 - advantage / eps)
    return OddsBound(prob, math.log((1.0 + eps) / (1.0 - eps)))


def anchor_distance_bound(
    delta: float, delta_g: float, eps_u: float, prior: float, anchor_tv: float
) -> ClampedBound:
    """TV between unlearned and retrained output laws on the mixture.

    Sum of a utility-alignment term ``sqrt(1/2)(sqrt(delta) + sqrt(delta_g))``,
    a membership term ``sqrt(eps_u / (2 pi (1 - pi)))`` and the anchor's own
    retain-vs-mixture drift ``anchor_tv``.
    """
    _check_prior(prior)
    if min(delta, delta_g, eps_u, anchor_tv) < 0:
        raise ValueError("all terms must be non-negative")
    raw = (
        math.sqrt(0.5) * (math.sqrt(delta) + math.sqrt(delta_g))
        + math.sqrt(eps_u / (2.0 * prior * (1.0 - prior)))
        + anchor_tv
    )
    return ClampedBound(min(1.0, raw), raw)


def groupwise_bounds(mi: float, group_probs: Sequence[float]) -> list[GroupBound]:
    """Per-group KL and TV drift of ``P(S | Z=z)`` from ``P(S)``."""
    p = np.asarray(group_probs, dtype=float)
    if np.any(p <= 0):
        raise ValueError("every group needs positive probability")
    if abs(float(p.sum()) - 1.0) > 1e-12:
        raise ValueError("group probabilities must sum to 1")
    mi = max(0.0, mi)
    return [GroupBound(mi / pz, math.sqrt(mi / (2.0 * pz))) for pz in p]


def tail_bounds(mi: float, tau: float) -> TailBounds:
    """Tail probabilities ``P(KL_z >= tau)`` and ``P(TV_z >= tau)`` over Z."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    mi = max(0.0, mi)
    return TailBounds(min(1.0, mi / tau**2), min(1.0, mi / (2.0 * tau**2)))


def empirical_sup_log_odds(p0: CategoricalPMF, p1: CategoricalPMF) -> float:
    """Worst-case ``|log(P0(D) / P1(D))|`` over all events D of the alphabet.

    A ratio of sums lies between the extreme atom ratios, so the supremum is
    attained on a single atom.  Atoms with zero mass under both laws are
    ignored; a one-sided zero atom gives ``inf``.
    """
    check_common_support(p0, p1)
    a, b = p0.probs, p1.probs
    live = (a > 0) | (b > 0)
    a, b = a[live], b[live]
    if np.any(a == 0) or np.any(b == 0):
        return math.inf
    return float(np.max(np.abs(np.log(a) - np.log(b))))


def lipschitz_threshold(delta: float, eps: float, min_density: float, w1: float) -> float:
    """Smallest Lipschitz constant compatible with a log-density gap above eps."""
    if w1 == 0:
        raise ValueError("identical distributions: W1 distance is zero")
    if min(delta, eps, min_density, w1) <= 0:
        raise ValueError("all arguments must be strictly positive")
    return delta * math.expm1(eps) * min_density / w1


def compression_rate_certificate(
    mu: float, epsilon: float, prior: float = 0.5
) -> UnlearningCertificate:
    """Build the compression-rate certificate for a measured marginal MI."""
    conf = compression_rate_confidence(mu, epsilon)
    coth = 1.0 / math.tanh(epsilon / 2.0)
    raw = 1.0 - coth * math.sqrt(mu / 2.0)
    return UnlearningCertificate(
        mu_nats=mu,
        epsilon=epsilon,
        confidence=conf,
        bound_name=BoundName.COMPRESSION_RATE,
        prior=prior,
        clamped=conf != raw,
    )
