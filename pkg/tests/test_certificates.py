import itertools
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infounlearn.certificates import (
    BoundName,
    UnlearningCertificate,
    VacuousCertificateError,
    anchor_distance_bound,
    compression_rate_certificate,
    compression_rate_confidence,
    empirical_sup_log_odds,
    groupwise_bounds,
    lipschitz_threshold,
    max_admissible_mu,
    odds_inference_probability,
    tail_bounds,
    tv_from_mi_bound,
)
from infounlearn.densities import CategoricalPMF, tv_distance
from infounlearn.infotheory import kl_divergence, mutual_info_mixture

mp.mp.dps = 50


def pmf(p):
    return CategoricalPMF(np.asarray(p, dtype=float))


def brute_sup_log_odds(a, b):
    """Max over all nonempty proper events of |log P0(D) - log P1(D)|."""
    k = len(a)
    best = 0.0
    for r in range(1, k):
        for ev in itertools.combinations(range(k), r):
            pa, pb = sum(a[i] for i in ev), sum(b[i] for i in ev)
            if pa == 0 and pb == 0:
                continue
            if pa == 0 or pb == 0:
                return math.inf
            best = max(best, abs(math.log(pa) - math.log(pb)))
    return best


def compression_oracle(mu, eps):
    e = mp.e ** mp.mpf(eps)
    return 1 - (e + 1) / (e - 1) * mp.sqrt(mp.mpf(mu) / 2)


class TestTVFromMI:
    def test_examples(self):
        assert tv_from_mi_bound(0.0, 0.5) == 0.0
        assert tv_from_mi_bound(0.02, 0.5) == pytest.approx(0.2, rel=1e-15)

    def test_dominates_measured_tv(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            k = int(rng.integers(2, 9))
            p0, p1 = pmf(rng.dirichlet(np.ones(k))), pmf(rng.dirichlet(np.ones(k)))
            prior = float(rng.uniform(0.05, 0.95))
            assert tv_distance(p0, p1) <= tv_from_mi_bound(mutual_info_mixture(p0, p1, prior), prior) + 1e-12


class TestCompressionRate:
    def test_examples(self):
        assert compression_rate_confidence(0.0, 0.7) == 1.0
        assert compression_rate_confidence(2e-4, 0.1) == pytest.approx(float(compression_oracle(2e-4, 0.1)), abs=1e-12)
        assert compression_rate_confidence(2e-4, 0.1) == pytest.approx(0.800, abs=1e-3)

    def test_boundary_limit_is_zero(self):
        eps = 0.5
        mu = max_admissible_mu(eps) * (1 - 1e-12)
        assert compression_rate_confidence(mu, eps) == pytest.approx(0.0, abs=1e-9)

    def test_vacuous_carries_limit(self):
        with pytest.raises(VacuousCertificateError) as info:
            compression_rate_confidence(1.0, 0.1)
        assert info.value.max_mu == pytest.approx(2 * ((math.e**0.1 - 1) / (math.e**0.1 + 1)) ** 2, rel=1e-14)

    @settings(max_examples=200)
    @given(st.floats(0.01, 5), st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, eps, u, v):
        lim = max_admissible_mu(eps)
        mu_a, mu_b = sorted((u * lim * 0.999, v * lim * 0.999))
        assert compression_rate_confidence(mu_a, eps) >= compression_rate_confidence(mu_b, eps)
        assert compression_rate_confidence(mu_a, eps * 1.1) >= compression_rate_confidence(mu_a, eps) - 1e-15

    def test_sound_variant_is_more_conservative(self):
        for mu in (1e-5, 1e-4, 5e-4):
            assert compression_rate_confidence(mu, 0.3, sound=True) < compression_rate_confidence(mu, 0.3)


class TestOdds:
    def test_examples(self):
        b = odds_inference_probability(0.0, 0.5)
        assert b.probability == 1.0
        assert b.log_odds_cap == pytest.approx(math.log(3), rel=1e-15)
        assert odds_inference_probability(0.5, 0.1).probability == 0.0
        assert odds_inference_probability(0.005, 0.2).probability == pytest.approx(0.75, abs=1e-12)

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.2])
    def test_eps_range(self, eps):
        with pytest.raises(ValueError):
            odds_inference_probability(0.01, eps)

    @staticmethod
    def good_mass(p0, p1, eps):
        """Mixture mass of outputs whose equal-prior posterior stays inside the odds cap."""
        a, b = np.asarray(p0), np.asarray(p1)
        post = a / (a + b)
        good = np.abs(2 * post - 1) <= eps
        return float(0.5 * (a + b)[good].sum())

    def test_optimistic_constant_counterexample(self):
        # two atoms with posterior 0.4 / 0.6 everywhere: none lies inside a 0.19 cap
        p1, p0 = [0.6, 0.4], [0.4, 0.6]
        eps = 0.19
        mi = mutual_info_mixture(pmf(p0), pmf(p1), 0.5)
        assert self.good_mass(p0, p1, eps) == 0.0
        assert odds_inference_probability(mi, eps).probability > 0.4
        assert odds_inference_probability(mi, eps, sound=True).probability == 0.0

    def test_sound_variant_holds_on_random_joints(self):
        rng = np.random.default_rng(1)
        for _ in range(2000):
            k = int(rng.integers(2, 9))
            p0, p1 = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
            eps = float(rng.uniform(0.05, 0.95))
            mi = mutual_info_mixture(pmf(p0), pmf(p1), 0.5)
            assert self.good_mass(p0, p1, eps) >= odds_inference_probability(mi, eps, sound=True).probability - 1e-12


class TestAnchor:
    def test_examples(self):
        assert anchor_distance_bound(0, 0, 0, 0.5, 0).value == 0.0
        assert anchor_distance_bound(0, 0, 0.02, 0.5, 0.05).value == pytest.approx(0.25, rel=1e-14)
        want = mp.sqrt(mp.mpf("0.5")) * (2 * mp.sqrt(mp.mpf("0.01"))) + mp.sqrt(mp.mpf("0.005") / mp.mpf("0.5")) + mp.mpf("0.02")
        assert anchor_distance_bound(0.01, 0.01, 0.005, 0.5, 0.02).value == pytest.approx(float(want), abs=1e-14)

    def test_clamped_keeps_raw(self):
        b = anchor_distance_bound(1.0, 1.0, 1.0, 0.5, 1.0)
        assert b.value == 1.0 and b.raw > 1.0 and b.clamped


class TestGroupwise:
    def test_examples(self):
        assert all(g == (0.0, 0.0) for g in groupwise_bounds(0.0, [0.3, 0.7]))
        b = groupwise_bounds(0.08, [0.5, 0.5])
        assert b[0].kl_bound == pytest.approx(0.16, rel=1e-15)
        assert b[0].tv_bound == pytest.approx(math.sqrt(0.08), rel=1e-15)

    def test_zero_group_rejected(self):
        with pytest.raises(ValueError):
            groupwise_bounds(0.1, [0.0, 1.0])

    def test_dominates_random_joints(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            k, nz = int(rng.integers(2, 9)), int(rng.integers(2, 5))
            joint = rng.dirichlet(np.ones(k * nz)).reshape(nz, k)
            pz = joint.sum(axis=1)
            marg = pmf(joint.sum(axis=0))
            conds = [pmf(row / row.sum()) for row in joint]
            mi = sum(w * kl_divergence(c, marg) for w, c in zip(pz, conds))
            for c, bound in zip(conds, groupwise_bounds(mi, pz / pz.sum())):
                assert kl_divergence(c, marg) <= bound.kl_bound + 1e-12
                assert tv_distance(c, marg) <= bound.tv_bound + 1e-12


class TestTail:
    def test_examples(self):
        assert tail_bounds(0.0, 0.3) == (0.0, 0.0)
        # 0.02 / (2 * 0.1**2) is 1 in exact decimals, one ulp below in binary
        assert tail_bounds(0.02, 0.1).tv_tail == pytest.approx(1.0, abs=1e-15)
        assert tail_bounds(0.03, 0.1).tv_tail == 1.0
        assert tail_bounds(0.01, 0.5).tv_tail == pytest.approx(0.02, rel=1e-14)


class TestSupLogOdds:
    def test_examples(self):
        p = pmf([0.2, 0.3, 0.5])
        assert empirical_sup_log_odds(p, p) == 0.0
        assert empirical_sup_log_odds(pmf([0.5, 0.5]), pmf([0.25, 0.75])) == pytest.approx(math.log(2), rel=1e-15)
        assert empirical_sup_log_odds(pmf([0.6, 0.4]), pmf([0.4, 0.6])) == pytest.approx(math.log(1.5), rel=1e-15)

    def test_one_sided_zero_is_inf(self):
        assert empirical_sup_log_odds(pmf([0.5, 0.5, 0.0]), pmf([0.4, 0.4, 0.2])) == math.inf

    def test_shared_zero_atoms_ignored(self):
        assert empirical_sup_log_odds(pmf([0.5, 0.5, 0.0]), pmf([0.5, 0.5, 0.0])) == 0.0

    def test_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            k = int(rng.integers(2, 9))
            a, b = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
            assert empirical_sup_log_odds(pmf(a), pmf(b)) == brute_sup_log_odds(a, b)


class TestLipschitz:
    def test_examples(self):
        assert lipschitz_threshold(1, math.log(2), 0.5, 1) == pytest.approx(0.5, rel=1e-15)
        assert lipschitz_threshold(0.1, 0.1, 0.3, 0.05) == pytest.approx(0.0631, abs=5e-5)
        assert lipschitz_threshold(1, 1e-12, 1, 1) < 1e-11

    def test_identical_distributions(self):
        with pytest.raises(ValueError, match="identical"):
            lipschitz_threshold(1, 1, 1, 0)


class TestCertificate:
    def test_json_round_trip(self, tmp_path):
        c = compression_rate_certificate(1e-4, 0.5)
        c.save(tmp_path / "c.json")
        assert UnlearningCertificate.load(tmp_path / "c.json") == c
        assert set(c.to_dict()) == {"mu_nats", "epsilon", "confidence", "bound_name", "prior", "clamped"}

    def test_invariants(self):
        with pytest.raises(ValueError):
            UnlearningCertificate(-1.0, 0.5, 0.5, BoundName.EMPIRICAL_SUP)
        with pytest.raises(VacuousCertificateError):
            UnlearningCertificate(1.0, 0.1, 0.5, BoundName.COMPRESSION_RATE)
        with pytest.raises(ValueError):
            UnlearningCertificate(0.0, 0.5, 1.5, "odds_inference")
