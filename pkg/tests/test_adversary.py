import math
import random

import numpy as np
import pytest

from regretlab.adversary import (
    BLOCK_REGRET_FLOOR,
    bernoulli_block_value,
    block_adversary,
    block_adversary_expected_regret,
    canonical_block_length,
    greedy_binary_code,
    large_p_adversary,
    path_expert_class,
    renewal_minimax_reference,
    renewal_packing,
    two_point_block_instance,
)
from regretlab.errors import DomainError
from regretlab.model import JointDistribution, compose_class_with_tree, iter_paths
from regretlab.shtarkov import dual_form_value, shtarkov_sum
from regretlab.zoo import geometric_interarrival


def binom_oracle(p, alpha, beta, k):
    """Independent recomputation of the block expectation via scipy-free comb."""
    total = 0.0
    for j in range(k + 1):
        w = math.comb(k, j) * p**j * (1 - p) ** (k - j)
        phat = j / k
        eps = 1 if phat >= p else -1
        total += w * (
            phat * math.log((p + eps * alpha - beta) / p)
            + (1 - phat) * math.log((1 - p - eps * alpha - beta) / (1 - p))
        )
    return total


class TestBernoulliBlockValue:
    def test_matches_independent_enumeration(self):
        rep = bernoulli_block_value(0.5, 0.01, 1e-4, 7)
        assert rep["value"] == pytest.approx(binom_oracle(0.5, 0.01, 1e-4, 7), abs=1e-15)

    def test_headline_instance(self):
        rep = bernoulli_block_value(0.5, 0.01, 1e-4, 7)
        assert rep["canonical_k"] == 7
        assert rep["value"] >= 0.01**2 / (8 * 0.25)
        assert rep["scaled_value_at_k"] >= BLOCK_REGRET_FLOOR

    def test_single_sample_large_alpha(self):
        # forced k = 1 branch: closed-form two-term expectation
        p, alpha, beta = 0.5, 0.2, 0.01
        rep = bernoulli_block_value(p, alpha, beta, 1)
        byhand = p * math.log((p + alpha - beta) / p) + (1 - p) * math.log(
            (1 - p + alpha - beta) / (1 - p)
        )
        assert rep["value"] == pytest.approx(byhand, abs=1e-15)
        assert rep["value"] >= alpha / 4

    def test_beta_zero_limit_symmetric(self):
        p, alpha = 0.5, 0.1
        rep = bernoulli_block_value(p, alpha, 0.0, 1)
        byhand = 0.5 * math.log(1 + 2 * alpha) + 0.5 * math.log(1 + 2 * alpha)
        assert rep["value"] == pytest.approx(byhand, abs=1e-15)
        assert rep["value"] > 0

    def test_precondition_grid(self):
        # 200-point precondition-valid grid: exact value always clears both floors
        ps = np.linspace(0.15, 0.85, 20)
        alphas = np.geomspace(0.005, 0.1, 10)
        count = 0
        for p in ps:
            for alpha in alphas:
                beta = alpha * alpha / 2
                k = canonical_block_length(p, alpha)
                rep = bernoulli_block_value(float(p), float(alpha), beta, k)
                assert rep["value"] > rep["lower_bound"]
                assert rep["scaled_value_at_k"] > BLOCK_REGRET_FLOOR
                count += 1
        assert count == 200

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            bernoulli_block_value(0.5, 0.01, 0.01, 1)  # beta > alpha^2
        with pytest.raises(DomainError):
            bernoulli_block_value(0.05, 0.1, 0.001, 1)  # p too close to edge
        with pytest.raises(DomainError):
            bernoulli_block_value(0.5, 0.01, 1e-5, 10_000)  # k over the cap


class TestBlockAdversary:
    def build(self, target_k):
        gap = math.sqrt(0.25 / (324.0 * (target_k + 0.5)))
        F, witness, sep = two_point_block_instance(gap)
        alpha = sep * 0.98
        return F, witness, alpha, gap

    def test_depth_one_block_length(self):
        F, witness, alpha, gap = self.build(7)
        adv = block_adversary(F, witness, n=7, alpha=alpha)
        assert adv.block_lengths[()] == 7
        assert adv.lemma_preconditions_ok
        assert adv.bound == pytest.approx(BLOCK_REGRET_FLOOR)

    def test_nml_expected_regret_clears_floor(self):
        F, witness, alpha, _ = self.build(7)
        adv = block_adversary(F, witness, n=7, alpha=alpha)
        reg = block_adversary_expected_regret(F, adv)
        assert reg >= BLOCK_REGRET_FLOOR

    def test_playing_p_itself_gives_dual_value(self):
        F, witness, alpha, _ = self.build(4)
        adv = block_adversary(F, witness, n=4, alpha=alpha)
        Q = compose_class_with_tree(F, adv.tree)
        reg_p = block_adversary_expected_regret(F, adv, forecaster=adv.dist)
        assert reg_p == pytest.approx(dual_form_value(Q, adv.dist), abs=1e-12)
        assert reg_p >= BLOCK_REGRET_FLOOR

    def test_any_forecaster_dominated_by_p(self):
        F, witness, alpha, _ = self.build(3)
        adv = block_adversary(F, witness, n=3, alpha=alpha)
        rng = random.Random(5)
        reg_p = block_adversary_expected_regret(F, adv, forecaster=adv.dist)
        for _ in range(5):
            theta = rng.uniform(0.2, 0.8)
            other = JointDistribution.bernoulli(3, theta)
            assert block_adversary_expected_regret(F, adv, forecaster=other) >= reg_p - 1e-12

    def test_depth_zero_witness(self):
        F, witness, alpha, _ = self.build(2)
        adv = block_adversary(F, None, n=4, alpha=alpha)
        assert adv.depth == 0 and adv.bound == 0.0

    def test_horizon_too_short_rejected(self):
        F, witness, alpha, _ = self.build(7)
        with pytest.raises(DomainError):
            block_adversary(F, witness, n=6, alpha=alpha)


class TestLargePAdversary:
    def test_constant_pair_example(self):
        # two-path-expert instance at n=1: bound matches direct sup computation
        F, witness = path_expert_class(1)
        beta = 0.08
        rep = large_p_adversary(F, witness, 1, beta)
        assert rep["ok"]
        direct = math.log((9 / 16) / 0.5)
        assert rep["min_pathwise_gain"] == pytest.approx(direct, abs=1e-12)
        assert rep["min_per_round_gain"] >= beta / 2

    def test_pathwise_bound_all_paths(self):
        for n in (2, 4, 6):
            F, witness = path_expert_class(n)
            rep = large_p_adversary(F, witness, n, beta=0.08)
            assert rep["ok"]
            assert rep["min_pathwise_gain"] >= n * 0.08 / 2

    def test_midpoints_are_half(self):
        F, witness = path_expert_class(2)
        rep = large_p_adversary(F, witness, 2, beta=0.08)
        assert rep["midpoints"] == pytest.approx([0.5, 0.5, 0.5], abs=1e-12)

    def test_beta_above_separation_rejected(self):
        F, witness = path_expert_class(2)
        with pytest.raises(DomainError):
            large_p_adversary(F, witness, 2, beta=0.2)

    def test_range_violation_rejected(self):
        F, witness = path_expert_class(2, lo=0.3, hi=0.7)
        with pytest.raises(DomainError):
            large_p_adversary(F, witness, 2, beta=0.05)


class TestRenewalPacking:
    def test_gap_arithmetic_at_point_one(self):
        rep = renewal_packing(6, 0.1, pair_samples=20, seed=0)
        assert rep["stay_gap"] == pytest.approx(math.sqrt(0.8) - math.sqrt(0.2), abs=1e-12)
        assert rep["separation_ok"]

    def test_boundary_scale(self):
        rep = renewal_packing(4, 1.0 / 6.0 - 1e-9, pair_samples=10, seed=1)
        assert rep["stay_gap"] == pytest.approx(1.0, abs=1e-3)
        assert rep["separation_ok"]

    def test_virtual_family_matches_hazard_construction(self):
        rep = renewal_packing(6, 0.05, pair_samples=10, seed=2)
        assert rep["virtual_family_consistent"]

    def test_entropy_certificates(self):
        rep = renewal_packing(16, 0.1, pair_samples=50, seed=3)
        assert rep["cover_size_log2"] == 16
        assert rep["code_min_distance"] == 4
        assert rep["code_size"] >= 94
        assert rep["log_gap_ok"]

    def test_alpha_domain(self):
        with pytest.raises(DomainError):
            renewal_packing(8, 0.2)


class TestGreedyCode:
    def test_min_distance_holds_exactly(self):
        code = greedy_binary_code(8, 3)
        for i, a in enumerate(code):
            for b in code[i + 1 :]:
                assert bin(a ^ b).count("1") >= 3

    def test_gv_floor(self):
        code = greedy_binary_code(10, 3)
        vol = sum(math.comb(10, i) for i in range(3))
        assert len(code) >= 2**10 / vol


class TestRenewalReference:
    def test_singleton_hazard_zero_regret(self):
        rep = renewal_minimax_reference([geometric_interarrival(0.5, 6)], 6)
        assert rep["value"] == pytest.approx(0.0, abs=1e-12)

    def test_three_hazard_grid_in_range(self):
        grid = [geometric_interarrival(h, 6) for h in (0.25, 0.5, 0.75)]
        rep = renewal_minimax_reference(grid, 6)
        assert 0.0 < rep["value"] <= math.log(3) + 1e-12

    def test_grid_refinement_monotone(self):
        coarse = [geometric_interarrival(h, 5) for h in (0.3, 0.7)]
        fine = coarse + [geometric_interarrival(0.5, 5)]
        a = renewal_minimax_reference(coarse, 5)["value"]
        b = renewal_minimax_reference(fine, 5)["value"]
        assert b >= a - 1e-12
