import math
import random

import numpy as np
import pytest

from regretlab.covers import h_gap
from regretlab.dimension import (
    MAX_SHATTER_DEPTH,
    build_dimension_cover,
    dimension_entropy_bound,
    discrete_shatter_dimension,
    find_monochrome_skipping_tree,
    g_beta,
    grid_values,
    round_to_grid,
    shatter_dimension,
    validate_skipping_tree,
    validate_witness,
)
from regretlab.errors import BudgetError, DomainError
from regretlab.model import ContextTree, Expert, FunctionClass


class TestGBeta:
    def test_dimension_zero(self):
        for n in (0, 1, 5, 40):
            assert g_beta(n, 0, 0.125) == 1

    def test_quarter_grid_hand_value(self):
        # beta = 1/4 gives M = 2: g(3, 1) = 1 + 3
        assert g_beta(3, 1, 0.25) == 4

    def test_full_depth_is_power(self):
        for n in (1, 3, 6):
            for beta, M in [(0.25, 2), (0.125, 4)]:
                assert g_beta(n, n, beta) == M**n
                assert g_beta(n, n + 5, beta) == M**n

    def test_recursion_exact(self):
        beta = 0.125
        M = 4
        for n in range(1, 41):
            for d in range(1, min(n, 12) + 1):
                assert g_beta(n, d, beta) == g_beta(n - 1, d, beta) + (M - 1) * g_beta(
                    n - 1, d - 1, beta
                )

    def test_bad_beta(self):
        with pytest.raises(DomainError):
            g_beta(3, 1, 0.3)


def two_constant_class(lo=0.25, hi=0.75):
    return FunctionClass(
        [Expert.constant(lo, key="lo"), Expert.constant(hi, key="hi")]
    )


class TestShatterDimension:
    def test_two_constants_depth_at_least_one(self):
        res = shatter_dimension(two_constant_class(), ["a"], alpha=0.3, beta=0.05, max_depth=2)
        assert res.dimension >= 1
        check = validate_witness(two_constant_class(), res.witness, 0.3, 0.05)
        assert check["ok"]

    def test_singleton_is_zero(self):
        F = FunctionClass([Expert.constant(0.5)])
        # alpha above sqrt(4 beta): a single expert cannot reach two targets
        res = shatter_dimension(F, ["a", "b"], alpha=0.5, beta=0.05, max_depth=2)
        assert res.dimension == 0

    def test_alpha_at_least_one_gives_zero(self):
        res = shatter_dimension(two_constant_class(), ["a"], alpha=1.0, beta=0.05)
        assert res.dimension == 0

    def test_constant_class_stops_at_depth_one(self):
        # the path (0,1) would need one expert near both targets, so two
        # constants certify exactly depth 1
        res = shatter_dimension(two_constant_class(), ["a"], alpha=0.3, beta=0.05, max_depth=3)
        assert res.dimension == 1
        assert not res.truncated

    def test_truncation_flag_at_max_depth(self):
        res = shatter_dimension(two_constant_class(), ["a"], alpha=0.3, beta=0.05, max_depth=1)
        assert res.dimension == 1
        assert res.truncated

    def test_context_dependent_class(self):
        # f distinguishes contexts; on context "a" values split, on "b" they agree
        F = FunctionClass(
            [
                Expert.from_table({"a": 0.2, "b": 0.5}, key="f1"),
                Expert.from_table({"a": 0.8, "b": 0.5}, key="f2"),
            ]
        )
        res = shatter_dimension(F, ["b"], alpha=0.3, beta=0.1, max_depth=2)
        assert res.dimension == 0
        res2 = shatter_dimension(F, ["a", "b"], alpha=0.3, beta=0.1, max_depth=1)
        assert res2.dimension == 1
        assert res2.witness.x_tree.context(()) == "a"

    def test_budget_guards(self):
        with pytest.raises(BudgetError):
            shatter_dimension(two_constant_class(), list(range(7)), 0.3, 0.05)
        with pytest.raises(BudgetError):
            shatter_dimension(two_constant_class(), ["a"], 0.3, 0.05, max_depth=5)

    def test_beta_alpha_ordering(self):
        with pytest.raises(DomainError):
            shatter_dimension(two_constant_class(), ["a"], alpha=0.05, beta=0.1)


class TestDiscreteShatterDimension:
    def test_singleton(self):
        F = FunctionClass([Expert.constant(0.375)])
        assert discrete_shatter_dimension(F, ["a"], 0.2, 0.125).dimension == 0

    def test_full_grid_class_shatters(self):
        beta = 0.25  # M = 2, grid {0.25, 0.75}
        contexts = ["a", "b", "c"]
        members = []
        vals = grid_values(beta)
        for combo in np.ndindex(*(len(vals),) * len(contexts)):
            members.append(
                Expert.from_table({c: vals[j] for c, j in zip(contexts, combo)})
            )
        F = FunctionClass(members, contexts=contexts)
        res = discrete_shatter_dimension(F, contexts, alpha=0.3, beta=beta, max_depth=2)
        assert res.dimension == 2
        assert validate_witness(F, res.witness, 0.3, beta, discrete=True)["ok"]

    def test_alpha_above_max_gap_is_zero(self):
        beta = 0.25
        F = FunctionClass([Expert.constant(0.25), Expert.constant(0.75)])
        # h(0.25, 0.75) ~ 0.366; above that nothing shatters
        res = discrete_shatter_dimension(F, ["a"], alpha=0.5, beta=beta)
        assert res.dimension == 0

    def test_off_grid_value_rejected(self):
        F = FunctionClass([Expert.constant(0.3)])
        with pytest.raises(DomainError):
            discrete_shatter_dimension(F, ["a"], 0.2, 0.25)

    def test_discrete_below_continuous_on_rounding(self):
        rng = random.Random(8)
        beta = 0.125
        contexts = ["a", "b"]
        for _ in range(5):
            F = FunctionClass(
                [
                    Expert.from_table({c: rng.random() for c in contexts})
                    for _ in range(3)
                ]
            )
            rounded = round_to_grid(F, contexts, beta)
            d_disc = discrete_shatter_dimension(rounded, contexts, 0.2, beta, max_depth=3)
            d_cont = shatter_dimension(F, contexts, 0.2, beta, max_depth=3)
            assert d_disc.dimension <= d_cont.dimension


class TestDimensionEntropyBound:
    def test_singleton(self):
        F = FunctionClass([Expert.constant(0.375)])
        x = ContextTree.constant(3, "a")
        rep = dimension_entropy_bound(F, x, alpha=0.2, beta=0.125)
        assert rep["ok"]
        assert rep["cover_size"] == 1

    def test_two_expert_class_from_shatter_example(self):
        F = two_constant_class(0.375, 0.625)
        x = ContextTree.constant(3, "a")
        rep = dimension_entropy_bound(F, x, alpha=0.25, beta=0.125)
        assert rep["ok"]
        assert rep["cover_size"] <= g_beta(3, rep["dimension"], 0.125)

    def test_random_grid_classes(self):
        rng = random.Random(14)
        beta = 0.125
        vals = grid_values(beta)
        for trial in range(10):
            contexts = ["a", "b", "c"][: rng.randint(2, 3)]
            members = [
                Expert.from_table({c: vals[rng.randrange(len(vals))] for c in contexts})
                for _ in range(rng.randint(2, 5))
            ]
            F = FunctionClass(members, contexts=contexts)
            n = rng.randint(2, 4)
            x = ContextTree.random(n, contexts, rng)
            rep = dimension_entropy_bound(F, x, alpha=0.2, beta=beta)
            assert rep["ok"], (trial, rep)

    def test_cover_construction_returns_valid_trees(self):
        beta = 0.25
        F = FunctionClass(
            [
                Expert.from_table({"a": 0.25, "b": 0.75}),
                Expert.from_table({"a": 0.75, "b": 0.25}),
            ],
            contexts=["a", "b"],
        )
        x = ContextTree(2, ["a", "b", "a"])
        trees, dim = build_dimension_cover(F, x, alpha=0.3, beta=beta)
        assert len(trees) <= g_beta(2, dim, beta)
        for t in trees:
            assert t.shape == (3,)
            assert all(v in grid_values(beta) for v in t)


class TestSkippingTree:
    def test_single_color_returns_chain(self):
        colors = np.zeros(2**4 - 1, dtype=int)
        tree = find_monochrome_skipping_tree(colors, 1, 4)
        assert tree is not None and tree.depth == 4
        assert validate_skipping_tree(tree, colors, 4)["ok"]

    def test_adversarial_alternating_colors_at_threshold(self):
        # k=2 colors, target depth d: threshold is k(d-1)+1
        rng = random.Random(4)
        d = 3
        m = 2 * (d - 1) + 1
        for trial in range(20):
            colors = np.array([rng.randrange(2) for _ in range(2**m - 1)])
            tree = find_monochrome_skipping_tree(colors, 2, d)
            assert tree is not None, trial
            check = validate_skipping_tree(tree, colors, m)
            assert check["ok"]

    def test_level_coloring_at_threshold(self):
        # color by level, cycling: a classic hard instance
        d = 3
        m = 2 * (d - 1) + 1
        colors = np.empty(2**m - 1, dtype=int)
        for t in range(m):
            colors[2**t - 1 : 2 ** (t + 1) - 1] = t % 2
        tree = find_monochrome_skipping_tree(colors, 2, d)
        assert tree is not None
        assert validate_skipping_tree(tree, colors, m)["ok"]

    def test_blocked_small_instance_returns_none(self):
        # depth-2 host, 2 colors, target depth 2: root color 0, both children 1
        # blocks color 0; the two leaves share color 1 but a depth-2 tree needs
        # a root with descendants on both sides
        colors = np.array([0, 1, 1])
        assert find_monochrome_skipping_tree(colors, 2, 2) is None

    def test_exhaustive_finds_below_threshold_when_possible(self):
        # m=2 < k(d-1)+1 = 3 for k=2, d=2, but a monochrome pair exists
        colors = np.array([1, 1, 1])
        tree = find_monochrome_skipping_tree(colors, 2, 2)
        assert tree is not None
        assert validate_skipping_tree(tree, colors, 2)["ok"]

    def test_descent_constraint_validation(self):
        from regretlab.dimension import SkippingTree

        colors = np.zeros(7, dtype=int)
        bad = SkippingTree(2, [(0, 0), (1, 1), (1, 0)])  # children swapped
        assert not validate_skipping_tree(bad, colors, 3)["ok"]
