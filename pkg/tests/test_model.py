import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from regretlab.errors import DomainError
from regretlab.model import (
    ContextTree,
    Expert,
    FunctionClass,
    GameTranscript,
    JointClass,
    JointDistribution,
    best_expert_loss,
    compose_class_with_tree,
    empirical_regret,
    iter_paths,
    log_loss,
    path_from_rank,
    path_rank,
    prefix_index,
)


def random_joint(n, k, rng):
    def fn(prefix):
        v = np.array([rng.random() + 0.05 for _ in range(k)])
        return v / v.sum()

    return JointDistribution.from_fn(n, k, fn)


class TestPathEncoding:
    def test_prefix_index_bijection(self):
        for k in (2, 3):
            seen = {}
            for length in range(4):
                for p in itertools.product(range(k), repeat=length):
                    idx = prefix_index(p, k)
                    assert idx not in seen
                    seen[idx] = p
            assert sorted(seen) == list(range(len(seen)))

    def test_path_rank_roundtrip(self):
        for k in (2, 3):
            for n in (1, 3):
                for r, p in enumerate(iter_paths(n, k)):
                    assert path_rank(p, k) == r
                    assert path_from_rank(r, n, k) == p

    def test_bad_symbol_rejected(self):
        with pytest.raises(DomainError):
            prefix_index((0, 2), 2)


class TestLogLoss:
    def test_uniform(self):
        assert log_loss(0.5, 1) == pytest.approx(math.log(2), abs=1e-12)

    def test_certain_correct(self):
        assert log_loss(1.0, 1) == 0.0

    def test_quarter(self):
        # direct evaluation: -log(1 - 0.25)
        assert log_loss(0.25, 0) == pytest.approx(-math.log(0.75), abs=1e-12)

    def test_zero_mass_is_infinite(self):
        assert log_loss(0.0, 1) == math.inf
        assert math.inf + log_loss(0.3, 1) == math.inf

    def test_domain(self):
        with pytest.raises(DomainError):
            log_loss(1.5, 1)
        with pytest.raises(DomainError):
            log_loss(0.5, 2)


class TestJointDistribution:
    def test_uniform_coin_conditional(self):
        q = JointDistribution.bernoulli(3, 0.5)
        assert q.conditional((), 1) == 0.5

    def test_point_mass_conditional(self):
        q = JointDistribution.bernoulli(3, 0.0)
        for prefix in [(), (0,), (0, 0)]:
            assert q.conditional(prefix, 1) == 0.0

    def test_uniform_joint_prob(self):
        q = JointDistribution.bernoulli(3, 0.5)
        for path in iter_paths(3, 2):
            assert q.joint_prob(path) == pytest.approx(0.125, abs=1e-15)

    def test_point_mass_joint_prob(self):
        q = JointDistribution.bernoulli(2, 1.0)
        assert q.joint_prob((1, 1)) == 1.0

    def test_bernoulli_03(self):
        # 0.3 * 0.7 by hand
        q = JointDistribution.bernoulli(2, 0.3)
        assert q.joint_prob((1, 0)) == pytest.approx(0.21, abs=1e-15)

    def test_joint_sums_to_one(self):
        rng = random.Random(7)
        for n, k in [(5, 2), (3, 3), (8, 2)]:
            q = random_joint(n, k, rng)
            assert abs(q.path_probs().sum() - 1.0) < 1e-9

    def test_joint_prob_matches_conditional_product_exactly(self):
        rng = random.Random(11)
        q = random_joint(4, 2, rng)
        for path in iter_paths(4, 2):
            prod = 1.0
            for t in range(4):
                prod *= q.conditional(path[:t], path[t])
            assert prod == q.joint_prob(path)

    def test_invalid_rows_rejected(self):
        with pytest.raises(DomainError):
            JointDistribution(1, 2, np.array([[0.6, 0.6]]))

    def test_horizon_cap(self):
        with pytest.raises(DomainError):
            JointDistribution.bernoulli(21, 0.5)

    def test_delta_n_flag(self):
        assert JointDistribution.bernoulli(3, 0.5).in_delta_n()
        assert not JointDistribution.bernoulli(3, 0.001).in_delta_n()

    def test_cond_is_readonly(self):
        q = JointDistribution.bernoulli(2, 0.5)
        with pytest.raises(ValueError):
            q.cond[0, 0] = 0.3


class TestContextTree:
    def test_lookup_depends_only_on_prefix(self):
        x = ContextTree.from_fn(3, lambda p: ("node",) + p)
        assert x.context((0, 1)) == ("node", 0, 1)
        assert x.context(()) == ("node",)

    def test_constant(self):
        x = ContextTree.constant(2, "a")
        assert x.node_contexts((1, 0)) == ["a", "a"]


class TestCompose:
    def test_constant_half_gives_uniform(self):
        F = FunctionClass([Expert.constant(0.5)])
        x = ContextTree.from_fn(2, lambda p: len(p))
        Q = compose_class_with_tree(F, x)
        assert len(Q) == 1
        assert np.allclose(Q.members[0].cond, 0.5)

    def test_constant_tree_gives_iid(self):
        f = Expert.from_table({"x0": 0.3})
        Q = compose_class_with_tree(FunctionClass([f]), ContextTree.constant(3, "x0"))
        expected = JointDistribution.bernoulli(3, 0.3)
        assert np.array_equal(Q.members[0].cond, expected.cond)

    def test_two_experts_alternating_tree(self):
        # tree: root=a, left child=b, right child=a; experts tabulated on {a, b}
        f1 = Expert.from_table({"a": 0.2, "b": 0.6}, key="f1")
        f2 = Expert.from_table({"a": 0.9, "b": 0.1}, key="f2")
        x = ContextTree(2, ["a", "b", "a"])
        Q = compose_class_with_tree(FunctionClass([f1, f2]), x)
        q1, q2 = Q.members
        # hand-checked conditionals at the three nodes
        assert q1.conditional((), 1) == 0.2
        assert q1.conditional((0,), 1) == 0.6
        assert q1.conditional((1,), 1) == 0.2
        assert q2.conditional((), 1) == 0.9
        assert q2.conditional((0,), 1) == 0.1
        assert q2.conditional((1,), 1) == 0.9

    def test_conditional_equals_f_of_context_everywhere(self):
        rng = random.Random(3)
        table = {c: rng.random() for c in "abcd"}
        f = Expert.from_table(table)
        x = ContextTree.random(3, "abcd", rng)
        Q = compose_class_with_tree(FunctionClass([f]), x)
        q = Q.members[0]
        for t in range(3):
            for prefix in itertools.product((0, 1), repeat=t):
                assert q.conditional(prefix, 1) == table[x.context(prefix)]

    def test_dedup_and_injectivity(self):
        f1 = Expert.from_table({"a": 0.4, "b": 0.4})
        f2 = Expert.from_table({"a": 0.4, "b": 0.4})
        f3 = Expert.from_table({"a": 0.4, "b": 0.7})
        x = ContextTree(2, ["a", "b", "b"])
        assert len(compose_class_with_tree(FunctionClass([f1, f2]), x)) == 1
        assert len(compose_class_with_tree(FunctionClass([f1, f3]), x)) == 2
        # f3 differs from f1 only on b; a tree that never shows b collapses them
        xa = ContextTree.constant(2, "a")
        assert len(compose_class_with_tree(FunctionClass([f1, f3]), xa)) == 1


class TestEmpiricalRegret:
    def test_best_expert_forecaster_has_zero_regret(self):
        f = Expert.from_table({"a": 0.7, "b": 0.2})
        xs, ys = ["a", "b", "a"], [1, 0, 1]
        tr = GameTranscript(xs, [f(x) for x in xs], ys)
        assert empirical_regret(tr, FunctionClass([f]), xs, ys) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_vs_singleton_half(self):
        xs, ys = ["a", "a"], [0, 1]
        tr = GameTranscript(xs, [0.5, 0.5], ys)
        F = FunctionClass([Expert.constant(0.5)])
        assert empirical_regret(tr, F, xs, ys) == pytest.approx(0.0, abs=1e-12)

    def test_clipped_extremes(self):
        eps = 1e-6
        F = FunctionClass([Expert.constant(eps), Expert.constant(1 - eps)])
        xs, ys = ["a", "a"], [1, 1]
        tr = GameTranscript(xs, [0.5, 0.5], ys)
        expected = 2 * math.log(2) - 2 * math.log(1 / (1 - eps))
        assert empirical_regret(tr, F, xs, ys) == pytest.approx(expected, rel=1e-9)

    def test_invariant_under_expert_permutation(self):
        rng = random.Random(5)
        experts = [Expert.from_table({c: rng.random() for c in "ab"}) for _ in range(4)]
        xs = [rng.choice("ab") for _ in range(5)]
        ys = [rng.randrange(2) for _ in range(5)]
        tr = GameTranscript(xs, [0.5] * 5, ys)
        r1 = empirical_regret(tr, FunctionClass(experts), xs, ys)
        r2 = empirical_regret(tr, FunctionClass(experts[::-1]), xs, ys)
        assert r1 == r2

    def test_infinite_loss_is_monotone(self):
        F = FunctionClass([Expert.constant(0.5)])
        xs, ys = ["a"], [1]
        tr = GameTranscript(xs, [0.0], ys)
        assert empirical_regret(tr, F, xs, ys) == math.inf

    def test_empty_class_rejected(self):
        with pytest.raises(DomainError):
            FunctionClass([])

    def test_best_expert_loss_on_joint_class(self):
        Q = JointClass([JointDistribution.bernoulli(2, 0.3), JointDistribution.bernoulli(2, 0.9)])
        loss = best_expert_loss(Q, [None, None], [1, 1])
        assert loss == pytest.approx(-2 * math.log(0.9), abs=1e-12)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_joint_prob_in_unit_interval(a, b):
    q = JointDistribution(2, 2, np.array([[1 - a, a], [1 - b, b], [b, 1 - b]]))
    for path in iter_paths(2, 2):
        assert 0.0 <= q.joint_prob(path) <= 1.0
