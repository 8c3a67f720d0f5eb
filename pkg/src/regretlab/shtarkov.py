"""Exact minimax regret machinery: Shtarkov sums, the normalized-maximum-
likelihood (NML) forecaster, log-sum-exp backward induction, the adaptive
contextual game, the dual-form value, and conditional truncation.
"""

import functools
import math

import numpy as np

from .errors import (
    BudgetError,
    ConditioningError,
    DegenerateClassError,
    DomainError,
    UnboundedDualError,
)
from .model import (
    BernoulliClass,
    ContextTree,
    FunctionClass,
    JointClass,
    JointDistribution,
    compose_class_with_tree,
    level_offset,
    num_prefixes,
)

PATH_BUDGET = 4096  # k**n cap for full-path enumeration


def _check_budget(n, k):
    if k**n > PATH_BUDGET:
        raise BudgetError(f"k**n = {k**n} exceeds the enumeration budget {PATH_BUDGET}")


def sup_table(Q):
    """Per-path suprema sup_q q(y) in path-rank order, plus exactness metadata.

    Returns (table, exact, grid_step).  For a finite grid the value is the grid
    maximum, flagged inexact with the grid step; the continuous Bernoulli
    family has an exact closed form (plug-in maximum-likelihood per count).
    """
    if isinstance(Q, BernoulliClass):
        _check_budget(Q.n, 2)
        counts = _ones_counts(Q.n)
        per_count = np.array([Q.count_sup(c) for c in range(Q.n + 1)])
        table = per_count[counts]
        return table, Q.thetas is None, Q.grid_step
    if isinstance(Q, JointClass):
        _check_budget(Q.n, Q.k)
        table = np.max(np.stack([q.path_probs() for q in Q.members]), axis=0)
        return table, True, 0.0
    if isinstance(Q, FunctionClass):
        raise DomainError("function classes must be composed with a context tree first")
    raise DomainError(f"unsupported class kind {getattr(Q, 'kind', None)!r}")


def _ones_counts(n):
    """Number of ones in each binary path, in path-rank order."""
    ranks = np.arange(2**n, dtype=np.uint64)
    counts = np.zeros(2**n, dtype=np.int64)
    for b in range(n):
        counts += ((ranks >> np.uint64(b)) & np.uint64(1)).astype(np.int64)
    return counts


def _class_shape(Q):
    if isinstance(Q, (JointClass, BernoulliClass)):
        return Q.n, Q.k
    raise DomainError("class does not carry a fixed horizon/alphabet")


def _subtree_masses(table, n, k):
    """masses[t] holds the total sup mass of each length-t prefix subtree."""
    masses = [None] * (n + 1)
    masses[n] = np.asarray(table, dtype=float)
    for t in range(n - 1, -1, -1):
        masses[t] = masses[t + 1].reshape(-1, k).sum(axis=1)
    return masses


def _nml_from_masses(masses, n, k):
    rows = np.empty((num_prefixes(k, n), k))
    for t in range(n):
        off = level_offset(k, t)
        parent = masses[t]
        child = masses[t + 1].reshape(-1, k)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = child / parent[:, None]
        cond[~np.isfinite(cond)] = 1.0 / k
        zero = parent <= 0.0
        if np.any(zero):
            cond[zero] = 1.0 / k
        rows[off : off + k**t] = cond
    return JointDistribution(n, k, rows)


class ShtarkovResult:
    """Exact minimax regret of a class together with its optimal forecaster."""

    def __init__(self, value, sup, nml, n, k, sup_exact, grid_step):
        self.value = value
        self.sup = sup
        self.nml = nml
        self.n = n
        self.k = k
        self.sup_exact = sup_exact
        self.grid_step = grid_step

    def __repr__(self):
        return f"ShtarkovResult(value={self.value:.6f}, n={self.n}, k={self.k})"


def shtarkov_sum(Q):
    """log sum over paths of sup_q q(y), with the NML distribution attached."""
    n, k = _class_shape(Q)
    table, exact, step = sup_table(Q)
    total = float(np.sum(table))
    if total <= 0.0:
        raise DegenerateClassError("sup table is identically zero")
    masses = _subtree_masses(table, n, k)
    nml = _nml_from_masses(masses, n, k)
    return ShtarkovResult(math.log(total), table, nml, n, k, exact, step)


def nml_predict(Q, history):
    """Sequential NML forecast: the conditional probability vector after a history.

    Equals the ratio of partial sup-table masses over completions of
    history.y to completions of history.
    """
    n, k = _class_shape(Q)
    if len(history) >= n:
        raise DomainError(f"history of length {len(history)} at horizon {n}")
    table, _, _ = sup_table(Q)
    masses = _subtree_masses(table, n, k)
    t = len(history)
    rank = 0
    for y in history:
        rank = rank * k + y
    parent = masses[t][rank]
    if parent <= 0.0:
        raise ConditioningError("history has zero sup mass under the class")
    children = masses[t + 1][rank * k : rank * k + k]
    return children / parent


class MinimaxValue:
    """Minimax regret value with the optimal equalizer strategy where computed."""

    def __init__(self, value, strategy=None, meta=None):
        self.value = value
        self.strategy = strategy
        self.meta = dict(meta) if meta else {}

    def __repr__(self):
        return f"MinimaxValue({self.value:.6f})"


def minimax_lse(Q):
    """Backward-induction value via log-sum-exp over the outcome tree.

    Algebraically identical to the Shtarkov sum; the recursion also yields the
    equalizer forecaster p_hat(y | h) = exp(V(h.y) - V(h)) round by round.
    """
    if isinstance(Q, BernoulliClass):
        n, k = Q.n, Q.k
    elif isinstance(Q, JointClass):
        n, k = Q.n, Q.k
    else:
        raise DomainError("minimax_lse expects a finite-joint or grid class")
    table, exact, step = sup_table(Q)
    if not np.any(table > 0.0):
        raise DegenerateClassError("sup table is identically zero")
    with np.errstate(divide="ignore"):
        V = np.log(np.asarray(table, dtype=float))
    rows = np.empty((num_prefixes(k, n), k))
    for t in range(n - 1, -1, -1):
        children = V.reshape(-1, k)
        parents = _logsumexp_rows(children)
        with np.errstate(invalid="ignore"):
            cond = np.exp(children - parents[:, None])
        bad = ~np.isfinite(parents)
        if np.any(bad):
            cond[bad] = 1.0 / k
        off = level_offset(k, t)
        rows[off : off + k**t] = cond
        V = parents
    equalizer = JointDistribution(n, k, rows)
    return MinimaxValue(
        float(V[0]),
        strategy=equalizer,
        meta={"sup_exact": exact, "grid_step": step},
    )


def _logsumexp_rows(a):
    m = np.max(a, axis=1)
    finite = np.isfinite(m)
    out = np.full(a.shape[0], -np.inf)
    if np.any(finite):
        shifted = a[finite] - m[finite][:, None]
        out[finite] = m[finite] + np.log(np.sum(np.exp(shifted), axis=1))
    return out


ADAPTIVE_STATE_BUDGET = 300_000


def adaptive_minimax(F, contexts, n, return_strategy=False):
    """Value of the fully adaptive contextual game over a finite context set.

    Backward induction over exact (x, y) histories: at each round the
    adversary takes a sup over contexts, the forecaster's inner optimization
    collapses to log-sum-exp over outcomes, and leaves pay the negated best
    expert loss.  Histories are sequences, not multisets, because experts see
    the realized contexts.
    """
    if not isinstance(F, FunctionClass):
        raise DomainError("adaptive game needs a finite-function class")
    contexts = tuple(contexts)
    if not contexts:
        raise DomainError("context set must be nonempty")
    if (2 * len(contexts)) ** n > ADAPTIVE_STATE_BUDGET:
        raise BudgetError(
            f"(2|X|)**n = {(2 * len(contexts)) ** n} states exceeds the game budget"
        )
    members = F.members
    strategy = {} if return_strategy else None

    @functools.lru_cache(maxsize=None)
    def leaf_value(history):
        best = -math.inf
        for f in members:
            total = 0.0
            for x, y in history:
                p1 = f(x)
                p = p1 if y == 1 else 1.0 - p1
                if p == 0.0:
                    total = -math.inf
                    break
                total += math.log(p)
            best = max(best, total)
        return best

    @functools.lru_cache(maxsize=None)
    def value(history):
        if len(history) == n:
            return leaf_value(history)
        best = -math.inf
        best_x = None
        for x in contexts:
            children = [value(history + ((x, y),)) for y in (0, 1)]
            v = _lse2(children[0], children[1])
            if strategy is not None:
                p1 = math.exp(children[1] - v) if math.isfinite(v) else 0.5
                strategy[(history, x)] = p1
            if v > best:
                best, best_x = v, x
        if strategy is not None:
            strategy[history] = best_x
        return best

    val = value(())
    return MinimaxValue(val, strategy=strategy, meta={"contexts": contexts, "n": n})


def _lse2(a, b):
    if a == -math.inf and b == -math.inf:
        return -math.inf
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


def enumerate_context_trees(contexts, n):
    """All depth-n context trees over a finite context set (use with care)."""
    import itertools

    contexts = tuple(contexts)
    nodes = 2**n - 1
    if len(contexts) ** nodes > 100_000:
        raise BudgetError(f"{len(contexts)}**{nodes} trees exceeds the tree budget")
    for assignment in itertools.product(contexts, repeat=nodes):
        yield ContextTree(n, assignment)


def adaptive_minimax_tree_oracle(F, contexts, n):
    """Max over all context trees of the composed Shtarkov sum (exhaustive)."""
    best = -math.inf
    for x in enumerate_context_trees(contexts, n):
        best = max(best, shtarkov_sum(compose_class_with_tree(F, x)).value)
    return best


def pathwise_regret_table(Q, p):
    """R(Q, p, y) = sup_q log(q(y)/p(y)) for every path, in rank order."""
    n, k = _class_shape(Q)
    table, _, _ = sup_table(Q)
    p_probs = p.path_probs()
    out = np.empty_like(p_probs)
    for i, (s, pp) in enumerate(zip(table, p_probs)):
        if pp == 0.0:
            out[i] = math.inf if s > 0.0 else -math.inf
        elif s == 0.0:
            out[i] = -math.inf
        else:
            out[i] = math.log(s / pp)
    return out


def dual_form_value(Q, p):
    """E_{y ~ p} sup_q log(q(y)/p(y)) by exact path enumeration.

    Signals an unbounded value when p gives zero probability to a path that
    carries positive sup mass.
    """
    n, k = _class_shape(Q)
    if (p.n, p.k) != (n, k):
        raise DomainError("evaluation distribution has mismatched shape")
    table, _, _ = sup_table(Q)
    p_probs = p.path_probs()
    bad = (p_probs == 0.0) & (table > 0.0)
    if np.any(bad):
        raise UnboundedDualError(
            "zero-probability path with positive sup mass: dual value unbounded"
        )
    total = 0.0
    for s, pp in zip(table, p_probs):
        if pp == 0.0:
            continue
        if s == 0.0:
            return -math.inf
        total += pp * math.log(s / pp)
    return total


def expected_regret(Q, p, forecaster):
    """E_{y ~ p} of the forecaster's regret against the class, by enumeration.

    The forecaster is a joint distribution played sequentially; its loss on a
    path is -log of the mass it assigns.
    """
    n, k = _class_shape(Q)
    if (p.n, p.k) != (n, k) or (forecaster.n, forecaster.k) != (n, k):
        raise DomainError("shape mismatch between class, distribution, forecaster")
    table, _, _ = sup_table(Q)
    p_probs = p.path_probs()
    f_probs = forecaster.path_probs()
    live = p_probs > 0.0
    if np.any(live & (f_probs == 0.0) & (table > 0.0)):
        return math.inf
    if np.any(live & (table == 0.0)):
        return -math.inf
    idx = np.where(live)[0]
    return float(
        np.sum(p_probs[idx] * (np.log(table[idx]) - np.log(f_probs[idx])))
    )


def truncate_cond(vec, delta, k=None):
    """One application of the three-branch conditional truncation rule."""
    vec = np.asarray(vec, dtype=float)
    if k is None:
        k = vec.shape[0]
    if not 0.0 < delta <= 1.0 / (4 * k):
        raise DomainError(f"delta {delta} outside (0, 1/(4k)] for k={k}")
    below = vec < delta
    mid = (vec >= delta) & (vec < 2 * delta)
    high = vec >= 2 * delta
    out = vec.copy()
    out[below] = delta
    if np.any(high):
        numer = 1.0 - vec[mid].sum() - delta * below.sum()
        denom = 1.0 - vec[below | mid].sum()
        out[high] = vec[high] * (numer / denom)
    return out


def truncate_dist(p, delta):
    """Truncate every conditional of a joint distribution away from zero.

    The result keeps all conditionals >= delta and remains a distribution; a
    distribution already clear of the cutoff comes back unchanged (the
    renormalization factor degenerates to one).
    """
    new = np.apply_along_axis(truncate_cond, 1, np.asarray(p.cond), delta, p.k)
    return JointDistribution(p.n, p.k, new)


def truncate_class(Q, delta):
    if isinstance(Q, BernoulliClass):
        Q = Q.materialize()
    if not isinstance(Q, JointClass):
        raise DomainError("truncation needs joint distributions")
    return JointClass([truncate_dist(q, delta) for q in Q.members])


def check_truncation_lemmas(Q, p, delta):
    """Numerically verify the two truncation comparisons.

    Pathwise: R(Q, p, y) <= R(Q^delta, p, y) + 4 n delta |Y| for every path.
    In expectation: E_p R(Q^delta, p, .) <= E_{p^delta} R(Q^delta, p^delta, .)
    plus 2 n^2 |Y| delta log(1/delta).  Returns a report with minimal slacks;
    report-only (no exception on violation).
    """
    if isinstance(Q, BernoulliClass):
        Q = Q.materialize()
    n, k = Q.n, Q.k
    Qd = truncate_class(Q, delta)
    pd = truncate_dist(p, delta)

    base = pathwise_regret_table(Q, p)
    trunc = pathwise_regret_table(Qd, p)
    margin = 4 * n * delta * k
    pathwise_slack = np.min(trunc + margin - base)

    p_probs = p.path_probs()
    lhs = float(np.sum(p_probs * np.where(p_probs > 0, pathwise_regret_table(Qd, p), 0.0)))
    pd_probs = pd.path_probs()
    rhs_core = float(
        np.sum(pd_probs * np.where(pd_probs > 0, pathwise_regret_table(Qd, pd), 0.0))
    )
    margin2 = 2 * n**2 * k * delta * math.log(1.0 / delta)
    expectation_slack = rhs_core + margin2 - lhs

    return {
        "delta": delta,
        "pathwise_margin": margin,
        "pathwise_slack": float(pathwise_slack),
        "pathwise_ok": bool(pathwise_slack >= -1e-12),
        "expectation_lhs": lhs,
        "expectation_rhs": rhs_core + margin2,
        "expectation_slack": float(expectation_slack),
        "expectation_ok": bool(expectation_slack >= -1e-12),
    }
