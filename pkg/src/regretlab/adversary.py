"""Constructive lower bounds: the exact Bernoulli block lemma, the block
adversary built from a shattering witness, the pathwise midpoint adversary for
classes pinned near one half, and the renewal-family packing certificates.
"""

import math

import numpy as np

from .covers import h_gap
from .errors import BudgetError, DomainError
from .model import (
    ContextTree,
    FunctionClass,
    JointClass,
    JointDistribution,
    compose_class_with_tree,
    iter_paths,
    prefix_index,
)
from .shtarkov import expected_regret, shtarkov_sum
from .zoo import renewal_class

BLOCK_REGRET_FLOOR = 1.0 / 5184.0


def canonical_block_length(p, alpha):
    """floor(p(1-p) / (324 alpha^2)), at least one."""
    return max(int(math.floor(p * (1.0 - p) / (324.0 * alpha * alpha))), 1)


def bernoulli_block_value(p, alpha, beta, k):
    """Exact expected log-ratio gain of the shifted-mean block experiment.

    Enumerates the Binomial(k, p) empirical mean p_hat; the shift direction
    follows the sign of p_hat - p (ties count as +).  Returns the exact value
    with the two lower bounds it is checked against.

    Preconditions mirror the block lemma, with beta <= alpha^2 (the block
    construction instantiates beta = alpha^2 exactly).
    """
    if not (0.0 < alpha < 1.0 and 0.0 <= beta <= alpha * alpha):
        raise DomainError("need 0 < alpha < 1 and 0 <= beta <= alpha^2")
    if not alpha + beta < p < 1.0 - alpha - beta:
        raise DomainError("need alpha + beta < p < 1 - alpha - beta")
    cap = max(p * (1.0 - p) / (324.0 * alpha * alpha), 1.0)
    if not 1 <= k <= cap + 1e-9:
        raise DomainError(f"block length {k} above the cap {cap}")
    up0 = math.log((p + alpha - beta) / p)
    up1 = math.log((1.0 - p - alpha - beta) / (1.0 - p))
    dn0 = math.log((p - alpha - beta) / p)
    dn1 = math.log((1.0 - p + alpha - beta) / (1.0 - p))
    value = 0.0
    for j in range(k + 1):
        phat = j / k
        w = math.comb(k, j) * p**j * (1.0 - p) ** (k - j)
        if phat >= p:
            value += w * (phat * up0 + (1.0 - phat) * up1)
        else:
            value += w * (phat * dn0 + (1.0 - phat) * dn1)
    lower = alpha * alpha / (8.0 * p * (1.0 - p))
    kc = canonical_block_length(p, alpha)
    return {
        "value": value,
        "lower_bound": lower,
        "meets_lower_bound": value >= lower,
        "canonical_k": kc,
        "scaled_value_at_k": k * value,
        "scaled_floor": BLOCK_REGRET_FLOOR,
    }


class BlockAdversary:
    """The repeated-context tree and block-constant distribution derived from a
    shattering witness, certifying expected regret d / 5184 per block."""

    def __init__(self, tree, dist, depth, bound, block_lengths, lemma_preconditions_ok):
        self.tree = tree
        self.dist = dist
        self.depth = depth
        self.bound = bound
        self.block_lengths = dict(block_lengths)
        self.lemma_preconditions_ok = lemma_preconditions_ok

    def __repr__(self):
        return f"BlockAdversary(depth={self.depth}, bound={self.bound:.6g})"


def _witness_node(witness, tilde_prefix):
    idx = prefix_index(tilde_prefix, 2)
    lo, hi = witness.s_lo[idx], witness.s_hi[idx]
    v = 0.5 * (lo + hi)
    gap = hi - lo
    return v, gap


def _block_length(v, gap):
    return max(int(math.floor(v * (1.0 - v) / (324.0 * gap * gap))), 1)


def block_adversary(F, witness, n, alpha, fill_context=None):
    """Build the block adversary for a witness at scales (alpha, alpha^4/16).

    Along each outcome path the adversary replays witness contexts in blocks
    whose lengths follow the per-node midpoint and gap; block majorities steer
    the walk down the witness tree, and leftover rounds replay a fixed
    context under the path's own expert.  The certified floor is
    depth / 5184 in expectation against any forecaster.
    """
    if witness is None or witness.depth == 0:
        return BlockAdversary(None, None, 0, 0.0, {}, True)
    d = witness.depth
    beta = alpha**4 / 16.0
    from .dimension import validate_witness

    check = validate_witness(F, witness, alpha, beta)
    if not check["ok"]:
        raise DomainError(f"witness does not certify scales (alpha, alpha^4/16): {check}")
    if fill_context is None:
        fill_context = witness.x_tree.context(())

    cap = max(math.ceil(1.0 / (162.0 * alpha * alpha)), 1)
    lengths = {}
    lemma_ok = True
    worst_total = 0
    for tilde in iter_paths(d, 2):
        total = 0
        for t in range(d):
            v, gap = _witness_node(witness, tilde[:t])
            k_t = _block_length(v, gap)
            lengths[tilde[:t]] = k_t
            if k_t > cap:
                lemma_ok = False
            gamma = gap / 2.0
            if not (gamma + gamma**2 < v < 1.0 - gamma - gamma**2):
                lemma_ok = False
            if k_t > max(v * (1.0 - v) / (324.0 * gamma * gamma), 1.0) + 1e-9:
                lemma_ok = False
            total += k_t
        worst_total = max(worst_total, total)
    if worst_total > n:
        raise DomainError(
            f"block lengths need {worst_total} rounds but the horizon is {n}"
        )

    def block_state(prefix):
        """(context, prob of one) for the round right after this prefix."""
        pos = 0
        tilde = ()
        for t in range(d):
            v, gap = _witness_node(witness, tilde)
            k_t = _block_length(v, gap)
            if len(prefix) < pos + k_t:
                return witness.x_tree.context(tilde), v
            block = prefix[pos : pos + k_t]
            tilde = tilde + (1 if sum(block) >= k_t * v else 0,)
            pos += k_t
        f = F.members[witness.experts_by_path[tilde]]
        return fill_context, f(fill_context)

    tree = ContextTree.from_fn(n, lambda pr: block_state(pr)[0])
    dist = JointDistribution.from_fn(
        n, 2, lambda pr: (lambda v: [1.0 - v, v])(block_state(pr)[1])
    )
    return BlockAdversary(tree, dist, d, d * BLOCK_REGRET_FLOOR, lengths, lemma_ok)


def block_adversary_expected_regret(F, adversary, forecaster=None):
    """Exact expected regret of a forecaster against the block adversary.

    Default forecaster is the minimax-optimal one for the composed class.
    """
    Q = compose_class_with_tree(F, adversary.tree)
    if forecaster is None:
        forecaster = shtarkov_sum(Q).nml
    return expected_regret(Q, adversary.dist, forecaster)


def large_p_adversary(F, witness, n, beta):
    """Pathwise midpoint adversary for classes with values in [7/16, 9/16].

    The witness must certify scales (beta, beta^2/2) at full depth n.  For
    every outcome path the witness expert beats the midpoint forecaster by at
    least beta/2 per round; the check is exact on all 2^n paths.
    """
    from .dimension import validate_witness

    if witness.depth != n:
        raise DomainError("midpoint adversary needs a full-depth witness")
    check = validate_witness(F, witness, beta, beta * beta / 2.0)
    if not check["ok"]:
        raise DomainError(f"witness does not certify scales (beta, beta^2/2): {check}")
    lo, hi = 7.0 / 16.0, 9.0 / 16.0

    def check_range(v):
        if not lo - 1e-12 <= v <= hi + 1e-12:
            raise DomainError("class takes a value outside [7/16, 9/16]")
        return v

    if len(F.members) * (2**n - 1) <= 300_000:
        for ctx in witness.x_tree.values:
            for f in F.members:
                check_range(f(ctx))
    u_values = [
        0.5 * (witness.s_lo[i] + witness.s_hi[i]) for i in range(2**n - 1)
    ]
    bound = n * beta / 2.0
    min_gain = math.inf
    per_round_floor = math.inf
    for path in iter_paths(n, 2):
        f = F.members[witness.experts_by_path[path]]
        gain = 0.0
        for t in range(n):
            idx = prefix_index(path[:t], 2)
            u = u_values[idx]
            fv = check_range(f(witness.x_tree.context(path[:t])))
            f_prob = fv if path[t] == 1 else 1.0 - fv
            u_prob = u if path[t] == 1 else 1.0 - u
            step = math.log(f_prob / u_prob)
            per_round_floor = min(per_round_floor, step)
            gain += step
        min_gain = min(min_gain, gain)
    return {
        "n": n,
        "beta": beta,
        "bound": bound,
        "min_pathwise_gain": min_gain,
        "min_per_round_gain": per_round_floor,
        "midpoints": u_values,
        "ok": min_gain >= bound - 1e-12,
    }


def two_point_block_instance(gap, v=0.5, context="x0"):
    """Depth-1 witness instance: two constant experts straddling v by gap/2.

    Returns (class, witness, separation) where separation is the h distance
    between the two target values; any alpha below it certifies the witness.
    """
    from .dimension import ShatterWitness
    from .model import Expert

    lo, hi = v - gap / 2.0, v + gap / 2.0
    if not 0.0 < lo < hi < 1.0:
        raise DomainError("gap does not fit around the midpoint")
    F = FunctionClass(
        [Expert.constant(lo, key="lo"), Expert.constant(hi, key="hi")]
    )
    witness = ShatterWitness(
        1,
        ContextTree.constant(1, context),
        [lo],
        [hi],
        {(0,): 0, (1,): 1},
    )
    return F, witness, h_gap(lo, hi)


def path_expert_class(n, lo=7.0 / 16.0, hi=9.0 / 16.0):
    """One expert per outcome path on prefix contexts: the path's expert
    assigns the high value exactly when its own next coordinate is one.

    With the identity context tree (context = the observed prefix) this class
    shatters the full depth with the constant pair tree (lo, hi).
    Returns (class, witness).
    """
    from .dimension import ShatterWitness
    from .model import Expert

    if not 0.0 < lo < hi < 1.0:
        raise DomainError("need 0 < lo < hi < 1")
    paths = list(iter_paths(n, 2))

    def make(path):
        def fn(prefix):
            t = len(prefix)
            if t < n and tuple(prefix) == path[:t] and path[t] == 1:
                return hi
            return lo

        return Expert(fn, key=("path",) + path)

    F = FunctionClass([make(p) for p in paths])
    x = ContextTree.from_fn(n, lambda pr: pr)
    nodes = 2**n - 1
    witness = ShatterWitness(
        n,
        x,
        [lo] * nodes,
        [hi] * nodes,
        {p: r for r, p in enumerate(paths)},
    )
    return F, witness


def renewal_packing(n, alpha, pair_samples=100, seed=0, full_check_horizon=8):
    """Separation certificate for the sign-indexed renewal family.

    Members indexed by sign vectors keep probability 1/2 + 3*eps_t*alpha of
    staying at zero on the all-zeros path; any two members differing anywhere
    are further than 2*alpha apart in the square-root sense on that path, so
    every cover needs one representative per sign vector: 2**n of them.

    Also builds a greedy binary code of minimum distance n/4 whose size
    certifies the log-metric entropy.
    """
    if not 0.0 < alpha < 1.0 / 6.0:
        raise DomainError("scale must lie in (0, 1/6)")
    if n > 16:
        raise BudgetError("packing certificate limited to n <= 16")
    gap = math.sqrt(0.5 + 3 * alpha) - math.sqrt(0.5 - 3 * alpha)
    gap_ok = gap > 2 * alpha

    def zero_path_conds(eps):
        return [0.5 + 3.0 * e * alpha for e in eps]

    rng = np.random.default_rng(seed)
    pair_ok = True
    worst_pair_sep = math.inf
    for _ in range(pair_samples):
        a = rng.integers(0, 2, n) * 2 - 1
        b = rng.integers(0, 2, n) * 2 - 1
        if np.array_equal(a, b):
            b[rng.integers(0, n)] *= -1
        ca, cb = zero_path_conds(a), zero_path_conds(b)
        sep = max(abs(math.sqrt(x) - math.sqrt(y)) for x, y in zip(ca, cb))
        worst_pair_sep = min(worst_pair_sep, sep)
        if not sep > 2 * alpha:
            pair_ok = False

    # consistency of the virtual family: materialize a few members through the
    # hazard construction and read the all-zeros-path conditionals back
    consistent = True
    if n <= full_check_horizon:
        for _ in range(3):
            eps = rng.integers(0, 2, n) * 2 - 1
            stay = zero_path_conds(eps)
            survival = np.cumprod(stay)
            masses = np.concatenate([[1.0], survival[:-1]]) - survival
            joint = renewal_class([list(masses)], n).members[0]
            conds = [joint.conditional(tuple([0] * t), 0) for t in range(n)]
            if any(abs(c - s) > 1e-9 for c, s in zip(conds, stay)):
                consistent = False

    log_gap = abs(math.log((0.5 - 3 * alpha) / (0.5 + 3 * alpha)))
    d_min = max(n // 4, 1)
    code = greedy_binary_code(n, d_min)
    vol = sum(math.comb(n, i) for i in range(d_min))
    gv_floor = 2**n / vol
    return {
        "n": n,
        "alpha": alpha,
        "stay_gap": gap,
        "separation_ok": gap_ok and pair_ok,
        "worst_sampled_separation": worst_pair_sep,
        "virtual_family_consistent": consistent,
        "cover_size_log2": n,
        "sqrt_entropy_nats": n * math.log(2.0),
        "code_min_distance": d_min,
        "code_size": len(code),
        "code_gv_floor": gv_floor,
        "code_ok": len(code) >= gv_floor,
        "log_gap_per_flip": log_gap,
        "log_gap_ok": log_gap > 6 * alpha,
        "log_entropy_nats": math.log(len(code)),
        "log_entropy_reference": (1.0 - math.log(2.0)) * n,
    }


def greedy_binary_code(n, d_min):
    """Greedy lexicographic code of the given minimum Hamming distance."""
    if n > 16:
        raise BudgetError("greedy code limited to n <= 16")
    pop = np.zeros(2**n, dtype=np.uint8)
    for b in range(n):
        pop += ((np.arange(2**n) >> b) & 1).astype(np.uint8)
    kept = []
    kept_arr = np.empty(0, dtype=np.int64)
    for cand in range(2**n):
        if kept and np.min(pop[np.bitwise_xor(kept_arr, cand)]) < d_min:
            continue
        kept.append(cand)
        kept_arr = np.asarray(kept, dtype=np.int64)
    return kept


def renewal_minimax_reference(p_grid, n):
    """Exact minimax regret of a finite renewal grid: a certified lower bound
    on the full renewal family's value at this horizon."""
    Q = renewal_class(p_grid, n)
    res = shtarkov_sum(Q)
    return {
        "n": n,
        "grid_size": len(p_grid),
        "value": res.value,
        "upper_bound_log_grid": math.log(len(p_grid)),
    }
