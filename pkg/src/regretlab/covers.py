"""Sequential square-root covers, the sup-norm and log-metric variants,
minimal-cover search (exact set cover or greedy), entropy profiles, and the
entropy-comparison checks.

A cover is drawn from a declared candidate pool (by default the class
itself), so reported sizes are proper-cover upper bounds on the improper
covering number.
"""

import itertools
import math
import warnings

import numpy as np

from .errors import BudgetError, DomainError, NoCoverError
from .model import BernoulliClass, JointClass, compose_class_with_tree, level_offset

EXACT_POOL_LIMIT = 12


def h_gap(a, b):
    """max{|sqrt(a)-sqrt(b)|, |sqrt(1-a)-sqrt(1-b)|} for binary conditionals."""
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise DomainError("h_gap arguments must lie in [0, 1]")
    return max(
        abs(math.sqrt(a) - math.sqrt(b)),
        abs(math.sqrt(1.0 - a) - math.sqrt(1.0 - b)),
    )


def _members(Q):
    if isinstance(Q, BernoulliClass):
        return list(Q.materialize().members)
    if isinstance(Q, JointClass):
        return list(Q.members)
    if isinstance(Q, (list, tuple)):
        return list(Q)
    raise DomainError("covering operations need joint distributions (compose first)")


def _path_node_matrix(n, k):
    """nodes[r, t] = dense prefix index of the length-t prefix of path rank r."""
    ranks = np.arange(k**n)
    cols = []
    for t in range(n):
        cols.append(level_offset(k, t) + ranks // (k ** (n - t)))
    return np.stack(cols, axis=1)


def _stack_conds(members):
    return np.stack([q.cond for q in members])


def _pathgap_block(A, B, notion, nodes):
    """Pairwise per-path gaps: (len(A), len(B), paths).

    A and B are stacked conditional tables (m, prefixes, k); the gap at a
    node is the max over outcomes, and the path gap the max over the nodes
    the path visits.
    """
    if notion == "sqrt":
        A, B = np.sqrt(A), np.sqrt(B)
    elif notion != "linf":
        raise DomainError(f"unknown cover notion {notion!r}")
    node_gap = np.max(np.abs(A[:, None] - B[None, :]), axis=3)  # (a, b, prefixes)
    return np.max(node_gap[:, :, nodes], axis=3)  # (a, b, paths)


def _pathgap_matrix(As, Bs, notion, nodes, chunk=64):
    A = _stack_conds(As)
    B = _stack_conds(Bs)
    out = np.empty((len(As), len(Bs), nodes.shape[0]))
    for lo in range(0, len(As), chunk):
        out[lo : lo + chunk] = _pathgap_block(A[lo : lo + chunk], B, notion, nodes)
    return out


def _log_metric(a, b):
    """CBL pseudometric: sqrt of (1/n) sum_t max-node squared log gap."""
    n, k = a.n, a.k
    la, lb = np.log(a.cond), np.log(b.cond)
    sq = (la - lb) ** 2
    total = 0.0
    for t in range(n):
        off = level_offset(k, t)
        total += np.max(sq[off : off + k**t])
    return math.sqrt(total / n)


def _drop_zero_members(members, label):
    kept, dropped = [], 0
    for q in members:
        if np.min(q.cond) <= 0.0:
            dropped += 1
        else:
            kept.append(q)
    if dropped:
        warnings.warn(
            f"logmetric: excluded {dropped} {label} member(s) with a zero conditional",
            stacklevel=3,
        )
    return kept


class CoverSet:
    """A finite cover at a declared scale and notion."""

    def __init__(self, alpha, notion, members):
        members = list(members)
        if not members:
            raise DomainError("cover must be nonempty")
        self.alpha = float(alpha)
        self.notion = notion
        self.members = tuple(members)

    def __len__(self):
        return len(self.members)

    def __repr__(self):
        return f"CoverSet(alpha={self.alpha}, notion={self.notion!r}, size={len(self)})"


def is_cover(V, Q, alpha, notion="sqrt"):
    """Check the sequential covering condition; returns (ok, worst_witness).

    For the sqrt and linf notions the representative may depend on the path
    (min over the cover sits inside the max over paths); the logmetric notion
    is a plain uniform cover under the log pseudometric.

    The witness records the hardest (member, path) pair and its achieved gap.
    """
    vs = V.members if isinstance(V, CoverSet) else _members(V)
    qs = _members(Q)
    if notion == "logmetric":
        vs = _drop_zero_members(vs, "cover")
        qs = _drop_zero_members(qs, "class")
        if not vs or not qs:
            raise DomainError("logmetric cover check has no usable members")
        worst_gap, worst_member = -1.0, None
        for i, q in enumerate(qs):
            best = min(_log_metric(q, v) for v in vs)
            if best > worst_gap:
                worst_gap, worst_member = best, i
        ok = worst_gap <= alpha + 1e-15
        return ok, {"gap": worst_gap, "member": worst_member, "path": None}
    n, k = qs[0].n, qs[0].k
    if k**n * len(qs) > 2_000_000:
        raise BudgetError("cover check exceeds the path enumeration budget")
    nodes = _path_node_matrix(n, k)
    gaps = _pathgap_matrix(qs, vs, notion, nodes)  # (q, v, paths)
    per_path = np.min(gaps, axis=1)  # best representative per (member, path)
    i, r = np.unravel_index(int(np.argmax(per_path)), per_path.shape)
    worst_gap = float(per_path[i, r])
    ok = worst_gap <= alpha + 1e-15
    return ok, {"gap": worst_gap, "member": int(i), "path": int(r)}


def _coverage_matrix(pool, qs, alpha, notion):
    """covered[c, u]: candidate c covers universe element u."""
    if notion == "logmetric":
        mat = np.array(
            [[_log_metric(q, v) <= alpha + 1e-15 for q in qs] for v in pool]
        )
        return mat
    n, k = qs[0].n, qs[0].k
    nodes = _path_node_matrix(n, k)
    gaps = _pathgap_matrix(pool, qs, notion, nodes)  # (pool, q, paths)
    return (gaps <= alpha + 1e-15).reshape(len(pool), -1)


class CoverResult:
    def __init__(self, cover, exact):
        self.cover = cover
        self.exact = exact

    @property
    def size(self):
        return len(self.cover)

    @property
    def entropy(self):
        return math.log(len(self.cover))


def min_cover(Q, alpha, notion="sqrt", pool=None, exact=None):
    """Smallest cover of Q at the given scale, drawn from the candidate pool.

    Exhaustive set-cover search when the pool is small (exact flag true);
    greedy with deterministic index tie-breaking otherwise.  Raises
    NoCoverError when the pool cannot cover the class at this scale.
    """
    qs = _members(Q)
    cands = _members(pool) if pool is not None else list(qs)
    if notion == "logmetric":
        cands = _drop_zero_members(cands, "pool")
        qs = _drop_zero_members(qs, "class")
        if not qs:
            raise DomainError("logmetric: every class member has a zero conditional")
        if not cands:
            raise NoCoverError("no cover from pool: all candidates have zero conditionals")
    covered = _coverage_matrix(cands, qs, alpha, notion)
    if exact is None:
        exact = len(cands) <= EXACT_POOL_LIMIT
    if exact and len(cands) > EXACT_POOL_LIMIT:
        raise BudgetError(f"exact set cover limited to pools of {EXACT_POOL_LIMIT}")
    universe = covered.shape[1]
    if not np.all(covered.any(axis=0)):
        raise NoCoverError("no cover from pool at this scale")
    if exact:
        chosen = _exact_set_cover(covered)
    else:
        chosen = _greedy_set_cover(covered)
    cover = CoverSet(alpha, notion, [cands[j] for j in chosen])
    ok, witness = is_cover(cover, qs, alpha, notion)
    if not ok:
        raise AssertionError(f"constructed cover failed re-validation: {witness}")
    return CoverResult(cover, exact)


def _exact_set_cover(covered):
    m = covered.shape[0]
    for size in range(1, m + 1):
        for combo in itertools.combinations(range(m), size):
            if np.all(covered[list(combo)].any(axis=0)):
                return list(combo)
    raise NoCoverError("no cover from pool at this scale")


def _greedy_set_cover(covered):
    m, u = covered.shape
    uncovered = np.ones(u, dtype=bool)
    chosen = []
    while uncovered.any():
        gains = covered[:, uncovered].sum(axis=1)
        best = int(np.argmax(gains))  # argmax takes the lowest index on ties
        if gains[best] == 0:
            raise NoCoverError("no cover from pool at this scale (greedy stalled)")
        chosen.append(best)
        uncovered &= ~covered[best]
    return chosen


class EntropyProfile:
    """Sampled map scale -> log cover size, nonincreasing in the scale."""

    def __init__(self, scales, entropies, exact_flags, adjusted):
        self.scales = tuple(scales)
        self.entropies = tuple(entropies)
        self.exact_flags = tuple(exact_flags)
        self.adjusted = adjusted

    def __iter__(self):
        return iter(zip(self.scales, self.entropies))

    def slope_loglog(self):
        """Least-squares slope of entropy against log(1/alpha) (log-log trend)."""
        xs = np.log(1.0 / np.asarray(self.scales))
        ys = np.log(np.maximum(np.asarray(self.entropies), 1e-12))
        keep = np.asarray(self.entropies) > 0
        if keep.sum() < 2:
            return 0.0
        return float(np.polyfit(xs[keep], ys[keep], 1)[0])


def entropy_profile(Q, scales, notion="sqrt", pool=None, exact=None):
    """Pointwise min_cover over a scale grid, with monotonicity enforcement.

    A cover at a smaller scale covers at every larger one, so running minima
    over increasing scales are still valid upper bounds; points lowered by
    that pass are flagged as greedy upper bounds rather than exact.
    """
    scales = sorted(float(s) for s in scales)
    if not scales:
        raise DomainError("empty scale grid")
    sizes, flags = [], []
    for a in scales:
        res = min_cover(Q, a, notion=notion, pool=pool, exact=exact)
        sizes.append(res.size)
        flags.append(res.exact)
    adjusted = False
    best = math.inf
    out_sizes, out_flags = [], []
    for s, f in zip(sizes, flags):
        if s > best:
            adjusted = True
            s, f = best, False
        best = min(best, s)
        out_sizes.append(s)
        out_flags.append(f)
    if adjusted:
        warnings.warn("entropy profile: greedy non-monotonicity corrected", stacklevel=2)
    return EntropyProfile(scales, [math.log(s) for s in out_sizes], out_flags, adjusted)


def check_entropy_relations(F, x, alphas, delta):
    """Exact-cover comparison of the square-root and sup-norm entropies.

    On a composed class with values in [delta, 1-delta], checks
    N_sq(alpha/sqrt(delta)) <= N_inf(alpha) and N_sq(2 alpha) <= N_inf(alpha^2)
    pointwise on the scale grid.  Report-only.
    """
    Q = compose_class_with_tree(F, x)
    report = {"delta": delta, "points": [], "ok": True}
    for a in alphas:
        n_inf = min_cover(Q, a, notion="linf").size
        n_sq_scaled = min_cover(Q, a / math.sqrt(delta), notion="sqrt").size
        n_inf_sq = min_cover(Q, a * a, notion="linf").size
        n_sq_2a = min_cover(Q, 2 * a, notion="sqrt").size
        ok1 = n_sq_scaled <= n_inf
        ok2 = n_sq_2a <= n_inf_sq
        report["points"].append(
            {
                "alpha": a,
                "n_inf": n_inf,
                "n_sq_at_alpha_over_sqrt_delta": n_sq_scaled,
                "n_inf_at_alpha_sq": n_inf_sq,
                "n_sq_at_2alpha": n_sq_2a,
                "range_comparison_ok": ok1,
                "tv_comparison_ok": ok2,
            }
        )
        report["ok"] = report["ok"] and ok1 and ok2
    return report
