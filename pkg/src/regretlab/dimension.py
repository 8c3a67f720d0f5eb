"""Scale-sensitive sequential shattering: the two-scale dimension and its
discrete variant, the tree-counting function and its recursion, the
dimension-to-entropy cover construction, and monochrome skipping trees.
"""

import math
from functools import lru_cache

import numpy as np

from .covers import h_gap, is_cover
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

MAX_SHATTER_DEPTH = 4
MAX_CONTEXTS = 6
MAX_EXPERTS = 16
MAX_GRID = 120


def g_beta(n, d, beta):
    """Number of value trees needed at depth n for dimension d on the half-step
    grid: sum over i <= d of C(n, i) (M-1)^i with M = 1/(2 beta).

    Exact integer arithmetic (Python integers never overflow).
    """
    M = _grid_count(beta)
    if n < 0 or d < 0:
        raise DomainError("tree depth and dimension must be nonnegative")
    return sum(math.comb(n, i) * (M - 1) ** i for i in range(min(d, n) + 1))


def _grid_count(beta):
    if beta <= 0 or beta > 0.5:
        raise DomainError("grid half-step must lie in (0, 1/2]")
    M = 1.0 / (2.0 * beta)
    if abs(M - round(M)) > 1e-9:
        raise DomainError(f"1/(2*beta) must be an integer, got {M}")
    return int(round(M))


def grid_values(beta):
    """The centered value grid: beta, 3 beta, ..., (2M-1) beta."""
    M = _grid_count(beta)
    return [(2 * j + 1) * beta for j in range(M)]


class ShatterWitness:
    """Certificate that a context tree of depth d is shattered: the tree, the
    pair tree of separated target values, and one expert index per path."""

    def __init__(self, depth, x_tree, s_lo, s_hi, experts_by_path):
        self.depth = depth
        self.x_tree = x_tree
        self.s_lo = tuple(s_lo)
        self.s_hi = tuple(s_hi)
        self.experts_by_path = dict(experts_by_path)

    def __repr__(self):
        return f"ShatterWitness(depth={self.depth})"


class ShatterResult:
    def __init__(self, dimension, witness, truncated):
        self.dimension = dimension
        self.witness = witness
        self.truncated = truncated

    def __repr__(self):
        star = " (search truncated)" if self.truncated else ""
        return f"ShatterResult(dimension={self.dimension}{star})"


def validate_witness(F, witness, alpha, beta, discrete=False):
    """Independent check of a shattering certificate; strict inequalities.

    Returns the minimal margins so callers can see how much slack survived.
    """
    d = witness.depth
    if d == 0:
        return {"ok": True, "min_h_margin": math.inf, "min_closeness_margin": math.inf}
    min_h = math.inf
    min_close = math.inf
    for path in iter_paths(d, 2):
        f = F.members[witness.experts_by_path[path]]
        for t in range(d):
            idx = prefix_index(path[:t], 2)
            lo, hi = witness.s_lo[idx], witness.s_hi[idx]
            if not lo < hi:
                return {"ok": False, "reason": f"s values not ordered at node {idx}"}
            if not (beta <= lo <= 1 - beta and beta <= hi <= 1 - beta):
                return {"ok": False, "reason": f"s value outside [beta, 1-beta] at node {idx}"}
            gap = h_gap(lo, hi)
            if not gap > alpha:
                return {"ok": False, "reason": f"h gap {gap} not above {alpha} at node {idx}"}
            min_h = min(min_h, gap - alpha)
            target = hi if path[t] == 1 else lo
            err = abs(f(witness.x_tree.context(path[:t])) - target)
            if discrete:
                if err != 0.0:
                    return {"ok": False, "reason": "discrete witness must match exactly"}
            elif not err < beta:
                return {"ok": False, "reason": f"expert misses target by {err} >= {beta}"}
            min_close = min(min_close, beta - err)
    return {"ok": True, "min_h_margin": min_h, "min_closeness_margin": min_close}


def _near_masks(F, contexts, values, beta, discrete):
    """near[x][v] = bitmask of experts within beta of value v at context x."""
    masks = {}
    for xi, x in enumerate(contexts):
        fvals = [f(x) for f in F.members]
        for vi, v in enumerate(values):
            m = 0
            for fi, fv in enumerate(fvals):
                hit = (fv == v) if discrete else (abs(fv - v) < beta)
                if hit:
                    m |= 1 << fi
            masks[(xi, vi)] = m
    return masks


def _shatter_search(F, contexts, values, pairs, beta, max_depth, discrete):
    near = _near_masks(F, contexts, values, beta, discrete)
    full = (1 << len(F.members)) - 1

    @lru_cache(maxsize=None)
    def can(mask, d):
        if d == 0:
            return ()
        for xi in range(len(contexts)):
            for a, b in pairs:
                lo = mask & near[(xi, a)]
                hi = mask & near[(xi, b)]
                if lo and hi:
                    left = can(lo, d - 1)
                    if left is None:
                        continue
                    right = can(hi, d - 1)
                    if right is None:
                        continue
                    return (xi, a, b, left, right)
        return None

    best_d, best_plan = 0, ()
    for d in range(1, max_depth + 1):
        plan = can(full, d)
        if plan is None:
            break
        best_d, best_plan = d, plan
    return best_d, best_plan, full


def _lowest_bit(mask):
    return (mask & -mask).bit_length() - 1


def _reconstruct(F, contexts, values, plan, depth, beta, discrete):
    near = _near_masks(F, contexts, values, beta, discrete)
    nodes = 2**depth - 1
    x_vals = [None] * nodes
    s_lo = [0.0] * nodes
    s_hi = [0.0] * nodes
    experts = {}

    def fill(p, prefix, mask):
        xi, a, b, left, right = p
        idx = prefix_index(prefix, 2)
        x_vals[idx] = contexts[xi]
        s_lo[idx] = values[a]
        s_hi[idx] = values[b]
        lo_mask = mask & near[(xi, a)]
        hi_mask = mask & near[(xi, b)]
        if len(prefix) == depth - 1:
            experts[prefix + (0,)] = _lowest_bit(lo_mask)
            experts[prefix + (1,)] = _lowest_bit(hi_mask)
        else:
            fill(left, prefix + (0,), lo_mask)
            fill(right, prefix + (1,), hi_mask)

    fill(plan, (), (1 << len(F.members)) - 1)
    return ShatterWitness(depth, ContextTree(depth, x_vals), s_lo, s_hi, experts)


def _check_budget(F, contexts, values, max_depth, depth_cap=MAX_SHATTER_DEPTH):
    if len(contexts) > MAX_CONTEXTS:
        raise BudgetError(f"context set of {len(contexts)} exceeds {MAX_CONTEXTS}")
    if max_depth > depth_cap:
        raise BudgetError(f"max depth {max_depth} exceeds {depth_cap}")
    if len(F.members) > MAX_EXPERTS:
        raise BudgetError(f"class of {len(F.members)} experts exceeds {MAX_EXPERTS}")
    if len(values) > MAX_GRID:
        raise BudgetError(f"value grid of {len(values)} exceeds {MAX_GRID}")


def shatter_dimension(F, contexts, alpha, beta, max_depth=MAX_SHATTER_DEPTH):
    """Largest certified depth of a two-scale shattered context tree.

    Target value pairs are searched on the beta/2 grid of [beta, 1-beta], so
    the result is a grid-certified lower bound on the continuous-valued
    dimension (exhaustive-certified exact for grid-valued classes).  When the
    search reaches max_depth the flag marks the result as truncated.
    """
    if not 0 < beta < alpha:
        raise DomainError("need 0 < beta < alpha")
    contexts = list(contexts)
    step = beta / 2.0
    count = int(math.floor((1.0 - 2.0 * beta) / step + 1e-9)) + 1
    values = [beta + j * step for j in range(count)]
    _check_budget(F, contexts, values, max_depth)
    if alpha >= 1.0:
        return ShatterResult(0, None, False)
    pairs = [
        (i, j)
        for i in range(len(values))
        for j in range(i + 1, len(values))
        if h_gap(values[i], values[j]) > alpha
    ]
    if not pairs:
        return ShatterResult(0, None, False)
    d, plan, _ = _shatter_search(F, contexts, values, pairs, beta, max_depth, False)
    witness = None
    if d > 0:
        witness = _reconstruct(F, contexts, values, plan, d, beta, False)
        check = validate_witness(F, witness, alpha, beta)
        if not check["ok"]:
            raise AssertionError(f"witness failed independent validation: {check}")
    return ShatterResult(d, witness, d == max_depth)


MAX_DISCRETE_DEPTH = 8


def discrete_shatter_dimension(F, contexts, alpha, beta, max_depth=MAX_SHATTER_DEPTH):
    """Shattering depth for a grid-valued class with exact value matching."""
    values = grid_values(beta)
    contexts = list(contexts)
    _check_budget(F, contexts, values, max_depth, depth_cap=MAX_DISCRETE_DEPTH)
    value_set = set(values)
    for f in F.members:
        for x in contexts:
            if not any(abs(f(x) - v) < 1e-9 for v in value_set):
                raise DomainError("class takes a value off the grid")
    pairs = [
        (i, j)
        for i in range(len(values))
        for j in range(i + 1, len(values))
        if h_gap(values[i], values[j]) > alpha
    ]
    if not pairs:
        return ShatterResult(0, None, False)
    d, plan, _ = _shatter_search(F, contexts, values, pairs, beta, max_depth, True)
    witness = None
    if d > 0:
        witness = _reconstruct(F, contexts, values, plan, d, beta, True)
        check = validate_witness(F, witness, alpha, beta, discrete=True)
        if not check["ok"]:
            raise AssertionError(f"witness failed independent validation: {check}")
    return ShatterResult(d, witness, d == max_depth)


def round_to_grid(F, contexts, beta):
    """Round every expert to the nearest grid value (lower value on ties)."""
    values = grid_values(beta)
    members = []
    for f in F.members:
        table = {}
        for x in contexts:
            diffs = [abs(f(x) - v) for v in values]
            table[x] = values[int(np.argmin(diffs))]
        from .model import Expert

        members.append(Expert.from_table(table, key=("rounded", f.key)))
    return FunctionClass(members, contexts=contexts)


def _dim_capped(F_masked, contexts, alpha, beta, cap):
    res = discrete_shatter_dimension(F_masked, contexts, alpha, beta, max_depth=cap)
    return res.dimension


def _subclass(F, contexts, mask):
    members = [f for i, f in enumerate(F.members) if mask & (1 << i)]
    return FunctionClass(members, contexts=contexts)


def build_dimension_cover(F, x, alpha, beta):
    """Constructive cover of a grid-valued class on a tree, following the
    recursive partition by root value; size is bounded by g_beta(n, dim).

    Returns (list of value-index trees as float arrays, discrete dimension).
    """
    contexts = list(x.values) if F.contexts is None else list(F.contexts)
    contexts = sorted(set(contexts), key=repr)
    values = grid_values(beta)
    n = x.n

    def dim_of(members, cap):
        if not members:
            return -1
        sub = FunctionClass(members, contexts=contexts)
        return discrete_shatter_dimension(sub, contexts, alpha, beta, max_depth=cap).dimension

    def build(members, prefix):
        m = n - len(prefix)
        if m == 0:
            return [np.zeros(0)]
        if not members:
            return []
        d = dim_of(members, cap=m)
        if d >= m:
            # every assignment of one grid value per level covers exactly
            out = []
            for combo in iter_paths(m, len(values)):
                tree = np.empty(2**m - 1)
                for t in range(m):
                    lo = 2**t - 1
                    tree[lo : 2 ** (t + 1) - 1] = values[combo[t]]
                out.append(tree)
            return out
        root_ctx = x.context(prefix)
        if d == 0:
            # dimension zero: per-context value sets have h-diameter <= alpha,
            # so following any one member through the subtree covers the rest
            f0 = members[0]
            tree = np.empty(2**m - 1)
            for t in range(m):
                for pr in iter_paths(t, 2):
                    tree[prefix_index(pr, 2)] = f0(x.context(prefix + pr))
            return [tree]
        groups = {}
        for f in members:
            groups.setdefault(round(f(root_ctx) / (2 * beta) - 0.5), []).append(f)
        big = []  # groups still at dimension d
        covers = []
        for key in sorted(groups):
            sub = groups[key]
            if dim_of(sub, cap=d + 1) == d:
                big.extend(sub)
            else:
                left = build(sub, prefix + (0,))
                right = build(sub, prefix + (1,))
                covers.append(_combine(values[int(key)], left, right, m))
        if big:
            left = build(big, prefix + (0,))
            right = build(big, prefix + (1,))
            root_val = big[0](root_ctx)
            covers.append(_combine(root_val, left, right, m))
        return [tree for group in covers for tree in group]

    full_dim = dim_of(list(F.members), cap=n)
    return build(list(F.members), ()), full_dim


def _combine(root_value, left, right, m):
    """Pair left/right subtree covers into depth-m trees, padding the shorter."""
    size = max(len(left), len(right))
    if size == 0:
        return [np.full(2**m - 1, root_value)] if m >= 1 else []
    left = left + [left[-1]] * (size - len(left)) if left else []
    right = right + [right[-1]] * (size - len(right)) if right else []
    out = []
    for lt, rt in zip(left, right):
        tree = np.empty(2**m - 1)
        tree[0] = root_value
        for t in range(1, m):
            span = 2**t
            lo = span - 1
            half = span // 2
            sub_lo = half - 1
            tree[lo : lo + half] = lt[sub_lo : sub_lo + half]
            tree[lo + half : lo + span] = rt[sub_lo : sub_lo + half]
        out.append(tree)
    return out


def dimension_entropy_bound(F, x, alpha, beta):
    """Build the rounding-based cover and compare it to the counting bound.

    Checks that the constructed cover (i) covers the rounded class at scale
    alpha, (ii) covers the original class at scale alpha + sqrt(2 beta),
    (iii) has size at most g_beta(n, dim), which also caps the square-root
    entropy by dim * log(e n / beta).  Report-only.
    """
    contexts = list(x.values) if F.contexts is None else list(F.contexts)
    contexts = sorted(set(contexts), key=repr)
    rounded = round_to_grid(F, contexts, beta)
    trees, dim = build_dimension_cover(rounded, x, alpha, beta)
    cover_joints = [JointDistribution.from_value_tree(t) for t in trees]
    rounded_q = compose_class_with_tree(rounded, x)
    ok_rounded, wit1 = is_cover(cover_joints, rounded_q, alpha)
    orig_q = compose_class_with_tree(F, x)
    widened = alpha + math.sqrt(2 * beta)
    ok_orig, wit2 = is_cover(cover_joints, orig_q, widened)
    bound = g_beta(x.n, dim, beta)
    entropy_bound = dim * math.log(math.e * x.n / beta)
    return {
        "dimension": dim,
        "cover_size": len(trees),
        "g_beta_bound": bound,
        "size_ok": len(trees) <= bound,
        "covers_rounded": ok_rounded,
        "covers_original_at_widened_scale": ok_orig,
        "entropy": math.log(len(trees)) if trees else 0.0,
        "entropy_bound": entropy_bound,
        "entropy_ok": (math.log(len(trees)) if trees else 0.0) <= entropy_bound + 1e-12,
        "ok": ok_rounded
        and ok_orig
        and len(trees) <= bound
        and (math.log(len(trees)) if trees else 0.0) <= entropy_bound + 1e-12,
    }


class SkippingTree:
    """A depth-d binary tree whose nodes are positions in a host tree and whose
    child links descend through the matching child subtrees of the host."""

    def __init__(self, depth, positions):
        self.depth = depth
        self.positions = tuple(positions)  # heap order, length 2**depth - 1

    def node(self, heap_index):
        return self.positions[heap_index]

    def __repr__(self):
        return f"SkippingTree(depth={self.depth})"


def _descends(parent, child, side):
    """child position lies in the `side` subtree of parent (strictly below)."""
    pt, pp = parent
    ct, cp = child
    if ct <= pt:
        return False
    if cp >> (ct - pt) != pp:
        return False
    return ((cp >> (ct - pt - 1)) & 1) == side


def validate_skipping_tree(tree, colors, host_depth):
    if tree is None:
        return {"ok": False, "reason": "no tree"}
    color = None
    for t, p in tree.positions:
        c = colors[2**t - 1 + p]
        if color is None:
            color = c
        elif c != color:
            return {"ok": False, "reason": "not monochrome"}
    for h in range(2 ** (tree.depth - 1) - 1):
        for side in (0, 1):
            child = tree.positions[2 * h + 1 + side]
            if not _descends(tree.positions[h], child, side):
                return {"ok": False, "reason": f"descent violated at heap node {h}"}
    return {"ok": True, "color": color}


def find_monochrome_skipping_tree(colors, num_colors, target_depth):
    """Monochrome skipping subtree of the requested depth, or None.

    ``colors`` is a dense array of 2**m - 1 color ids in prefix-index order.
    Guaranteed to succeed when m >= num_colors * (target_depth - 1) + 1; below
    that threshold an exhaustive search still finds a tree whenever one
    exists.
    """
    colors = np.asarray(colors)
    m = int(round(math.log2(len(colors) + 1)))
    if 2**m - 1 != len(colors):
        raise DomainError("color array length must be 2**m - 1")
    if target_depth < 1:
        raise DomainError("target depth must be at least 1")

    def color_at(t, p):
        return int(colors[2**t - 1 + p])

    def budget_find(t, p, budgets):
        j = color_at(t, p)
        if budgets[j] == 0:
            return j, [(t, p)]
        if t == m - 1:
            return None
        reduced = tuple(b - 1 if i == j else b for i, b in enumerate(budgets))
        left = budget_find(t + 1, 2 * p, reduced)
        if left is not None and left[0] != j:
            return left
        right = budget_find(t + 1, 2 * p + 1, reduced)
        if right is not None and right[0] != j:
            return right
        if left is None or right is None:
            return None
        return j, [(t, p)] + _merge_heaps(left[1], right[1])

    got = budget_find(0, 0, [target_depth - 1] * num_colors)
    if got is not None:
        depth = int(round(math.log2(len(got[1]) + 1)))
        if depth >= target_depth:
            tree = SkippingTree(target_depth, _truncate_heap(got[1], target_depth))
            if validate_skipping_tree(tree, colors, m)["ok"]:
                return tree
    return _exhaustive_skip(colors, m, target_depth)


def _merge_heaps(left, right):
    """Interleave two heap-ordered node lists as children of a shared root."""
    out = []
    dl = int(round(math.log2(len(left) + 1)))
    for lvl in range(dl):
        out.extend(left[2**lvl - 1 : 2 ** (lvl + 1) - 1])
        out.extend(right[2**lvl - 1 : 2 ** (lvl + 1) - 1])
    return out


def _truncate_heap(heap, depth):
    return heap[: 2**depth - 1]


def _exhaustive_skip(colors, m, target_depth):
    """Complete dynamic program over (node, color) for small hosts.

    best[node] is the depth of the deepest monochrome skipping tree rooted
    exactly at that node; deep[c][node] tracks, per color, the best root
    anywhere in the node's subtree.
    """
    if m > 16:
        raise BudgetError("exhaustive skipping-tree search limited to depth 16")
    palette = sorted({int(c) for c in colors})
    n_nodes = 2**m - 1
    best = np.zeros(n_nodes, dtype=np.int64)
    deep = {c: np.zeros(n_nodes, dtype=np.int64) for c in palette}
    deep_node = {c: [None] * n_nodes for c in palette}
    pick = {}

    for t in range(m - 1, -1, -1):
        for p in range(2**t):
            idx = 2**t - 1 + p
            c = int(colors[idx])
            if t == m - 1:
                best[idx] = 1
            else:
                li = 2 ** (t + 1) - 1 + 2 * p
                ri = li + 1
                dl, dr = deep[c][li], deep[c][ri]
                if dl > 0 and dr > 0:
                    best[idx] = 1 + min(dl, dr)
                    pick[(t, p)] = (deep_node[c][li], deep_node[c][ri])
                else:
                    best[idx] = 1
            for cc in palette:
                cand = [(best[idx], (t, p))] if cc == c else []
                if t < m - 1:
                    li = 2 ** (t + 1) - 1 + 2 * p
                    ri = li + 1
                    if deep[cc][li] > 0:
                        cand.append((deep[cc][li], deep_node[cc][li]))
                    if deep[cc][ri] > 0:
                        cand.append((deep[cc][ri], deep_node[cc][ri]))
                if cand:
                    d, node = max(cand)
                    deep[cc][idx] = d
                    deep_node[cc][idx] = node

    root_candidates = [
        (t, p) for t in range(m) for p in range(2**t) if best[2**t - 1 + p] >= target_depth
    ]
    if not root_candidates:
        return None
    root = min(root_candidates)

    def expand(pos, depth):
        if depth == 1:
            return [pos]
        nl, nr = pick[pos]
        left = expand(nl, depth - 1)
        right = expand(nr, depth - 1)
        return [pos] + _merge_heaps(left, right)

    tree = SkippingTree(target_depth, expand(root, target_depth))
    check = validate_skipping_tree(tree, colors, m)
    if not check["ok"]:
        raise AssertionError(f"skipping tree failed validation: {check}")
    return tree
