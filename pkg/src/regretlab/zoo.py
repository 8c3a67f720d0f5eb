"""Concrete expert classes used across the lab: iid Bernoulli families,
one-dimensional Lipschitz lattice functions, renewal processes via hazard
rates, and finite-dimensional linear-ball surrogates with the shrink map.
"""

import itertools
import math

import numpy as np

from .covers import entropy_profile
from .errors import BudgetError, DomainError
from .model import (
    BernoulliClass,
    ContextTree,
    Expert,
    FunctionClass,
    JointClass,
    JointDistribution,
    compose_class_with_tree,
    iter_paths,
)


def bernoulli_iid_class(theta_grid, n):
    """IID Bernoulli family; theta_grid=None means the full [0, 1] interval."""
    return BernoulliClass(n, theta_grid)


def lipschitz_class(grid_res):
    """All 1-Lipschitz lattice paths on the [0, 1] grid of the given resolution.

    Contexts are i/m for i <= m; member values move by at most one grid step
    between adjacent contexts, the standard finite surrogate of the
    1-Lipschitz class.
    """
    m = int(grid_res)
    if m < 1:
        raise DomainError("grid resolution must be at least 1")
    if (m + 1) * 3**m > 200_000:
        raise BudgetError("Lipschitz lattice enumeration too large")
    contexts = [i / m for i in range(m + 1)]
    members = []
    for start in range(m + 1):
        for steps in itertools.product((-1, 0, 1), repeat=m):
            level = start
            levels = [start]
            ok = True
            for s in steps:
                level += s
                if not 0 <= level <= m:
                    ok = False
                    break
                levels.append(level)
            if ok:
                members.append(
                    Expert.from_table(
                        {contexts[i]: levels[i] / m for i in range(m + 1)},
                        key=("lip", start) + steps,
                    )
                )
    return FunctionClass(members, contexts=contexts, meta={"grid_res": m})


def hazards_from_interarrival(p_masses, n):
    """Hazard rates from the first n inter-arrival masses.

    h(i) = p(i) / P(T >= i); mass not placed on 1..n is an implicit tail
    (no arrival inside the horizon), which keeps geometric hazards exact.
    Unreachable gaps (survival zero) get hazard one.
    """
    p = [float(v) for v in p_masses]
    if len(p) < n:
        p = p + [0.0] * (n - len(p))
    if any(v < 0 for v in p) or sum(p) > 1.0 + 1e-12:
        raise DomainError("inter-arrival masses must be nonnegative with total <= 1")
    hazards = []
    survival = 1.0
    for i in range(n):
        if survival <= 1e-15:
            hazards.append(1.0)
            continue
        h = p[i] / survival
        hazards.append(min(max(h, 0.0), 1.0))
        survival -= p[i]
    return hazards


def renewal_joint_from_hazards(hazards, n):
    """Joint over binary sequences: y_t = 1 with probability hazard(gap), where
    the gap is the time since the last 1 (or since the start)."""
    hazards = [float(h) for h in hazards]
    if len(hazards) != n:
        raise DomainError(f"need {n} hazard values")
    if any(not 0.0 <= h <= 1.0 for h in hazards):
        raise DomainError("hazards must lie in [0, 1]")

    def fn(prefix):
        gap = len(prefix)
        for back, y in enumerate(reversed(prefix)):
            if y == 1:
                gap = back
                break
        h = hazards[gap]
        return [1.0 - h, h]

    return JointDistribution.from_fn(n, 2, fn)


def renewal_generative_prob(p_masses, n, path):
    """Probability of a binary path under the generative renewal definition:
    ones sit at cumulative iid inter-arrival times, tail mass beyond the
    horizon counts as survival."""
    p = [float(v) for v in p_masses]
    if len(p) < n:
        p = p + [0.0] * (n - len(p))
    prob = 1.0
    last = 0
    for t, y in enumerate(path, start=1):
        if y == 1:
            gap = t - last
            prob *= p[gap - 1]
            last = t
    gap_left = n - last
    # no arrival in the remaining gap_left rounds
    prob *= max(0.0, 1.0 - sum(p[:gap_left]))
    return prob


class RenewalClass(JointClass):
    """Finite renewal family materialized through hazard conditionals."""

    def __init__(self, p_grid, n):
        p_grid = [list(map(float, p)) for p in p_grid]
        if not p_grid:
            raise DomainError("empty inter-arrival grid")
        members = [
            renewal_joint_from_hazards(hazards_from_interarrival(p, n), n) for p in p_grid
        ]
        super().__init__(members)
        self.p_grid = p_grid


def renewal_class(p_grid, n):
    return RenewalClass(p_grid, n)


def geometric_interarrival(hazard, n):
    """First n masses of the geometric inter-arrival law with the given hazard."""
    return [hazard * (1.0 - hazard) ** (i - 1) for i in range(1, n + 1)]


class HilbertBallClass(FunctionClass):
    """Linear experts f(x) = (1 + <w, x>) / 2 on a lattice of weights inside
    the radius-r ball; contexts are arbitrary vectors of norm at most one."""

    def __init__(self, dim, radius, weight_step, weights=None):
        if dim < 1 or dim > 3:
            raise DomainError("weight dimension limited to 1..3")
        if not 0.0 < radius <= 1.0:
            raise DomainError("radius must lie in (0, 1]")
        if weights is None:
            axis = np.arange(-1.0, 1.0 + 1e-9, weight_step)
            pts = np.array(list(itertools.product(axis, repeat=dim)))
            weights = pts[np.linalg.norm(pts, axis=1) <= radius + 1e-12]
        weights = np.asarray(weights, dtype=float)
        members = [
            Expert(
                (lambda w: (lambda x: 0.5 * (1.0 + float(np.dot(w, x)))))(w),
                key=("w",) + tuple(np.round(w, 12)),
            )
            for w in weights
        ]
        super().__init__(members, contexts=None, meta={"surrogate": f"dim<={dim} grid"})
        self.dim = dim
        self.radius = radius
        self.weight_step = weight_step
        self.weights = weights

    def value_matrix(self, contexts):
        X = np.asarray(contexts, dtype=float)
        return 0.5 * (1.0 + self.weights @ X.T)


def hilbert_ball_class(dim, radius=1.0, weight_step=0.25):
    return HilbertBallClass(dim, radius, weight_step)


def hilbert_shrink(F, n):
    """Radius 1 - 1/n copy of a weight-grid ball class (grid rescaled)."""
    if n < 2:
        raise DomainError("shrink needs horizon at least 2")
    factor = 1.0 - 1.0 / n
    return HilbertBallClass(
        F.dim, F.radius * factor, F.weight_step * factor, weights=F.weights * factor
    )


def random_unit_ball_tree(dim, depth, rng):
    vals = []
    for _ in range(2**depth - 1):
        v = rng.standard_normal(dim)
        v *= rng.random() ** (1.0 / dim) / np.linalg.norm(v)
        vals.append(tuple(v))
    return ContextTree(depth, vals)


def per_round_shrink_inequality(n, grid=1000):
    """Single-round core of the shrink comparison on an inner-product grid:
    log((1+a)/2) <= log((1+(1-1/n)a)/2) + 1/(n-1).  Returns the min slack."""
    a = np.linspace(-1.0 + 1e-9, 1.0 - 1e-9, grid)
    lhs = np.log((1.0 + a) / 2.0)
    rhs = np.log((1.0 + (1.0 - 1.0 / n) * a) / 2.0) + 1.0 / (n - 1)
    return float(np.min(rhs - lhs))


def check_hilbert_truncation(F, n, draws=1000, seed=0):
    """Grid-sup comparison of the full and shrunken ball on random trees/paths.

    For each draw: sup over the weight grid of the cumulative log probability
    along a random (tree, path) must not beat the shrunken grid's sup by more
    than 2.  Returns min slack over draws (slack >= 0 means the comparison
    holds with the +2 margin).
    """
    shrunk = hilbert_shrink(F, n)
    rng = np.random.default_rng(seed)
    min_slack = math.inf
    for _ in range(draws):
        # contexts along one root-to-leaf path (the rest of the tree is
        # irrelevant to a pathwise check)
        X = rng.standard_normal((n, F.dim))
        X *= (rng.random(n) ** (1.0 / F.dim) / np.linalg.norm(X, axis=1))[:, None]
        y = rng.integers(0, 2, n)
        sign = np.where(y == 1, 1.0, -1.0)
        full_vals = 0.5 * (1.0 + F.weights @ (X * sign[:, None]).T)
        shr_vals = 0.5 * (1.0 + shrunk.weights @ (X * sign[:, None]).T)
        with np.errstate(divide="ignore"):
            lhs = float(np.max(np.sum(np.log(full_vals), axis=1)))
            rhs = float(np.max(np.sum(np.log(shr_vals), axis=1)))
        slack = rhs + 2.0 - lhs
        min_slack = min(min_slack, slack)
    return {"n": n, "draws": draws, "min_slack": min_slack, "ok": min_slack >= 0.0}


def hilbert_entropy_scan(F_shrunk, scales, depth, seed=0):
    """Greedy proper-cover entropy profile of the shrunken ball on a random
    tree, with the fitted growth slope against 1/alpha (report-only)."""
    rng = np.random.default_rng(seed)
    x = random_unit_ball_tree(F_shrunk.dim, depth, rng)
    Q = compose_class_with_tree(F_shrunk, x)
    prof = entropy_profile(Q, scales, notion="sqrt", exact=False)
    return {
        "profile": prof,
        "slope_vs_inverse_scale": prof.slope_loglog(),
        "tree_depth": depth,
        "members": len(Q.members),
    }
