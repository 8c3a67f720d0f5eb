"""The zeta transform linking log loss to square-root geometry, circle-dot
coupled sampling, exact symmetrization checks, finite-class offset lemmas,
and the two-scale chaining bound calculator.
"""

import itertools
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import BudgetError, DomainError
from .model import BernoulliClass, JointClass, iter_paths, prefix_index

DEFAULT_MC_SAMPLES = 100_000


def zeta(x):
    """2(sqrt(x) - 1) below one, 2 log((x+1)/2) above; continuous at one."""
    if x <= 0.0:
        raise DomainError(f"zeta domain is positive reals, got {x}")
    if x <= 1.0:
        return 2.0 * (math.sqrt(x) - 1.0)
    return 2.0 * math.log((x + 1.0) / 2.0)


def zeta_vec(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise DomainError("zeta domain is positive reals")
    return np.where(x <= 1.0, 2.0 * (np.sqrt(x) - 1.0), 2.0 * np.log((x + 1.0) / 2.0))


class ZetaParams:
    """Horizon and alphabet size fixing the offset coefficient and ratio range."""

    def __init__(self, n, alphabet=2):
        if n < 7:
            raise DomainError("zeta property checks require n >= 7")
        if alphabet < 2:
            raise DomainError("alphabet must have at least two symbols")
        self.n = n
        self.alphabet = alphabet

    @property
    def coefficient(self):
        return 1.0 / (4.0 * math.log(self.n * self.alphabet))

    @property
    def range_bound(self):
        return float(self.n) ** 2 * self.alphabet


def log_transform_slack(params, grid_points=10_000, coefficient=None):
    """Min over a log grid of zeta(x) - c*zeta(x)^2 - log(x) on (0, n^2 |Y|].

    Negative values witness a failure of the transform inequality at the
    given coefficient on the scanned range.
    """
    c = params.coefficient if coefficient is None else coefficient
    xs = np.geomspace(1e-12, params.range_bound, grid_points)
    if not np.any(np.isclose(xs, 1.0)):
        xs = np.sort(np.append(xs, 1.0))
    zs = zeta_vec(xs)
    slack = zs - c * zs**2 - np.log(xs)
    i = int(np.argmin(slack))
    return {"min_slack": float(slack[i]), "argmin_x": float(xs[i]), "coefficient": c}


def divergence_nonnegativity(params, grid=50):
    """Exact E_{y~p}[-zeta(f/p) - c zeta(f/p)^2] minimized over binary (f, p) grids."""
    c = params.coefficient
    vals = np.linspace(0.0, 1.0, grid + 2)[1:-1]
    worst = math.inf
    argmin = None
    for a in vals:  # f = (1-a, a)
        for b in vals:  # p = (1-b, b)
            e = 0.0
            for f_y, p_y in ((1 - a, 1 - b), (a, b)):
                r = f_y / p_y
                z = zeta(r)
                e += p_y * (-z - c * z * z)
            if e < worst:
                worst, argmin = e, (float(a), float(b))
    return {"min_expectation": worst, "argmin": argmin, "coefficient": c}


def divergence_nonnegativity_general(params, dists):
    """Same check for explicit pairs of distributions over a small alphabet."""
    c = params.coefficient
    worst = math.inf
    for f, p in dists:
        f, p = np.asarray(f, float), np.asarray(p, float)
        e = 0.0
        for f_y, p_y in zip(f, p):
            if p_y == 0.0:
                continue
            z = zeta(f_y / p_y)
            e += p_y * (-z - c * z * z)
        worst = min(worst, e)
    return {"min_expectation": worst, "coefficient": c}


def sqrt_lipschitz_violation(pairs):
    """Max of |zeta(a)-zeta(b)| - 2|sqrt(a)-sqrt(b)| over the given pairs."""
    worst = -math.inf
    for a, b in pairs:
        v = abs(zeta(a) - zeta(b)) - 2.0 * abs(math.sqrt(a) - math.sqrt(b))
        worst = max(worst, v)
    return worst


def check_zeta_properties(params, grid_points=10_000, pair_count=10_000, seed=0):
    """Report on the three zeta properties at desk scale.

    Report-only: callers (tests, verify-all) decide what to assert.  The
    transform slack is also evaluated at a quarter of the coefficient, which
    is the largest provable constant for the upper range.
    """
    rng = np.random.default_rng(seed)
    pairs = np.exp(rng.uniform(math.log(1e-6), math.log(params.range_bound), (pair_count, 2)))
    report = {
        "n": params.n,
        "alphabet": params.alphabet,
        "log_transform": log_transform_slack(params, grid_points),
        "log_transform_quarter_coeff": log_transform_slack(
            params, grid_points, coefficient=params.coefficient / 4.0
        ),
        "divergence": divergence_nonnegativity(params),
        "lipschitz_violation": sqrt_lipschitz_violation(pairs),
    }
    report["ok"] = (
        report["log_transform"]["min_slack"] >= -1e-12
        and report["divergence"]["min_expectation"] >= -1e-12
        and report["lipschitz_violation"] <= 1e-12
    )
    return report


class CircleDotSample:
    """One draw of the coupled (eps, w, y, z) scheme driven by a joint p.

    Selectors eps pick which of the two conditionally iid draws enters the
    history: w_t = y_t when eps_t = +1 and w_t = z_t when eps_t = -1.
    """

    def __init__(self, eps, w, y, z, seed):
        self.eps = tuple(eps)
        self.w = tuple(w)
        self.y = tuple(y)
        self.z = tuple(z)
        self.seed = seed

    def anti_selected(self):
        """The sequence the selectors rejected: z where eps=+1, y where eps=-1."""
        return tuple(z if e == 1 else y for e, y, z in zip(self.eps, self.y, self.z))


def sample_circle_dot(p, seed):
    eps, w, y, z = _circle_dot_batch(p, 1, seed)
    return CircleDotSample(eps[0], w[0], y[0], z[0], seed)


def _circle_dot_batch(p, size, seed):
    rng = np.random.default_rng(seed)
    n, k = p.n, p.k
    eps = rng.integers(0, 2, size=(size, n)) * 2 - 1
    w = np.zeros((size, n), dtype=np.int64)
    y = np.zeros((size, n), dtype=np.int64)
    z = np.zeros((size, n), dtype=np.int64)
    prefix_rank = np.zeros(size, dtype=np.int64)
    from .model import level_offset

    for t in range(n):
        rows = p.cond[level_offset(k, t) + prefix_rank]
        cdf = np.cumsum(rows, axis=1)
        y[:, t] = np.argmax(rng.random((size, 1)) < cdf, axis=1)
        z[:, t] = np.argmax(rng.random((size, 1)) < cdf, axis=1)
        w[:, t] = np.where(eps[:, t] == 1, y[:, t], z[:, t])
        prefix_rank = prefix_rank * k + w[:, t]
    return eps, w, y, z


def sample_circle_dot_batch(p, size, seed, chunk=20_000, threads=1):
    """Batch sampling with per-chunk derived seeds and fixed reduction order.

    The result is identical for any thread count: chunk c always uses seed
    (seed, c) and chunks are concatenated in index order.
    """
    chunks = [(c, min(chunk, size - c * chunk)) for c in range((size + chunk - 1) // chunk)]

    def run(arg):
        c, m = arg
        return _circle_dot_batch(p, m, (seed, c))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(a) for a in chunks]
    return tuple(np.concatenate([pt[i] for pt in parts]) for i in range(4))


def _require_delta_n(q, n, k, label):
    floor = 1.0 / (n * n * k)
    if np.min(q.cond) < floor - 1e-15:
        raise DomainError(f"{label} is not in the admissible set (conditional below 1/(n^2 |Y|))")


def symmetrization_check(Q, p, coefficient=None):
    """Exact two-sided evaluation of the symmetrized offset upper bound.

    LHS is E_{y~p} sup_q log(q(y)/p(y)); RHS is the pair of offset selector
    expectations, both computed by full atom enumeration (no sampling).
    """
    if isinstance(Q, BernoulliClass):
        Q = Q.materialize()
    if not isinstance(Q, JointClass):
        raise DomainError("symmetrization check needs a finite-joint class")
    n, k = Q.n, Q.k
    if (p.n, p.k) != (n, k):
        raise DomainError("distribution shape mismatch")
    if (2 * k * k) ** n > 40_000:
        raise BudgetError("atom enumeration exceeds the symmetrization budget")
    _require_delta_n(p, n, k, "p")
    for i, q in enumerate(Q.members):
        _require_delta_n(q, n, k, f"class member {i}")
    c = 1.0 / (4.0 * math.log(n * k)) if coefficient is None else coefficient

    members = Q.members
    lhs = 0.0
    for path in iter_paths(n, k):
        pp = p.joint_prob(path)
        lhs += pp * max(math.log(q.joint_prob(path) / pp) for q in members)

    term_y = 0.0
    term_z = 0.0

    def rec(t, w_prefix, prob, acc_y, acc_z):
        nonlocal term_y, term_z
        if t == n:
            term_y += prob * max(acc_y)
            term_z += prob * max(acc_z)
            return
        pv = p.cond_vector(w_prefix)
        q_rows = [q.cond_vector(w_prefix) for q in members]
        for e in (1, -1):
            for yt in range(k):
                zy = [zeta(row[yt] / pv[yt]) for row in q_rows]
                for zt in range(k):
                    zz = [zeta(row[zt] / pv[zt]) for row in q_rows]
                    wt = yt if e == 1 else zt
                    pr = prob * 0.5 * pv[yt] * pv[zt]
                    ay = [a + e * vy - c * vy * vy for a, vy in zip(acc_y, zy)]
                    az = [a - e * vz - c * vz * vz for a, vz in zip(acc_z, zz)]
                    rec(t + 1, w_prefix + (wt,), pr, ay, az)

    rec(0, (), 1.0, [0.0] * len(members), [0.0] * len(members))
    rhs = term_y + term_z
    return {
        "lhs": lhs,
        "rhs": rhs,
        "term_y": term_y,
        "term_z": term_z,
        "slack": rhs - lhs,
        "coefficient": c,
        "ok": lhs <= rhs + 1e-12,
    }


def _coefficient_paths(n):
    """Node indices visited at each round for every sign path, bits 0/1."""
    mat = np.zeros((2**n, n), dtype=np.int64)
    for r, path in enumerate(iter_paths(n, 2)):
        for t in range(n):
            mat[r, t] = prefix_index(path[:t], 2)
    return mat


def finite_class_offset(A, lam, n=None, mode="exact", samples=DEFAULT_MC_SAMPLES, seed=0, threads=1):
    """Offset and plain suprema of a finite family of predictable coefficients.

    Each member of A is a dense tree of per-round coefficients indexed by the
    sign history (length 2**n - 1).  Exact mode enumerates all sign paths;
    MC mode reports means with a 3-sigma half-width.
    """
    if lam <= 0.0:
        raise DomainError("offset parameter must be positive")
    A = [np.asarray(a, dtype=float) for a in A]
    if not A:
        raise DomainError("empty coefficient family")
    if n is None:
        n = int(round(math.log2(A[0].shape[0] + 1)))
    for a in A:
        if a.shape != (2**n - 1,):
            raise DomainError("coefficient trees must have length 2**n - 1")
    if mode == "exact" and n > 14:
        raise BudgetError("exact sign-path enumeration limited to n <= 14")

    stack = np.stack(A)  # (|A|, nodes)

    def stats_for(eps):
        # eps: (m, n) array of +-1 signs
        bits = (eps + 1) // 2
        m = eps.shape[0]
        ranks = np.zeros(m, dtype=np.int64)
        idx = np.zeros((m, n), dtype=np.int64)
        from .model import level_offset

        for t in range(n):
            idx[:, t] = level_offset(2, t) + ranks
            ranks = ranks * 2 + bits[:, t]
        coeffs = stack[:, idx]  # (|A|, m, n)
        lin = np.einsum("amt,mt->am", coeffs, eps.astype(float))
        sq = np.sum(coeffs**2, axis=2)  # (|A|, m)
        offset_sup = np.max(lin - lam * sq, axis=0)
        plain_sup = np.max(lin, axis=0)
        sq_sup = np.max(sq, axis=0)
        return offset_sup, plain_sup, sq_sup

    if mode == "exact":
        eps = np.array(list(iter_paths(n, 2))) * 2 - 1
        offset_sup, plain_sup, sq_sup = stats_for(eps)
        offset_mean = float(np.mean(offset_sup))
        plain_mean = float(np.mean(plain_sup))
        sq_mean = float(np.mean(sq_sup))
        ci = 0.0
    elif mode == "mc":
        chunk = 20_000
        chunks = [(c, min(chunk, samples - c * chunk)) for c in range((samples + chunk - 1) // chunk)]

        def run(arg):
            c, m = arg
            rng = np.random.default_rng((seed, c))
            eps = rng.integers(0, 2, size=(m, n)) * 2 - 1
            return stats_for(eps)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                parts = list(ex.map(run, chunks))
        else:
            parts = [run(a) for a in chunks]
        offset_all = np.concatenate([pt[0] for pt in parts])
        plain_all = np.concatenate([pt[1] for pt in parts])
        sq_all = np.concatenate([pt[2] for pt in parts])
        offset_mean = float(np.mean(offset_all))
        plain_mean = float(np.mean(plain_all))
        sq_mean = float(np.mean(sq_all))
        ci = float(3.0 * np.std(offset_all, ddof=1) / math.sqrt(len(offset_all)))
    else:
        raise DomainError(f"unknown mode {mode!r}")

    offset_bound = math.log(len(A)) / (2.0 * lam)
    plain_bound = math.sqrt(2.0 * math.log(len(A))) * math.sqrt(max(sq_mean, 0.0))
    return {
        "size": len(A),
        "n": n,
        "lam": lam,
        "mode": mode,
        "offset_value": offset_mean,
        "offset_bound": offset_bound,
        "offset_ci3": ci,
        "plain_value": plain_mean,
        "plain_bound": plain_bound,
        "sq_sup_mean": sq_mean,
        "offset_ok": offset_mean <= offset_bound + ci + 1e-12,
        "plain_ok": plain_mean <= plain_bound + ci + 1e-12,
    }


class BoundInputs:
    """Inputs for the two-scale entropy bound: a profile, horizon, alphabet,
    and the (delta, gamma) search grid."""

    def __init__(
        self,
        n,
        alphabet=2,
        power=None,
        coef=1.0,
        table=None,
        variant="general",
        levels_per_octave=8,
        alpha_min=None,
        alpha_max=1.0,
    ):
        if n < 1:
            raise DomainError("horizon must be positive")
        if (power is None) == (table is None):
            raise DomainError("provide exactly one of power or table profile")
        if variant not in ("general", "binary"):
            raise DomainError("variant must be 'general' or 'binary'")
        self.n = n
        self.alphabet = alphabet
        self.power = power
        self.coef = coef
        if table is not None:
            alphas, ents = table
            alphas = np.asarray(alphas, float)
            ents = np.asarray(ents, float)
            if np.any(np.diff(alphas) <= 0):
                raise DomainError("table scales must be strictly increasing")
            if np.any(ents < 0) or np.any(np.diff(ents) > 1e-12):
                raise DomainError("table entropies must be nonnegative and nonincreasing")
            self.table = (alphas, ents)
        else:
            self.table = None
        self.variant = variant
        self.levels_per_octave = levels_per_octave
        self.alpha_min = alpha_min if alpha_min is not None else min(1.0 / n**2, 2.0**-10)
        self.alpha_max = alpha_max

    def entropy(self, alphas):
        alphas = np.asarray(alphas, float)
        if self.power is not None:
            return self.coef * alphas ** (-self.power)
        ta, te = self.table
        # step interpolation from the next smaller tabulated scale (entropy is
        # nonincreasing, so this is the conservative side); flat extrapolation
        idx = np.searchsorted(ta, alphas, side="right") - 1
        idx = np.clip(idx, 0, len(ta) - 1)
        return te[idx]


def chaining_bound(inputs):
    """1 + inf over (delta, gamma) of the three-term two-scale bound.

    n*delta*sqrt(|Y|) + sqrt(n |Y|) * integral_delta^gamma sqrt(H) + H(gamma)
    for the general alphabet variant; the binary variant drops the sqrt(|Y|)
    factors.  The Dudley integral is a trapezoid on a dyadically refined
    geometric grid; the refinement error is reported.
    """
    n, k = inputs.n, inputs.alphabet
    octaves = math.log2(inputs.alpha_max / inputs.alpha_min)
    fine_ppo = 64
    m_fine = int(octaves * fine_ppo) + 1
    alphas = np.geomspace(inputs.alpha_min, inputs.alpha_max, m_fine)
    g = np.sqrt(inputs.entropy(alphas))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(alphas))])
    coarse = cum[::2]
    g2 = g[::2]
    a2 = alphas[::2]
    cum2 = np.concatenate([[0.0], np.cumsum(0.5 * (g2[1:] + g2[:-1]) * np.diff(a2))])
    integral_err = float(abs(cum[-1] - cum2[-1]))

    stride = max(1, fine_ppo // inputs.levels_per_octave)
    grid_idx = np.arange(0, m_fine, stride)
    if grid_idx[-1] != m_fine - 1:
        grid_idx = np.append(grid_idx, m_fine - 1)
    ga = alphas[grid_idx]
    gcum = cum[grid_idx]
    H_gamma = inputs.entropy(ga)

    sqrt_k = math.sqrt(k) if inputs.variant == "general" else 1.0
    root_nk = math.sqrt(n * k) if inputs.variant == "general" else math.sqrt(n)

    delta_term = n * ga * sqrt_k  # (d,)
    integral = gcum[None, :] - gcum[:, None]  # (d, g)
    total = delta_term[:, None] + root_nk * integral + H_gamma[None, :]
    total = np.where(integral < 0, np.inf, total)  # enforce gamma > delta
    i, j = np.unravel_index(int(np.argmin(total)), total.shape)
    return {
        "value": 1.0 + float(total[i, j]),
        "delta": float(ga[i]),
        "gamma": float(ga[j]),
        "integral_error": integral_err,
    }


def rate_exponent(p):
    """Regret growth exponent implied by an alpha^{-p} entropy profile."""
    if p < 0:
        raise DomainError("profile exponent must be nonnegative")
    if p <= 2:
        return p / (p + 2.0)
    return (p - 1.0) / p


def rate_slope(p, n_exponents=range(10, 21), alphabet=2, variant="binary", coef=1.0):
    """Fitted log-log slope of the chaining bound across a horizon sweep."""
    ns = [2**e for e in n_exponents]
    vals = []
    for n in ns:
        b = chaining_bound(
            BoundInputs(n, alphabet=alphabet, power=p, coef=coef, variant=variant)
        )
        vals.append(b["value"])
    slope = float(np.polyfit(np.log(ns), np.log(vals), 1)[0])
    return {"slope": slope, "values": vals, "ns": ns}
