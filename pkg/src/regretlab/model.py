"""Core data model: paths, joint distributions as conditional trees, context trees,
expert classes, and the composition of a function class with a context tree.

Probabilities are stored in linear space; log space is used only inside the
log-sum-exp recursions of the minimax engine.  All containers are immutable
after construction (arrays are marked read-only) and safe to share across
threads.
"""

import itertools
import math

import numpy as np

from .errors import BudgetError, DomainError

MAX_HORIZON = 20


def num_prefixes(k, n):
    """Number of prefixes of length < n over a k-letter alphabet."""
    if k == 1:
        return n
    return (k**n - 1) // (k - 1)


def level_offset(k, t):
    """Index of the first prefix of length t in the dense prefix order."""
    return num_prefixes(k, t)


def prefix_index(prefix, k):
    """Canonical dense index of a prefix: level offset plus base-k rank.

    Bijective on paths of length <= n once n and k are fixed.
    """
    rank = 0
    for y in prefix:
        if not 0 <= y < k:
            raise DomainError(f"symbol {y} outside alphabet of size {k}")
        rank = rank * k + y
    return level_offset(k, len(prefix)) + rank


def path_rank(path, k):
    """Base-k rank of a full path (its row in lexicographic path order)."""
    rank = 0
    for y in path:
        if not 0 <= y < k:
            raise DomainError(f"symbol {y} outside alphabet of size {k}")
        rank = rank * k + y
    return rank


def iter_paths(n, k):
    """All length-n paths in lexicographic (rank) order."""
    return itertools.product(range(k), repeat=n)


def path_from_rank(rank, n, k):
    out = []
    for _ in range(n):
        out.append(rank % k)
        rank //= k
    return tuple(reversed(out))


def log_loss(p_hat, y):
    """Log loss of a binary forecast: -y*log(p_hat) - (1-y)*log(1-p_hat).

    Assigning probability 0 to the realized outcome costs +inf; arithmetic
    with the result is the usual monotone IEEE infinity.
    """
    if not 0.0 <= p_hat <= 1.0:
        raise DomainError(f"forecast {p_hat} outside [0, 1]")
    if y not in (0, 1):
        raise DomainError(f"binary outcome expected, got {y}")
    p = p_hat if y == 1 else 1.0 - p_hat
    if p == 0.0:
        return math.inf
    return -math.log(p)


class JointDistribution:
    """A joint distribution over ``alphabet**horizon`` sequences, stored as the
    complete tree of conditional probability vectors.

    ``cond[prefix_index(w), y]`` is the probability of outcome ``y`` after
    observing ``w``.  Every row sums to one.
    """

    def __init__(self, n, k, cond, validate=True):
        if n < 1 or n > MAX_HORIZON:
            raise DomainError(f"horizon {n} outside [1, {MAX_HORIZON}]")
        if k < 2:
            raise DomainError("alphabet must have at least two symbols")
        cond = np.ascontiguousarray(cond, dtype=float)
        if cond.shape != (num_prefixes(k, n), k):
            raise DomainError(
                f"conditional table has shape {cond.shape}, "
                f"expected {(num_prefixes(k, n), k)}"
            )
        if validate:
            if np.any(cond < 0.0) or np.any(cond > 1.0):
                raise DomainError("conditional probabilities outside [0, 1]")
            rows = cond.sum(axis=1)
            if np.max(np.abs(rows - 1.0)) > 1e-12:
                raise DomainError("a conditional vector does not sum to 1 (tol 1e-12)")
        cond.setflags(write=False)
        self.n = n
        self.k = k
        self.cond = cond

    @classmethod
    def from_fn(cls, n, k, fn):
        """Build from ``fn(prefix) -> probability vector over the alphabet``."""
        rows = np.empty((num_prefixes(k, n), k))
        for t in range(n):
            for prefix in itertools.product(range(k), repeat=t):
                rows[prefix_index(prefix, k)] = fn(prefix)
        return cls(n, k, rows)

    @classmethod
    def iid(cls, n, probs):
        """Product distribution with the same single-round marginal each round."""
        probs = np.asarray(probs, dtype=float)
        k = probs.shape[0]
        rows = np.tile(probs, (num_prefixes(k, n), 1))
        return cls(n, k, rows)

    @classmethod
    def bernoulli(cls, n, theta):
        """IID binary distribution with P(y=1) = theta."""
        return cls.iid(n, [1.0 - theta, theta])

    @classmethod
    def from_value_tree(cls, values):
        """Binary joint from a dense tree of P(y=1 | prefix) values.

        ``values`` has length 2**n - 1, indexed by ``prefix_index``.
        """
        values = np.asarray(values, dtype=float)
        n = int(round(math.log2(values.shape[0] + 1)))
        if 2**n - 1 != values.shape[0]:
            raise DomainError("value tree length must be 2**n - 1")
        return cls(n, 2, np.column_stack([1.0 - values, values]))

    def cond_vector(self, prefix):
        if len(prefix) >= self.n:
            raise DomainError(f"prefix of length {len(prefix)} at horizon {self.n}")
        return self.cond[prefix_index(prefix, self.k)]

    def conditional(self, prefix, y):
        """q_{t+1}(y | prefix) for a prefix of length t."""
        if not 0 <= y < self.k:
            raise DomainError(f"symbol {y} outside alphabet of size {self.k}")
        return float(self.cond_vector(prefix)[y])

    def joint_prob(self, path):
        """Probability of a full length-n path: the product of its conditionals."""
        if len(path) != self.n:
            raise DomainError(f"path of length {len(path)}, expected {self.n}")
        prob = 1.0
        for t in range(self.n):
            prob *= self.conditional(path[:t], path[t])
        return prob

    def prefix_probs(self, t):
        """Probabilities of all length-t prefixes, in rank order."""
        probs = np.ones(1)
        for s in range(t):
            off = level_offset(self.k, s)
            rows = self.cond[off : off + self.k**s]
            probs = (probs[:, None] * rows).reshape(-1)
        return probs

    def path_probs(self):
        """Probabilities of all k**n paths, in rank order."""
        if self.k**self.n > 4_200_000:
            raise BudgetError(f"k**n = {self.k**self.n} paths exceeds enumeration budget")
        return self.prefix_probs(self.n)

    def in_delta_n(self):
        """Whether every conditional is at least 1/(n^2 * k)."""
        return bool(np.min(self.cond) >= 1.0 / (self.n**2 * self.k) - 1e-15)

    def value_tree(self):
        """Binary only: the dense tree of P(y=1 | prefix) values."""
        if self.k != 2:
            raise DomainError("value trees are defined for the binary alphabet")
        return self.cond[:, 1]

    def __eq__(self, other):
        return (
            isinstance(other, JointDistribution)
            and self.n == other.n
            and self.k == other.k
            and np.array_equal(self.cond, other.cond)
        )

    def __hash__(self):
        return hash((self.n, self.k, self.cond.tobytes()))

    def __repr__(self):
        return f"JointDistribution(n={self.n}, k={self.k})"


class ContextTree:
    """Complete binary tree of depth n whose nodes carry context values.

    The context shown at round t on path y depends only on y_{1:t-1}; node
    (t, prefix) lives at dense index ``prefix_index(prefix, 2)``.
    """

    def __init__(self, n, values):
        if n < 1 or n > MAX_HORIZON:
            raise DomainError(f"depth {n} outside [1, {MAX_HORIZON}]")
        values = list(values)
        if len(values) != 2**n - 1:
            raise DomainError(f"need {2**n - 1} node values, got {len(values)}")
        self.n = n
        self.values = tuple(values)

    @classmethod
    def constant(cls, n, x0):
        return cls(n, [x0] * (2**n - 1))

    @classmethod
    def from_fn(cls, n, fn):
        """Build from ``fn(prefix) -> context``."""
        vals = [None] * (2**n - 1)
        for t in range(n):
            for prefix in itertools.product((0, 1), repeat=t):
                vals[prefix_index(prefix, 2)] = fn(prefix)
        return cls(n, vals)

    @classmethod
    def random(cls, n, contexts, rng):
        contexts = list(contexts)
        return cls(n, [contexts[rng.randrange(len(contexts))] for _ in range(2**n - 1)])

    def context(self, prefix):
        """x_{t+1}(prefix) for a prefix of length t."""
        if len(prefix) >= self.n:
            raise DomainError(f"prefix of length {len(prefix)} at depth {self.n}")
        return self.values[prefix_index(prefix, 2)]

    def node_contexts(self, path):
        """The n contexts visited along a full path."""
        return [self.context(path[:t]) for t in range(self.n)]

    def __repr__(self):
        return f"ContextTree(n={self.n})"


class Expert:
    """A binary-outcome expert: maps a context to the probability of outcome 1."""

    def __init__(self, fn, key=None, table=None):
        self._fn = fn
        self.key = key
        self.table = table

    @classmethod
    def from_table(cls, table, key=None):
        frozen = dict(table)
        return cls(lambda x: frozen[x], key=key, table=frozen)

    @classmethod
    def constant(cls, value, key=None):
        return cls(lambda x: value, key=key if key is not None else ("const", value))

    def __call__(self, x):
        v = self._fn(x)
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"expert value {v} outside [0, 1]")
        return v

    def __repr__(self):
        return f"Expert({self.key!r})" if self.key is not None else "Expert(<fn>)"


class ExpertClass:
    """Base for the three class kinds: finite-joint, finite-function, grid."""

    kind = None


class JointClass(ExpertClass):
    """A finite set of joint distributions sharing horizon and alphabet."""

    kind = "finite-joint"

    def __init__(self, members):
        members = list(members)
        if not members:
            raise DomainError("expert class must be nonempty")
        n, k = members[0].n, members[0].k
        for q in members:
            if (q.n, q.k) != (n, k):
                raise DomainError("members disagree on horizon or alphabet")
        self.members = tuple(members)
        self.n = n
        self.k = k

    def __len__(self):
        return len(self.members)

    def __repr__(self):
        return f"JointClass({len(self.members)} members, n={self.n}, k={self.k})"


class FunctionClass(ExpertClass):
    """A finite set of experts mapping contexts to [0, 1] (binary alphabet).

    ``contexts`` is the finite context set when there is one; classes over
    continuous context sets (for example the Hilbert ball grid) leave it None.
    """

    kind = "finite-function"

    def __init__(self, members, contexts=None, meta=None):
        members = list(members)
        if not members:
            raise DomainError("expert class must be nonempty")
        self.members = tuple(members)
        self.contexts = tuple(contexts) if contexts is not None else None
        self.meta = dict(meta) if meta else {}

    def __len__(self):
        return len(self.members)

    def values_at(self, x):
        return np.array([f(x) for f in self.members])

    def __repr__(self):
        return f"FunctionClass({len(self.members)} members)"


class BernoulliClass(ExpertClass):
    """IID Bernoulli family: either a finite theta grid or the full interval.

    With ``thetas=None`` the class is the continuous family theta in [0, 1];
    per-path suprema then have the closed plug-in form and are exact.  With a
    finite grid, suprema are grid maxima and the grid step is reported, never
    the true sup.
    """

    kind = "grid"
    family = "bernoulli-iid"

    def __init__(self, n, thetas=None):
        if n < 1 or n > MAX_HORIZON:
            raise DomainError(f"horizon {n} outside [1, {MAX_HORIZON}]")
        self.n = n
        self.k = 2
        if thetas is None:
            self.thetas = None
            self.grid_step = 0.0
        else:
            thetas = sorted(float(t) for t in thetas)
            if not thetas:
                raise DomainError("empty theta grid")
            for t in thetas:
                if not 0.0 <= t <= 1.0:
                    raise DomainError(f"theta {t} outside [0, 1]")
            self.thetas = tuple(thetas)
            self.grid_step = max(
                (b - a for a, b in zip(thetas, thetas[1:])), default=0.0
            )

    def count_sup(self, c):
        """sup over the family of theta^c (1-theta)^(n-c) for a path with c ones."""
        n = self.n
        if self.thetas is None:
            if c == 0 or c == n:
                return 1.0
            return (c / n) ** c * ((n - c) / n) ** (n - c)
        return max(th**c * (1.0 - th) ** (n - c) for th in self.thetas)

    def materialize(self):
        if self.thetas is None:
            raise DomainError("continuous Bernoulli family has no finite member list")
        return JointClass([JointDistribution.bernoulli(self.n, t) for t in self.thetas])

    def __repr__(self):
        grid = "continuous" if self.thetas is None else f"{len(self.thetas)} thetas"
        return f"BernoulliClass(n={self.n}, {grid})"


def compose_class_with_tree(F, x):
    """Compose a binary function class with a context tree: one joint per expert,
    with P(y_t = 1 | y_{1:t-1}) = f(x_t(y)).  Identical joints are deduplicated.
    """
    if not isinstance(F, FunctionClass):
        raise DomainError("composition needs a finite-function class")
    joints = []
    seen = set()
    for f in F.members:
        values = np.array([f(v) for v in x.values])
        key = values.tobytes()
        if key in seen:
            continue
        seen.add(key)
        joints.append(JointDistribution.from_value_tree(values))
    return JointClass(joints)


class GameTranscript:
    """Per-round record of one play of the prediction game."""

    def __init__(self, xs, forecasts, ys):
        xs, forecasts, ys = list(xs), list(forecasts), list(ys)
        if not len(xs) == len(forecasts) == len(ys):
            raise DomainError("transcript fields must have equal length")
        self.xs = tuple(xs)
        self.forecasts = tuple(float(p) for p in forecasts)
        self.ys = tuple(int(y) for y in ys)
        self.losses = tuple(log_loss(p, y) for p, y in zip(self.forecasts, self.ys))

    def __len__(self):
        return len(self.ys)

    def total_loss(self):
        return sum(self.losses)


def best_expert_loss(F, xs, ys):
    """Cumulative log loss of the best expert in the class on (xs, ys)."""
    if isinstance(F, BernoulliClass):
        F = F.materialize()
    if isinstance(F, FunctionClass):
        best = math.inf
        for f in F.members:
            best = min(best, sum(log_loss(f(x), y) for x, y in zip(xs, ys)))
        return best
    if isinstance(F, JointClass):
        best = math.inf
        for q in F.members:
            loss = 0.0
            for t, y in enumerate(ys):
                p1 = q.conditional(tuple(ys[:t]), 1)
                loss += log_loss(p1, y)
            best = min(best, loss)
        return best
    raise DomainError(f"unsupported class kind {F.kind!r}")


def empirical_regret(transcript, F, xs=None, ys=None):
    """Realized regret of a transcript against the best expert in the class.

    The infimum over the class is taken by enumeration (grids are enumerated
    at their declared resolution).
    """
    if xs is None:
        xs = transcript.xs
    if ys is None:
        ys = transcript.ys
    if not (len(xs) == len(ys) == len(transcript)):
        raise DomainError("transcript and paths have inconsistent lengths")
    return transcript.total_loss() - best_expert_loss(F, xs, ys)
