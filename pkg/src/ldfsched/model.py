"""Priority decisions, payoff models, and structural property checkers.

A *priority decision* is a permutation of user indices ``0..n-1``: position
``m`` holds the user with the ``(m+1)``-th highest priority.  Payoff models
describe the random per-period QoS payoff vector earned under each decision;
expected-payoff tables are either computed exactly or estimated by Monte
Carlo.  The property checkers decide monotonicity in individual expected
payoff, subset payoff equivalence, and exchangeability, returning re-checkable
witnesses or certificates.

All types are immutable values after construction and safe to share across
threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Number
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from ldfsched.errors import CapacityError, EstimationModeError
from ldfsched.rngstreams import substream

Decision = tuple[int, ...]

#: Enumeration cap: 8! = 40320 decisions is the largest table we will build.
DECISION_CAP = 8

#: Absolute tolerance for float comparisons; exact (rational) inputs compare exactly.
TOL = 1e-9

__all__ = [
    "Decision",
    "DECISION_CAP",
    "TOL",
    "enumerate_decisions",
    "decisions_with_prefix",
    "promote_subset",
    "users_ranked_above",
    "validate_decision",
    "is_rational",
    "Deterministic",
    "Exponential",
    "Gamma",
    "TablePayoffModel",
    "SingleResourceModel",
    "Estimation",
    "ExpectedPayoffTable",
    "expected_payoffs",
    "sample_payoffs",
    "PropertyVerdict",
    "MonotonicityWitness",
    "EquivalenceWitness",
    "ExchangeWitness",
    "check_monotonicity",
    "check_subset_payoff_equivalence",
    "check_exchangeable",
    "top_priority_wins_model",
]


# ---------------------------------------------------------------------------
# Decisions
# ---------------------------------------------------------------------------

def validate_decision(d: Sequence[int], n: int) -> Decision:
    """Return ``d`` as a tuple after checking it is a permutation of 0..n-1."""
    d = tuple(int(u) for u in d)
    if sorted(d) != list(range(n)):
        raise ValueError(f"decision {d} is not a permutation of 0..{n - 1}")
    return d


def enumerate_decisions(n: int, cap: int = DECISION_CAP) -> list[Decision]:
    """All n! priority decisions in lexicographic order."""
    if n < 1:
        raise ValueError(f"user count must be >= 1, got {n}")
    if n > cap:
        raise CapacityError(
            f"enumerating decisions for n={n} users exceeds the cap of {cap} "
            f"({math.factorial(cap)} decisions)"
        )
    return list(itertools.permutations(range(n)))


def decisions_with_prefix(members: Iterable[int], n: int, cap: int = DECISION_CAP) -> list[Decision]:
    """Decisions whose first ``|S|`` slots are a permutation of the subset ``S``.

    The result has ``|S|! * (n-|S|)!`` entries and is ordered lexicographically,
    matching a prefix-set filter of :func:`enumerate_decisions`.
    """
    subset = frozenset(int(u) for u in members)
    if any(u < 0 or u >= n for u in subset):
        raise ValueError(f"subset {sorted(subset)} contains user indices outside 0..{n - 1}")
    if n > cap:
        raise CapacityError(
            f"enumerating prefixed decisions for n={n} users exceeds the cap of {cap}"
        )
    rest = sorted(set(range(n)) - subset)
    out = []
    for head in itertools.permutations(sorted(subset)):
        for tail in itertools.permutations(rest):
            out.append(head + tail)
    return out


def promote_subset(d: Sequence[int], members: Iterable[int]) -> Decision:
    """Move the members of ``S`` to the front of ``d``, preserving relative order.

    The result assigns the highest ``|S|`` priorities to ``S``; relative order
    is preserved both inside and outside ``S``.  Applying the operation twice
    is idempotent.
    """
    n = len(d)
    d = validate_decision(d, n)
    subset = frozenset(int(u) for u in members)
    if any(u < 0 or u >= n for u in subset):
        raise ValueError(f"subset {sorted(subset)} contains user indices outside 0..{n - 1}")
    head = tuple(u for u in d if u in subset)
    tail = tuple(u for u in d if u not in subset)
    return head + tail


def users_ranked_above(d: Sequence[int], user: int) -> frozenset[int]:
    """The set of users holding strictly higher priority than ``user`` in ``d``."""
    pos = d.index(user)
    return frozenset(d[:pos])


# ---------------------------------------------------------------------------
# Numeric helpers
# ---------------------------------------------------------------------------

def is_rational(x) -> bool:
    """True for int/Fraction values (the exact-arithmetic path)."""
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


def _close(a, b, tol) -> bool:
    if is_rational(a) and is_rational(b):
        return a == b
    return abs(float(a) - float(b)) <= tol


def _ge(a, b, tol) -> bool:
    """a >= b, with float slack ``tol`` unless both sides are rational."""
    if is_rational(a) and is_rational(b):
        return a >= b
    return float(a) >= float(b) - tol


# ---------------------------------------------------------------------------
# Workload distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Deterministic:
    """A constant workload."""

    value: Union[int, float, Fraction]

    def __post_init__(self):
        if self.value < 0:
            raise ValueError(f"deterministic workload must be >= 0, got {self.value}")

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        if size is None:
            return self.value
        return np.full(size, float(self.value))


@dataclass(frozen=True)
class Exponential:
    """Memoryless workload with the given rate (mean ``1/rate``)."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"exponential rate must be > 0, got {self.rate}")

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        return rng.exponential(1.0 / float(self.rate), size=size)


@dataclass(frozen=True)
class Gamma:
    """Gamma workload parameterized as (shape, scale); mean is ``shape * scale``."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"gamma parameters must be > 0, got {self}")

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        return rng.gamma(float(self.shape), float(self.scale), size=size)


Workload = Union[Deterministic, Exponential, Gamma]


# ---------------------------------------------------------------------------
# Payoff models
# ---------------------------------------------------------------------------

def _canonical_atoms(atoms) -> tuple:
    """Normalize a per-decision distribution into ((value_vector, prob), ...)."""
    if isinstance(atoms, Mapping):
        items = list(atoms.items())
    else:
        items = [(tuple(v), p) for v, p in atoms]
    return tuple((tuple(v), p) for v, p in items)


@dataclass(frozen=True)
class TablePayoffModel:
    """Explicit finite payoff distribution for every priority decision.

    ``dist`` maps each of the n! decisions to a finite discrete distribution
    over nonnegative payoff vectors, given as ``{vector: probability}`` or as
    ``[(vector, probability), ...]``.  Values may be ints/Fractions (exact
    path) or floats.
    """

    n: int
    dist: Mapping[Decision, object]

    def __post_init__(self):
        decisions = enumerate_decisions(self.n)
        canon = {}
        for d, atoms in self.dist.items():
            canon[validate_decision(d, self.n)] = _canonical_atoms(atoms)
        missing = [d for d in decisions if d not in canon]
        if missing:
            raise ValueError(f"payoff table is missing {len(missing)} decisions, first {missing[0]}")
        if len(canon) != len(decisions):
            raise ValueError("payoff table has entries that are not valid decisions")

        has_positive = [False] * self.n
        for d in decisions:
            total = 0
            for vec, prob in canon[d]:
                if len(vec) != self.n:
                    raise ValueError(f"payoff vector {vec} for decision {d} has wrong length")
                if any(v < 0 for v in vec):
                    raise ValueError(f"negative payoff in {vec} for decision {d}")
                if prob < 0:
                    raise ValueError(f"negative probability {prob} for decision {d}")
                total += prob
                for i, v in enumerate(vec):
                    if prob > 0 and v > 0:
                        has_positive[i] = True
            if abs(float(total) - 1.0) > 1e-12:
                raise ValueError(f"probabilities for decision {d} sum to {total}, not 1")
        if not all(has_positive):
            bad = has_positive.index(False)
            raise ValueError(f"user {bad} has zero expected payoff under every decision")
        object.__setattr__(self, "dist", canon)

    @property
    def is_unit_payoff(self) -> bool:
        """True when every atom value is 0 or 1 (task-completion payoffs)."""
        return all(
            v == 0 or v == 1 for atoms in self.dist.values() for vec, _ in atoms for v in vec
        )

    @property
    def is_rational(self) -> bool:
        return all(
            is_rational(p) and all(is_rational(v) for v in vec)
            for atoms in self.dist.values()
            for vec, p in atoms
        )


@dataclass(frozen=True)
class SingleResourceModel:
    """One shared resource processing one task per user per period.

    Each period of length ``period_length`` every user releases one task with
    a random workload.  Tasks are processed strictly sequentially in priority
    order; whatever is in flight when the period ends is abandoned, and tasks
    not completed on time are dropped.  A user's payoff is 1 if its task
    completed, else 0.
    """

    n: int
    period_length: Union[int, float, Fraction]
    workloads: tuple[Workload, ...]

    def __post_init__(self):
        object.__setattr__(self, "workloads", tuple(self.workloads))
        if self.n < 1:
            raise ValueError(f"user count must be >= 1, got {self.n}")
        if not self.period_length > 0:
            raise ValueError(f"period length must be > 0, got {self.period_length}")
        if len(self.workloads) != self.n:
            raise ValueError(f"expected {self.n} workload distributions, got {len(self.workloads)}")

    @property
    def is_unit_payoff(self) -> bool:
        return True

    def sample_workloads(self, rng: np.random.Generator) -> list:
        """One workload draw per user, in user-index order."""
        return [w.sample(rng) for w in self.workloads]


PayoffModel = Union[TablePayoffModel, SingleResourceModel]


def top_priority_wins_model(n: int = 2) -> TablePayoffModel:
    """Unit-payoff model where only the top-priority user's task completes."""
    unit = lambda i: tuple(1 if j == i else 0 for j in range(n))
    return TablePayoffModel(n, {d: {unit(d[0]): 1} for d in enumerate_decisions(n)})


# ---------------------------------------------------------------------------
# Expected payoffs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Estimation:
    """How an expected-payoff table was (or should be) computed."""

    kind: str  # "exact" | "monte-carlo"
    samples: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("exact", "monte-carlo"):
            raise ValueError(f"unknown estimation kind {self.kind!r}")
        if self.kind == "monte-carlo":
            if not self.samples or self.samples < 1:
                raise ValueError("monte-carlo estimation needs a positive sample count")
            if self.seed is None:
                raise ValueError("monte-carlo estimation needs a seed")

    @staticmethod
    def exact() -> "Estimation":
        return Estimation("exact")

    @staticmethod
    def monte_carlo(samples: int, seed: int) -> "Estimation":
        return Estimation("monte-carlo", samples=int(samples), seed=int(seed))


@dataclass(frozen=True)
class ExpectedPayoffTable:
    """Expected payoff vector for every priority decision, plus provenance."""

    n: int
    payoffs: Mapping[Decision, tuple]
    provenance: Estimation

    def __post_init__(self):
        decisions = enumerate_decisions(self.n)
        canon = {validate_decision(d, self.n): tuple(v) for d, v in self.payoffs.items()}
        if set(canon) != set(decisions):
            raise ValueError("expected-payoff table must have exactly one entry per permutation")
        for d, vec in canon.items():
            if len(vec) != self.n:
                raise ValueError(f"expected payoff vector for {d} has wrong length")
            if any(float(v) < 0 for v in vec):
                raise ValueError(f"negative expected payoff for decision {d}")
        object.__setattr__(self, "payoffs", canon)

    def p(self, d: Sequence[int]) -> tuple:
        return self.payoffs[tuple(d)]

    def decisions(self) -> list[Decision]:
        return enumerate_decisions(self.n)

    @property
    def is_rational(self) -> bool:
        return all(is_rational(v) for vec in self.payoffs.values() for v in vec)

    def max_payoff(self):
        """Largest entry across the whole table (bounding-box edge for sampling)."""
        return max(v for vec in self.payoffs.values() for v in vec)


def _hypoexponential_cdf(t: float, rates: Sequence[float]) -> float:
    """P(sum of independent exponentials with the given rates <= t).

    Uses the phase-type representation: with generator Q (upper bidiagonal),
    the survival function is the first row sum of expm(Q t).  This handles
    repeated rates without special-casing.
    """
    from scipy.linalg import expm

    if t < 0:
        return 0.0
    k = len(rates)
    q = np.zeros((k, k))
    for j, rate in enumerate(rates):
        q[j, j] = -rate
        if j + 1 < k:
            q[j, j + 1] = rate
    survival = float(np.sum(expm(q * t)[0, :]))
    return min(1.0, max(0.0, 1.0 - survival))


def _single_resource_exact(model: SingleResourceModel) -> dict[Decision, tuple]:
    for w in model.workloads:
        if isinstance(w, Gamma):
            raise EstimationModeError(
                "exact estimation supports deterministic/exponential workloads only; "
                "use monte-carlo for gamma workloads"
            )
    payoffs = {}
    for d in enumerate_decisions(model.n):
        vec = [0] * model.n
        det_total = 0
        rates: list[float] = []
        for user in d:
            w = model.workloads[user]
            if isinstance(w, Deterministic):
                det_total = det_total + w.value
            else:
                rates.append(float(w.rate))
            remaining = model.period_length - det_total
            if not rates:
                # Purely deterministic prefix: completion is an indicator.
                vec[user] = 1 if remaining >= 0 else 0
            else:
                vec[user] = _hypoexponential_cdf(float(remaining), rates)
        payoffs[d] = tuple(vec)
    return payoffs


def _single_resource_monte_carlo(model: SingleResourceModel, samples: int, seed: int) -> dict[Decision, tuple]:
    # One shared workload matrix across decisions (common random numbers):
    # the estimated table is then monotone by pointwise coupling, because a
    # longer prefix can only increase the cumulative workload.
    w = np.empty((samples, model.n))
    for i, dist in enumerate(model.workloads):
        w[:, i] = dist.sample(substream(seed, "workloads", i), size=samples)
    delta = float(model.period_length)
    payoffs = {}
    for d in enumerate_decisions(model.n):
        finish = np.cumsum(w[:, list(d)], axis=1)
        done = finish <= delta
        means = done.mean(axis=0)
        vec = [0.0] * model.n
        for pos, user in enumerate(d):
            vec[user] = float(means[pos])
        payoffs[d] = tuple(vec)
    return payoffs


def _table_exact(model: TablePayoffModel) -> dict[Decision, tuple]:
    payoffs = {}
    for d, atoms in model.dist.items():
        acc = [0] * model.n
        for vec, prob in atoms:
            for i, v in enumerate(vec):
                acc[i] = acc[i] + prob * v
        payoffs[d] = tuple(acc)
    return payoffs


def _table_monte_carlo(model: TablePayoffModel, samples: int, seed: int) -> dict[Decision, tuple]:
    payoffs = {}
    for k, (d, atoms) in enumerate(sorted(model.dist.items())):
        rng = substream(seed, "table-payoffs", k)
        probs = np.array([float(p) for _, p in atoms])
        probs = probs / probs.sum()
        values = np.array([[float(v) for v in vec] for vec, _ in atoms])
        idx = rng.choice(len(atoms), size=samples, p=probs)
        payoffs[d] = tuple(float(x) for x in values[idx].mean(axis=0))
    return payoffs


def expected_payoffs(model: PayoffModel, estimation: Estimation) -> ExpectedPayoffTable:
    """Expected payoff vector per decision, exact or Monte Carlo.

    Exact mode supports table models and single-resource models whose
    workloads are deterministic/exponential (analytic convolution).  For a
    single-resource model, ``p_i(d)`` is the probability that the cumulative
    workload of user ``i`` and all higher-priority users fits in the period.
    """
    if estimation.kind == "exact":
        if isinstance(model, TablePayoffModel):
            payoffs = _table_exact(model)
        else:
            payoffs = _single_resource_exact(model)
    else:
        if isinstance(model, TablePayoffModel):
            payoffs = _table_monte_carlo(model, estimation.samples, estimation.seed)
        else:
            payoffs = _single_resource_monte_carlo(model, estimation.samples, estimation.seed)
    return ExpectedPayoffTable(model.n, payoffs, estimation)


def sample_payoffs(model: PayoffModel, d: Sequence[int], rng: np.random.Generator) -> tuple:
    """One draw of the payoff vector under decision ``d``."""
    d = validate_decision(d, model.n)
    if isinstance(model, TablePayoffModel):
        atoms = model.dist[d]
        u = rng.random()
        acc = 0.0
        for vec, prob in atoms:
            acc += float(prob)
            if u < acc:
                return vec
        return atoms[-1][0]
    workloads = model.sample_workloads(rng)
    vec = [0] * model.n
    total = 0.0
    for user in d:
        total += float(workloads[user])
        if total <= float(model.period_length):
            vec[user] = 1
        else:
            break  # the in-flight task is abandoned; later tasks never start
    return tuple(vec)


# ---------------------------------------------------------------------------
# Property checkers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonotonicityWitness:
    """A demotion that raised a user's expected payoff."""

    d1: Decision
    d2: Decision
    user: int


@dataclass(frozen=True)
class EquivalenceWitness:
    """A subset whose projected payoff vectors admit no common hyperplane."""

    subset: frozenset[int]


@dataclass(frozen=True)
class ExchangeWitness:
    """A priority swap that did not simply swap the two users' payoffs."""

    decision: Decision
    user_i: int
    user_j: int


@dataclass(frozen=True)
class PropertyVerdict:
    """Outcome of a structural property check.

    When ``holds`` is false, ``witness`` is a re-checkable counterexample;
    when a check produces supporting data (e.g. per-subset normal vectors),
    it is stored in ``certificate``.
    """

    holds: bool
    witness: object = None
    certificate: object = None


def check_monotonicity(table: ExpectedPayoffTable, tol: float = TOL) -> PropertyVerdict:
    """Does demoting a user ever raise its expected payoff?

    Holds iff for every pair of decisions and every user whose set of
    higher-priority users only grew, the expected payoff did not increase
    (within ``tol`` on the float path).  The witness is the first violating
    (d1, d2, user) in lexicographic scan order.
    """
    decisions = table.decisions()
    above = {
        d: [users_ranked_above(d, i) for i in range(table.n)] for d in decisions
    }
    for d1 in decisions:
        for d2 in decisions:
            for i in range(table.n):
                if above[d1][i] <= above[d2][i]:
                    if not _ge(table.p(d1)[i], table.p(d2)[i], tol):
                        return PropertyVerdict(False, MonotonicityWitness(d1, d2, i))
    return PropertyVerdict(True)


def _subsets(n: int, include_empty: bool = False):
    """Nonempty subsets of 0..n-1, ordered by (size, members) for determinism."""
    start = 0 if include_empty else 1
    for k in range(start, n + 1):
        for combo in itertools.combinations(range(n), k):
            yield frozenset(combo)


def check_subset_payoff_equivalence(table: ExpectedPayoffTable, tol: float = TOL) -> PropertyVerdict:
    """Do the projected payoff vectors of each prefix class lie on a hyperplane?

    For each nonempty subset S this solves a small feasibility LP for a
    nonzero nonnegative normal vector giving every decision in D(S) the same
    projected value.  Certificate: the normal per subset.  Witness: the first
    failing subset.
    """
    from ldfsched.lp import LinearProgram, lp_solve

    members_order = sorted  # scan users in index order inside each subset
    certificate = {}
    for subset in _subsets(table.n):
        users = members_order(subset)
        group = decisions_with_prefix(subset, table.n)
        base = [table.p(group[0])[i] for i in users]
        rows = []
        for d in group[1:]:
            diff = [table.p(d)[i] - base[j] for j, i in enumerate(users)]
            rows.append((diff, "=", 0))
        rows.append(([1] * len(users), "=", 1))  # normalization excludes alpha = 0
        sol = lp_solve(LinearProgram(objective=[0] * len(users), rows=rows))
        if sol.status != "optimal":
            return PropertyVerdict(False, EquivalenceWitness(subset), certificate or None)
        alpha = [0] * table.n
        for j, i in enumerate(users):
            alpha[i] = sol.z[j]
        certificate[subset] = tuple(alpha)
    return PropertyVerdict(True, certificate=certificate)


def _swap_users(d: Decision, i: int, j: int) -> Decision:
    return tuple(j if u == i else i if u == j else u for u in d)


def check_exchangeable(table: ExpectedPayoffTable, members: Iterable[int], tol: float = TOL) -> PropertyVerdict:
    """Does swapping the priorities of two subset members just swap their payoffs?

    Holds iff for every decision and every pair i, j in the subset, exchanging
    the positions of i and j exchanges ``p_i`` and ``p_j`` and leaves every
    other coordinate unchanged (within ``tol``).  Vacuous for ``|S| <= 1``.
    """
    subset = sorted(frozenset(int(u) for u in members))
    if any(u < 0 or u >= table.n for u in subset):
        raise ValueError(f"subset {subset} contains user indices outside 0..{table.n - 1}")
    if len(subset) <= 1:
        return PropertyVerdict(True)
    for d in table.decisions():
        for i, j in itertools.combinations(subset, 2):
            swapped = _swap_users(d, i, j)
            p, q = table.p(d), table.p(swapped)
            ok = _close(q[i], p[j], tol) and _close(q[j], p[i], tol)
            if ok:
                ok = all(_close(q[k], p[k], tol) for k in range(table.n) if k not in (i, j))
            if not ok:
                return PropertyVerdict(False, ExchangeWitness(d, i, j))
    return PropertyVerdict(True)
