"""Region computations for requirement vectors against an expected-payoff table.

Four nested questions are answered, each by a small LP over the table:

* ``in_feasibility_region`` -- is ``q`` (projected on a subset) dominated by a
  convex combination of expected payoff vectors?  This is the region that
  characterizes which long-run requirement vectors any prioritization policy
  can meet, up to boundary.
* ``in_hull_dominant`` -- does ``q`` dominate a point of that convex hull?
* ``in_ldf_inner_bound`` -- does a strictly positive weighting exist making
  every prefix-class payoff inequality hold?  Points inside are met by every
  weighted largest-deficit-first policy.
* ``in_carved_region`` -- is every subset projection of ``q`` inside the
  subset feasibility region but outside the subset hull-dominant region?
  Under monotonicity this region sandwiches the inner bound.

``subset_payoff_ratio`` and ``efficiency_lower_bound`` quantify how far the
prefix-class payoff vectors are from lying on a common hyperplane, which
lower-bounds the efficiency of deficit-first policies.

Membership margins are the LP objectives used for the decision; certificates
(convex-combination weights, positive weight vectors, or separating
directions) re-verify against the defining inequalities.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from ldfsched.errors import CapacityError, DegenerateError
from ldfsched.lp import LinearProgram, lp_solve
from ldfsched.model import (
    TOL,
    Decision,
    ExpectedPayoffTable,
    check_monotonicity,
    decisions_with_prefix,
    is_rational,
    _subsets,
)

#: Region operations enumerate all prefix classes; n * n! constraints at the cap.
GEOMETRY_CAP = 5

__all__ = [
    "GEOMETRY_CAP",
    "RegionVerdict",
    "in_feasibility_region",
    "in_hull_dominant",
    "in_ldf_inner_bound",
    "in_carved_region",
    "DualCheckReport",
    "dual_check_feasibility",
    "SubsetPayoffRatio",
    "subset_payoff_ratio",
    "efficiency_lower_bound",
]


def _check_q(q: Sequence, n: int) -> tuple:
    q = tuple(q)
    if len(q) != n:
        raise ValueError(f"requirement vector has length {len(q)}, expected {n}")
    if any(float(v) < 0 for v in q):
        raise ValueError(f"requirement vector must be nonnegative, got {q}")
    return q


def _full_subset(table: ExpectedPayoffTable, subset) -> frozenset:
    if subset is None:
        return frozenset(range(table.n))
    s = frozenset(int(u) for u in subset)
    if any(u < 0 or u >= table.n for u in s):
        raise ValueError(f"subset {sorted(s)} contains user indices outside 0..{table.n - 1}")
    if not s:
        raise ValueError("subset must be nonempty")
    return s


@dataclass(frozen=True)
class RegionVerdict:
    """Membership answer with a numeric certificate.

    ``margin`` is the LP objective used for the decision (positive inside,
    negative outside); ``None`` when the deciding LP was infeasible.  The
    certificate is a ``{decision: weight}`` convex combination for hull
    regions, a positive weight vector for the inner bound, or a separating
    direction for non-membership in the feasibility region.
    """

    member: bool
    margin: object = None
    certificate: object = None
    failing_subset: Optional[frozenset] = None

    def as_report(self) -> dict:
        cert = self.certificate
        if isinstance(cert, dict):
            cert = {",".join(map(str, d)): _num(w) for d, w in cert.items()}
        elif isinstance(cert, tuple):
            cert = [_num(v) for v in cert]
        return {
            "member": self.member,
            "margin": _num(self.margin),
            "certificate": cert,
            "failing_subset": sorted(self.failing_subset) if self.failing_subset else None,
        }


def _num(x):
    if x is None:
        return None
    if is_rational(x):
        return str(x) if "/" in str(x) else int(x)
    return float(x)


def _membership_lp(table, q, subset, dominate: bool):
    """max t over convex weights: payoffs exceed q by t (or fall below by t)."""
    group = decisions_with_prefix(subset, table.n)
    users = sorted(subset)
    nv = len(group) + 1  # weights plus the margin variable t (free)
    rows = []
    for i in users:
        coeffs = [table.p(d)[i] for d in group] + [-1]
        if dominate:
            coeffs = [-c for c in coeffs[:-1]] + [-1]
            rows.append((coeffs, ">=", -q[i]))  # q_i - sum c_d p_i(d) >= t
        else:
            rows.append((coeffs, ">=", q[i]))  # sum c_d p_i(d) - t >= q_i
    rows.append(([1] * len(group) + [0], "=", 1))
    lp = LinearProgram(objective=[0] * len(group) + [1], rows=rows, free={nv - 1})
    return group, users, lp


def _is_member(margin, exact: bool, tol) -> bool:
    if exact:
        return margin >= 0
    return float(margin) >= -tol


def in_feasibility_region(
    table: ExpectedPayoffTable,
    q: Sequence,
    subset: Optional[Iterable[int]] = None,
    tol: float = TOL,
) -> RegionVerdict:
    """Is the projection of ``q`` dominated by a convex combination of the
    prefix-class payoff vectors?

    The deciding LP maximizes the uniform slack ``t`` with which some convex
    combination dominates ``q`` on the subset.  Membership certificate: the
    combination weights.  Non-membership certificate: a nonnegative separating
    direction from the LP dual, along which ``q`` projects strictly higher
    than every payoff vector.
    """
    q = _check_q(q, table.n)
    subset = _full_subset(table, subset)
    group, users, lp = _membership_lp(table, q, subset, dominate=False)
    sol = lp_solve(lp)
    margin = sol.value
    if _is_member(margin, sol.path == "exact", tol):
        weights = {d: sol.z[k] for k, d in enumerate(group)}
        return RegionVerdict(True, margin, weights)
    # Duals of the per-user rows give the separating direction (embedded in
    # full user space, zero outside the subset).
    gamma = [0] * table.n
    for k, i in enumerate(users):
        y = -sol.duals[k]
        gamma[i] = y if (sol.path == "exact" and y >= 0) else max(0.0, float(y))
    total = sum(gamma)
    if total > 0:
        gamma = [g / total for g in gamma]
    return RegionVerdict(False, margin, tuple(gamma))


def in_hull_dominant(
    table: ExpectedPayoffTable,
    q: Sequence,
    subset: Optional[Iterable[int]] = None,
    tol: float = TOL,
) -> RegionVerdict:
    """Does the projection of ``q`` dominate a point of the prefix-class hull?"""
    q = _check_q(q, table.n)
    subset = _full_subset(table, subset)
    group, users, lp = _membership_lp(table, q, subset, dominate=True)
    sol = lp_solve(lp)
    margin = sol.value
    if _is_member(margin, sol.path == "exact", tol):
        weights = {d: sol.z[k] for k, d in enumerate(group)}
        return RegionVerdict(True, margin, weights)
    return RegionVerdict(False, margin)


def _require_geometry_cap(table: ExpectedPayoffTable, cap: int, what: str):
    if table.n > cap:
        import math

        raise CapacityError(
            f"{what} enumerates every prefix class: the constraint count is "
            f"n*n! = {table.n * math.factorial(table.n)} at n={table.n}, above the cap {cap}"
        )


def in_ldf_inner_bound(
    table: ExpectedPayoffTable,
    q: Sequence,
    cap: int = GEOMETRY_CAP,
    positivity_tol: float = 1e-9,
) -> RegionVerdict:
    """Does a strictly positive user weighting make every prefix-class
    inequality hold?

    Solves ``max t`` subject to ``alpha_i >= t``, ``sum(alpha) = 1`` and, for
    every nonempty subset S and every decision granting S the top priorities,
    ``sum_{i in S} alpha_i q_i <= sum_{i in S} alpha_i p_i(d)``.  Membership
    means the optimum exceeds the strict-positivity threshold; boundary
    indeterminacy shows up in the margin rather than being hidden.
    """
    q = _check_q(q, table.n)
    _require_geometry_cap(table, cap, "the inner-bound region")
    n = table.n
    rows = [([1] * n + [0], "=", 1)]
    for i in range(n):
        coeffs = [0] * (n + 1)
        coeffs[i] = 1
        coeffs[n] = -1
        rows.append((coeffs, ">=", 0))
    for subset in _subsets(n):
        users = sorted(subset)
        for d in decisions_with_prefix(subset, n):
            coeffs = [0] * (n + 1)
            for i in users:
                coeffs[i] = table.p(d)[i] - q[i]
            rows.append((coeffs, ">=", 0))
    lp = LinearProgram(objective=[0] * n + [1], rows=rows, free={n})
    sol = lp_solve(lp)
    if sol.status != "optimal":
        return RegionVerdict(False, None)
    margin = sol.value
    if sol.path == "exact":
        member = margin > 0
    else:
        member = float(margin) > positivity_tol
    alpha = tuple(sol.z[:n])
    return RegionVerdict(member, margin, alpha if member else alpha)


def in_carved_region(
    table: ExpectedPayoffTable,
    q: Sequence,
    cap: int = GEOMETRY_CAP,
    tol: float = TOL,
) -> RegionVerdict:
    """Is every subset projection of ``q`` feasible but not hull-dominant?

    Checks, for every nonempty subset S, that the projection lies inside the
    subset feasibility region and strictly outside the subset hull-dominant
    region; reports the first failing subset otherwise.  The margin is the
    worst slack across subsets (feasibility margin, or negated dominance
    margin).
    """
    q = _check_q(q, table.n)
    _require_geometry_cap(table, cap, "the carved region")
    margin = None
    for subset in _subsets(table.n):
        cv = in_feasibility_region(table, q, subset, tol=tol)
        slack = cv.margin
        if margin is None or slack < margin:
            margin = slack
        if not cv.member:
            return RegionVerdict(False, margin, cv.certificate, failing_subset=subset)
        bv = in_hull_dominant(table, q, subset, tol=tol)
        slack = -bv.margin
        if slack < margin:
            margin = slack
        if bv.member:
            return RegionVerdict(False, margin, bv.certificate, failing_subset=subset)
    return RegionVerdict(True, margin)


@dataclass(frozen=True)
class DualCheckReport:
    """Randomized support-function check of feasibility-region membership.

    Samples nonnegative directions on the simplex; membership requires
    ``<gamma, q> <= max_d <gamma, p(d)>`` for every direction.  ``violations``
    holds directions that exceeded the bound by more than ``tol``.
    """

    trials: int
    violations: tuple
    max_excess: float

    @property
    def consistent(self) -> bool:
        return not self.violations


def dual_check_feasibility(
    table: ExpectedPayoffTable,
    q: Sequence,
    trials: int = 10_000,
    rng: Union[int, np.random.Generator] = 0,
    tol: float = TOL,
) -> DualCheckReport:
    """Monte Carlo scan for a nonnegative direction separating ``q`` from the
    payoff hull; a consistency cross-check for region membership."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    q = _check_q(q, table.n)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    gammas = rng.dirichlet(np.ones(table.n), size=trials)
    pmat = np.array([[float(v) for v in table.p(d)] for d in table.decisions()])
    qv = np.array([float(v) for v in q])
    excess = gammas @ qv - (gammas @ pmat.T).max(axis=1)
    bad = np.nonzero(excess > tol)[0]
    violations = tuple(tuple(gammas[i]) for i in bad[:16])
    return DualCheckReport(trials, violations, float(excess.max()))


@dataclass(frozen=True)
class SubsetPayoffRatio:
    """Best min/max ratio of projected payoffs along a nonnegative weighting."""

    subset: frozenset
    ratio: object
    weights: tuple

    def as_report(self) -> dict:
        return {
            "subset": sorted(self.subset),
            "ratio": _num(self.ratio),
            "weights": [_num(w) for w in self.weights],
        }


def subset_payoff_ratio(table: ExpectedPayoffTable, members: Iterable[int]) -> SubsetPayoffRatio:
    """How close do the prefix-class payoff vectors of a subset come to a
    common hyperplane?

    Solves the ratio program by normalization: ``max t`` with all projections
    in ``[t, 1]`` along a nonnegative weighting supported on the subset.  The
    optimum is 1 exactly when the projections admit a common hyperplane with
    nonnegative normal.
    """
    subset = _full_subset(table, members)
    users = sorted(subset)
    group = decisions_with_prefix(subset, table.n)
    if all(table.p(d)[i] == 0 for d in group for i in users):
        raise DegenerateError(
            f"every payoff is zero on subset {users}; the payoff ratio is undefined"
        )
    k = len(users)
    rows = []
    for d in group:
        proj = [table.p(d)[i] for i in users]
        rows.append((proj + [-1], ">=", 0))  # projection >= t
        rows.append((proj + [0], "<=", 1))  # projection <= 1
    lp = LinearProgram(objective=[0] * k + [1], rows=rows)
    sol = lp_solve(lp)
    alpha = list(sol.z[:k])
    total = sum(alpha)
    if total > 0:
        alpha = [a / total for a in alpha]
    weights = [0] * table.n
    for j, i in enumerate(users):
        weights[i] = alpha[j]
    return SubsetPayoffRatio(subset, sol.value, tuple(weights))


def efficiency_lower_bound(
    table: ExpectedPayoffTable, warn_if_not_monotone: bool = True
) -> SubsetPayoffRatio:
    """Worst subset payoff ratio across all nonempty subsets.

    This lower-bounds the efficiency ratio of every weighted
    largest-deficit-first policy, but the bound is only proven under
    monotonicity in payoffs; a warning is emitted when the table is not
    monotone.  Returns the minimizing subset's ratio result.
    """
    if warn_if_not_monotone and not check_monotonicity(table).holds:
        warnings.warn(
            "the efficiency lower bound is only guaranteed for tables that are "
            "monotone in payoffs",
            stacklevel=2,
        )
    best = None
    for subset in _subsets(table.n):
        res = subset_payoff_ratio(table, subset)
        if best is None or res.ratio < best.ratio:
            best = res
    return best
