"""Independent brute-force cross-checks used by the test suite.

Nothing here shares code with the operations it checks: expectations are
recomputed by direct enumeration, region membership is decided from convex
hull facets built on an independent construction (corner points of dominated
boxes), the subset payoff ratio is maximized over an explicit grid on the
weight simplex, and the two-user deterministic example is replayed with a
dedicated integer-scaled loop.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from ldfsched.errors import CapacityError
from ldfsched.model import (
    Decision,
    ExpectedPayoffTable,
    Estimation,
    TablePayoffModel,
    check_monotonicity,
    check_subset_payoff_equivalence,
    decisions_with_prefix,
    enumerate_decisions,
    _subsets,
)
from ldfsched.rngstreams import substream

__all__ = [
    "brute_expected_payoffs",
    "gen_monotone_table",
    "scan_best_decision",
    "grid_sigma",
    "RegionFacets",
    "ScanReport",
    "grid_scan_regions",
    "TwoUserTrack",
    "TwoUserReplay",
    "replay_two_user_switch",
    "sample_box_points",
    "sample_inside_feasibility",
    "sample_outside_feasibility",
]


# ---------------------------------------------------------------------------
# Exhaustive expectation
# ---------------------------------------------------------------------------

def brute_expected_payoffs(model: TablePayoffModel) -> ExpectedPayoffTable:
    """Exact expectation by enumerating every atom of every decision."""
    payoffs = {}
    for d in enumerate_decisions(model.n):
        vec = []
        for i in range(model.n):
            vec.append(sum(prob * atom[i] for atom, prob in model.dist[d]))
        payoffs[d] = tuple(vec)
    return ExpectedPayoffTable(model.n, payoffs, Estimation.exact())


# ---------------------------------------------------------------------------
# Random monotone instances
# ---------------------------------------------------------------------------

def _rational(rng, lo_thousandths: int, hi_thousandths: int) -> Fraction:
    return Fraction(int(rng.integers(lo_thousandths, hi_thousandths + 1)), 1000)


def _monotone_set_function(rng, others: Sequence[int]) -> dict:
    """Random nonincreasing set function on subsets of ``others``.

    Assign a random value to every subset, then take the max over supersets;
    growing the argument can then only lower the value.
    """
    raw = {}
    for k in range(len(others) + 1):
        for combo in itertools.combinations(others, k):
            raw[frozenset(combo)] = _rational(rng, 300, 1000)
    f = {}
    for subset in sorted(raw, key=len, reverse=True):
        best = raw[subset]
        for j in others:
            if j not in subset:
                cand = f[subset | {j}]
                if cand > best:
                    best = cand
        f[subset] = best
    return f


def gen_monotone_table(n: int, seed: int, enforce_equivalence: bool = False, max_retries: int = 32) -> TablePayoffModel:
    """Random point-mass payoff table guaranteed monotone in payoffs.

    Without the flag, each user's payoff is a random nonincreasing function of
    its higher-priority set (generic instances fail subset payoff
    equivalence).  With the flag, payoffs are marginal gains of a random
    nondecreasing submodular coverage value, so prefix sums depend only on the
    prefix set and both property checks pass.  All entries are rational.
    """
    if n > 5:
        raise CapacityError(f"monotone-instance generation is capped at n=5, got {n}")
    decisions = enumerate_decisions(n)
    for attempt in range(max_retries):
        rng = substream(seed, "monotone-tables", attempt)
        if enforce_equivalence:
            # Coverage value h(A) = sum_k w_k * max_{i in A} u_ki: nondecreasing
            # and submodular, so marginals are nonnegative and nonincreasing in
            # the prefix set, and prefix sums telescope to h(prefix).
            features = n + 2
            w = [_rational(rng, 250, 1000) for _ in range(features)]
            u = [[_rational(rng, 0, 1000) for _ in range(n)] for _ in range(features)]
            for i in range(n):
                u[int(rng.integers(features))][i] = _rational(rng, 500, 1000)

            def h(members: frozenset) -> Fraction:
                total = Fraction(0)
                for k in range(features):
                    if members:
                        total += w[k] * max(u[k][i] for i in members)
                return total

            dist = {}
            for d in decisions:
                vec = [Fraction(0)] * n
                seen: frozenset = frozenset()
                for user in d:
                    grown = seen | {user}
                    vec[user] = h(grown) - h(seen)
                    seen = grown
                dist[d] = {tuple(vec): 1}
        else:
            funcs = [
                _monotone_set_function(rng, [j for j in range(n) if j != i]) for i in range(n)
            ]
            dist = {}
            for d in decisions:
                vec = []
                for i in range(n):
                    pos = d.index(i)
                    vec.append(funcs[i][frozenset(d[:pos])])
                dist[d] = {tuple(vec): 1}
        try:
            model = TablePayoffModel(n, dist)
        except ValueError:
            continue
        table = brute_expected_payoffs(model)
        if not check_monotonicity(table).holds:
            continue
        if enforce_equivalence and not check_subset_payoff_equivalence(table).holds:
            continue
        return model
    raise RuntimeError(f"could not generate a valid table in {max_retries} attempts")


# ---------------------------------------------------------------------------
# Independent max-weight scan
# ---------------------------------------------------------------------------

def scan_best_decision(x: Sequence, table: ExpectedPayoffTable) -> Decision:
    """Exhaustive argmax of the deficit-weighted expected payoff.

    Lowest-index tie semantics: the first lexicographic decision achieving the
    maximum wins.  Re-implemented here as the oracle for the max-weight
    policy.
    """
    best_d = None
    best_s = None
    for d in itertools.permutations(range(table.n)):
        s = 0
        for i in range(table.n):
            s = s + x[i] * table.p(d)[i]
        if best_s is None or s > best_s:
            best_s = s
            best_d = d
    return best_d


# ---------------------------------------------------------------------------
# Weight-simplex grid search for the subset payoff ratio
# ---------------------------------------------------------------------------

def grid_sigma(table: ExpectedPayoffTable, members: Iterable[int], step: float = 1e-3) -> float:
    """Maximize the min/max projection ratio over a grid on the weight simplex.

    Independent of the LP route: evaluates every grid weighting directly.
    Supports subsets of size up to 3.
    """
    users = sorted(frozenset(int(u) for u in members))
    k = len(users)
    if k == 0 or k > 3:
        raise ValueError("grid search supports subset sizes 1..3")
    group = decisions_with_prefix(users, table.n)
    proj = np.array([[float(table.p(d)[i]) for i in users] for d in group])
    if k == 1:
        vals = proj[:, 0]
        top = vals.max()
        if top == 0:
            raise ValueError("all projections are zero")
        return float(vals.min() / top)
    steps = int(round(1.0 / step))
    if k == 2:
        a = np.arange(steps + 1)
        weights = np.column_stack([a, steps - a]).astype(float)
    else:
        a, b = np.meshgrid(np.arange(steps + 1), np.arange(steps + 1), indexing="ij")
        mask = a + b <= steps
        weights = np.column_stack([a[mask], b[mask], (steps - a - b)[mask]]).astype(float)
    scores = weights @ proj.T  # (grid, decisions)
    top = scores.max(axis=1)
    ok = top > 0
    if not ok.any():
        raise ValueError("all projections are zero")
    ratios = scores[ok].min(axis=1) / top[ok]
    return float(ratios.max())


# ---------------------------------------------------------------------------
# Facet-based region classification
# ---------------------------------------------------------------------------

def _box_corners(points: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """Corners of the boxes spanned between each point and the anchor corner."""
    npts, dim = points.shape
    corners = []
    for choice in itertools.product((0, 1), repeat=dim):
        c = np.where(np.array(choice, dtype=bool), points, anchor[None, :])
        corners.append(c)
    return np.unique(np.vstack(corners), axis=0)


class _FacetSystem:
    """Half-space system ``A x <= b`` with unit-norm rows; margin = min slack."""

    def __init__(self, equations: np.ndarray):
        self.a = equations[:, :-1]
        self.b = -equations[:, -1]

    def margins(self, pts: np.ndarray) -> np.ndarray:
        return (self.b[None, :] - pts @ self.a.T).min(axis=1)


class _Interval:
    def __init__(self, lo: float, hi: float):
        self.lo, self.hi = lo, hi

    def margins(self, vals: np.ndarray) -> np.ndarray:
        return np.minimum(vals - self.lo, self.hi - vals)


class RegionFacets:
    """Facet classifiers for the subset feasibility and hull-dominant regions.

    Built from the corner-point identity: inside the nonnegative box, the
    down-closure of a point set's hull equals the hull of the boxes between
    each point and the origin, and the up-closure equals the hull of the boxes
    up to the box top.  Coordinates that are constant across a subset's
    decisions are split off analytically so the remaining hull is always
    full-dimensional.
    """

    def __init__(self, table: ExpectedPayoffTable, box_top: Optional[float] = None):
        from scipy.spatial import ConvexHull

        self.table = table
        self.n = table.n
        self.top = float(table.max_payoff()) if box_top is None else float(box_top)
        self._feas = {}
        self._dom = {}
        for subset in _subsets(self.n):
            users = sorted(subset)
            proj = np.array(
                [[float(table.p(d)[i]) for i in users] for d in decisions_with_prefix(subset, self.n)]
            )
            self._feas[subset] = self._build(proj, users, ConvexHull, dominated=True)
            self._dom[subset] = self._build(proj, users, ConvexHull, dominated=False)

    def _build(self, proj, users, ConvexHull, dominated: bool):
        # Coordinates pinned at the anchor value (0 below, box top above) have
        # no extent; handle them analytically and hull the rest.
        if dominated:
            active = [k for k in range(len(users)) if proj[:, k].max() > 0]
            pinned = [k for k in range(len(users)) if k not in active]
            anchor_val = 0.0
        else:
            active = [k for k in range(len(users)) if proj[:, k].min() < self.top]
            pinned = [k for k in range(len(users)) if k not in active]
            anchor_val = self.top
        system = None
        if len(active) == 1:
            vals = proj[:, active[0]]
            if dominated:
                system = _Interval(0.0, float(vals.max()))
            else:
                system = _Interval(float(vals.min()), self.top)
        elif len(active) >= 2:
            sub = proj[:, active]
            anchor = np.zeros(len(active)) if dominated else np.full(len(active), self.top)
            corners = _box_corners(sub, anchor)
            system = _FacetSystem(ConvexHull(corners).equations)
        return {
            "users": users,
            "active": active,
            "pinned": pinned,
            "anchor": anchor_val,
            "system": system,
        }

    def _system_margins(self, spec, pts: np.ndarray) -> np.ndarray:
        users = spec["users"]
        cols = pts[:, users]
        m = np.full(len(pts), np.inf)
        for k in spec["pinned"]:
            # Inside only at the anchor value; distance from it is the deficit.
            m = np.minimum(m, -np.abs(cols[:, k] - spec["anchor"]))
        if spec["system"] is not None:
            sub = cols[:, spec["active"]]
            if isinstance(spec["system"], _Interval):
                m = np.minimum(m, spec["system"].margins(sub[:, 0]))
            else:
                m = np.minimum(m, spec["system"].margins(sub))
        return m

    def feasibility_margins(self, pts: np.ndarray, subset: Optional[frozenset] = None) -> np.ndarray:
        """Signed distance proxy to the subset feasibility region (>=0 inside)."""
        subset = frozenset(range(self.n)) if subset is None else subset
        return self._system_margins(self._feas[subset], np.asarray(pts, dtype=float))

    def dominant_margins(self, pts: np.ndarray, subset: Optional[frozenset] = None) -> np.ndarray:
        """Signed distance proxy to the subset hull-dominant region (>=0 inside)."""
        subset = frozenset(range(self.n)) if subset is None else subset
        return self._system_margins(self._dom[subset], np.asarray(pts, dtype=float))

    def carved_margins(self, pts: np.ndarray) -> np.ndarray:
        """Positive where every projection is feasible and strictly non-dominant."""
        pts = np.asarray(pts, dtype=float)
        m = np.full(len(pts), np.inf)
        for subset in _subsets(self.n):
            m = np.minimum(m, self.feasibility_margins(pts, subset))
            m = np.minimum(m, -self.dominant_margins(pts, subset))
        return m


# ---------------------------------------------------------------------------
# Grid scan of the region theorems
# ---------------------------------------------------------------------------

@dataclass
class ScanReport:
    """Grid classification plus sandwich-violation counts.

    ``points`` is the grid; the boolean arrays classify each point by
    feasibility-region, inner-bound, and carved-region membership; the margin
    arrays are facet distances (feasibility and carved).  ``violations`` lists
    confirmed counterexamples (empty for tables satisfying the theorems).
    """

    n: int
    resolution: float
    eps: float
    monotone: bool
    sandwich_checked: bool
    points: np.ndarray
    in_feasibility: np.ndarray
    in_inner_bound: np.ndarray
    in_carved: np.ndarray
    margin_feasibility: np.ndarray
    margin_carved: np.ndarray
    violations: list

    @property
    def counts(self) -> dict:
        return {
            "points": int(len(self.points)),
            "in_feasibility": int(self.in_feasibility.sum()),
            "in_inner_bound": int(self.in_inner_bound.sum()),
            "in_carved": int(self.in_carved.sum()),
            "violations": len(self.violations),
        }

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [f"q{i}" for i in range(self.n)]
                + ["in_feasibility", "in_inner_bound", "in_carved", "margin_feasibility", "margin_carved"]
            )
            for k in range(len(self.points)):
                writer.writerow(
                    [repr(float(v)) for v in self.points[k]]
                    + [
                        int(self.in_feasibility[k]),
                        int(self.in_inner_bound[k]),
                        int(self.in_carved[k]),
                        repr(float(self.margin_feasibility[k])),
                        repr(float(self.margin_carved[k])),
                    ]
                )


def grid_scan_regions(
    table: ExpectedPayoffTable,
    resolution: float = 0.05,
    eps: float = 1e-6,
    check_sandwich: bool = True,
) -> ScanReport:
    """Classify a payoff-space grid and count inner-bound sandwich violations.

    Membership in the feasibility and carved regions comes from the facet
    classifiers; inner-bound membership is resolved by bisection along grid
    lines (all three regions are closed downward).  Sandwich assertions
    (interior of the carved region inside the inner bound, inner bound inside
    the carved closure) are only meaningful under monotonicity; for
    non-monotone tables the scan still classifies but flags the assertions as
    skipped.  Candidate violations are confirmed against the LP route before
    being reported.
    """
    from ldfsched.geometry import in_carved_region, in_ldf_inner_bound

    n = table.n
    if n > 4:
        raise CapacityError(f"grid scans are capped at n=4 ({n}^d grids), got n={n}")
    monotone = check_monotonicity(table).holds

    top = float(table.max_payoff())
    levels = np.arange(0.0, top + resolution / 2, resolution)
    nlev = len(levels)
    axes = np.meshgrid(*([levels] * n), indexing="ij")
    points = np.stack(axes, axis=-1).reshape(-1, n)

    facets = RegionFacets(table)
    margin_c = facets.feasibility_margins(points)
    margin_r = facets.carved_margins(points)
    in_c = margin_c >= -1e-9
    in_r = margin_r > 0

    # Inner-bound membership by threshold bisection along the last axis.
    def rib_member(q) -> bool:
        return in_ldf_inner_bound(table, tuple(float(v) for v in q)).member

    in_rib = np.zeros(len(points), dtype=bool)
    line_shape = (nlev,) * (n - 1)
    for line_idx in np.ndindex(*line_shape):
        base = [levels[k] for k in line_idx]

        def q_at(level_idx: int):
            return tuple(base) + (levels[level_idx],)

        lo, hi = -1, nlev - 1
        if rib_member(q_at(0)):
            lo = 0
            while lo < hi:
                mid = (lo + hi + 1) // 2
                if rib_member(q_at(mid)):
                    lo = mid
                else:
                    hi = mid - 1
        threshold = lo
        if threshold >= 0:
            flat = np.ravel_multi_index(tuple(line_idx) + (0,), (nlev,) * n)
            in_rib[flat : flat + threshold + 1] = True

    violations = []
    sandwich_checked = bool(check_sandwich and monotone)
    if sandwich_checked:
        # Interior of the carved region must sit inside the inner bound.
        for k in np.nonzero((margin_r > eps) & ~in_rib)[0]:
            q = tuple(float(v) for v in points[k])
            if in_carved_region(table, q).member and not in_ldf_inner_bound(table, q).member:
                violations.append({"kind": "interior-not-in-inner-bound", "q": q})
        # Inner-bound members must stay inside the carved closure.
        members = np.nonzero(in_rib)[0]
        if len(members):
            shrunk = points[members] * (1.0 - eps)
            bad = facets.carved_margins(shrunk) <= 0
            for k, flat in enumerate(members):
                if not bad[k]:
                    continue
                q = tuple(float(v) for v in points[flat])
                verdict = in_ldf_inner_bound(table, q)
                if verdict.member and float(verdict.margin) > eps:
                    if not in_carved_region(table, tuple((1.0 - eps) * v for v in q)).member:
                        violations.append({"kind": "inner-bound-outside-carved-closure", "q": q})

    return ScanReport(
        n=n,
        resolution=resolution,
        eps=eps,
        monotone=monotone,
        sandwich_checked=sandwich_checked,
        points=points,
        in_feasibility=in_c,
        in_inner_bound=in_rib,
        in_carved=in_r,
        margin_feasibility=margin_c,
        margin_carved=margin_r,
        violations=violations,
    )


# ---------------------------------------------------------------------------
# Exact replay of the two-user deterministic switch example
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoUserTrack:
    achieved: tuple
    decisions: tuple
    deficits: tuple  # per period, as exact Fractions


@dataclass(frozen=True)
class TwoUserReplay:
    truncated: TwoUserTrack
    signed: TwoUserTrack


def replay_two_user_switch(periods: int = 10_000) -> TwoUserReplay:
    """Replay the two-user model where only the top-priority task completes.

    Requirements are (1/10, 1/2); largest-deficit-first with lowest-index
    ties, run in both deficit modes.  The loop works on deficits scaled by 10
    so the arithmetic is exact integer arithmetic.
    """
    if periods < 10:
        raise ValueError(f"need at least 10 periods, got {periods}")
    q0, q1, payoff = 1, 5, 10  # (0.1, 0.5) and unit payoff, scaled by 10

    def run(truncate: bool) -> TwoUserTrack:
        x0 = x1 = 0
        wins0 = 0
        decisions = []
        deficits = []
        for _ in range(periods):
            first = 0 if x0 >= x1 else 1
            v0, v1 = (payoff, 0) if first == 0 else (0, payoff)
            x0 = x0 + q0 - v0
            x1 = x1 + q1 - v1
            if truncate:
                x0 = max(x0, 0)
                x1 = max(x1, 0)
            wins0 += first == 0
            decisions.append((0, 1) if first == 0 else (1, 0))
            deficits.append((Fraction(x0, 10), Fraction(x1, 10)))
        achieved = (Fraction(wins0, periods), Fraction(periods - wins0, periods))
        return TwoUserTrack(achieved, tuple(decisions), tuple(deficits))

    return TwoUserReplay(truncated=run(True), signed=run(False))


# ---------------------------------------------------------------------------
# Requirement-vector samplers for property suites
# ---------------------------------------------------------------------------

def _as_rng(rng: Union[int, np.random.Generator]) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def sample_box_points(table: ExpectedPayoffTable, count: int, rng: Union[int, np.random.Generator]) -> np.ndarray:
    """Uniform samples over the payoff bounding box [0, max entry]^n."""
    rng = _as_rng(rng)
    return rng.uniform(0.0, float(table.max_payoff()), size=(count, table.n))


def sample_inside_feasibility(
    table: ExpectedPayoffTable, count: int, margin: float, rng: Union[int, np.random.Generator]
) -> list:
    """Requirement vectors whose feasibility-region margin is >= ``margin``."""
    from ldfsched.geometry import in_feasibility_region

    rng = _as_rng(rng)
    pmat = np.array([[float(v) for v in table.p(d)] for d in table.decisions()])
    out = []
    for _ in range(200 * count):
        if len(out) == count:
            break
        hull_point = rng.dirichlet(np.ones(len(pmat))) @ pmat
        slack = margin + rng.uniform(0.0, 0.3)
        q = np.maximum(hull_point - slack, 0.0)
        if float(in_feasibility_region(table, tuple(q)).margin) >= margin:
            out.append(tuple(float(v) for v in q))
    if len(out) < count:
        raise RuntimeError("could not sample enough interior points; margin too demanding")
    return out


def sample_outside_feasibility(
    table: ExpectedPayoffTable, count: int, margin: float, rng: Union[int, np.random.Generator]
) -> list:
    """Requirement vectors separated from the feasibility region by >= ``margin``."""
    from ldfsched.geometry import in_feasibility_region

    rng = _as_rng(rng)
    pmat = np.array([[float(v) for v in table.p(d)] for d in table.decisions()])
    best = pmat[np.argmax(pmat.mean(axis=1))]
    out = []
    for _ in range(200 * count):
        if len(out) == count:
            break
        q = best + margin + rng.uniform(0.0, 0.3) + rng.uniform(0.0, 0.2, size=table.n)
        if float(in_feasibility_region(table, tuple(q)).margin) <= -margin:
            out.append(tuple(float(v) for v in q))
    if len(out) < count:
        raise RuntimeError("could not sample enough exterior points")
    return out
