"""Small dense simplex kernel with exact-rational and float paths.

Solves ``maximize c.z`` subject to rows ``a.z {<=,=,>=} b`` with ``z >= 0``
(selected variables may be declared free).  The implementation is a two-phase
tableau simplex with Bland's rule, so it terminates deterministically; the
exact path runs on Fractions, the float path uses a 1e-9 pivot tolerance and
falls back to the exact path if it stalls.  Dual multipliers are read off the
final tableau, one per row, normalized so that ``value == sum(duals[i] * b[i])``
at an optimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from ldfsched.model import is_rational

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-8

__all__ = ["LinearProgram", "LpSolution", "lp_solve", "PIVOT_TOL", "FEAS_TOL"]

_REL = ("<=", "=", ">=")


@dataclass(frozen=True)
class LinearProgram:
    """``maximize objective . z`` subject to ``rows``; ``z >= 0`` unless free."""

    objective: tuple
    rows: tuple
    free: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "objective", tuple(self.objective))
        rows = []
        for coeffs, rel, rhs in self.rows:
            coeffs = tuple(coeffs)
            if rel not in _REL:
                raise ValueError(f"unknown relation {rel!r}")
            if len(coeffs) != len(self.objective):
                raise ValueError("constraint row length does not match objective length")
            rows.append((coeffs, rel, rhs))
        object.__setattr__(self, "rows", tuple(rows))
        object.__setattr__(self, "free", frozenset(self.free))
        for x in self.objective + tuple(v for r in rows for v in r[0]) + tuple(r[2] for r in rows):
            if not is_rational(x) and not np.isfinite(float(x)):
                raise ValueError("linear program entries must be finite")

    @property
    def is_rational(self) -> bool:
        return all(
            is_rational(x)
            for x in self.objective
            + tuple(v for r in self.rows for v in r[0])
            + tuple(r[2] for r in self.rows)
        )


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    z: Optional[tuple] = None
    value: object = None
    slacks: Optional[tuple] = None
    duals: Optional[tuple] = None
    path: str = "float"


class _Stall(Exception):
    """Float-path simplex failed to make progress (cycling or lost precision)."""


class _Tableau:
    """Dense two-phase tableau.  Cost rows live below the constraint rows so
    pivots update them with the same rank-1 elimination."""

    def __init__(self, lp: LinearProgram, exact: bool):
        self.exact = exact
        if exact:
            conv = Fraction
            self.zero, self.one = Fraction(0), Fraction(1)
            self.tol = Fraction(0)
            dtype = object
        else:
            conv = float
            self.zero, self.one = 0.0, 1.0
            self.tol = PIVOT_TOL
            dtype = np.float64
        zero, one = self.zero, self.one

        nv = len(lp.objective)
        col_of = []
        ncols = 0
        for j in range(nv):
            if j in lp.free:
                col_of.append((ncols, ncols + 1))
                ncols += 2
            else:
                col_of.append((ncols, None))
                ncols += 1

        # Rewrite ">= b" as "<= -b", then make every rhs nonnegative.  "<="
        # rows take a slack (initial basis); ">=" and "=" rows take an
        # artificial.  `flips` maps tableau duals back to the original rows.
        rows = []
        flips = []
        for coeffs, rel, rhs in lp.rows:
            coeffs = [conv(c) for c in coeffs]
            rhs = conv(rhs)
            flip = one
            if rel == ">=":
                coeffs = [-c for c in coeffs]
                rhs = -rhs
                rel = "<="
                flip = -flip
            if rhs < zero:
                coeffs = [-c for c in coeffs]
                rhs = -rhs
                rel = {"<=": ">=", ">=": "<=", "=": "="}[rel]
                flip = -flip
            rows.append((coeffs, rel, rhs))
            flips.append(flip)
        m = len(rows)

        slack_col = [None] * m
        art_col = [None] * m
        for i, (_, rel, _) in enumerate(rows):
            if rel in ("<=", ">="):
                slack_col[i] = ncols
                ncols += 1
        for i, (_, rel, _) in enumerate(rows):
            if rel in (">=", "="):
                art_col[i] = ncols
                ncols += 1
        artificial = frozenset(a for a in art_col if a is not None)

        nrows = m + (2 if artificial else 1)
        t = np.zeros((nrows, ncols + 1), dtype=dtype)
        if exact:
            t[:, :] = zero
        for i, (coeffs, rel, rhs) in enumerate(rows):
            for j, c in enumerate(coeffs):
                plus, minus = col_of[j]
                t[i, plus] = t[i, plus] + c
                if minus is not None:
                    t[i, minus] = t[i, minus] - c
            if slack_col[i] is not None:
                t[i, slack_col[i]] = one if rel == "<=" else -one
            if art_col[i] is not None:
                t[i, art_col[i]] = one
            t[i, -1] = rhs

        # Phase-2 reduced costs (valid for the slack/artificial start basis).
        for j in range(nv):
            plus, minus = col_of[j]
            t[m, plus] = t[m, plus] + conv(lp.objective[j])
            if minus is not None:
                t[m, minus] = t[m, minus] - conv(lp.objective[j])
        # Phase-1 reduced costs for "maximize -(sum of artificials)".
        if artificial:
            for i in range(m):
                if art_col[i] is not None:
                    t[m + 1] = t[m + 1] + t[i]
            for a in artificial:
                t[m + 1, a] = zero

        self.lp = lp
        self.nv = nv
        self.col_of = col_of
        self.m = m
        self.ncols = ncols
        self.t = t
        self.flips = flips
        self.slack_col = slack_col
        self.art_col = art_col
        self.artificial = artificial
        self.basis = [art_col[i] if art_col[i] is not None else slack_col[i] for i in range(m)]
        self.basis_arr = np.array(self.basis)
        # Bland's rule cannot cycle, so the exact path always terminates; the
        # cap is a safety net there and a stall detector on the float path.
        self.max_iters = 1_000_000 if exact else 60 * (m + ncols) + 200
        self.iters = 0

    def pivot(self, row: int, col: int):
        t = self.t
        piv = t[row, col]
        if not self.exact and not np.isfinite(float(piv)):
            raise _Stall("non-finite pivot")
        t[row] = t[row] / piv
        colv = t[:, col].copy()
        colv[row] = self.zero
        t -= np.outer(colv, t[row])
        t[:, col] = self.zero
        t[row, col] = self.one
        self.basis[row] = col
        self.basis_arr[row] = col

    def _entering(self, cost_row: int, barred) -> Optional[int]:
        r = self.t[cost_row]
        if self.exact:
            for j in range(self.ncols):
                if j not in barred and r[j] > self.tol:
                    return j
            return None
        elig = np.nonzero(r[: self.ncols] > self.tol)[0]
        for j in elig:
            if j not in barred:
                return int(j)
        return None

    def _leaving(self, col: int) -> Optional[int]:
        t, m = self.t, self.m
        if self.exact:
            leave, best = None, None
            for i in range(m):
                a = t[i, col]
                if a > self.tol:
                    ratio = t[i, -1] / a
                    if best is None or ratio < best or (
                        ratio == best and self.basis[i] < self.basis[leave]
                    ):
                        best, leave = ratio, i
            return leave
        column = t[:m, col]
        pos = column > self.tol
        if not pos.any():
            return None
        ratios = np.full(m, np.inf)
        ratios[pos] = t[:m, -1][pos] / column[pos]
        best = ratios.min()
        cand = np.nonzero(ratios == best)[0]
        return int(cand[np.argmin(self.basis_arr[cand])])

    def run_phase(self, cost_row: int, barred) -> Optional[int]:
        """Pivot to optimality; returns an entering column on unboundedness."""
        while True:
            self.iters += 1
            if self.iters > self.max_iters:
                raise _Stall("simplex iteration cap exceeded")
            enter = self._entering(cost_row, barred)
            if enter is None:
                return None
            leave = self._leaving(enter)
            if leave is None:
                return enter
            self.pivot(leave, enter)

    def rebuild_phase2_costs(self):
        """Recompute reduced costs r = c - c_B . T against the current basis."""
        t, m = self.t, self.m
        conv = Fraction if self.exact else float
        row = np.zeros(self.ncols + 1, dtype=object if self.exact else np.float64)
        if self.exact:
            row[:] = self.zero
        for j in range(self.nv):
            plus, minus = self.col_of[j]
            row[plus] = row[plus] + conv(self.lp.objective[j])
            if minus is not None:
                row[minus] = row[minus] - conv(self.lp.objective[j])
        for i, b in enumerate(self.basis):
            cb = row[b]
            if cb != self.zero:
                row = row - cb * t[i]
        for b in self.basis:
            row[b] = self.zero
        t[m] = row

    def solve(self):
        m, t = self.m, self.t
        if self.artificial:
            unb = self.run_phase(m + 1, barred=frozenset())
            if unb is not None:
                raise _Stall("phase-1 column with no leaving row")
            art_sum = self.zero
            for i in range(m):
                if self.basis[i] in self.artificial:
                    art_sum = art_sum + t[i, -1]
            if art_sum > (self.zero if self.exact else 1e-7):
                return "infeasible", None, None
            # Drive 0-value basic artificials out where a real column allows it.
            for i in range(m):
                if self.basis[i] in self.artificial:
                    for j in range(self.ncols):
                        if j not in self.artificial and abs(t[i, j]) > self.tol:
                            self.pivot(i, j)
                            break
            self.rebuild_phase2_costs()
        unb = self.run_phase(m, barred=self.artificial)
        if unb is not None:
            return "unbounded", None, None

        x = [self.zero] * self.ncols
        for i in range(m):
            x[self.basis[i]] = t[i, -1]
        z = []
        for j in range(self.nv):
            plus, minus = self.col_of[j]
            z.append(x[plus] - x[minus] if minus is not None else x[plus])
        duals = []
        for i in range(m):
            ref = self.art_col[i] if self.art_col[i] is not None else self.slack_col[i]
            duals.append(-t[m, ref] * self.flips[i])
        return "optimal", z, duals


def _finish(lp: LinearProgram, status, z, duals, path: str) -> LpSolution:
    if status != "optimal":
        return LpSolution(status=status, path=path)
    z = tuple(z)
    value = sum(c * x for c, x in zip(lp.objective, z))
    slacks = []
    for coeffs, rel, rhs in lp.rows:
        lhs = sum(a * x for a, x in zip(coeffs, z))
        slacks.append(lhs - rhs if rel == ">=" else rhs - lhs)
    return LpSolution(
        status="optimal", z=z, value=value, slacks=tuple(slacks), duals=tuple(duals), path=path
    )


def lp_solve(lp: LinearProgram, exact: Optional[bool] = None) -> LpSolution:
    """Solve the program; ``exact=None`` picks the rational path for rational input.

    The float path retries on the exact path when it stalls numerically; the
    ``path`` field of the solution records which path produced the answer.
    """
    if exact is None:
        exact = lp.is_rational
    if exact:
        try:
            status, z, duals = _Tableau(lp, exact=True).solve()
        except _Stall as err:  # safety-net cap; should be unreachable
            raise RuntimeError(f"exact simplex did not terminate: {err}") from err
        return _finish(lp, status, z, duals, "exact")
    try:
        status, z, duals = _Tableau(lp, exact=False).solve()
        return _finish(lp, status, z, duals, "float")
    except _Stall:
        status, z, duals = _Tableau(lp, exact=True).solve()
        sol = _finish(lp, status, z, duals, "float->exact")
        if sol.status != "optimal":
            return sol
        return LpSolution(
            status="optimal",
            z=tuple(float(v) for v in sol.z),
            value=float(sol.value),
            slacks=tuple(float(s) for s in sol.slacks),
            duals=tuple(float(y) for y in sol.duals),
            path="float->exact",
        )
