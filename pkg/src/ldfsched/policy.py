"""Deficit dynamics and the prioritization policies.

Deficits track required-minus-achieved payoff per user, either truncated at
zero or signed (the signed form makes excess payoff visible to the policy).
Three deficit-driven policies are provided:

* weighted largest-deficit-first: sort users by weighted deficit;
* deficit-based max weight: maximize the deficit-weighted expected payoff
  over all n! decisions;
* hierarchical largest-deficit-first: order classes by aggregate weighted
  deficit, then users within each class.

All selectors are pure functions of (state, parameters, tie-break); with the
default lowest-index tie-break they are fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from ldfsched.model import Decision, ExpectedPayoffTable, enumerate_decisions, validate_decision
from ldfsched.rngstreams import substream

__all__ = [
    "DeficitState",
    "zero_state",
    "TieBreak",
    "deficit_step",
    "select_wldf",
    "select_mw",
    "select_hldf",
    "ClassPartition",
    "StaticPolicy",
    "WldfPolicy",
    "MwPolicy",
    "HldfPolicy",
    "parse_policy",
    "parse_number",
]


@dataclass(frozen=True)
class DeficitState:
    """Per-user deficits at the end of period ``t``.

    ``mode`` is ``"truncated"`` (deficits clamped at zero) or ``"signed"``.
    """

    mode: str
    x: tuple
    t: int = 0

    def __post_init__(self):
        if self.mode not in ("truncated", "signed"):
            raise ValueError(f"unknown deficit mode {self.mode!r}")
        object.__setattr__(self, "x", tuple(self.x))
        if self.mode == "truncated" and any(v < 0 for v in self.x):
            raise ValueError("truncated deficits must be nonnegative")

    @property
    def n(self) -> int:
        return len(self.x)


def zero_state(n: int, mode: str = "truncated") -> DeficitState:
    return DeficitState(mode, (0,) * n, 0)


class TieBreak:
    """Tie resolution rule, fixed for a run.

    ``lowest-index`` prefers the smaller user index (or, between classes, the
    earlier class).  ``random`` draws fresh tie keys from a dedicated
    substream on every selection, so a run is reproducible from the seed.
    """

    def __init__(self, rule: str = "lowest-index", seed: Optional[int] = None):
        if rule not in ("lowest-index", "random"):
            raise ValueError(f"unknown tie-break rule {rule!r}")
        if rule == "random" and seed is None:
            raise ValueError("random tie-break needs a seed")
        self.rule = rule
        self.seed = seed
        self._rng = substream(seed, "ties") if rule == "random" else None

    def keys(self, count: int) -> Sequence:
        """Secondary sort keys: position index, or fresh random draws."""
        if self.rule == "lowest-index":
            return range(count)
        return self._rng.random(count)

    def pick(self, count: int) -> int:
        """Index of the winner among ``count`` tied candidates."""
        if self.rule == "lowest-index":
            return 0
        return int(self._rng.integers(count))

    def __repr__(self):
        if self.rule == "random":
            return f"TieBreak(random, seed={self.seed})"
        return "TieBreak(lowest-index)"


def _check_lengths(state: DeficitState, vec: Sequence, what: str):
    if len(vec) != state.n:
        raise ValueError(f"{what} has length {len(vec)}, expected {state.n}")


def deficit_step(state: DeficitState, q: Sequence, v: Sequence) -> DeficitState:
    """Advance one period: deficit grows by the requirement, shrinks by the payoff."""
    _check_lengths(state, q, "requirement vector")
    _check_lengths(state, v, "payoff vector")
    if any(p < 0 for p in v):
        raise ValueError("payoffs must be nonnegative")
    if state.mode == "truncated":
        x = tuple(max(xi + qi - vi, 0) for xi, qi, vi in zip(state.x, q, v))
    else:
        x = tuple(xi + qi - vi for xi, qi, vi in zip(state.x, q, v))
    return DeficitState(state.mode, x, state.t + 1)


def _check_weights(w: Sequence, n: int) -> tuple:
    w = tuple(w)
    if len(w) != n:
        raise ValueError(f"weight vector has length {len(w)}, expected {n}")
    if any(not wi > 0 for wi in w):
        raise ValueError("weights must be strictly positive")
    return w


def select_wldf(state: DeficitState, w: Sequence, tie: TieBreak) -> Decision:
    """Sort users by weighted deficit, largest first."""
    w = _check_weights(w, state.n)
    keys = tie.keys(state.n)
    order = sorted(range(state.n), key=lambda i: (-(w[i] * state.x[i]), keys[i]))
    return tuple(order)


def select_mw(state: DeficitState, table: ExpectedPayoffTable, tie: TieBreak) -> Decision:
    """Pick the decision maximizing the deficit-weighted expected payoff.

    Enumerates all n! decisions in lexicographic order; exact ties go to the
    tie-break over that candidate order.
    """
    if table.n != state.n:
        raise ValueError(f"table is for {table.n} users, state has {state.n}")
    best = None
    ties: list[Decision] = []
    for d in enumerate_decisions(state.n):
        score = sum(xi * pi for xi, pi in zip(state.x, table.p(d)))
        if best is None or score > best:
            best = score
            ties = [d]
        elif score == best:
            ties.append(d)
    return ties[tie.pick(len(ties))]


ClassPartition = tuple[tuple[int, ...], ...]


def _check_partition(classes: Sequence[Iterable[int]], n: int) -> ClassPartition:
    canon = tuple(tuple(sorted(int(u) for u in cls)) for cls in classes)
    seen: list[int] = []
    for cls in canon:
        if not cls:
            raise ValueError("classes must be nonempty")
        seen.extend(cls)
    if sorted(seen) != list(range(n)):
        raise ValueError(f"classes {canon} are not a disjoint cover of 0..{n - 1}")
    return canon


def select_hldf(
    state: DeficitState, classes: Sequence[Iterable[int]], w: Sequence, tie: TieBreak
) -> Decision:
    """Order classes by aggregate weighted deficit, then users within each class."""
    w = _check_weights(w, state.n)
    canon = _check_partition(classes, state.n)
    class_keys = tie.keys(len(canon))
    aggregates = [sum(w[i] * state.x[i] for i in cls) for cls in canon]
    class_order = sorted(range(len(canon)), key=lambda c: (-aggregates[c], class_keys[c]))
    order: list[int] = []
    for c in class_order:
        cls = canon[c]
        user_keys = tie.keys(state.n)
        order.extend(sorted(cls, key=lambda i: (-(w[i] * state.x[i]), user_keys[i])))
    return tuple(order)


# ---------------------------------------------------------------------------
# Policy objects and the CLI policy-spec mini-language
# ---------------------------------------------------------------------------

@dataclass
class StaticPolicy:
    """Always pick the same decision (a baseline, not deficit-driven)."""

    decision: Decision

    def select(self, state: DeficitState) -> Decision:
        return self.decision

    @property
    def name(self) -> str:
        return "static:" + ",".join(map(str, self.decision))


@dataclass
class WldfPolicy:
    w: tuple
    tie: TieBreak = field(default_factory=TieBreak)

    def select(self, state: DeficitState) -> Decision:
        return select_wldf(state, self.w, self.tie)

    @property
    def name(self) -> str:
        return "wldf:" + ",".join(str(wi) for wi in self.w)


@dataclass
class MwPolicy:
    table: ExpectedPayoffTable
    tie: TieBreak = field(default_factory=TieBreak)

    def select(self, state: DeficitState) -> Decision:
        return select_mw(state, self.table, self.tie)

    @property
    def name(self) -> str:
        return "mw"


@dataclass
class HldfPolicy:
    classes: ClassPartition
    w: tuple
    tie: TieBreak = field(default_factory=TieBreak)

    def select(self, state: DeficitState) -> Decision:
        return select_hldf(state, self.classes, self.w, self.tie)

    @property
    def name(self) -> str:
        cls = "|".join(",".join(map(str, c)) for c in self.classes)
        return f"hldf:[{cls}]:" + ",".join(str(wi) for wi in self.w)


def parse_number(text: str) -> Union[int, float, Fraction]:
    """Parse a numeric literal, keeping rationals exact ("3", "1/2") and
    reading decimals as floats."""
    text = text.strip()
    if "/" in text:
        return Fraction(text)
    if "." in text or "e" in text or "E" in text:
        return float(text)
    return int(text)


def _parse_weights(text: str, n: int) -> tuple:
    w = tuple(parse_number(p) for p in text.split(","))
    return _check_weights(w, n)


def parse_policy(
    spec: str,
    n: int,
    table: Optional[ExpectedPayoffTable] = None,
    tie: Optional[TieBreak] = None,
):
    """Build a policy from its spec string.

    Forms: ``mw`` | ``wldf:w1,w2,...`` | ``hldf:[0,1|2]:w1,w2,...`` |
    ``static:d1,d2,...``.  ``mw`` needs an expected-payoff table.
    """
    tie = tie or TieBreak()
    spec = spec.strip()
    if spec == "mw":
        if table is None:
            raise ValueError("the max-weight policy needs an expected-payoff table")
        return MwPolicy(table, tie)
    if spec.startswith("wldf:"):
        return WldfPolicy(_parse_weights(spec[len("wldf:"):], n), tie)
    if spec.startswith("hldf:"):
        rest = spec[len("hldf:"):]
        if not rest.startswith("["):
            raise ValueError(f"malformed hierarchical policy spec {spec!r}")
        close = rest.index("]")
        classes = tuple(
            tuple(int(u) for u in part.split(","))
            for part in rest[1:close].split("|")
        )
        weights = _parse_weights(rest[close + 1:].lstrip(":"), n)
        return HldfPolicy(_check_partition(classes, n), weights, tie)
    if spec.startswith("static:"):
        d = tuple(int(u) for u in spec[len("static:"):].split(","))
        return StaticPolicy(validate_decision(d, n))
    raise ValueError(f"unknown policy spec {spec!r}")
