"""Trajectory simulation and long-run metrics.

``simulate`` drives a (model, policy, requirement) triple through T periods:
each period the policy picks a decision from the current deficits, a payoff
vector is drawn, and the deficits advance.  Reports carry achieved long-run
payoffs, deficit extremes, per-user failure sequences (for 0/1-payoff
models) and the decision frequency histogram.

All randomness flows from the config seed through named substreams (one per
user for workloads, one for tie-breaks), so runs are bitwise reproducible and
different policies can be compared on coupled sample paths.  Rational inputs
(Fraction requirements, rational payoff tables) are propagated exactly
through the deficit arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from ldfsched.model import (
    Decision,
    PayoffModel,
    SingleResourceModel,
    TablePayoffModel,
    is_rational,
)
from ldfsched.policy import DeficitState, deficit_step, parse_policy, zero_state
from ldfsched.rngstreams import substream

__all__ = [
    "SimConfig",
    "SimReport",
    "simulate",
    "ExcessBalance",
    "excess_balance",
    "IfiUser",
    "IfiStats",
    "ifi_stats",
    "ProbeResult",
    "feasibility_probe",
]


@dataclass(frozen=True)
class SimConfig:
    periods: int
    seed: int = 0
    warmup: int = 0
    deficit_mode: str = "truncated"
    policy_spec: Optional[str] = None
    record_trajectory: bool = False

    def __post_init__(self):
        if not (self.periods > self.warmup >= 0):
            raise ValueError(
                f"need periods > warmup >= 0, got periods={self.periods} warmup={self.warmup}"
            )
        if self.deficit_mode not in ("truncated", "signed"):
            raise ValueError(f"unknown deficit mode {self.deficit_mode!r}")


@dataclass(frozen=True)
class SimReport:
    """Long-run outcome of one simulation run."""

    n: int
    periods: int
    warmup: int
    seed: int
    mode: str
    policy_name: str
    q: tuple
    achieved: tuple
    max_deficits: tuple
    final_deficits: tuple
    decision_counts: dict
    failure_periods: Optional[tuple] = None  # per user, post-warmup period indices
    trajectory: Optional[tuple] = None

    def to_json_dict(self) -> dict:
        def num(x):
            return str(x) if isinstance(x, Fraction) else (float(x) if not isinstance(x, int) else x)

        return {
            "n": self.n,
            "periods": self.periods,
            "warmup": self.warmup,
            "seed": self.seed,
            "mode": self.mode,
            "policy": self.policy_name,
            "q": [num(v) for v in self.q],
            "achieved": [num(v) for v in self.achieved],
            "max_deficits": [num(v) for v in self.max_deficits],
            "final_deficits": [num(v) for v in self.final_deficits],
            "decision_counts": {
                ",".join(map(str, d)): c for d, c in sorted(self.decision_counts.items())
            },
            "failures_per_user": None
            if self.failure_periods is None
            else [len(f) for f in self.failure_periods],
        }


def _mean(total, count: int):
    if is_rational(total):
        return Fraction(total, count)
    return total / count


def _table_draw(atoms, u: float) -> tuple:
    acc = 0.0
    for vec, prob in atoms:
        acc += float(prob)
        if u < acc:
            return vec
    return atoms[-1][0]


def simulate(model: PayoffModel, policy, q: Sequence, cfg: SimConfig) -> SimReport:
    """Run the deficit loop for ``cfg.periods`` periods and summarize it.

    ``policy`` is a policy object (``select(state) -> decision``) or a policy
    spec string; ``None`` falls back to ``cfg.policy_spec``.  Averages cover
    the post-warmup window.
    """
    n = model.n
    q = tuple(q)
    if len(q) != n:
        raise ValueError(f"requirement vector has length {len(q)}, expected {n}")
    if any(v < 0 for v in q):
        raise ValueError("requirements must be nonnegative")
    if policy is None:
        if cfg.policy_spec is None:
            raise ValueError("no policy given and the config carries no policy spec")
        policy = cfg.policy_spec
    if isinstance(policy, str):
        policy = parse_policy(policy, n)

    periods, warmup = cfg.periods, cfg.warmup
    unit_payoff = getattr(model, "is_unit_payoff", False)

    if isinstance(model, SingleResourceModel):
        workloads = np.empty((periods, n))
        for i, dist in enumerate(model.workloads):
            workloads[:, i] = dist.sample(substream(cfg.seed, "workloads", i), size=periods)
        delta = float(model.period_length)
    else:
        uniforms = substream(cfg.seed, "payoffs").random(periods)

    state = zero_state(n, cfg.deficit_mode)
    payoff_sums = [0] * n
    max_deficits = list(state.x)
    counts: dict[Decision, int] = {}
    failures: Optional[list[list[int]]] = [[] for _ in range(n)] if unit_payoff else None
    trajectory = [] if cfg.record_trajectory else None

    for t in range(1, periods + 1):
        d = policy.select(state)
        if isinstance(model, SingleResourceModel):
            row = workloads[t - 1]
            v = [0] * n
            total = 0.0
            for user in d:
                total += row[user]
                if total <= delta:
                    v[user] = 1
                else:
                    break
            v = tuple(v)
        else:
            v = _table_draw(model.dist[d], uniforms[t - 1])
        if t > warmup:
            counts[d] = counts.get(d, 0) + 1
            for i in range(n):
                payoff_sums[i] = payoff_sums[i] + v[i]
            if failures is not None:
                for i in range(n):
                    if v[i] == 0:
                        failures[i].append(t)
        state = deficit_step(state, q, v)
        for i in range(n):
            if state.x[i] > max_deficits[i]:
                max_deficits[i] = state.x[i]
        if trajectory is not None:
            trajectory.append(state.x)

    span = periods - warmup
    return SimReport(
        n=n,
        periods=periods,
        warmup=warmup,
        seed=cfg.seed,
        mode=cfg.deficit_mode,
        policy_name=getattr(policy, "name", type(policy).__name__),
        q=q,
        achieved=tuple(_mean(s, span) for s in payoff_sums),
        max_deficits=tuple(max_deficits),
        final_deficits=state.x,
        decision_counts=counts,
        failure_periods=None if failures is None else tuple(tuple(f) for f in failures),
        trajectory=None if trajectory is None else tuple(trajectory),
    )


@dataclass(frozen=True)
class ExcessBalance:
    """Weighted excess payoffs ``w_i * (achieved_i - q_i)`` and their spread."""

    values: tuple
    spread: object


def excess_balance(report: SimReport, q: Sequence, w: Sequence) -> ExcessBalance:
    if len(q) != report.n or len(w) != report.n:
        raise ValueError("q/w length does not match the report")
    values = tuple(wi * (pi - qi) for wi, pi, qi in zip(w, report.achieved, q))
    return ExcessBalance(values, max(values) - min(values))


@dataclass(frozen=True)
class IfiUser:
    failures: int
    sample_sd: float
    benchmark_sd: float
    sd_ratio: float


@dataclass(frozen=True)
class IfiStats:
    """Inter-failure-interval clustering statistics.

    Intervals are gaps between consecutive failure periods (support 1, 2, ...;
    back-to-back failures give interval 1).  The benchmark is the standard
    deviation of a geometric variable matching the user's failure rate; users
    with fewer than two intervals are absent.
    """

    per_user: dict


def ifi_stats(report: SimReport) -> IfiStats:
    if report.failure_periods is None:
        raise ValueError("inter-failure intervals need a 0/1-payoff model")
    out = {}
    for i, periods in enumerate(report.failure_periods):
        if len(periods) < 2:
            continue
        intervals = np.diff(np.asarray(periods))
        if len(intervals) < 2:
            continue  # a single interval has no sample SD (denominator n-1)
        sample_sd = float(np.std(intervals, ddof=1))
        p_hat = float(report.achieved[i])
        benchmark = float(np.sqrt(p_hat)) / (1.0 - p_hat)
        ratio = 0.0 if sample_sd == 0.0 else (float("inf") if benchmark == 0.0 else sample_sd / benchmark)
        out[i] = IfiUser(len(periods), sample_sd, benchmark, ratio)
    return IfiStats(out)


@dataclass(frozen=True)
class ProbeResult:
    """Empirical stationarity probe; a statistical surrogate, never a proof."""

    status: str  # "fulfilled" | "violated" | "inconclusive"
    achieved: tuple
    shortfalls: tuple
    trends: dict
    window: int
    blocks: int


def feasibility_probe(
    model: PayoffModel,
    policy,
    q: Sequence,
    cfg: SimConfig,
    window: Optional[int] = None,
    rate_tol: float = 0.01,
    confidence: float = 0.95,
) -> ProbeResult:
    """Probe whether the policy keeps deficits stable while meeting ``q``.

    Splits the post-warmup run into blocks of ``window`` periods and fits a
    least-squares line through each user's per-block deficit maxima.
    ``fulfilled``: no user shows a positive trend (one-sided test at the given
    confidence, and a fitted rise that is material against the block-maxima
    spread) and achieved payoffs cover ``q`` up to ``rate_tol``.
    ``violated``: some user trends upward while undershooting ``q``.
    Anything else is ``inconclusive``.
    """
    from scipy.stats import linregress

    if cfg.deficit_mode != "truncated":
        raise ValueError("the feasibility probe is defined for truncated deficits")
    cfg = SimConfig(
        periods=cfg.periods,
        seed=cfg.seed,
        warmup=cfg.warmup,
        deficit_mode=cfg.deficit_mode,
        policy_spec=cfg.policy_spec,
        record_trajectory=True,
    )
    report = simulate(model, policy, q, cfg)
    span = cfg.periods - cfg.warmup
    if window is None:
        window = max(span // 20, 10)
    blocks = span // window
    traj = np.asarray(
        [[float(v) for v in x] for x in report.trajectory[cfg.warmup:]], dtype=float
    )
    shortfalls = tuple(float(qi) - float(pi) for qi, pi in zip(q, report.achieved))

    trends = {}
    if blocks >= 4:
        idx = np.arange(blocks)
        for i in range(report.n):
            maxima = traj[: blocks * window, i].reshape(blocks, window).max(axis=1)
            spread = float(maxima.max() - maxima.min())
            if spread == 0.0:
                trends[i] = {"slope": 0.0, "p_value": 1.0, "rise": 0.0, "spread": 0.0, "up": False}
                continue
            fit = linregress(idx, maxima)
            one_sided = fit.pvalue / 2 if fit.slope > 0 else 1 - fit.pvalue / 2
            rise = float(fit.slope) * (blocks - 1)
            # Material upward trend: statistically significant and the fitted
            # rise accounts for at least half the spread of the block maxima.
            up = fit.slope > 0 and one_sided < (1 - confidence) and rise > 0.5 * spread
            trends[i] = {
                "slope": float(fit.slope),
                "p_value": float(one_sided),
                "rise": rise,
                "spread": spread,
                "up": bool(up),
            }

    if blocks < 4:
        status = "inconclusive"
    else:
        rising = [i for i, tr in trends.items() if tr["up"]]
        if not rising and all(s <= rate_tol for s in shortfalls):
            status = "fulfilled"
        elif any(shortfalls[i] > rate_tol for i in rising):
            status = "violated"
        else:
            status = "inconclusive"
    return ProbeResult(status, report.achieved, shortfalls, trends, window, blocks)
