"""Command-line front end.

Subcommands:

* ``check``     -- structural property report for a model file.
* ``region``    -- region membership / payoff-ratio verdicts for a model.
* ``simulate``  -- run one experiment config; writes CSV and JSON reports.
* ``reproduce`` -- re-run the packaged reference experiments and check their
                  expected values; nonzero exit on any tolerance failure.

Exit codes: 0 success; 1 requested properties do not hold (``check``);
2 config/schema error; 3 capacity error; 4 reference-check failure.

The default seed is 0, overridable by the ``LDFSCHED_SEED`` environment
variable; an explicit ``--seed`` flag wins over both.  CLI flags override
experiment-file fields.  All CSV output is timestamp-free (timestamps live in
the JSON metadata), so reruns with one seed are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from ldfsched.errors import CapacityError, ConfigError, DegenerateError
from ldfsched.fileio import (
    SIM_CSV_HEADER,
    ExperimentConfig,
    load_experiment,
    load_model,
    sim_report_rows,
    to_jsonable,
    write_csv,
)
from ldfsched.model import (
    Estimation,
    EstimationModeError,
    Gamma,
    SingleResourceModel,
    TablePayoffModel,
    check_exchangeable,
    check_monotonicity,
    check_subset_payoff_equivalence,
    expected_payoffs,
)
from ldfsched.policy import parse_policy
from ldfsched.sim import SimConfig, excess_balance, ifi_stats, simulate

__all__ = ["main"]

ENV_SEED = "LDFSCHED_SEED"

#: Reference values checked by `reproduce`: long-run completion ratios and
#: failure-clustering SD ratios for the packaged three-user contention run,
#: plus the exact averages of the two-user deterministic switch example.
REFERENCE_Q = (0.8, 0.6, 0.4)
REFERENCE_COMPLETIONS = {(1, 1, 1): (0.85, 0.65, 0.45), (10, 1, 1): (0.809, 0.69, 0.49)}
REFERENCE_SPREAD_TOL = {(1, 1, 1): 0.02, (10, 1, 1): 0.03}
REFERENCE_SD_RATIOS = {(1, 1, 1): (0.88, 0.77, 0.92), (10, 1, 1): (0.39, 0.97, 1.07)}
COMPLETION_TOL = 0.02
SD_RATIO_TOL = 0.10
SWITCH_EXPECTED = {"truncated": (0.5, 0.5), "signed": (0.3, 0.7)}
SWITCH_TOL = 1e-3


def _default_seed(args_seed):
    if args_seed is not None:
        return args_seed
    env = os.environ.get(ENV_SEED)
    if env is not None:
        try:
            return int(env)
        except ValueError as err:
            raise ConfigError(f"{ENV_SEED} must be an integer, got {env!r}") from err
    return 0


def _estimate(model, estimation_obj, seed, default_samples=100_000):
    """Expected-payoff table for a model, honoring an estimation override."""
    if estimation_obj is not None:
        kind = estimation_obj.get("kind", "exact")
        if kind == "exact":
            est = Estimation.exact()
        else:
            est = Estimation.monte_carlo(
                estimation_obj.get("samples", default_samples), estimation_obj.get("seed", seed)
            )
        return expected_payoffs(model, est)
    try:
        return expected_payoffs(model, Estimation.exact())
    except EstimationModeError:
        return expected_payoffs(model, Estimation.monte_carlo(default_samples, seed))


def _parse_vector(text: str) -> tuple:
    from ldfsched.policy import parse_number

    return tuple(parse_number(p) for p in text.split(","))


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def cmd_check(args) -> int:
    model = load_model(args.model)
    seed = _default_seed(args.seed)
    estimation = None
    if args.estimation == "monte-carlo":
        estimation = {"kind": "monte-carlo", "samples": args.samples, "seed": seed}
    elif args.estimation == "exact":
        estimation = {"kind": "exact"}
    table = _estimate(model, estimation, seed, default_samples=args.samples)

    wanted = args.properties.split(",")
    known = {"monotonicity", "equivalence", "exchangeability"}
    unknown = set(wanted) - known
    if unknown:
        raise ConfigError(f"unknown properties {sorted(unknown)} (known: {sorted(known)})")

    results = {}
    if "monotonicity" in wanted:
        results["monotonicity"] = check_monotonicity(table)
    if "equivalence" in wanted:
        results["equivalence"] = check_subset_payoff_equivalence(table)
    if "exchangeability" in wanted:
        results["exchangeability"] = check_exchangeable(table, range(model.n))

    all_hold = True
    for name, verdict in results.items():
        line = f"{name}: {'holds' if verdict.holds else 'fails'}"
        if not verdict.holds and verdict.witness is not None:
            line += f"  (witness: {verdict.witness})"
        print(line)
        all_hold &= verdict.holds
    if args.json:
        payload = {
            name: {
                "holds": v.holds,
                "witness": to_jsonable(v.witness.__dict__) if v.witness else None,
                "certificate": to_jsonable(v.certificate),
            }
            for name, v in results.items()
        }
        payload["provenance"] = {
            "kind": table.provenance.kind,
            "samples": table.provenance.samples,
            "seed": table.provenance.seed,
        }
        Path(args.json).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0 if all_hold else 1


# ---------------------------------------------------------------------------
# region
# ---------------------------------------------------------------------------

def cmd_region(args) -> int:
    from ldfsched.geometry import (
        efficiency_lower_bound,
        in_carved_region,
        in_feasibility_region,
        in_hull_dominant,
        in_ldf_inner_bound,
        subset_payoff_ratio,
    )

    model = load_model(args.model)
    seed = _default_seed(args.seed)
    table = _estimate(model, None, seed, default_samples=args.samples)
    subset = tuple(int(u) for u in args.subset.split(",")) if args.subset else None
    q = _parse_vector(args.q) if args.q else None

    which = args.which
    if which in ("feasibility", "dominant", "inner-bound", "carved") and q is None:
        raise ConfigError(f"--q is required for --which {which}")
    if which == "feasibility":
        report = in_feasibility_region(table, q, subset).as_report()
    elif which == "dominant":
        report = in_hull_dominant(table, q, subset).as_report()
    elif which == "inner-bound":
        report = in_ldf_inner_bound(table, q).as_report()
    elif which == "carved":
        report = in_carved_region(table, q).as_report()
    elif which == "ratio":
        members = subset if subset is not None else range(model.n)
        report = subset_payoff_ratio(table, members).as_report()
    else:
        report = efficiency_lower_bound(table).as_report()

    text = json.dumps(to_jsonable(report), indent=2, sort_keys=True)
    print(text)
    if args.json:
        Path(args.json).write_text(text + "\n")
    if args.csv:
        keys = sorted(report)
        write_csv(args.csv, keys, [[json.dumps(to_jsonable(report[k])) for k in keys]])
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _resolve_policy(cfg: ExperimentConfig, seed: int):
    model = cfg.model
    table = None
    if cfg.policy.strip() == "mw":
        table = _estimate(model, cfg.estimation, seed)
    return parse_policy(cfg.policy, model.n, table=table)


def _policy_weights(policy, n: int):
    return tuple(getattr(policy, "w", (1,) * n))


def cmd_simulate(args) -> int:
    cfg = load_experiment(args.config)
    if args.periods is not None:
        cfg.periods = args.periods
    if args.warmup is not None:
        cfg.warmup = args.warmup
    if args.policy is not None:
        cfg.policy = args.policy
    if args.deficit_mode is not None:
        cfg.deficit_mode = args.deficit_mode
    seed = args.seed if args.seed is not None else _default_seed(cfg.seed)

    policy = _resolve_policy(cfg, seed)
    sim_cfg = SimConfig(
        periods=cfg.periods,
        seed=seed,
        warmup=cfg.warmup,
        deficit_mode=cfg.deficit_mode,
        policy_spec=cfg.policy,
        record_trajectory=cfg.record_trajectory,
    )
    report = simulate(cfg.model, policy, cfg.q, sim_cfg)
    w = cfg.w if cfg.w is not None else _policy_weights(policy, cfg.model.n)
    balance = excess_balance(report, cfg.q, w)
    ifi = None
    if report.failure_periods is not None:
        ifi = ifi_stats(report)

    print(f"policy: {report.policy_name}   periods: {report.periods}   seed: {seed}   mode: {report.mode}")
    print(f"{'user':>4} {'q':>8} {'p_hat':>10} {'excess':>10} {'sd_ratio':>9} {'max_deficit':>12}")
    for i in range(report.n):
        sd = ifi.per_user[i].sd_ratio if ifi and i in ifi.per_user else None
        print(
            f"{i:>4} {float(cfg.q[i]):>8.4f} {float(report.achieved[i]):>10.4f} "
            f"{float(balance.values[i]):>10.4f} "
            + (f"{sd:>9.3f} " if sd is not None else f"{'-':>9} ")
            + f"{float(report.max_deficits[i]):>12.4f}"
        )
    print(f"excess spread (max-min): {float(balance.spread):.5f}")

    rows = sim_report_rows(report, cfg.q, w, ifi, run_id=args.run_id)
    out_csv, out_json = cfg.out_csv, cfg.out_json
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        out_csv = out_csv or str(outdir / "report.csv")
        out_json = out_json or str(outdir / "report.json")
    if out_csv:
        write_csv(out_csv, SIM_CSV_HEADER, rows)
        print(f"wrote {out_csv}")
    if out_json:
        payload = report.to_json_dict()
        payload["excess"] = [to_jsonable(float(v)) for v in balance.values]
        payload["excess_spread"] = float(balance.spread)
        if ifi is not None:
            payload["sd_ratios"] = {
                str(i): u.sd_ratio for i, u in sorted(ifi.per_user.items())
            }
        Path(out_json).write_text(json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n")
        print(f"wrote {out_json}")
    return 0


# ---------------------------------------------------------------------------
# reproduce
# ---------------------------------------------------------------------------

def _reference_model() -> SingleResourceModel:
    return SingleResourceModel(3, 10.0, (Gamma(12, 0.5), Gamma(4, 1), Gamma(10, 0.1)))


def cmd_reproduce(args) -> int:
    from ldfsched.oracle import replay_two_user_switch

    seed = _default_seed(args.seed)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    checks = []

    def record(name, actual, expected, tol):
        passed = abs(actual - expected) <= tol
        checks.append(
            {"check": name, "actual": actual, "expected": expected, "tol": tol, "passed": passed}
        )
        mark = "PASS" if passed else "FAIL"
        print(f"{mark} {name}: {actual:.4f} (expected {expected} +/- {tol})")

    def record_bool(name, passed, detail):
        checks.append(
            {"check": name, "actual": detail, "expected": "true", "tol": 0, "passed": bool(passed)}
        )
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")

    t0 = time.perf_counter()
    replay = replay_two_user_switch(10_000)
    replay_runtime = time.perf_counter() - t0
    for mode, track in (("truncated", replay.truncated), ("signed", replay.signed)):
        for i in range(2):
            record(
                f"two-user-switch/{mode}/p_hat[{i}]",
                float(track.achieved[i]),
                SWITCH_EXPECTED[mode][i],
                SWITCH_TOL,
            )
    print(f"     two-user replay runtime: {replay_runtime:.3f}s")

    model = _reference_model()
    run_rows = []
    sd_by_w = {}
    runtimes = {}
    for w in ((1, 1, 1), (10, 1, 1)):
        t0 = time.perf_counter()
        report = simulate(
            model,
            parse_policy("wldf:" + ",".join(map(str, w)), 3),
            REFERENCE_Q,
            SimConfig(periods=30_000, seed=seed, deficit_mode="signed"),
        )
        runtimes[w] = time.perf_counter() - t0
        balance = excess_balance(report, REFERENCE_Q, w)
        ifi = ifi_stats(report)
        wname = ",".join(map(str, w))
        for i in range(3):
            record(
                f"completion-ratios/w={wname}/p_hat[{i}]",
                float(report.achieved[i]),
                REFERENCE_COMPLETIONS[w][i],
                COMPLETION_TOL,
            )
        record(
            f"completion-ratios/w={wname}/excess-spread",
            float(balance.spread),
            0.0,
            REFERENCE_SPREAD_TOL[w],
        )
        ratios = tuple(ifi.per_user[i].sd_ratio for i in range(3))
        sd_by_w[w] = ratios
        for i in range(3):
            record(f"failure-clustering/w={wname}/sd_ratio[{i}]", ratios[i], REFERENCE_SD_RATIOS[w][i], SD_RATIO_TOL)
        run_rows.extend(sim_report_rows(report, REFERENCE_Q, w, ifi, run_id=f"w={wname}"))
        print(f"     run w=({wname}) runtime: {runtimes[w]:.3f}s")

    record_bool(
        "failure-clustering/weight-raise-lowers-user0",
        sd_by_w[(10, 1, 1)][0] < sd_by_w[(1, 1, 1)][0],
        f"{sd_by_w[(10, 1, 1)][0]:.3f} < {sd_by_w[(1, 1, 1)][0]:.3f}",
    )
    for i in (1, 2):
        record_bool(
            f"failure-clustering/weight-raise-keeps-user{i}",
            sd_by_w[(10, 1, 1)][i] >= sd_by_w[(1, 1, 1)][i],
            f"{sd_by_w[(10, 1, 1)][i]:.3f} >= {sd_by_w[(1, 1, 1)][i]:.3f}",
        )

    write_csv(
        outdir / "reference_checks.csv",
        ["check", "actual", "expected", "tol", "passed"],
        [
            [c["check"], repr(c["actual"]) if isinstance(c["actual"], float) else c["actual"],
             repr(c["expected"]) if isinstance(c["expected"], float) else c["expected"],
             repr(float(c["tol"])), int(c["passed"])]
            for c in checks
        ],
    )
    write_csv(outdir / "reference_runs.csv", SIM_CSV_HEADER, run_rows)
    all_passed = all(c["passed"] for c in checks)
    summary = {
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "seed": seed,
        "passed": all_passed,
        "checks": to_jsonable(checks),
        "runtimes_s": {
            "two_user_replay": replay_runtime,
            **{f"w={','.join(map(str, w))}": rt for w, rt in runtimes.items()},
        },
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{'all checks passed' if all_passed else 'SOME CHECKS FAILED'}; reports in {outdir}")
    return 0 if all_passed else 4


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldfsched",
        description="Deficit-driven prioritization policies and feasibility-region analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="structural property report for a model file")
    p.add_argument("model", help="model description file (JSON)")
    p.add_argument("--estimation", choices=["exact", "monte-carlo"], default=None,
                   help="expected-payoff estimation (default: exact when supported)")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--properties", default="monotonicity,equivalence,exchangeability")
    p.add_argument("--json", default=None, help="write the verdicts to this JSON file")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("region", help="region membership and payoff-ratio verdicts")
    p.add_argument("model")
    p.add_argument("--q", default=None, help="requirement vector, e.g. 0.1,0.5")
    p.add_argument(
        "--which",
        required=True,
        choices=["feasibility", "dominant", "inner-bound", "carved", "ratio", "efficiency"],
    )
    p.add_argument("--subset", default=None, help="user subset, e.g. 0,2")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--json", default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("simulate", help="run an experiment config")
    p.add_argument("config", help="experiment config file (JSON)")
    p.add_argument("--out", default=None, help="output directory for report.csv/report.json")
    p.add_argument("--seed", type=int, default=None, help="overrides config seed and env default")
    p.add_argument("--periods", type=int, default=None)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--policy", default=None)
    p.add_argument("--deficit-mode", choices=["truncated", "signed"], default=None)
    p.add_argument("--run-id", default="0")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", help="re-run the packaged reference experiments")
    p.add_argument("--outdir", default="reproduction")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except CapacityError as err:
        print(f"capacity error: {err}", file=sys.stderr)
        return 3
    except (DegenerateError, EstimationModeError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
