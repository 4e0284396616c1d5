"""Model and experiment description files, plus CSV/JSON report writers.

Model files are JSON: either an explicit payoff table,

    {"type": "table", "n": 2,
     "dist": {"0,1": [{"value": [1, 0], "prob": 1}],
              "1,0": [{"value": [0, 1], "prob": 1}]}}

or a single-resource model,

    {"type": "single_resource", "n": 3, "delta": 10,
     "workloads": [{"kind": "gamma", "shape": 12, "scale": 0.5},
                   {"kind": "exponential", "rate": 0.25},
                   {"kind": "deterministic", "value": 4}]}

Numeric fields accept JSON numbers or rational strings such as "3/10" (the
exact-arithmetic path).  Experiment files bundle a model (inline or by path),
a policy spec, requirements and simulation settings; unknown keys are
rejected.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence, Union

from ldfsched.errors import ConfigError
from ldfsched.model import (
    Deterministic,
    Exponential,
    Gamma,
    PayoffModel,
    SingleResourceModel,
    TablePayoffModel,
)
from ldfsched.policy import parse_number

__all__ = [
    "load_model",
    "model_to_dict",
    "load_experiment",
    "ExperimentConfig",
    "to_jsonable",
    "write_csv",
    "sim_report_rows",
    "SIM_CSV_HEADER",
]


def _num(value, where: str):
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        try:
            return parse_number(value)
        except (ValueError, ZeroDivisionError) as err:
            raise ConfigError(f"{where}: bad numeric literal {value!r}") from err
    raise ConfigError(f"{where}: expected a number, got {type(value).__name__}")


def _decision_key(key: str, n: int, where: str) -> tuple:
    try:
        d = tuple(int(p) for p in key.split(","))
    except ValueError as err:
        raise ConfigError(f"{where}: decision key {key!r} is not comma-separated indices") from err
    if sorted(d) != list(range(n)):
        raise ConfigError(f"{where}: decision key {key!r} is not a permutation of 0..{n - 1}")
    return d


def _check_keys(obj: dict, allowed: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)} (allowed: {sorted(allowed)})")


_WORKLOAD_KEYS = {
    "deterministic": {"kind", "value"},
    "exponential": {"kind", "rate"},
    "gamma": {"kind", "shape", "scale"},
}


def _load_workload(obj, where: str):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"{where}: workload entries need a 'kind'")
    kind = obj["kind"]
    if kind not in _WORKLOAD_KEYS:
        raise ConfigError(f"{where}: unknown workload kind {kind!r}")
    _check_keys(obj, _WORKLOAD_KEYS[kind], where)
    try:
        if kind == "deterministic":
            return Deterministic(_num(obj["value"], where + ".value"))
        if kind == "exponential":
            return Exponential(float(_num(obj["rate"], where + ".rate")))
        return Gamma(
            float(_num(obj["shape"], where + ".shape")),
            float(_num(obj["scale"], where + ".scale")),
        )
    except KeyError as err:
        raise ConfigError(f"{where}: missing field {err.args[0]!r}") from err
    except ValueError as err:
        raise ConfigError(f"{where}: {err}") from err


def load_model(source: Union[str, Path, dict]) -> PayoffModel:
    """Read a payoff model from a JSON file, JSON text, or parsed dict."""
    if isinstance(source, dict):
        obj, where = source, "model"
    else:
        path = Path(source)
        try:
            text = path.read_text() if path.exists() else str(source)
            obj = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{source}: invalid JSON at line {err.lineno}: {err.msg}") from err
        except OSError as err:
            raise ConfigError(f"{source}: {err}") from err
        where = str(source)
        if not isinstance(obj, dict):
            raise ConfigError(f"{where}: model description must be a JSON object")
    mtype = obj.get("type")
    if mtype == "table":
        _check_keys(obj, {"type", "n", "dist"}, where)
        n = obj.get("n")
        if not isinstance(n, int) or n < 1:
            raise ConfigError(f"{where}.n: expected a positive integer")
        dist_obj = obj.get("dist")
        if not isinstance(dist_obj, dict):
            raise ConfigError(f"{where}.dist: expected an object mapping decisions to atoms")
        dist = {}
        for key, atoms in dist_obj.items():
            d = _decision_key(key, n, f"{where}.dist")
            if not isinstance(atoms, list):
                raise ConfigError(f"{where}.dist[{key!r}]: expected a list of atoms")
            parsed = []
            for k, atom in enumerate(atoms):
                at = f"{where}.dist[{key!r}][{k}]"
                if not isinstance(atom, dict):
                    raise ConfigError(f"{at}: expected an object with 'value' and 'prob'")
                _check_keys(atom, {"value", "prob"}, at)
                if "value" not in atom or "prob" not in atom:
                    raise ConfigError(f"{at}: needs both 'value' and 'prob'")
                vec = tuple(_num(v, f"{at}.value[{i}]") for i, v in enumerate(atom["value"]))
                parsed.append((vec, _num(atom["prob"], f"{at}.prob")))
            dist[d] = parsed
        try:
            return TablePayoffModel(n, dist)
        except ValueError as err:
            raise ConfigError(f"{where}: {err}") from err
    if mtype == "single_resource":
        _check_keys(obj, {"type", "n", "delta", "workloads"}, where)
        n = obj.get("n")
        if not isinstance(n, int) or n < 1:
            raise ConfigError(f"{where}.n: expected a positive integer")
        if "delta" not in obj:
            raise ConfigError(f"{where}: missing field 'delta'")
        workloads = obj.get("workloads")
        if not isinstance(workloads, list) or len(workloads) != n:
            raise ConfigError(f"{where}.workloads: expected a list of {n} distributions")
        dists = tuple(
            _load_workload(wl, f"{where}.workloads[{i}]") for i, wl in enumerate(workloads)
        )
        try:
            return SingleResourceModel(n, _num(obj["delta"], f"{where}.delta"), dists)
        except ValueError as err:
            raise ConfigError(f"{where}: {err}") from err
    raise ConfigError(f"{where}.type: expected 'table' or 'single_resource', got {mtype!r}")


def model_to_dict(model: PayoffModel) -> dict:
    if isinstance(model, TablePayoffModel):
        return {
            "type": "table",
            "n": model.n,
            "dist": {
                ",".join(map(str, d)): [
                    {"value": [to_jsonable(v) for v in vec], "prob": to_jsonable(p)}
                    for vec, p in atoms
                ]
                for d, atoms in sorted(model.dist.items())
            },
        }
    workloads = []
    for w in model.workloads:
        if isinstance(w, Deterministic):
            workloads.append({"kind": "deterministic", "value": to_jsonable(w.value)})
        elif isinstance(w, Exponential):
            workloads.append({"kind": "exponential", "rate": w.rate})
        else:
            workloads.append({"kind": "gamma", "shape": w.shape, "scale": w.scale})
    return {
        "type": "single_resource",
        "n": model.n,
        "delta": to_jsonable(model.period_length),
        "workloads": workloads,
    }


@dataclass
class ExperimentConfig:
    """One simulation experiment: model, policy, requirements, run settings."""

    model: PayoffModel
    policy: str
    q: tuple
    w: Optional[tuple] = None
    classes: Optional[tuple] = None
    periods: int = 10_000
    warmup: int = 0
    seed: Optional[int] = None
    deficit_mode: str = "truncated"
    record_trajectory: bool = False
    estimation: Optional[dict] = None
    out_csv: Optional[str] = None
    out_json: Optional[str] = None


_EXPERIMENT_KEYS = {
    "model",
    "model_file",
    "policy",
    "q",
    "w",
    "classes",
    "periods",
    "warmup",
    "seed",
    "deficit_mode",
    "record_trajectory",
    "estimation",
    "out_csv",
    "out_json",
}


def load_experiment(source: Union[str, Path, dict], base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Read and schema-validate an experiment config file (or parsed dict)."""
    if isinstance(source, dict):
        obj, where = dict(source), "experiment"
        base = base_dir or Path(".")
    else:
        path = Path(source)
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"{source}: invalid JSON at line {err.lineno}: {err.msg}") from err
        except OSError as err:
            raise ConfigError(f"{source}: {err}") from err
        where = str(source)
        base = base_dir or path.parent
        if not isinstance(obj, dict):
            raise ConfigError(f"{where}: experiment config must be a JSON object")
    _check_keys(obj, _EXPERIMENT_KEYS, where)

    if ("model" in obj) == ("model_file" in obj):
        raise ConfigError(f"{where}: exactly one of 'model' or 'model_file' is required")
    model = load_model(obj["model"] if "model" in obj else base / obj["model_file"])

    policy = obj.get("policy")
    if not isinstance(policy, str):
        raise ConfigError(f"{where}.policy: expected a policy spec string")
    if "q" not in obj or not isinstance(obj["q"], list):
        raise ConfigError(f"{where}.q: expected a list of requirements")
    q = tuple(_num(v, f"{where}.q[{i}]") for i, v in enumerate(obj["q"]))
    if len(q) != model.n:
        raise ConfigError(f"{where}.q: has length {len(q)}, model has n={model.n} users")
    w = None
    if "w" in obj:
        if not isinstance(obj["w"], list):
            raise ConfigError(f"{where}.w: expected a list of weights")
        w = tuple(_num(v, f"{where}.w[{i}]") for i, v in enumerate(obj["w"]))
        if len(w) != model.n:
            raise ConfigError(f"{where}.w: has length {len(w)}, model has n={model.n} users")
    classes = None
    if "classes" in obj:
        try:
            classes = tuple(tuple(int(u) for u in cls) for cls in obj["classes"])
        except (TypeError, ValueError) as err:
            raise ConfigError(f"{where}.classes: expected a list of index lists") from err
    periods = obj.get("periods", 10_000)
    warmup = obj.get("warmup", 0)
    if not isinstance(periods, int) or not isinstance(warmup, int) or not periods > warmup >= 0:
        raise ConfigError(f"{where}: need integer periods > warmup >= 0, got {periods}, {warmup}")
    seed = obj.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ConfigError(f"{where}.seed: expected an integer")
    mode = obj.get("deficit_mode", "truncated")
    if mode not in ("truncated", "signed"):
        raise ConfigError(f"{where}.deficit_mode: expected 'truncated' or 'signed', got {mode!r}")
    estimation = obj.get("estimation")
    if estimation is not None:
        if not isinstance(estimation, dict):
            raise ConfigError(f"{where}.estimation: expected an object")
        _check_keys(estimation, {"kind", "samples", "seed"}, f"{where}.estimation")
    record = obj.get("record_trajectory", False)
    if not isinstance(record, bool):
        raise ConfigError(f"{where}.record_trajectory: expected a boolean")
    return ExperimentConfig(
        model=model,
        policy=policy,
        q=q,
        w=w,
        classes=classes,
        periods=periods,
        warmup=warmup,
        seed=seed,
        deficit_mode=mode,
        record_trajectory=record,
        estimation=estimation,
        out_csv=obj.get("out_csv"),
        out_json=obj.get("out_json"),
    )


def to_jsonable(x):
    """Recursively convert values (Fractions, tuples, sets) to JSON-compatible ones."""
    import numpy as np

    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else str(x)
    if isinstance(x, (frozenset, set)):
        return sorted(to_jsonable(v) for v in x)
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {
            (",".join(map(str, k)) if isinstance(k, tuple) else str(k)): to_jsonable(v)
            for k, v in x.items()
        }
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


SIM_CSV_HEADER = ["run_id", "user", "q", "w", "p_hat", "excess", "sd_ratio", "max_deficit"]


def sim_report_rows(report, q, w, ifi=None, run_id: Union[int, str] = 0) -> list:
    """Flatten a simulation report into one CSV row per user."""
    rows = []
    for i in range(report.n):
        p_hat = float(report.achieved[i])
        excess = float(w[i]) * (p_hat - float(q[i]))
        if ifi is not None and i in ifi.per_user:
            sd_ratio = repr(float(ifi.per_user[i].sd_ratio))
        else:
            sd_ratio = ""
        rows.append(
            [
                run_id,
                i,
                repr(float(q[i])),
                repr(float(w[i])),
                repr(p_hat),
                repr(excess),
                sd_ratio,
                repr(float(report.max_deficits[i])),
            ]
        )
    return rows


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    """RFC-4180 CSV with a header line; content is timestamp-free."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
