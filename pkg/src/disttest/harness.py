"""Seeded experiment runner: trial fan-out, suites and table emitters.

Every row carries the 64-bit seed it was run with; re-running a single row
from that seed reproduces it exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .distinguisher import (
    COLLISION_STAGE,
    NORM_STAGE,
    DistinguishConfig,
    closeness_from_distinguisher,
    distinguish,
)
from .distributions import (
    DiscreteDistribution,
    PreconditionError,
    distribution_from_json,
    make_hard_pair,
    norms,
)
from .estimators import EstimatorFailure
from .lowerbound import (
    BUILTIN_TESTERS,
    DEFAULT_C,
    indistinguishability_experiment,
    lower_h_bound_experiment,
    lower_bound_preconditions,
    max_lower_bound_s,
)
from .sampling import (
    SampleBudget,
    SampleSource,
    derive_seed,
    type_bridge_check,
    weight_concentration_frequency,
)

FORMAT_VERSION = 1
SUBCOMMANDS = ("norms", "generate", "distinguish", "closeness", "sweep", "concentration", "lowerbound")


class InstanceError(ValueError):
    """Instance descriptor or file could not be turned into a distribution pair."""


@dataclass(frozen=True)
class ExperimentSpec:
    subcommand: str
    instance: tuple = ("gen:hard:1024",)
    s: int | str | None = None
    trials: int = 100
    master_seed: int = 0
    output: str | None = None
    format: str = "csv"
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand {self.subcommand!r}")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        inst = (self.instance,) if isinstance(self.instance, str) else tuple(self.instance)
        object.__setattr__(self, "instance", inst)
        object.__setattr__(self, "overrides", dict(self.overrides))

    def override(self, key: str, default=None, cast=None):
        if key not in self.overrides:
            return default
        v = self.overrides[key]
        return cast(v) if cast is not None else v

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


# -- instances ------------------------------------------------------------------


def resolve_instance(instance: Sequence[str]) -> tuple[DiscreteDistribution, DiscreteDistribution]:
    """``gen:hard:N``, ``gen:same:N``, ``gen:uniform:N``, a pair file, or two distribution files."""
    if isinstance(instance, str):
        instance = (instance,)
    if len(instance) == 1 and instance[0].startswith("gen:"):
        parts = instance[0].split(":")
        if len(parts) != 3:
            raise InstanceError(f"bad generator descriptor {instance[0]!r}")
        kind, n = parts[1], int(parts[2])
        if kind == "hard":
            return make_hard_pair(n)
        if kind == "same":
            p, _ = make_hard_pair(n)
            return p, p
        if kind == "uniform":
            u = DiscreteDistribution.uniform(n)
            return u, u
        raise InstanceError(f"unknown generator {kind!r}")
    try:
        objs = []
        for path in instance:
            with open(path) as fh:
                objs.append(json.load(fh))
    except OSError as exc:
        raise InstanceError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise InstanceError(f"invalid JSON: {exc}") from exc
    try:
        if len(objs) == 1 and "p" in objs[0] and "q" in objs[0]:
            return distribution_from_json(objs[0]["p"]), distribution_from_json(objs[0]["q"])
        if len(objs) == 2:
            return distribution_from_json(objs[0]), distribution_from_json(objs[1])
    except (KeyError, ValueError) as exc:
        raise InstanceError(str(exc)) from exc
    raise InstanceError("need a pair file {'p':..., 'q':...} or two distribution files")


def pair_to_json(p: DiscreteDistribution, q: DiscreteDistribution) -> dict:
    return {"p": p.to_json(), "q": q.to_json()}


def resolve_s(spec: ExperimentSpec, p, q) -> int:
    if spec.s is None or spec.s == "auto":
        par = norms(p, q)
        if par.theorem_s is None:
            raise PreconditionError("identical distributions: s cannot be derived, pass --s")
        return par.theorem_s
    return int(spec.s)


def distinguish_config(spec: ExperimentSpec) -> DistinguishConfig:
    return DistinguishConfig(
        l=spec.override("l", None, int),
        train_l=spec.override("train_l", None, int),
        repeats=spec.override("repeats", None, int),
        pattern_method=spec.override("pattern_method", "auto", str),
    )


# -- trial fan-out ----------------------------------------------------------------


def worker_count() -> int:
    cap = os.environ.get("DISTTEST_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def run_ordered(fn: Callable, tasks: Sequence[tuple], workers: int | None = None) -> list:
    """``[fn(*t) for t in tasks]``, possibly across processes, always in task order."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(tasks) < 2:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks), chunksize=max(1, len(tasks) // (4 * workers))))


def distinguish_trial(p, q, s: int, hypothesis: str, seed: int, config: DistinguishConfig) -> dict:
    """One seeded distinguish call; the row it produces depends only on the arguments."""
    rng = np.random.default_rng(seed)
    budget = SampleBudget()
    t_dist = p if hypothesis == "H1" else q
    srcs = (SampleSource(p, rng, "P", budget), SampleSource(q, rng, "Q", budget),
            SampleSource(t_dist, rng, "T", budget))
    row = {"seed": seed, "s": s, "hypothesis": hypothesis}
    try:
        d = distinguish(*srcs, s, config)
    except EstimatorFailure:
        row.update(answer="", correct=False, failed=True, stage="", c_p="", c_q="",
                   draws_p=budget.drawn.get("P", 0), draws_q=budget.drawn.get("Q", 0),
                   draws_t=budget.drawn.get("T", 0), both_consistent="", scaled="",
                   precondition_ok="")
        return row
    truth = "P" if hypothesis == "H1" else "Q"
    row.update(
        answer=d.answer, correct=d.answer == truth, failed=False, stage=d.stage,
        c_p="" if d.c_p is None else d.c_p, c_q="" if d.c_q is None else d.c_q,
        draws_p=d.budget["P"], draws_q=d.budget["Q"], draws_t=d.budget["T"],
        both_consistent=d.both_consistent, scaled=d.scaled,
        precondition_ok="" if d.precondition_ok is None else d.precondition_ok,
    )
    return row


def closeness_trial(x, y, s: int, case: str, seed: int, config: DistinguishConfig) -> dict:
    rng = np.random.default_rng(seed)
    budget = SampleBudget()
    xs, ys = SampleSource(x, rng, "X", budget), SampleSource(y, rng, "Y", budget)
    row = {"seed": seed, "s": s, "case": case}
    try:
        res = closeness_from_distinguisher(xs, ys, s, config)
    except EstimatorFailure:
        row.update(answer="", correct=False, failed=True, calls="", draws=budget.total,
                   max_call_bound="")
        return row
    row.update(answer=res.answer, correct=res.answer == case, failed=False, calls=res.calls,
               draws=res.budget, max_call_bound=max(res.per_call_bounds))
    return row


def _timed(fn, *args) -> dict:
    t0 = time.perf_counter()
    row = fn(*args)
    row["wall_time_ms"] = round(1000 * (time.perf_counter() - t0), 3)
    return row


def _fan_out(spec, fn, tasks, workers):
    # wall-clock columns break byte-identical reruns, so they are opt-in
    if spec.override("timing", False, _truthy):
        return run_ordered(_timed, [(fn, *t) for t in tasks], workers)
    return run_ordered(fn, tasks, workers)


def _truthy(v) -> bool:
    return str(v).lower() in ("1", "true", "yes", "on")


def _hyp(i: int) -> str:
    return "H1" if i % 2 == 0 else "H2"


def run_distinguish_trials(spec: ExperimentSpec, workers: int | None = None) -> list[dict]:
    p, q = resolve_instance(spec.instance)
    s = resolve_s(spec, p, q)
    cfg = distinguish_config(spec)
    tasks = [(p, q, s, _hyp(i), derive_seed(spec.master_seed, i), cfg) for i in range(spec.trials)]
    rows = _fan_out(spec, distinguish_trial, tasks, workers)
    return [{"trial_index": i, **r} for i, r in enumerate(rows)]


def run_closeness_trials(spec: ExperimentSpec, workers: int | None = None) -> list[dict]:
    """Alternates (P, P) "same" trials and (P, Q) "different" trials."""
    p, q = resolve_instance(spec.instance)
    s = resolve_s(spec, p, q)
    cfg = distinguish_config(spec)
    tasks = []
    for i in range(spec.trials):
        case = "same" if i % 2 == 0 else "different"
        tasks.append((p, p if case == "same" else q, s, case, derive_seed(spec.master_seed, i), cfg))
    rows = _fan_out(spec, closeness_trial, tasks, workers)
    return [{"trial_index": i, **r} for i, r in enumerate(rows)]


def sweep_grid(s_star: int, ks=range(-4, 3)) -> list[int]:
    return [max(10, int(math.ceil(s_star * 2.0**k))) for k in ks]


def run_distinguish_sweep(spec: ExperimentSpec, workers: int | None = None) -> list[dict]:
    """Accuracy, mean budget and norm-stage share of distinguish over a geometric s grid.

    Each s gets ``trials`` H1 and ``trials`` H2 runs.  The grid is
    s* 2^k for k = -4..2 around s* = theorem_s (or ``--s``), unless
    the ``s_values`` override lists it explicitly.
    """
    p, q = resolve_instance(spec.instance)
    if "s_values" in spec.overrides:
        grid = [int(v) for v in str(spec.overrides["s_values"]).split(",") if v]
    else:
        grid = sweep_grid(resolve_s(spec, p, q))
    cfg = distinguish_config(spec)
    out = []
    for k, s in enumerate(grid):
        seed = derive_seed(spec.master_seed, k)
        tasks = [(p, q, s, _hyp(i), derive_seed(seed, i), cfg) for i in range(2 * spec.trials)]
        rows = run_ordered(distinguish_trial, tasks, workers)
        done = [r for r in rows if not r["failed"]]
        out.append({
            "s": s,
            "seed": seed,
            "trials": len(rows),
            "failed": len(rows) - len(done),
            "accuracy": sum(r["correct"] for r in rows) / len(rows),
            "mean_budget": float(np.mean([r["draws_p"] + r["draws_q"] + r["draws_t"] for r in rows])),
            "norm_stage_frac": sum(r["stage"] == NORM_STAGE for r in done) / max(1, len(done)),
            "collision_stage_frac": sum(r["stage"] == COLLISION_STAGE for r in done) / max(1, len(done)),
            "scaled": cfg.scaled(s),
        })
    return out


DEFAULT_BRIDGE_SIZES = (9, 12)


def bridge_probabilities(s: int) -> np.ndarray:
    """Three sub-probabilities at or below 1/(2s); the rest of the mass is dust."""
    return np.array([1.0, 0.75, 0.5]) / (2 * s)


def run_concentration_suite(spec: ExperimentSpec, workers: int | None = None) -> list[dict]:
    """Weight concentration under type-I sampling plus the exact type I / II bridge.

    Overrides: ``weights`` = ``p`` (default), ``zero`` or ``uniform``;
    ``bridge_s`` = comma list of s values for the enumeration check.
    """
    p, _ = resolve_instance(spec.instance)
    s = 100 if spec.s is None else int(spec.s)
    if float(p.probs.max()) > 1.0 / (2 * s):
        raise PreconditionError("concentration suite needs p_i <= 1/(2s)")
    kind = spec.override("weights", "p", str)
    weights = {"p": p.probs, "zero": np.zeros(p.n), "uniform": np.ones(p.n)}.get(kind)
    if weights is None:
        raise ValueError(f"unknown weights {kind!r}")
    seed = derive_seed(spec.master_seed, 0)
    over, thr = weight_concentration_frequency(p, s, weights, spec.trials, np.random.default_rng(seed))
    rows = [{
        "check": "weight_concentration", "seed": seed, "s": s, "n": p.n, "weights": kind,
        "trials": spec.trials, "threshold": thr, "exceedances": over,
        "frequency": over / spec.trials, "bound": 1.0 / s**2,
        "configurations": "", "violations": "", "min_ratio": "", "max_ratio": "",
        "lower": "", "upper": "",
    }]
    sizes = spec.override("bridge_s", None, str)
    sizes = [int(v) for v in sizes.split(",")] if sizes else list(DEFAULT_BRIDGE_SIZES)
    for bs in sizes:
        rep = type_bridge_check(bridge_probabilities(bs), bs)
        rows.append({
            "check": "type_bridge", "seed": "", "s": bs, "n": 3, "weights": "",
            "trials": "", "threshold": "", "exceedances": "", "frequency": "", "bound": "",
            "configurations": rep.configurations, "violations": rep.violations,
            "min_ratio": rep.min_ratio, "max_ratio": rep.max_ratio,
            "lower": rep.lower, "upper": rep.upper,
        })
    return rows


def _lowerbound_row(p, q, s, games, seed, c, testers, strict):
    bound = lower_h_bound_experiment(p, q, s, games, seed, c, check_preconditions=strict)
    err = indistinguishability_experiment(p, q, s, testers, games, derive_seed(seed, 1), c,
                                          check_preconditions=strict)
    return bound, err


def run_lowerbound_suite(spec: ExperimentSpec, workers: int | None = None):
    """Lower-bound model at the precondition-maximal s and at 20 numsamples.

    Returns ``(rows, reports)``: flat table rows, and per-s nested reports.
    The second row deliberately breaks the preconditions (flagged).
    """
    p, q = resolve_instance(spec.instance)
    c = spec.override("c", DEFAULT_C, float)
    games = spec.trials
    if "s_values" in spec.overrides:
        grid = [int(v) for v in str(spec.overrides["s_values"]).split(",") if v]
    elif spec.s not in (None, "auto"):
        grid = [int(spec.s)]
    else:
        par = norms(p, q)
        grid = [max_lower_bound_s(p, q, c)]
        if math.isfinite(par.numsamples):
            grid.append(int(round(20 * par.numsamples)))
    rows, reports = [], []
    for k, s in enumerate(grid):
        seed = derive_seed(spec.master_seed, k)
        pre = lower_bound_preconditions(p, q, s, c)
        bound, err = _lowerbound_row(p, q, s, games, seed, c, BUILTIN_TESTERS, False)
        row = {"s": s, "seed": seed, "games": games, "preconditions_ok": pre["ok"],
               "ratio_le_8_frac": bound.ratio_le_8_frac, "helpful_frac": bound.helpful_frac,
               "helpful_decisive": bound.helpful_decisive}
        for name, rate in err.error_rate.items():
            row[f"error_rate_{name}"] = rate
        rows.append(row)
        reports.append({"games": games, "s": s, "ratio_le_8_frac": bound.ratio_le_8_frac,
                        "error_rate": err.error_rate, "helpful_frac": bound.helpful_frac,
                        "preconditions": pre})
    return rows, reports


# -- emitters ---------------------------------------------------------------------


def _cell(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    fields = list(rows[0].keys())
    for r in rows[1:]:
        for k in r:
            if k not in fields:
                fields.append(k)
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(r.get(k, "")) for k in fields})
    return buf.getvalue()


def rows_to_json(rows: list[dict], spec: ExperimentSpec | None = None, extra: dict | None = None) -> str:
    doc = {"format_version": FORMAT_VERSION}
    if spec is not None:
        doc["spec"] = {k: v for k, v in spec.to_json().items() if k not in ("output", "format")}
    doc["rows"] = [{k: _cell(v) for k, v in r.items()} for r in rows]
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1, sort_keys=False, default=_cell) + "\n"


def parse_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def emit(rows: list[dict], spec: ExperimentSpec, extra: dict | None = None) -> str:
    text = rows_to_csv(rows) if spec.format == "csv" else rows_to_json(rows, spec, extra)
    if spec.output:
        Path(spec.output).write_text(text)
    return text


def run_spec(spec: ExperimentSpec, workers: int | None = None) -> tuple[list[dict], dict | None]:
    """Dispatch a table-producing subcommand; returns ``(rows, extra_json)``."""
    if spec.subcommand == "distinguish":
        return run_distinguish_trials(spec, workers), None
    if spec.subcommand == "closeness":
        return run_closeness_trials(spec, workers), None
    if spec.subcommand == "sweep":
        return run_distinguish_sweep(spec, workers), None
    if spec.subcommand == "concentration":
        return run_concentration_suite(spec, workers), None
    if spec.subcommand == "lowerbound":
        rows, reports = run_lowerbound_suite(spec, workers)
        return rows, {"reports": reports}
    if spec.subcommand == "norms":
        p, q = resolve_instance(spec.instance)
        return [norms(p, q).to_json()], None
    raise ValueError(f"{spec.subcommand!r} does not produce a table")
