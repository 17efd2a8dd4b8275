"""Two-stage distinguisher and the distinguishability/closeness reductions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .distributions import PreconditionError
from .estimators import MAX_RETRIES, EstimatorFailure, estimate_l2_squared, l2_budget
from .sampling import SampleSource, make_rng, pattern_sample_total

NORM_STAGE = "norm-stage"
COLLISION_STAGE = "collision-stage"


def accuracy_parameter(s: int) -> int:
    """l = 30 s ln^{3/2} s, rounded up."""
    return int(math.ceil(30 * s * math.log(s) ** 1.5))


def repetitions(s: int) -> int:
    """ceil(ln s), never fewer than 3."""
    return max(3, int(math.ceil(math.log(s))))


@dataclass(frozen=True)
class DistinguishConfig:
    """Knobs for :func:`distinguish`; ``None`` means the algorithm's own value.

    ``l`` is the norm-stage accuracy parameter and ``train_l`` the training
    size of the collision stage; both default to 30 s ln^{3/2} s.
    """

    l: int | None = None
    train_l: int | None = None
    repeats: int | None = None
    max_retries: int = MAX_RETRIES
    pattern_method: str = "auto"

    def resolve(self, s: int) -> tuple[int, int, int]:
        default = accuracy_parameter(s)
        return (self.l or default, self.train_l or default, self.repeats or repetitions(s))

    def scaled(self, s: int) -> bool:
        default = accuracy_parameter(s)
        return any(v is not None and v != default for v in (self.l, self.train_l)) or (
            self.repeats is not None and self.repeats != repetitions(s))


@dataclass(frozen=True)
class Decision:
    answer: str
    stage: str
    s: int
    l: int
    train_l: int
    repeats: int
    estimates: dict
    p_consistent: bool
    q_consistent: bool
    c_p: int | None
    c_q: int | None
    budget: dict
    budget_bound: int
    scaled: bool
    precondition_ok: bool | None = None

    @property
    def both_consistent(self) -> bool:
        return self.p_consistent and self.q_consistent

    @property
    def draws(self) -> int:
        return sum(self.budget.values())

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["both_consistent"] = self.both_consistent
        return out


def _consistent(t_est, x_est) -> bool:
    return all(a >= b for a, b in zip(t_est, x_est)) or all(a <= b for a, b in zip(t_est, x_est))


def distinguish_budget_bound(s: int, l: int, train_l: int, repeats: int, m_p: int, m_q: int,
                             max_retries: int = MAX_RETRIES) -> int:
    """Upper bound on draws of one :func:`distinguish` call.

    Each estimate costs at most ``max_retries`` failed training rounds plus one
    full run; the collision stage costs two training sets plus ``s`` pattern
    samples against each configuration.
    """
    per_estimate = max_retries * l + math.floor(l2_budget(l))
    return 3 * repeats * per_estimate + 2 * train_l + s * (m_p + m_q)


def precondition_holds(sources, s: int) -> bool | None:
    """max p_i <= 1/(2s) over sources whose distribution is known."""
    known = [src.dist for src in sources if getattr(src, "dist", None) is not None]
    if not known:
        return None
    return all(float(d.probs.max()) <= 1.0 / (2 * s) for d in known)


def distinguish(p: SampleSource, q: SampleSource, t: SampleSource, s: int,
                config: DistinguishConfig | None = None) -> Decision:
    """Decide whether the testing source ``t`` is ``p`` ("P") or ``q`` ("Q").

    Stage one compares repeated norm estimates of T against those of P and
    Q and stops as soon as T sits consistently on one side of P (answer Q)
    or, failing that, of Q (answer P).  Otherwise stage two trains on P and
    Q and counts pattern-sample hits of fresh T draws; ties go to Q.
    """
    if s < 10:
        raise PreconditionError("distinguish needs s >= 10")
    if len({id(p), id(q), id(t)}) < 3:
        raise ValueError("p, q and t must be distinct source handles (see SampleSource.spawn)")
    config = config or DistinguishConfig()
    l, train_l, reps = config.resolve(s)
    start = {"P": p.drawn, "Q": q.drawn, "T": t.drawn}

    est = {"P": [], "Q": [], "T": []}
    for _ in range(reps):
        for key, src in (("P", p), ("Q", q), ("T", t)):
            e = estimate_l2_squared(src, l, config.max_retries)
            if e.failed:
                raise EstimatorFailure(
                    f"norm estimate of {key} failed {e.attempts} times (max count {e.max_count}, l={l})")
            est[key].append(e.value)
    p_cons = _consistent(est["T"], est["P"])
    q_cons = _consistent(est["T"], est["Q"])

    c_p = c_q = None
    m_p = m_q = 0
    if p_cons:
        answer, stage = "Q", NORM_STAGE
    elif q_cons:
        answer, stage = "P", NORM_STAGE
    else:
        cfg_p = p.configuration(train_l)
        cfg_q = q.configuration(train_l)
        m_p, m_q = cfg_p.max_count, cfg_q.max_count
        c_p = pattern_sample_total(cfg_p, t, s, config.pattern_method)
        c_q = pattern_sample_total(cfg_q, t, s, config.pattern_method)
        answer, stage = ("P" if c_p > c_q else "Q"), COLLISION_STAGE

    budget = {"P": p.drawn - start["P"], "Q": q.drawn - start["Q"], "T": t.drawn - start["T"]}
    bound = distinguish_budget_bound(s, l, train_l, reps, m_p, m_q, config.max_retries)
    assert sum(budget.values()) <= bound, "distinguish exceeded its own budget formula"
    return Decision(
        answer=answer, stage=stage, s=s, l=l, train_l=train_l, repeats=reps,
        estimates=est, p_consistent=p_cons, q_consistent=q_cons, c_p=c_p, c_q=c_q,
        budget=budget, budget_bound=bound, scaled=config.scaled(s),
        precondition_ok=precondition_holds((p, q, t), s),
    )


def auto_s(p: SampleSource, q: SampleSource, t: SampleSource, s0: int,
           config: DistinguishConfig | None = None, max_doublings: int = 10):
    """Run at s0, 2 s0, 4 s0, ... until ``repetitions(s)`` decisions agree.

    Returns ``(s, decisions)`` for the first agreeing round; raises when
    ``max_doublings`` is exhausted.
    """
    s = max(10, s0)
    for _ in range(max_doublings + 1):
        decisions = [distinguish(p, q, t, s, config) for _ in range(repetitions(s))]
        if len({d.answer for d in decisions}) == 1:
            return s, decisions
        s *= 2
    raise RuntimeError("no consistent answer within the doubling limit")


@dataclass(frozen=True)
class ClosenessResult:
    answer: str
    answers: tuple
    budget: int
    per_call_bounds: tuple

    @property
    def calls(self) -> int:
        return len(self.answers)


def closeness_from_distinguisher(x: SampleSource, y: SampleSource, s: int,
                                 config: DistinguishConfig | None = None) -> ClosenessResult:
    """"different" iff 3 * repetitions(s) distinguisher runs, tested on x, all agree."""
    if s < 10:
        raise PreconditionError("closeness needs s >= 10")
    calls = 3 * repetitions(s)
    answers = []
    bounds = []
    used = 0
    for i in range(calls):
        d = distinguish(x.spawn(f"{x.label}.P"), y.spawn(f"{y.label}.Q"),
                        x.spawn(f"{x.label}.T"), s, config)
        answers.append(d.answer)
        bounds.append(d.budget_bound)
        used += d.draws
    answer = "different" if len(set(answers)) == 1 else "same"
    return ClosenessResult(answer, tuple(answers), used, tuple(bounds))


ClosenessOracle = Callable[[SampleSource, SampleSource], str]


def ground_truth_closeness(a: SampleSource, b: SampleSource) -> str:
    return "same" if a.dist == b.dist else "different"


def distinguisher_from_closeness(closeness: ClosenessOracle, x: SampleSource, y: SampleSource,
                                 t: SampleSource, rng) -> str:
    """Test t against x and against y; a single "same" decides, anything else is a coin flip."""
    vs_x = closeness(t, x)
    vs_y = closeness(t, y)
    if vs_x == "same" and vs_y == "different":
        return "P"
    if vs_x == "different" and vs_y == "same":
        return "Q"
    return "P" if make_rng(rng).random() < 0.5 else "Q"
