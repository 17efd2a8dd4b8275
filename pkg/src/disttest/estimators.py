"""Collision-based estimation of ||P||_2^2 and the Bernoulli comparison bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import PreconditionError
from .sampling import SampleSource, make_rng, pattern_sample_batch

MAX_RETRIES = 3


class EstimatorFailure(RuntimeError):
    """The outlier check fired on every attempt."""


def l2_budget(l: int) -> float:
    """Draw allowance for one run: 2 l ln l for the algorithm plus l training draws."""
    return 2 * l * math.log(l) + l


@dataclass(frozen=True)
class L2Estimate:
    value: float
    l: int
    raw_hits: int
    failed: bool
    draws_used: int
    attempts: int = 1
    total_draws: int = 0
    max_count: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _single_run(source: SampleSource, l: int) -> L2Estimate:
    start = source.drawn
    cfg = source.configuration(l)
    m = cfg.max_count
    if m >= math.log(l):
        used = source.drawn - start
        return L2Estimate(math.nan, l, 0, True, used, max_count=m)
    raw = int(pattern_sample_batch(cfg, source, l).sum())
    used = source.drawn - start
    assert used <= l2_budget(l), f"estimator used {used} draws, allowance {l2_budget(l):.0f}"
    return L2Estimate(raw / l**2, l, raw, False, used, max_count=m)


def estimate_l2_squared(source: SampleSource, l: int, max_retries: int = MAX_RETRIES) -> L2Estimate:
    """Estimate ||P||_2^2 from ``source`` with accuracy parameter ``l``.

    Draws ``l`` training samples; if some element appears ``ln l`` times or
    more the attempt fails and is retried with fresh samples, at most
    ``max_retries`` times.  Otherwise ``l`` pattern samples are run against
    the training configuration and the total hit count is divided by l^2.
    The returned estimate has ``failed=True`` when every attempt failed.
    """
    if l < 10:
        raise PreconditionError("accuracy parameter l must be >= 10")
    total = 0
    for attempt in range(1, max_retries + 2):
        est = _single_run(source, l)
        total += est.draws_used
        if not est.failed:
            break
    return L2Estimate(est.value, l, est.raw_hits, est.failed, est.draws_used,
                      attempt, total, est.max_count)


def bernoulli_tail_bound(alpha: float, beta: float) -> float:
    """2 exp(-(alpha - beta)^2 / (8 (alpha + beta))), clamped to [0, 1].

    Bounds Pr[sum x > sum y] for Bernoulli sums with means alpha < beta.
    """
    if alpha < 0 or beta < 0:
        raise PreconditionError("alpha and beta must be non-negative")
    if alpha + beta == 0:
        return 1.0
    return min(1.0, 2.0 * math.exp(-((alpha - beta) ** 2) / (8.0 * (alpha + beta))))


def bernoulli_dominance_frequency(px, py, trials: int, rng, chunk: int = 1 << 16) -> float:
    """Empirical Pr[sum x >= sum y] for independent Bernoulli(px_i), Bernoulli(py_i).

    Scalars ``(N, p)`` tuples mean N identical trials, drawn as one binomial.
    """
    rng = make_rng(rng)

    def sums(spec, k):
        if isinstance(spec, tuple):
            n, p = spec
            return rng.binomial(n, p, size=k)
        probs = np.asarray(spec, dtype=np.float64)
        return (rng.random((k, probs.size)) < probs).sum(axis=1)

    hits = 0
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        hits += int(np.count_nonzero(sums(px, k) >= sums(py, k)))
        done += k
    return hits / trials


@dataclass(frozen=True)
class ComparisonReport:
    trials: int
    p_greater: float
    p_less: float
    tie_rate: float
    failure_rate: float
    completed: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def two_norm_comparison_experiment(p: SampleSource, t: SampleSource, l: int,
                                   trials: int) -> ComparisonReport:
    """Paired estimates of ||P|| and ||T||; frequencies of >, <, ties, failures.

    Frequencies of >, <, = are over trials where both estimates succeeded.
    """
    if l < 10 or trials < 1:
        raise PreconditionError("need l >= 10 and trials >= 1")
    gt = lt = eq = fail = 0
    for _ in range(trials):
        ep = estimate_l2_squared(p, l)
        et = estimate_l2_squared(t, l)
        if ep.failed or et.failed:
            fail += 1
        elif ep.raw_hits > et.raw_hits:
            gt += 1
        elif ep.raw_hits < et.raw_hits:
            lt += 1
        else:
            eq += 1
    done = trials - fail
    denom = max(done, 1)
    return ComparisonReport(trials, gt / denom, lt / denom, eq / denom, fail / trials, done)
