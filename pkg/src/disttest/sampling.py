"""Randomness: i.i.d. and per-bin sampling, pattern sampling, signatures.

Everything that draws from a distribution goes through a :class:`SampleSource`,
which owns an alias table and counts the raw draws it hands out.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np
from scipy.special import gammaln

from .distributions import DimensionError, DiscreteDistribution, PreconditionError

ENUMERATION_LIMIT = 10**6
# beyond this many draws a configuration is drawn as one multinomial vector
DIRECT_DRAW_LIMIT = 1 << 22


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed of stream ``index`` under ``master_seed``."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class AliasTable:
    """Vose alias table; O(n) build, O(1) per draw."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=np.float64)
        n = p.size
        scaled = p * (n / p.sum())
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = (scaled[g] + scaled[s]) - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding
        self.prob = prob
        self.alias = alias
        self.n = n

    def draw(self, rng: np.random.Generator, k: int) -> np.ndarray:
        idx = rng.integers(0, self.n, size=k)
        keep = rng.random(k) < self.prob[idx]
        return np.where(keep, idx, self.alias[idx])


@dataclass
class SampleBudget:
    """Raw draws consumed, per source label."""

    drawn: dict = field(default_factory=dict)

    def charge(self, label: str, k: int) -> None:
        if k < 0:
            raise ValueError("cannot refund draws")
        self.drawn[label] = self.drawn.get(label, 0) + int(k)

    @property
    def total(self) -> int:
        return sum(self.drawn.values())

    def merge(self, other: "SampleBudget") -> None:
        for k, v in other.drawn.items():
            self.charge(k, v)

    def to_json(self) -> dict:
        return dict(sorted(self.drawn.items()))


class SampleSource:
    """Black-box sampler over a distribution with draw accounting.

    ``budget`` may be shared between several sources (one label each).
    Testers only call :meth:`draw` / :meth:`configuration`; the ``dist``
    attribute is there for harness-side checks and exact shortcuts.
    """

    def __init__(self, dist: DiscreteDistribution, rng=None, label: str = "X",
                 budget: SampleBudget | None = None):
        self.dist = dist
        self.rng = make_rng(rng)
        self.label = label
        self.budget = budget if budget is not None else SampleBudget()
        self._table = None

    @property
    def n(self) -> int:
        return self.dist.n

    @property
    def drawn(self) -> int:
        return self.budget.drawn.get(self.label, 0)

    @property
    def table(self) -> AliasTable:
        if self._table is None:
            self._table = alias_table(self.dist)
        return self._table

    def draw(self, k: int) -> np.ndarray:
        self.budget.charge(self.label, k)
        if k == 0:
            return np.zeros(0, dtype=np.int64)
        return self.table.draw(self.rng, k)

    def configuration(self, k: int) -> "Configuration":
        """Counts of ``k`` fresh draws."""
        if k <= DIRECT_DRAW_LIMIT:
            return Configuration(np.bincount(self.draw(k), minlength=self.n))
        self.budget.charge(self.label, k)
        return Configuration(self.rng.multinomial(k, self.dist.probs))

    def spawn(self, label: str) -> "SampleSource":
        """Another handle on the same black box (same RNG stream, own label)."""
        src = SampleSource(self.dist, self.rng, label, self.budget)
        src._table = self._table
        return src


@dataclass(frozen=True, eq=False)
class Configuration:
    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64, copy=True).reshape(-1)
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n(self) -> int:
        return int(self.counts.size)

    @property
    def max_count(self) -> int:
        return int(self.counts.max()) if self.counts.size else 0

    def __eq__(self, other):
        return isinstance(other, Configuration) and np.array_equal(self.counts, other.counts)

    def to_json(self) -> dict:
        return {"counts": [int(c) for c in self.counts]}

    @classmethod
    def from_json(cls, obj) -> "Configuration":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(np.asarray(obj["counts"], dtype=np.int64))

    @classmethod
    def from_ids(cls, ids, n: int) -> "Configuration":
        return cls(np.bincount(np.asarray(list(ids), dtype=np.int64), minlength=n))


_TABLE_CACHE: dict = {}


def alias_table(d: DiscreteDistribution) -> AliasTable:
    """Alias table of ``d``, built once per distinct distribution."""
    key = d.probs.tobytes()
    table = _TABLE_CACHE.get(key)
    if table is None:
        if len(_TABLE_CACHE) > 64:
            _TABLE_CACHE.clear()
        table = _TABLE_CACHE[key] = AliasTable(d.probs)
    return table


def sample_type1(d: DiscreteDistribution, s: int, rng, relabel: np.ndarray | None = None) -> Configuration:
    """``s`` i.i.d. draws from ``d`` (multinomial configuration).

    With ``relabel`` the draws are mapped through it, i.e. the configuration
    is one of the permuted distribution ``relabel . d``.
    """
    if s < 0:
        raise PreconditionError("s must be >= 0")
    rng = make_rng(rng)
    if s > DIRECT_DRAW_LIMIT:
        counts = rng.multinomial(s, d.probs)
        if relabel is not None:
            out = np.empty_like(counts)
            out[relabel] = counts
            counts = out
        return Configuration(counts)
    ids = alias_table(d).draw(rng, s) if s else np.zeros(0, dtype=np.int64)
    if relabel is not None:
        ids = relabel[ids]
    return Configuration(np.bincount(ids, minlength=d.n))


def sample_type2(d: DiscreteDistribution, s: int, rng) -> Configuration:
    """Each element ``i`` is selected Binomial(s, p_i) times, independently."""
    if s < 0:
        raise PreconditionError("s must be >= 0")
    return Configuration(make_rng(rng).binomial(s, d.probs))


# -- exact configuration probabilities ----------------------------------------


def _log_powers(p: np.ndarray, c: np.ndarray) -> float:
    """sum c_i log p_i with 0^0 = 1."""
    if np.any((p == 0) & (c > 0)):
        return -math.inf
    nz = c > 0
    return float(np.sum(c[nz] * np.log(p[nz])))


def log_config_prob_type1(d: DiscreteDistribution, cfg: Configuration) -> float:
    _check_cfg(d, cfg, cfg.total)
    c = cfg.counts
    return float(gammaln(cfg.total + 1) - gammaln(c + 1).sum()) + _log_powers(d.probs, c)


def config_prob_type1(d: DiscreteDistribution, cfg: Configuration) -> float:
    """Multinomial probability of ``cfg`` after ``cfg.total`` draws."""
    return math.exp(log_config_prob_type1(d, cfg))


def log_config_prob_type2(d: DiscreteDistribution, cfg: Configuration, s: int) -> float:
    _check_cfg(d, cfg, s)
    c = cfg.counts
    if np.any(c > s):
        raise PreconditionError("a count exceeds the number of coin flips s")
    p = d.probs
    out = float(np.sum(gammaln(s + 1) - gammaln(c + 1) - gammaln(s - c + 1)))
    out += _log_powers(p, c)
    rest = s - c
    if np.any((p == 1.0) & (rest > 0)):
        return -math.inf
    m = rest > 0
    out += float(np.sum(rest[m] * np.log1p(-p[m])))
    return out


def config_prob_type2(d: DiscreteDistribution, cfg: Configuration, s: int) -> float:
    """Product over elements of Binomial(s, p_i) probabilities of ``cfg``."""
    return math.exp(log_config_prob_type2(d, cfg, s))


def _check_cfg(d: DiscreteDistribution, cfg: Configuration, s: int) -> None:
    if cfg.n != d.n:
        raise DimensionError(f"configuration has {cfg.n} entries, distribution {d.n}")
    if cfg.n * max(s, 1) > ENUMERATION_LIMIT:
        raise PreconditionError("instance too large for exact configuration probabilities")


def count_compositions(total: int, n: int, cap: int | None = None) -> int:
    """Number of length-n count vectors summing to ``total`` with entries <= cap."""
    if cap is None:
        return math.comb(total + n - 1, n - 1)
    # inclusion-exclusion over entries exceeding the cap
    out = 0
    for j in range(n + 1):
        rem = total - j * (cap + 1)
        if rem < 0:
            break
        out += (-1) ** j * math.comb(n, j) * math.comb(rem + n - 1, n - 1)
    return out


def enumerate_configurations(n: int, total: int, cap: int | None = None) -> Iterator[tuple]:
    """All count vectors of length ``n`` summing to ``total`` (entries <= cap)."""
    if count_compositions(total, n, cap) > ENUMERATION_LIMIT:
        raise PreconditionError("more than 10^6 configurations to enumerate")
    hi = total if cap is None else min(cap, total)

    def rec(k, left):
        if k == 1:
            if left <= hi:
                yield (left,)
            return
        for v in range(min(hi, left), -1, -1):
            for rest in rec(k - 1, left - v):
                yield (v,) + rest

    if n == 0:
        if total == 0:
            yield ()
        return
    yield from rec(n, total)


@dataclass(frozen=True)
class BridgeReport:
    s: int
    configurations: int
    violations: int
    min_ratio: float
    max_ratio: float
    lower: float
    upper: float

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.configurations > 0


def type_bridge_log_ratio(p: np.ndarray, counts, s: int, dust_count: int = 0) -> float:
    """log(P^I[C] / P^II[C]) for a configuration with ``s' = sum(counts) + dust_count``.

    ``p`` may be a sub-probability vector; its missing mass is treated as
    infinitely fine dust whose atoms are hit at most once each
    (``dust_count`` of them).  Type I uses s' draws, type II s coin flips
    per element.
    """
    p = np.asarray(p, dtype=np.float64)
    c = np.asarray(counts, dtype=np.int64)
    rho = max(0.0, 1.0 - float(p.sum()))
    if rho == 0.0 and dust_count:
        raise PreconditionError("dust atoms need missing mass")
    s_prime = int(c.sum()) + dust_count
    falling = gammaln(s + 1) - gammaln(s - c + 1)
    log_ii = float(np.sum(falling)) + float(np.sum((s - c) * np.log1p(-p)))
    log_ii += dust_count * math.log(s) - rho * s
    return float(gammaln(s_prime + 1)) - log_ii


def type_bridge_check(p, s: int) -> BridgeReport:
    """Exhaustively compare type I / type II configuration probabilities.

    Covers every configuration with all counts <= ln s and total
    ``s'`` in ``[s - sqrt(s), s + sqrt(s)]``, and checks
    ``(2/3) sqrt(s) <= P^I / P^II <= 30 s^{3/2}``.
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any(p > 1.0 / (2 * s)):
        raise PreconditionError("every p_i must be <= 1/(2s)")
    cap = int(math.floor(math.log(s)))
    lo_tot = math.ceil(s - math.sqrt(s))
    hi_tot = math.floor(s + math.sqrt(s))
    has_dust = float(p.sum()) < 1.0 - 1e-12
    lower, upper = 2.0 / 3.0 * math.sqrt(s), 30.0 * s**1.5
    log_lo, log_hi = math.log(lower), math.log(upper)
    if (cap + 1) ** p.size * (hi_tot - lo_tot + 1) > ENUMERATION_LIMIT:
        raise PreconditionError("more than 10^6 configurations to enumerate")
    n_cfg = viol = 0
    rmin, rmax = math.inf, -math.inf
    for counts in itertools.product(range(cap + 1), repeat=p.size):
        tracked = sum(counts)
        for s_prime in range(lo_tot, hi_tot + 1):
            dust = s_prime - tracked
            if dust < 0 or (dust > 0 and not has_dust):
                continue
            n_cfg += 1
            r = type_bridge_log_ratio(p, counts, s, dust)
            rmin, rmax = min(rmin, r), max(rmax, r)
            if not (log_lo <= r <= log_hi):
                viol += 1
    return BridgeReport(s, n_cfg, viol, math.exp(rmin), math.exp(rmax), lower, upper)


# -- pattern sampling ----------------------------------------------------------


def pattern_sample(cfg: Configuration, source: SampleSource, return_set: bool = False):
    """Draw ``m = max(cfg)`` fresh samples; the i-th counts iff ``cfg[s_i] >= i``.

    Returns |S| (and the selected multiset when ``return_set``).
    """
    if cfg.n != source.n:
        raise DimensionError("configuration and source disagree on n")
    m = cfg.max_count
    draws = source.draw(m)
    keep = cfg.counts[draws] >= np.arange(1, m + 1)
    if return_set:
        return int(keep.sum()), Counter(draws[keep].tolist())
    return int(keep.sum())


def pattern_sample_batch(cfg: Configuration, source: SampleSource, repeats: int) -> np.ndarray:
    """|S| of ``repeats`` independent pattern samples, fresh draws each."""
    if cfg.n != source.n:
        raise DimensionError("configuration and source disagree on n")
    m = cfg.max_count
    if m == 0 or repeats == 0:
        source.draw(0)
        return np.zeros(repeats, dtype=np.int64)
    draws = source.draw(m * repeats).reshape(repeats, m)
    return (cfg.counts[draws] >= np.arange(1, m + 1)).sum(axis=1)


def pattern_threshold_masses(cfg: Configuration, probs: np.ndarray):
    """Run lengths and selection probabilities of the pattern draws.

    Draw ``i`` is selected with probability ``sum_j p_j [c_j >= i]``; that
    probability is constant between consecutive distinct counts.
    """
    c = cfg.counts
    levels = np.unique(c[c > 0])
    if levels.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    order = np.argsort(c)
    sorted_c = c[order]
    tail = np.cumsum(probs[order][::-1])[::-1]  # mass of ids at or above position
    first = np.searchsorted(sorted_c, levels, side="left")
    masses = np.minimum(tail[first], 1.0)
    runs = np.diff(np.concatenate(([0], levels)))
    return runs, masses


def pattern_sample_total(cfg: Configuration, source: SampleSource, repeats: int,
                         method: str = "auto") -> int:
    """Total |S| over ``repeats`` independent pattern samples.

    ``method="draw"`` performs every draw.  ``method="binomial"`` uses that
    the i-th draws of the runs are i.i.d. Bernoulli with the masses from
    :func:`pattern_threshold_masses`, so the total is a sum of independent
    binomials; the source is charged the same ``repeats * m`` draws.
    """
    m = cfg.max_count
    if method == "auto":
        method = "draw" if m * repeats <= 1 << 20 else "binomial"
    if method == "draw":
        total = 0
        chunk = max(1, (1 << 20) // max(m, 1))
        left = repeats
        while left > 0:
            k = min(chunk, left)
            total += int(pattern_sample_batch(cfg, source, k).sum())
            left -= k
        return total
    if method != "binomial":
        raise ValueError(f"unknown method {method!r}")
    if cfg.n != source.n:
        raise DimensionError("configuration and source disagree on n")
    runs, masses = pattern_threshold_masses(cfg, source.dist.probs)
    source.budget.charge(source.label, m * repeats)
    if runs.size == 0:
        return 0
    return int(source.rng.binomial(runs * repeats, masses).sum())


# -- signatures -----------------------------------------------------------------


@dataclass(frozen=True)
class SignatureHistogram:
    """m[(i, j, k)]: elements seen i times in P-training, j in Q-training, k in testing."""

    m: Mapping[tuple, int]
    s: int
    n: int

    def __post_init__(self):
        object.__setattr__(self, "m", dict(self.m))

    def get(self, i: int, j: int, k: int) -> int:
        return self.m.get((i, j, k), 0)

    def marginal(self, i: int, j: int) -> int:
        """m_{ij*}"""
        return sum(v for (a, b, _), v in self.m.items() if a == i and b == j)

    def tested(self, i: int, j: int) -> int:
        """m_{ij+}"""
        return sum(v for (a, b, k), v in self.m.items() if a == i and b == j and k > 0)

    def training_marginals(self) -> dict:
        out: dict = {}
        for (i, j, _), v in self.m.items():
            out[(i, j)] = out.get((i, j), 0) + v
        return out

    def to_json(self) -> dict:
        return {"s": self.s, "n": self.n,
                "m": [[i, j, k, v] for (i, j, k), v in sorted(self.m.items())]}


def extract_signatures(train_p: Configuration, train_q: Configuration,
                       test: Configuration) -> SignatureHistogram:
    if not train_p.n == train_q.n == test.n:
        raise DimensionError("phases disagree on domain size")
    a, b, c = train_p.counts, train_q.counts, test.counts
    base = int(max(a.max(initial=0), b.max(initial=0), c.max(initial=0))) + 1
    keys = (a * base + b) * base + c
    uniq, cnt = np.unique(keys, return_counts=True)
    m = {}
    for key, v in zip(uniq.tolist(), cnt.tolist()):
        rest, k = divmod(key, base)
        i, j = divmod(rest, base)
        m[(i, j, k)] = v
    return SignatureHistogram(m, test.total, test.n)


def hits(h: SignatureHistogram, i: int, j: int) -> int:
    """Testing draws that landed on elements of training signature (i, j)."""
    return sum(k * v for (a, b, k), v in h.m.items() if a == i and b == j)


@dataclass(frozen=True)
class ReconstructionReport:
    applicable: bool
    reason: str = ""
    reconstructed: dict = field(default_factory=dict)
    direct: dict = field(default_factory=dict)

    @property
    def matches(self) -> dict:
        return {k: self.reconstructed[k] == self.direct[k] for k in self.reconstructed}

    @property
    def all_match(self) -> bool:
        return self.applicable and all(self.matches.values())


_OBSERVED_PAIRS = {(1, 0), (0, 1), (0, 0)}


def in_single_collision_regime(h: SignatureHistogram) -> str:
    """Empty string when the no-higher-collision regime holds, else the reason."""
    for (i, j, k), v in h.m.items():
        if v == 0 or k == 0:
            continue
        if k > 2:
            return f"testing count {k} at signature {(i, j, k)}"
        if (i, j) not in _OBSERVED_PAIRS:
            return f"testing hit on training signature {(i, j)}"
        if k == 2 and (i, j) != (0, 0):
            return f"double testing hit at signature {(i, j, k)}"
    return ""


def reconstruct_sigs(h: SignatureHistogram, s: int | None = None) -> ReconstructionReport:
    """Rebuild m002, m100, m010, m000 from m101, m011, m001 and training marginals."""
    s = h.s if s is None else s
    why = in_single_collision_regime(h)
    if why:
        return ReconstructionReport(False, why)
    m101, m011, m001 = h.get(1, 0, 1), h.get(0, 1, 1), h.get(0, 0, 1)
    twice = s - m101 - m011 - m001
    if twice % 2:
        return ReconstructionReport(False, "testing size inconsistent with histogram")
    m002 = twice // 2
    rec = {
        "m002": m002,
        "m100": h.marginal(1, 0) - m101,
        "m010": h.marginal(0, 1) - m011,
        "m000": h.marginal(0, 0) - m002 - m001,
    }
    direct = {
        "m002": h.get(0, 0, 2),
        "m100": h.get(1, 0, 0),
        "m010": h.get(0, 1, 0),
        "m000": h.get(0, 0, 0),
    }
    return ReconstructionReport(True, "", rec, direct)


def weight_concentration_frequency(d: DiscreteDistribution, s: int, weights, trials: int, rng,
                                   chunk: int = 1 << 22) -> tuple[int, float]:
    """Type-I exceedances of |W - E W| >= 2 (ln s)^{3/2} ||A||_2, W = sum_i A_i c_i.

    Returns ``(exceedances, threshold)``.
    """
    a = np.asarray(weights, dtype=np.float64)
    if a.shape != (d.n,) or np.any(a < 0):
        raise ValueError("weights must be a non-negative vector over the domain")
    rng = make_rng(rng)
    mean = s * float(a @ d.probs)
    thr = 2.0 * math.log(s) ** 1.5 * float(np.linalg.norm(a))
    table = alias_table(d)
    rows = max(1, chunk // max(s, 1))
    over = 0
    done = 0
    while done < trials:
        k = min(rows, trials - done)
        w = a[table.draw(rng, k * s)].reshape(k, s).sum(axis=1)
        dev = np.abs(w - mean)
        # a deviation at rounding level is no deviation (matters when W is constant)
        over += int(np.count_nonzero((dev >= thr) & (dev > 1e-9 * max(1.0, mean))))
        done += k
    return over, thr
