"""Discrete distributions, separation norms and weakly disjoint pairs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

SUM_TOL = 1e-9
LOAD_NORMALIZE_TOL = 1e-6


class DimensionError(ValueError):
    """Two distributions (or a distribution and a configuration) disagree on n."""


class PreconditionError(ValueError):
    """An operation was called outside its stated preconditions."""


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite probability vector over the domain ``0..n-1``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64, copy=True).reshape(-1)
        if p.size < 1:
            raise ValueError("distribution needs n >= 1")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probabilities must be finite and non-negative")
        total = float(p.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n(self) -> int:
        return int(self.probs.size)

    @classmethod
    def uniform(cls, n: int) -> "DiscreteDistribution":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, n: int, at: int) -> "DiscreteDistribution":
        p = np.zeros(n)
        p[at] = 1.0
        return cls(p)

    @classmethod
    def from_weights(cls, weights: Iterable[float]) -> "DiscreteDistribution":
        w = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights, dtype=np.float64)
        return cls(w / w.sum())

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self):
        return f"DiscreteDistribution(n={self.n})"

    def to_json(self) -> dict:
        return {"n": self.n, "probs": [float(x) for x in self.probs]}


def _check_pair(p: DiscreteDistribution, q: DiscreteDistribution) -> None:
    if p.n != q.n:
        raise DimensionError(f"domain sizes differ: {p.n} != {q.n}")


@dataclass(frozen=True)
class SeparationParams:
    l1: float
    l2_diff: float
    l2_sum: float
    l3_diff: float
    linf_p: float
    linf_q: float
    alpha: float
    numsamples: float
    theorem_s: int | None
    identical: bool = False

    def to_json(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, float) and math.isinf(v):
                out[k] = "inf"
            else:
                out[k] = v
        return out


def theorem_sample_size(alpha: float) -> int:
    """ceil(60 |ln alpha|^{7/2} / alpha), natural log."""
    if not alpha > 0:
        raise PreconditionError("alpha must be positive")
    return int(math.ceil(60.0 * abs(math.log(alpha)) ** 3.5 / alpha))


def norms(p: DiscreteDistribution, q: DiscreteDistribution) -> SeparationParams:
    _check_pair(p, q)
    diff = p.probs - q.probs
    tot = p.probs + q.probs
    l2_diff = float(np.sqrt(np.dot(diff, diff)))
    l2_sum = float(np.sqrt(np.dot(tot, tot)))
    alpha = l2_diff**2 / l2_sum
    if alpha > 0:
        numsamples = l2_sum / l2_diff**2
        theorem_s = theorem_sample_size(alpha)
    else:
        numsamples = math.inf
        theorem_s = None
    return SeparationParams(
        l1=float(np.abs(diff).sum()),
        l2_diff=l2_diff,
        l2_sum=l2_sum,
        l3_diff=float(np.cbrt(np.sum(np.abs(diff) ** 3))),
        linf_p=float(p.probs.max()),
        linf_q=float(q.probs.max()),
        alpha=alpha,
        numsamples=numsamples,
        theorem_s=theorem_s,
        identical=alpha == 0,
    )


@dataclass(frozen=True)
class WeaklyDisjointDecomposition:
    common: frozenset
    disjoint_p: frozenset
    disjoint_q: frozenset
    common_mass: float
    disjoint_mass_p: float
    disjoint_mass_q: float

    def labels(self, n: int) -> np.ndarray:
        """Per-element side: 0 common, 1 owned by P, 2 owned by Q."""
        out = np.zeros(n, dtype=np.int8)
        out[list(self.disjoint_p)] = 1
        out[list(self.disjoint_q)] = 2
        return out


@dataclass(frozen=True)
class NotWeaklyDisjoint:
    element: int
    p: float
    q: float

    def __bool__(self):
        return False


def weakly_disjoint_decompose(
    p: DiscreteDistribution, q: DiscreteDistribution, tol: float = 1e-12
) -> WeaklyDisjointDecomposition | NotWeaklyDisjoint:
    """Split the domain into common / P-only / Q-only elements.

    ``tol`` is relative: ``p_x`` and ``q_x`` count as equal when they differ by
    at most ``tol * max(p_x, q_x)``.  A falsy ``NotWeaklyDisjoint`` carrying
    the first offending element is returned when the pair does not qualify.
    """
    _check_pair(p, q)
    if tol < 0:
        raise PreconditionError("tol must be >= 0")
    a, b = p.probs, q.probs
    equal = np.abs(a - b) <= tol * np.maximum(a, b)
    only_p = (a > 0) & (b == 0)
    only_q = (b > 0) & (a == 0)
    ok = equal | only_p | only_q
    if not ok.all():
        i = int(np.argmin(ok))
        return NotWeaklyDisjoint(i, float(a[i]), float(b[i]))
    common = np.flatnonzero(equal)
    dp = np.flatnonzero(only_p & ~equal)
    dq = np.flatnonzero(only_q & ~equal)
    return WeaklyDisjointDecomposition(
        common=frozenset(common.tolist()),
        disjoint_p=frozenset(dp.tolist()),
        disjoint_q=frozenset(dq.tolist()),
        common_mass=float(a[common].sum()),
        disjoint_mass_p=float(a[dp].sum()),
        disjoint_mass_q=float(b[dq].sum()),
    )


def hard_pair_blocks(n: int) -> tuple[int, int]:
    """(heavy block size, size of each light block) used by make_hard_pair."""
    heavy = math.ceil(n ** (2.0 / 3.0) - 1e-9)
    heavy += heavy % 2
    light = (n - heavy) // 2
    return heavy, light


def make_hard_pair(n: int) -> tuple[DiscreteDistribution, DiscreteDistribution]:
    """Weakly disjoint pair with numsamples of order n^(2/3).

    A shared heavy block of ~n^(2/3) ids carries mass 1/2 in both
    distributions; the remaining ids are split into two halves and each
    distribution spreads its other 1/2 uniformly over its own half.
    """
    if n < 8 or n % 4:
        raise PreconditionError("make_hard_pair needs n >= 8 and n divisible by 4")
    heavy, light = hard_pair_blocks(n)
    p = np.zeros(n)
    q = np.zeros(n)
    p[:heavy] = q[:heavy] = 0.5 / heavy
    p[heavy : heavy + light] = 0.5 / light
    q[heavy + light : heavy + 2 * light] = 0.5 / light
    P, Q = DiscreteDistribution(p), DiscreteDistribution(q)

    par = norms(P, Q)
    s = par.numsamples / 10.0
    assert s * par.l3_diff <= 0.25 and s * par.linf_p <= 1 and s * par.linf_q <= 1
    return P, Q


@dataclass(frozen=True, eq=False)
class PermutedPair:
    """``perm[i]`` is the new id of base element ``i``."""

    base_p: DiscreteDistribution
    base_q: DiscreteDistribution
    perm: np.ndarray
    seed: int
    p: DiscreteDistribution = field(init=False, repr=False)
    q: DiscreteDistribution = field(init=False, repr=False)

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        n = self.base_p.n
        if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
            raise ValueError("perm is not a bijection on the domain")
        perm.setflags(write=False)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "p", permute(self.base_p, perm))
        object.__setattr__(self, "q", permute(self.base_q, perm))

    @property
    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return inv


def permute(d: DiscreteDistribution, perm: np.ndarray) -> DiscreteDistribution:
    out = np.empty(d.n)
    out[perm] = d.probs
    return DiscreteDistribution(out)


def apply_permutation(
    pair: tuple[DiscreteDistribution, DiscreteDistribution], seed: int
) -> PermutedPair:
    p, q = pair
    _check_pair(p, q)
    perm = np.random.default_rng(seed).permutation(p.n)
    return PermutedPair(p, q, perm, seed)


# -- file formats -----------------------------------------------------------


def distribution_from_json(obj: dict) -> DiscreteDistribution:
    """Dense ``{"n", "probs"}`` or sparse ``{"n", "entries": [[id, p], ...]}``."""
    n = int(obj["n"])
    if "probs" in obj:
        probs = np.asarray(obj["probs"], dtype=np.float64)
        if probs.size != n:
            raise ValueError(f"'probs' has {probs.size} entries, expected n={n}")
    elif "entries" in obj:
        probs = np.zeros(n)
        for i, v in obj["entries"]:
            i = int(i)
            if not 0 <= i < n:
                raise ValueError(f"entry id {i} outside [0, {n})")
            probs[i] += float(v)
    else:
        raise ValueError("distribution object needs 'probs' or 'entries'")
    if np.any(probs < 0):
        raise ValueError("negative probability in distribution file")
    total = float(probs.sum())
    if abs(total - 1.0) > LOAD_NORMALIZE_TOL:
        raise ValueError(f"probabilities sum to {total}, outside normalization tolerance")
    if abs(total - 1.0) <= SUM_TOL:
        # already a valid distribution; keep the stored values bit for bit
        return DiscreteDistribution(probs)
    return DiscreteDistribution(probs / total)


def load_distribution(path: str | Path) -> DiscreteDistribution:
    with open(path) as fh:
        return distribution_from_json(json.load(fh))


def save_distribution(d: DiscreteDistribution, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(d.to_json(), fh)
