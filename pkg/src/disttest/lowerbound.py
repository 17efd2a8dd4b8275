"""Random-permutation game for weakly disjoint pairs and likelihood-ratio checks.

The lab is omniscient: it knows the permutation and the true masses.  Testers
only see a :class:`GameView`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .distributions import (
    DiscreteDistribution,
    NotWeaklyDisjoint,
    PreconditionError,
    norms,
    weakly_disjoint_decompose,
)
from .sampling import (
    Configuration,
    SignatureHistogram,
    derive_seed,
    extract_signatures,
    hits,
    sample_type1,
)

H1, H2 = "H1", "H2"
DEFAULT_C = 10.0
RATIO_CAP = 8.0


@dataclass(frozen=True)
class HintMasses:
    """True masses of the training-sampled common / disjoint elements."""

    c_p: float
    c_q: float
    d_p: float
    d_q: float

    def swapped(self) -> "HintMasses":
        return HintMasses(self.c_q, self.c_p, self.d_q, self.d_p)


@dataclass(frozen=True)
class HintReport:
    helpful: frozenset
    unhelpful: frozenset
    testing_signatures: SignatureHistogram


@dataclass(frozen=True, eq=False)
class GameView:
    """Everything a tester may look at: shapes, phase counts (permuted ids), a tie coin."""

    base_p: DiscreteDistribution
    base_q: DiscreteDistribution
    s: int
    train_p: Configuration
    train_q: Configuration
    test: Configuration
    signatures: SignatureHistogram
    coin: float


@dataclass(frozen=True, eq=False)
class GameResult:
    hypothesis: str
    signatures: SignatureHistogram
    hint: HintReport
    masses: HintMasses
    view: GameView
    labels: np.ndarray  # 0 common, 1 P-only, 2 Q-only, permuted ids
    perm: np.ndarray

    @property
    def abc(self) -> tuple[int, int, int]:
        h = self.signatures
        return hits(h, 1, 0), hits(h, 0, 1), hits(h, 0, 0)


def _decompose(base_p, base_q):
    dec = weakly_disjoint_decompose(base_p, base_q)
    if isinstance(dec, NotWeaklyDisjoint):
        raise PreconditionError(f"pair is not weakly disjoint (element {dec.element})")
    return dec


def play_permutation_game(base_p: DiscreteDistribution, base_q: DiscreteDistribution, s: int,
                          hypothesis: str, seed: int, _labels=None) -> GameResult:
    """One round: random relabelling, s training draws from each side, s test draws.

    The permutation and both training phases depend only on ``seed``, so the
    two hypotheses can be compared on identical training data.
    """
    if s < 1:
        raise PreconditionError("s must be >= 1")
    if hypothesis not in (H1, H2):
        raise ValueError(f"hypothesis must be {H1!r} or {H2!r}")
    base_labels = _labels if _labels is not None else _decompose(base_p, base_q).labels(base_p.n)
    ss = np.random.SeedSequence(seed)
    perm_ss, tp_ss, tq_ss, test_ss, coin_ss = ss.spawn(5)
    perm = np.random.default_rng(int(perm_ss.generate_state(1, np.uint64)[0])).permutation(base_p.n)
    p_probs = np.empty(base_p.n)
    p_probs[perm] = base_p.probs
    q_probs = np.empty(base_q.n)
    q_probs[perm] = base_q.probs
    labels = np.empty_like(base_labels)
    labels[perm] = base_labels

    # draws from the base shapes mapped through perm are draws from pi P / pi Q
    train_p = sample_type1(base_p, s, np.random.default_rng(tp_ss), perm)
    train_q = sample_type1(base_q, s, np.random.default_rng(tq_ss), perm)
    test = sample_type1(base_p if hypothesis == H1 else base_q, s, np.random.default_rng(test_ss), perm)
    sig = extract_signatures(train_p, train_q, test)

    tp, tq, te = train_p.counts, train_q.counts, test.counts
    revealed = (tp >= 2) | (tq >= 2)
    helpful = np.flatnonzero(revealed & (te >= 1) & (labels != 0))
    unhelpful = np.flatnonzero(revealed & (labels == 0))
    hint = HintReport(frozenset(helpful.tolist()), frozenset(unhelpful.tolist()), sig)

    seen_p, seen_q = tp >= 1, tq >= 1
    masses = HintMasses(
        c_p=float(p_probs[seen_p & (labels == 0)].sum()),
        c_q=float(q_probs[seen_q & (labels == 0)].sum()),
        d_p=float(p_probs[seen_p & (labels == 1)].sum()),
        d_q=float(q_probs[seen_q & (labels == 2)].sum()),
    )
    coin = float(np.random.default_rng(coin_ss).random())
    view = GameView(base_p, base_q, s, train_p, train_q, test, sig, coin)
    return GameResult(hypothesis, sig, hint, masses, view, labels, perm)


def expected_training_mass(d: DiscreteDistribution, s: int) -> float:
    """E[mass of the elements drawn at least once in s draws]."""
    p = d.probs
    return float(np.sum(p * -np.expm1(s * np.log1p(-np.minimum(p, 1 - 1e-300)))))


def _log_pow(x: float, k: int) -> float:
    if k == 0:
        return 0.0
    if x <= 0:
        return -math.inf
    return k * math.log(x)


def log_likelihood_ratio(h: HintMasses, a: int, b: int, c: int) -> float:
    if min(a, b, c) < 0:
        raise PreconditionError("a, b, c must be non-negative")
    num = (_log_pow(h.c_p + h.d_p, a) + _log_pow(h.c_q, b)
           + _log_pow(1 - h.c_p - h.c_q - h.d_p, c))
    den = (_log_pow(h.c_p, a) + _log_pow(h.c_q + h.d_q, b)
           + _log_pow(1 - h.c_p - h.c_q - h.d_q, c))
    if den == -math.inf:
        return math.nan if num == -math.inf else math.inf
    return num - den


def likelihood_ratio(h: HintMasses, a: int, b: int, c: int) -> float:
    """Closed-form Pr[hits = (a, b, c) | H1] / Pr[... | H2].

    ``inf`` flags a zero-mass denominator term with positive exponent;
    ``nan`` means both sides vanish.
    """
    lr = log_likelihood_ratio(h, a, b, c)
    if math.isnan(lr):
        return lr
    return math.exp(lr) if lr < 700 else math.inf


# -- preconditions --------------------------------------------------------------


def lower_bound_preconditions(base_p, base_q, s: int, c: float = DEFAULT_C) -> dict:
    par = norms(base_p, base_q)
    limits = {
        "l3": 0.25 / par.l3_diff if par.l3_diff > 0 else math.inf,
        "linf_p": 1.0 / par.linf_p,
        "linf_q": 1.0 / par.linf_q,
        "numsamples_over_c": par.numsamples / c,
    }
    s_max = min(limits.values())
    return {"s": s, "c": c, **limits, "s_max": s_max, "ok": s <= s_max}


def max_lower_bound_s(base_p, base_q, c: float = DEFAULT_C) -> int:
    """Largest integer s meeting every lower-bound precondition."""
    s_max = lower_bound_preconditions(base_p, base_q, 1, c)["s_max"]
    if math.isinf(s_max):
        raise PreconditionError("identical distributions put no cap on s")
    return max(1, int(math.floor(s_max)))


def _gate(base_p, base_q, s, c, check):
    pre = lower_bound_preconditions(base_p, base_q, s, c)
    if check and not pre["ok"]:
        raise PreconditionError(
            f"s={s} exceeds the lower-bound preconditions (max {pre['s_max']:.3f})")
    return pre


@dataclass(frozen=True)
class BoundReport:
    games: int
    s: int
    ratio_le_8_frac: float
    helpful_frac: float
    ratio_quantiles: dict
    infinite_ratios: int
    preconditions: dict
    helpful_decisive: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def lower_h_bound_experiment(base_p, base_q, s: int, games: int, seed: int,
                             c: float = DEFAULT_C, check_preconditions: bool = True) -> BoundReport:
    """H1 games; fraction with likelihood ratio of (h10, h01, h00) at most 8."""
    pre = _gate(base_p, base_q, s, c, check_preconditions)
    labels = _decompose(base_p, base_q).labels(base_p.n)
    ratios = np.empty(games)
    helpful = 0
    decisive = True
    for g in range(games):
        res = play_permutation_game(base_p, base_q, s, H1, derive_seed(seed, g), labels)
        ratios[g] = likelihood_ratio(res.masses, *res.abc)
        if res.hint.helpful:
            helpful += 1
            sides = {int(res.labels[x]) for x in res.hint.helpful}
            decisive &= sides == {1}
    finite = ratios[np.isfinite(ratios)]
    qs = {f"q{int(100 * q)}": float(np.quantile(finite, q)) for q in (0.1, 0.5, 0.9)} if finite.size else {}
    return BoundReport(
        games=games, s=s,
        ratio_le_8_frac=float(np.mean(ratios <= RATIO_CAP)),
        helpful_frac=helpful / games,
        ratio_quantiles=qs,
        infinite_ratios=int(np.sum(np.isinf(ratios))),
        preconditions=pre,
        helpful_decisive=decisive,
    )


# -- testers --------------------------------------------------------------------

Tester = Callable[[GameView], str]


def _coin(view: GameView) -> str:
    return "P" if view.coin < 0.5 else "Q"


def hits_difference_tester(view: GameView) -> str:
    """Sign of h(1,0) - h(0,1); ties by coin."""
    a, b = hits(view.signatures, 1, 0), hits(view.signatures, 0, 1)
    if a != b:
        return "P" if a > b else "Q"
    return _coin(view)


def collision_tester(view: GameView) -> str:
    """Collision rule of the two-stage distinguisher on the fixed test sample; ties to Q."""
    te = view.test.counts
    c_p = int(np.dot(te, view.train_p.counts))
    c_q = int(np.dot(te, view.train_q.counts))
    return "P" if c_p > c_q else "Q"


def _signature_rates(base_p, base_q, s):
    p, q = base_p.probs, base_q.probs
    lp, lq = np.log1p(-np.minimum(p, 1 - 1e-15)), np.log1p(-np.minimum(q, 1 - 1e-15))
    none_p, none_q = np.exp(s * lp), np.exp(s * lq)
    once_p = s * p * np.exp((s - 1) * lp)
    once_q = s * q * np.exp((s - 1) * lq)
    f10, f01, f00 = once_p * none_q, none_p * once_q, none_p * none_q
    rates = {}
    for name, t in (("H1", p), ("H2", q)):
        a, b, z = float(t @ f10), float(t @ f01), float(t @ f00)
        rates[name] = (a, b, z, max(0.0, 1.0 - a - b - z))
    return rates


def signature_likelihood_tester(view: GameView) -> str:
    """Plug-in likelihood ratio of (m101, m011, m001) under the known shapes; threshold 1.

    Per-draw landing rates on training signatures (1,0), (0,1), (0,0) are
    their expectations over the unknown permutation.
    """
    rates = _signature_rates(view.base_p, view.base_q, view.s)
    h = view.signatures
    obs = (h.get(1, 0, 1), h.get(0, 1, 1), h.get(0, 0, 1))
    obs = obs + (max(0, view.s - sum(obs)),)
    llr = 0.0
    for k, r1, r2 in zip(obs, rates["H1"], rates["H2"]):
        llr += _log_pow(r1, k) - _log_pow(r2, k) if k else 0.0
    if math.isnan(llr) or llr == 0:
        return _coin(view)
    return "P" if llr > 0 else "Q"


BUILTIN_TESTERS: Mapping[str, Tester] = {
    "signature_likelihood": signature_likelihood_tester,
    "collision": collision_tester,
    "hits_difference": hits_difference_tester,
}


@dataclass(frozen=True)
class ErrorReport:
    games: int
    s: int
    error_rate: dict
    preconditions: dict

    def to_json(self) -> dict:
        return dict(self.__dict__)


def indistinguishability_experiment(base_p, base_q, s: int, testers: Mapping[str, Tester] | None = None,
                                    games: int = 1000, seed: int = 0, c: float = DEFAULT_C,
                                    check_preconditions: bool = True) -> ErrorReport:
    """Alternate H1/H2 games; error rate of every tester on the same games."""
    pre = _gate(base_p, base_q, s, c, check_preconditions)
    testers = dict(BUILTIN_TESTERS if testers is None else testers)
    labels = _decompose(base_p, base_q).labels(base_p.n)
    wrong = {name: 0 for name in testers}
    for g in range(games):
        hyp = H1 if g % 2 == 0 else H2
        res = play_permutation_game(base_p, base_q, s, hyp, derive_seed(seed, g), labels)
        truth = "P" if hyp == H1 else "Q"
        for name, tester in testers.items():
            wrong[name] += tester(res.view) != truth
    return ErrorReport(games, s, {k: v / games for k, v in wrong.items()}, pre)
