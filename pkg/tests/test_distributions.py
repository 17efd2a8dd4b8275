import json
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disttest.distributions import (
    DimensionError,
    DiscreteDistribution,
    PermutedPair,
    PreconditionError,
    apply_permutation,
    distribution_from_json,
    hard_pair_blocks,
    load_distribution,
    make_hard_pair,
    norms,
    save_distribution,
    theorem_sample_size,
    weakly_disjoint_decompose,
)

D = DiscreteDistribution


def prob_vectors(min_n=1, max_n=12):
    return st.lists(st.floats(0, 10, allow_nan=False), min_size=min_n, max_size=max_n).filter(
        lambda w: sum(w) > 1e-3).map(D.from_weights)


def pairs(max_n=12):
    return st.integers(1, max_n).flatmap(
        lambda n: st.tuples(prob_vectors(n, n), prob_vectors(n, n)))


class TestDistribution:
    def test_validation(self):
        with pytest.raises(ValueError):
            D([0.5, 0.6])
        with pytest.raises(ValueError):
            D([1.5, -0.5])
        with pytest.raises(ValueError):
            D([])
        d = D([0.25, 0.75])
        assert d.n == 2
        with pytest.raises(ValueError):
            d.probs[0] = 1.0

    def test_sum_tolerance_is_tight(self):
        D([0.5, 0.5 + 5e-10])
        with pytest.raises(ValueError):
            D([0.5, 0.5 + 1e-8])

    def test_constructors(self):
        assert D.uniform(4) == D([0.25] * 4)
        assert D.point_mass(5, 3).support().tolist() == [3]
        assert D.from_weights([1, 3]) == D([0.25, 0.75])
        assert hash(D.uniform(3)) == hash(D.uniform(3))


class TestNorms:
    def test_identical(self):
        par = norms(D([0.5, 0.5]), D([0.5, 0.5]))
        assert par.l1 == 0 and par.numsamples == math.inf
        assert par.theorem_s is None and par.identical
        assert par.to_json()["numsamples"] == "inf"

    def test_disjoint_point_masses(self):
        par = norms(D([1, 0]), D([0, 1]))
        assert par.l1 == pytest.approx(2)
        assert par.l2_diff == pytest.approx(math.sqrt(2))
        assert par.l2_sum == pytest.approx(math.sqrt(2))
        assert par.alpha == pytest.approx(math.sqrt(2))
        assert par.numsamples == pytest.approx(1 / math.sqrt(2))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            norms(D.uniform(2), D.uniform(3))

    def test_theorem_s_formula(self):
        a = 0.01
        assert theorem_sample_size(a) == math.ceil(60 * abs(math.log(a)) ** 3.5 / a)

    def test_hard_pair_growth(self):
        par = norms(*make_hard_pair(1000))
        assert 25 <= par.numsamples <= 400

    @settings(max_examples=150, deadline=None)
    @given(pairs())
    def test_invariants(self, pq):
        p, q = pq
        par = norms(p, q)
        assert min(par.l1, par.l2_diff, par.l2_sum, par.l3_diff) >= 0
        assert par.l1 <= 2 + 1e-12
        assert par.l2_diff <= par.l2_sum + 1e-12
        diff = p.probs - q.probs
        assert par.l2_diff**2 <= par.l1 * np.abs(diff).max() + 1e-12
        # independent recomputation
        assert par.l1 == pytest.approx(np.abs(diff).sum(), abs=1e-12)
        assert par.l2_sum == pytest.approx(math.sqrt(((p.probs + q.probs) ** 2).sum()))
        if not par.identical:
            assert par.numsamples == pytest.approx(1 / par.alpha)

    @settings(max_examples=50, deadline=None)
    @given(pairs(), st.integers(0, 2**32 - 1))
    def test_permutation_invariant(self, pq, seed):
        pp = apply_permutation(pq, seed)
        a, b = norms(*pq), norms(pp.p, pp.q)
        assert a.l1 == pytest.approx(b.l1)
        assert a.l2_diff == pytest.approx(b.l2_diff)
        assert a.numsamples == pytest.approx(b.numsamples)


class TestWeaklyDisjoint:
    def test_by_hand(self):
        dec = weakly_disjoint_decompose(D([0.5, 0.5, 0]), D([0.5, 0, 0.5]))
        assert dec.common == {0} and dec.disjoint_p == {1} and dec.disjoint_q == {2}
        assert dec.disjoint_mass_p == dec.disjoint_mass_q == 0.5
        assert dec.labels(3).tolist() == [0, 1, 2]

    def test_not_weakly_disjoint(self):
        res = weakly_disjoint_decompose(D([0.6, 0.4]), D([0.5, 0.5]))
        assert not res and res.element == 0

    def test_identical(self):
        p = D([0.1, 0.2, 0.7])
        dec = weakly_disjoint_decompose(p, p)
        assert not dec.disjoint_p and not dec.disjoint_q and dec.common_mass == pytest.approx(1)

    def test_zero_elements_are_common(self):
        dec = weakly_disjoint_decompose(D([0.5, 0.5, 0]), D([0.5, 0.5, 0]))
        assert dec.common == {0, 1, 2}

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.floats(0.05, 0.95))
    def test_mass_identity(self, nc, np_, nq, cm):
        n = nc + np_ + nq
        p, q = np.zeros(n), np.zeros(n)
        p[:nc] = q[:nc] = cm / nc
        p[nc:nc + np_] = (1 - cm) / np_
        q[nc + np_:] = (1 - cm) / nq
        P, Q = D(p), D(q)
        dec = weakly_disjoint_decompose(P, Q)
        assert dec
        assert dec.common | dec.disjoint_p | dec.disjoint_q == set(range(n))
        assert abs(dec.disjoint_mass_p - dec.disjoint_mass_q) <= 1e-9
        assert abs(dec.disjoint_mass_p + dec.disjoint_mass_q - norms(P, Q).l1) <= 1e-9


class TestHardPair:
    @pytest.mark.parametrize("n", [8, 64, 1024, 4096])
    def test_structure(self, n):
        p, q = make_hard_pair(n)
        dec = weakly_disjoint_decompose(p, q)
        assert dec
        heavy, light = hard_pair_blocks(n)
        assert len(dec.common) == n - 2 * light and heavy % 2 == 0
        assert dec.disjoint_mass_p == pytest.approx(0.5)
        assert norms(p, q).l1 >= 0.5

    def test_n64(self):
        p, q = make_hard_pair(64)
        dec = weakly_disjoint_decompose(p, q)
        assert hard_pair_blocks(64) == (16, 24)
        assert len(dec.disjoint_p) == len(dec.disjoint_q) == 24
        assert norms(p, q).l1 == pytest.approx(1.0)

    def test_n4096_scale(self):
        ratio = norms(*make_hard_pair(4096)).numsamples / 4096 ** (2 / 3)
        assert 0.25 <= ratio <= 4

    def test_lower_bound_preconditions_at_construction(self):
        par = norms(*make_hard_pair(4096))
        s = par.numsamples / 10
        assert s * par.l3_diff <= 0.25 and s * par.linf_p <= 1

    @pytest.mark.parametrize("n", [7, 4, 10, 0])
    def test_bad_n(self, n):
        with pytest.raises(PreconditionError):
            make_hard_pair(n)


class TestPermutation:
    def test_multiset_preserved(self):
        pair = make_hard_pair(64)
        pp = apply_permutation(pair, 11)
        assert np.array_equal(np.sort(pp.p.probs), np.sort(pair[0].probs))
        assert np.array_equal(pp.p.probs[pp.perm], pair[0].probs)
        assert np.array_equal(pp.p.probs, pair[0].probs[pp.inverse])

    def test_deterministic(self):
        pair = make_hard_pair(64)
        assert np.array_equal(apply_permutation(pair, 5).perm, apply_permutation(pair, 5).perm)

    def test_rejects_non_bijection(self):
        p = D.uniform(3)
        with pytest.raises(ValueError):
            PermutedPair(p, p, np.array([0, 0, 1]), 0)

    def test_uniform_over_s3(self):
        rng = np.random.default_rng(3)
        pair = (D([0.5, 0.3, 0.2]), D([0.5, 0.3, 0.2]))
        seeds = rng.integers(0, 2**63, size=100_000)
        freq = Counter(tuple(apply_permutation(pair, int(s)).perm) for s in seeds)
        assert len(freq) == 6
        for c in freq.values():
            assert abs(c / 1e5 - 1 / 6) <= 0.02


class TestFiles:
    def test_dense_roundtrip(self, tmp_path):
        d = D([0.1, 0.2, 0.7])
        save_distribution(d, tmp_path / "d.json")
        assert load_distribution(tmp_path / "d.json") == d

    def test_sparse(self):
        d = distribution_from_json({"n": 5, "entries": [[1, 0.5], [4, 0.5]]})
        assert d.probs.tolist() == [0, 0.5, 0, 0, 0.5]

    def test_normalizes_small_drift(self):
        d = distribution_from_json({"n": 2, "probs": [0.5, 0.5 + 5e-7]})
        assert d.probs.sum() == pytest.approx(1, abs=1e-12)

    @pytest.mark.parametrize("obj", [
        {"n": 2, "probs": [0.5, 0.6]},
        {"n": 3, "probs": [0.5, 0.5]},
        {"n": 2, "entries": [[2, 1.0]]},
        {"n": 2, "probs": [1.5, -0.5]},
        {"n": 2},
    ])
    def test_rejects(self, obj):
        with pytest.raises(ValueError):
            distribution_from_json(json.loads(json.dumps(obj)))
