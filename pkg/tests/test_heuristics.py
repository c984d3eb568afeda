import math
import random
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mutcoh.argmap import Argument, ArgumentMap
from mutcoh.coherence import CoherenceEngine, exact_cost, one_coh, subposition
from mutcoh.heuristics import (
    FINER,
    METHODS,
    EMConfig,
    EmptyPool,
    GaussianMixture3,
    OverlapSets,
    SampleSet,
    approximate_one_coh,
    estimate_average,
    estimate_average_mu2,
    estimate_direct,
    estimate_direct_slope,
    estimate_fit_mu2,
    fit_mu2,
    mixture_weights,
    overlap_fine,
    overlap_simple,
    sample_masks,
    sample_subsets,
)
from mutcoh.logic import Position

from oracles import conf_oracle, consistent_positions, nonempty_subsets, random_triple

A_IMPLIES_B = ArgumentMap(2, [Argument.of([1], 2)], {2})
W_EXAMPLE = (Fraction(4, 7), Fraction(2, 7), Fraction(1, 7))


def sets(neg=(), com=(), cntr=None, impl=None) -> OverlapSets:
    return OverlapSets(
        frozenset(neg), frozenset(com),
        None if cntr is None else frozenset(cntr),
        None if impl is None else frozenset(impl),
    )


def reference_em(values, weights, sigma=0.1, tol=1e-6, max_iters=100):
    """Plain-float EM on the middle mean; densities computed directly."""
    mu = sum(values) / len(values)

    def pdf(x, m):
        return math.exp(-0.5 * ((x - m) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))

    for _ in range(max_iters):
        resp = []
        for x in values:
            parts = [weights[0] * pdf(x, -1), weights[1] * pdf(x, mu), weights[2] * pdf(x, 1)]
            resp.append(parts[1] / sum(parts))
        new = sum(r * x for r, x in zip(resp, values)) / sum(resp)
        if abs(new - mu) < tol:
            return new
        mu = new
    return mu


class TestOverlap:
    def test_simple_example(self):
        s = overlap_simple(Position({1: True, 2: True, 3: True}), Position({1: False, 2: True}))
        assert s.neg == {1} and s.com == {2}

    def test_disjoint(self):
        s = overlap_simple(Position({1: True}), Position({2: False}))
        assert s.neg == set() and s.com == set()

    def test_identical(self):
        a = Position({1: True, 4: False, 9: True})
        s = overlap_simple(a, a)
        assert s.neg == set() and s.com == {1, 4, 9}

    def test_fine_without_arguments(self):
        a = Position({1: True, 2: False, 3: True})
        b = Position({1: False, 2: False, 4: True})
        s = overlap_fine(ArgumentMap(4), a, b)
        assert s.cntr == s.neg == {1}
        assert s.impl == s.com == {2}
        assert s.fine_equals_simple

    def test_fine_contradiction(self):
        s = overlap_fine(A_IMPLIES_B, Position({2: False}), Position({1: True}))
        assert s.neg == set() and s.cntr == {2}

    def test_fine_implication(self):
        s = overlap_fine(A_IMPLIES_B, Position({2: True}), Position({1: True}))
        assert s.com == set() and s.impl == {2}
        assert not s.fine_equals_simple

    def test_fine_call_count(self):
        engine = CoherenceEngine(A_IMPLIES_B)
        overlap_fine(engine, Position({1: False, 2: True}), Position({1: True}))
        assert engine.calls == 3

    def test_invariants(self):
        with pytest.raises(ValueError):
            sets(neg={1}, com={1})
        with pytest.raises(ValueError):
            sets(neg={1}, cntr=set(), impl=set())


class TestWeights:
    def test_example(self):
        assert mixture_weights(3, sets({1}, {2})) == (Fraction(4, 7), Fraction(2, 7), Fraction(1, 7))

    def test_no_overlap(self):
        assert mixture_weights(4, sets()) == (0, 1, 0)

    def test_contained(self):
        assert mixture_weights(3, sets(com={1, 2, 3})) == (0, 0, 1)

    def test_finer_requires_sets(self):
        with pytest.raises(ValueError):
            mixture_weights(3, sets(), FINER)

    @given(st.integers(1, 12), st.data())
    def test_valid(self, k, data):
        neg = data.draw(st.sets(st.integers(0, k - 1)))
        com = data.draw(st.sets(st.integers(0, k - 1).filter(lambda v: v not in neg)))
        w = mixture_weights(k, sets(neg, com))
        assert sum(w) == 1
        assert all(0 <= x <= 1 for x in w)


class TestDirect:
    def test_example(self):
        r = estimate_direct(W_EXAMPLE)
        assert r.estimate == pytest.approx(-3 / 7)
        assert r.mu2 == 0 and r.samples_used == 0

    @pytest.mark.parametrize("w, expected", [((0, 1, 0), 0.0), ((0, 0, 1), 1.0)])
    def test_degenerate(self, w, expected):
        assert estimate_direct(w).estimate == expected

    def test_slope(self):
        r = estimate_direct_slope(4, sets(com={1, 2}))
        assert r.estimate == pytest.approx(0.5)
        assert r.weights_used == (0.0, 0.5, 0.5)

    def test_slope_without_com(self):
        s = sets(neg={1})
        assert estimate_direct_slope(3, s).estimate == estimate_direct(mixture_weights(3, s)).estimate

    def test_slope_fallback(self):
        # w1 = 6/7 and |com|/k = 1/3 would overshoot 1.
        s = sets(neg={1, 2}, com={3})
        assert estimate_direct_slope(3, s).estimate == estimate_direct(mixture_weights(3, s)).estimate

    def test_pointwise_negation(self):
        a = Position({v: True for v in range(1, 6)})
        r = approximate_one_coh(ArgumentMap(5), a, a.negated(), "direct")
        assert r.estimate == -1.0
        assert r.counter_calls == 0


class TestSampling:
    def test_unfiltered_cardinality(self):
        masks, exhausted = sample_masks(3, 1.0, rng=random.Random(0))
        assert len(masks) == 3 == len(set(masks))
        assert all(1 <= m <= 7 for m in masks)
        assert not exhausted

    def test_filtered_pool(self):
        # dom = {a, b, c} as bits 0, 1, 2; neg = {a}, com = {b}.
        masks, exhausted = sample_masks(3, 5.0, refuted_mask=0b001, entailed_mask=0b010,
                                        filtered=True, rng=random.Random(0))
        assert sorted(masks) == [0b100, 0b110]
        assert exhausted

    def test_filtered_pool_by_enumeration(self):
        for k, neg, com in [(4, 0b0001, 0b0110), (5, 0b00000, 0b00111), (5, 0b10001, 0)]:
            expected = sorted(m for m in range(1, 1 << k) if not m & neg and m & ~com)
            masks, _ = sample_masks(k, 100, neg, com, filtered=True)
            assert sorted(masks) == expected

    def test_empty_pool(self):
        with pytest.raises(EmptyPool):
            sample_masks(3, 1.0, refuted_mask=0b011, entailed_mask=0b100, filtered=True)

    def test_request_size(self):
        masks, _ = sample_masks(10, 0.5, rng=random.Random(1))
        assert len(masks) == 5
        masks, _ = sample_masks(7, 0.3, rng=random.Random(1))
        assert len(masks) == 3

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(ValueError):
            sample_masks(3, 0)

    def test_deterministic(self):
        a = Position({v: v % 2 == 0 for v in range(1, 9)})
        s = overlap_simple(a, Position({1: True, 2: False}))
        assert sample_subsets(a, 2, s, True, seed=5) == sample_subsets(a, 2, s, True, seed=5)

    def test_uniform_over_pool(self):
        rng = random.Random(2)
        counts = np.zeros(8)
        for _ in range(7000):
            for m in sample_masks(3, 1 / 3, rng=rng)[0]:
                counts[m] += 1
        assert counts[0] == 0
        assert np.all(np.abs(counts[1:] - 1000) < 150)


class TestAverages:
    @pytest.mark.parametrize("values, expected", [([1, 1, 1], 1.0), ([-1, 0, 1], 0.0)])
    def test_average(self, values, expected):
        assert estimate_average(SampleSet(values)).estimate == expected

    def test_average_mu2_reduces_to_average(self):
        v = [0.3, -0.2, 0.5]
        assert estimate_average_mu2((0, 1, 0), SampleSet(v)).estimate == pytest.approx(np.mean(v))

    def test_average_mu2_example(self):
        r = estimate_average_mu2(W_EXAMPLE, SampleSet([0.25, 0.75]))
        assert r.estimate == pytest.approx(-2 / 7)
        assert r.mu2 == 0.5

    def test_empty(self):
        with pytest.raises(ValueError):
            estimate_average(SampleSet([]))
        with pytest.raises(ValueError):
            estimate_average_mu2(W_EXAMPLE, SampleSet([]))

    def test_exhaustive_average_is_exact(self):
        rng = random.Random(12)
        for _ in range(10):
            amap, a, b = random_triple(rng)
            pa, pb = Position(a), Position(b)
            engine = CoherenceEngine(amap)
            table = engine.confirmation_table(pa, pb)
            r = approximate_one_coh(amap, pa, pb, "average", beta=100,
                                    confirm=lambda m: table[m].value)
            assert r.estimate == pytest.approx(engine.one_coh(pa, pb).value, abs=1e-12)


class TestFitMu2:
    def test_example(self):
        v = [-1, -1, 0.2, 0.3]
        w = (0.5, 0.5, 0.0)
        expected = reference_em(v, w)
        assert expected == pytest.approx(0.25, abs=1e-3)
        r = estimate_fit_mu2(w, SampleSet(v))
        assert r.mu2 == pytest.approx(expected, abs=1e-6)
        assert r.converged and r.em_iterations > 0
        assert r.estimate == pytest.approx(-0.5 + 0.5 * expected, abs=1e-6)

    def test_constant_samples(self):
        mu2, _, converged, _ = fit_mu2([0.4] * 6, (0, 1, 0))
        assert mu2 == pytest.approx(0.4)
        assert converged

    def test_w2_zero(self):
        r = estimate_fit_mu2((0.5, 0, 0.5), SampleSet([0.1, 0.2]))
        assert r.estimate == 0.0
        assert r.em_iterations == 0

    def test_max_iters_reported(self):
        mu2, iters, converged, history = fit_mu2([-0.9, -0.5, 0.5, 0.9], W_EXAMPLE,
                                                 EMConfig(tolerance=0, max_iters=3))
        assert iters == 3 and not converged
        assert len(history) == 4

    @settings(max_examples=60)
    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=20), st.integers(1, 8), st.data())
    def test_matches_reference(self, values, k, data):
        neg = data.draw(st.sets(st.integers(0, k - 1)))
        com = data.draw(st.sets(st.integers(0, k - 1).filter(lambda v: v not in neg)))
        w = [float(x) for x in mixture_weights(k, sets(neg, com))]
        if w[1] == 0:
            return
        try:
            expected = reference_em(values, w)
        except ZeroDivisionError:
            # Plain densities underflow where log-space EM does not.
            return
        mu2, _, converged, _ = fit_mu2(values, w)
        if converged:
            assert mu2 == pytest.approx(expected, abs=1e-5)

    @settings(max_examples=60)
    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=30), st.integers(1, 8), st.data())
    def test_likelihood_monotone(self, values, k, data):
        neg = data.draw(st.sets(st.integers(0, k - 1)))
        com = data.draw(st.sets(st.integers(0, k - 1).filter(lambda v: v not in neg)))
        w = mixture_weights(k, sets(neg, com))
        if w[1] == 0:
            return
        _, _, _, history = fit_mu2(values, w)
        for prev, cur in zip(history, history[1:]):
            assert cur >= prev - 1e-9 * max(1.0, abs(prev))

    def test_mixture_mean(self):
        g = GaussianMixture3((4 / 7, 2 / 7, 1 / 7), (-1.0, 0.5, 1.0))
        assert g.mean() == pytest.approx(-2 / 7)
        with pytest.raises(ValueError):
            GaussianMixture3((0.5, 0.6, 0.0))


def lemma_classes(a: dict, refuted: set, entailed: set):
    hits, inside = [], []
    for x in nonempty_subsets(a):
        if set(x) & refuted:
            hits.append(x)
        elif set(x) <= entailed:
            inside.append(x)
    return hits, inside


class TestLemmas:
    def test_simpler_bounds_hold(self):
        rng = random.Random(51)
        for _ in range(30):
            amap, a, b = random_triple(rng)
            models = consistent_positions(amap)
            s = overlap_simple(Position(a), Position(b))
            hits, inside = lemma_classes(a, s.neg, s.com)
            k = len(a)
            assert len(hits) == 2**k - 2 ** (k - len(s.neg))
            assert len(inside) == 2 ** len(s.com) - 1
            assert all(conf_oracle(models, x, b) == -1 for x in hits)
            assert all(conf_oracle(models, x, b) == 1 for x in inside)

    def test_finer_bounds_hold(self):
        rng = random.Random(52)
        for _ in range(30):
            amap, a, b = random_triple(rng)
            models = consistent_positions(amap)
            s = overlap_fine(amap, Position(a), Position(b))
            assert s.neg <= s.cntr and s.com <= s.impl
            hits, inside = lemma_classes(a, s.cntr, s.impl)
            assert all(conf_oracle(models, x, b) == -1 for x in hits)
            assert all(conf_oracle(models, x, b) == 1 for x in inside)


class TestApproximate:
    def test_contained_is_one(self):
        a = Position({1: True, 3: False})
        b = Position({1: True, 2: True, 3: False})
        for method in METHODS:
            assert approximate_one_coh(ArgumentMap(3), a, b, method, seed=0).estimate == 1.0

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            approximate_one_coh(ArgumentMap(2), Position({1: True}), Position({2: True}), "magic")

    def test_estimates_in_range(self):
        rng = random.Random(61)
        for i in range(15):
            amap, a, b = random_triple(rng)
            for method in METHODS:
                for mode in ("simpler", "finer"):
                    r = approximate_one_coh(amap, Position(a), Position(b), method, 1.5, mode, seed=i)
                    assert -1 <= r.estimate <= 1

    def test_counter_calls_match_live_count(self):
        rng = random.Random(71)
        for i in range(15):
            amap, a, b = random_triple(rng)
            for method in METHODS:
                for mode in ("simpler", "finer"):
                    engine = CoherenceEngine(amap)
                    r = approximate_one_coh(engine, Position(a), Position(b), method, 2, mode, seed=i)
                    assert r.counter_calls == engine.calls

    def test_samples_used(self):
        a = Position({v: True for v in range(1, 7)})
        b = Position({7: True, 8: False})
        r = approximate_one_coh(ArgumentMap(8), a, b, "average", beta=1, seed=3)
        assert r.samples_used == 6
        assert r.counter_calls == 2 * 6 + 2
        assert r.counter_calls < exact_cost(6)

    def test_empty_pool_falls_back(self):
        a = Position({1: True, 2: True})
        b = Position({1: False, 2: True})
        r = approximate_one_coh(ArgumentMap(2), a, b, "filtered-average-mu2", seed=0)
        assert r.fallback == "direct"
        assert r.estimate == estimate_direct(mixture_weights(2, overlap_simple(a, b))).estimate

    def test_exhaustive_filtered_is_exact_without_arguments(self):
        rng = random.Random(81)
        for _ in range(30):
            n = rng.randint(3, 10)
            a = {v: rng.random() < 0.5 for v in rng.sample(range(1, n + 1), rng.randint(1, min(n, 6)))}
            b = {v: rng.random() < 0.5 for v in rng.sample(range(1, n + 1), rng.randint(1, n))}
            amap = ArgumentMap(n)
            pa, pb = Position(a), Position(b)
            r = approximate_one_coh(amap, pa, pb, "filtered-average-mu2", beta=2**6)
            assert r.estimate == pytest.approx(one_coh(amap, pa, pb).value, abs=1e-12)

    def test_confirm_callback_matches_live(self):
        rng = random.Random(91)
        amap, a, b = random_triple(rng)
        pa, pb = Position(a), Position(b)
        table = CoherenceEngine(amap).confirmation_table(pa, pb)
        for method in METHODS:
            live = approximate_one_coh(amap, pa, pb, method, 2, seed=7)
            cached = approximate_one_coh(amap, pa, pb, method, 2, seed=7,
                                         confirm=lambda m: table[m].value)
            assert live.estimate == cached.estimate
            assert live.counter_calls == cached.counter_calls
