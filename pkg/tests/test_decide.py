from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from probtransducer import (
    DimensionError,
    NoScaleError,
    Threshold,
    TieRule,
    canonical_form,
    choose,
    decision_threshold,
    expected_utilities,
    sample_utility_space,
)
from probtransducer.decide import choose_indices

CASE_IV = [[10, 0], [-10, 1]]


class TestExpectedUtilities:
    def test_identity(self):
        np.testing.assert_allclose(expected_utilities(np.eye(2), [0.3, 0.7]), [0.3, 0.7])

    @pytest.mark.parametrize("p1", [0.0, 0.25, 0.9, 1.0])
    def test_case_iv_lines(self, p1):
        eu = expected_utilities(CASE_IV, [1 - p1, p1])
        assert eu[0] == pytest.approx(10 - 10 * p1)
        assert eu[1] == pytest.approx(-10 + 11 * p1)

    def test_exact_tie_at_boundary(self):
        U = [[Fraction(10), Fraction(0)], [Fraction(-10), Fraction(1)]]
        p = Fraction(20, 21)
        eu = expected_utilities(U, [1 - p, p])
        assert eu[0] == eu[1] == Fraction(10, 21)

    def test_batch_shape(self):
        p = np.random.default_rng(0).dirichlet(np.ones(3), size=7)
        assert expected_utilities(np.ones((4, 3)), p).shape == (7, 4)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            expected_utilities(np.eye(2), [0.2, 0.3, 0.5])


class TestChoose:
    def test_identity_picks_most_probable(self):
        assert choose(np.eye(3), [0.2, 0.5, 0.3]).chosen == 1

    @pytest.mark.parametrize("p1", [0.0, 0.5, 0.9, 0.95, 0.952])
    def test_case_iv_below_threshold(self, p1):
        assert choose(CASE_IV, [1 - p1, p1]).chosen == 0

    def test_report_tie(self):
        out = choose(np.eye(2), [0.5, 0.5])
        assert out.is_tie and out.tie_set == (0, 1) and out.chosen == 0

    def test_seeded_uniform_is_reproducible(self):
        p = np.full((200, 2), 0.5)
        a = [o.chosen for o in choose(np.eye(2), p, TieRule.SEEDED_UNIFORM, rng=3)]
        b = [o.chosen for o in choose(np.eye(2), p, "seeded-uniform", rng=3)]
        assert a == b
        assert 0 < sum(a) < 200

    def test_seeded_uniform_needs_rng(self):
        with pytest.raises(ValueError):
            choose(np.eye(2), [0.5, 0.5], TieRule.SEEDED_UNIFORM)

    def test_affine_example(self):
        rng = np.random.default_rng(1)
        U = rng.normal(size=(3, 2))
        for p in rng.dirichlet([1, 1], size=50):
            assert choose(3 * U + 7, p).tie_set == choose(U, p).tie_set

    def test_rectangular(self):
        # three actions, two classes: abstaining wins in the middle
        U = [[1, -1], [-1, 1], [0.4, 0.4]]
        assert choose(U, [0.5, 0.5]).chosen == 2
        assert choose(U, [0.95, 0.05]).chosen == 0


class TestThreshold:
    def test_case_iv_is_twenty_over_twentyone(self):
        t = decision_threshold([[Fraction(10), Fraction(0)], [Fraction(-10), Fraction(1)]])
        assert t == Fraction(20, 21)
        assert abs(decision_threshold(CASE_IV) - 20 / 21) < 1e-12

    def test_identity(self):
        assert decision_threshold(np.eye(2)) == 0.5

    def test_case_ii(self):
        U = [[1, -10], [0, 10]]
        assert decision_threshold(U) == pytest.approx(1 / 21, abs=1e-15)
        grid = np.linspace(0, 1, 10001)
        ones = np.array([choose(U, [1 - p, p]).chosen for p in grid])
        first = grid[np.argmax(ones == 1)]
        assert abs(first - 1 / 21) <= 1e-4

    def test_sentinels(self):
        assert decision_threshold([[1, 1], [0, 0]]) is Threshold.NEVER
        assert decision_threshold([[0, 0], [1, 1]]) is Threshold.ALWAYS
        assert decision_threshold([[1, 2], [1, 2]]) is Threshold.INDIFFERENT

    def test_reversed_rows(self):
        with pytest.raises(ValueError):
            decision_threshold([[0, 1], [1, 0]])

    def test_grid_consistency(self):
        for U in sample_utility_space(20, 5):
            t = decision_threshold(U)
            for p in np.linspace(0, 1, 1001):
                out = choose(U, [1 - p, p])
                if out.is_tie:
                    assert p == pytest.approx(t, abs=1e-9)
                else:
                    assert (out.chosen == 1) == (p > t)

    def test_non_square(self):
        with pytest.raises(DimensionError):
            decision_threshold(np.ones((3, 2)))


class TestCanonicalForm:
    def test_case_iv(self):
        np.testing.assert_allclose(canonical_form(CASE_IV), [[1.0, 0.5], [0.0, 0.55]], atol=1e-15)

    def test_symmetric_matrix_is_identity(self):
        np.testing.assert_array_equal(canonical_form([[7, -2], [-2, 7]]), np.eye(2))

    def test_idempotent(self):
        U = np.random.default_rng(3).normal(size=(3, 4))
        once = canonical_form(U)
        np.testing.assert_array_equal(canonical_form(once), once)

    def test_exact_fractions(self):
        U = [[Fraction(10), Fraction(0)], [Fraction(-10), Fraction(1)]]
        assert canonical_form(U)[1, 1] == Fraction(11, 20)

    def test_constant(self):
        with pytest.raises(NoScaleError):
            canonical_form(np.full((2, 2), 3.0))


class TestUtilitySpace:
    def test_canonical_and_dominant(self):
        mats = sample_utility_space(10000, 0)
        assert len(mats) == 10000
        for U in mats[:2000]:
            np.testing.assert_array_equal(canonical_form(U), U)
            assert U[0, 0] > U[1, 0] and U[1, 1] > U[0, 1]
            t = decision_threshold(U)
            assert 0 < t < 1

    def test_deterministic(self):
        a, b = sample_utility_space(50, 9), sample_utility_space(50, 9)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_thresholds_cover_unit_interval(self):
        t = np.array([decision_threshold(U) for U in sample_utility_space(4000, 1)])
        hist, _ = np.histogram(t, bins=10, range=(0, 1))
        assert hist.min() > 0

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sample_utility_space(0, 1)


finite = st.floats(-100, 100, allow_nan=False)


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(arrays(float, (3, 2), elements=finite), st.floats(0.01, 100), finite,
           st.floats(0, 1))
    def test_affine_invariance(self, U, a, b, p1):
        p = np.array([1 - p1, p1])
        ref, _ = choose_indices(U, p)
        eu = expected_utilities(U, p)
        # skip near-ties, where rounding of aU+b may reorder the maxima
        gap = np.sort(eu)[-1] - np.sort(eu)[-2]
        if gap > 1e-9 * (1 + np.abs(eu).max()):
            got, _ = choose_indices(a * U + b, p)
            assert got[0] == ref[0]

    @settings(max_examples=100, deadline=None)
    @given(arrays(float, (2, 3), elements=finite), st.integers(0, 2**31))
    def test_meu_dominates_fixed_policies(self, U, seed):
        rng = np.random.default_rng(seed)
        probs = rng.dirichlet(np.ones(3), size=40)
        best = expected_utilities(U, probs).max(axis=1)
        for _ in range(20):
            policy = rng.integers(0, 2, size=40)
            fixed = expected_utilities(U, probs)[np.arange(40), policy]
            assert np.all(best >= fixed)
