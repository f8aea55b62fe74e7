"""Tests for the two classical standardized composite scores."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import polyscale as ps


def make_matrix(codes, observed=None, categories=None):
    codes = np.asarray(codes)
    n, i = codes.shape
    if observed is None:
        observed = np.ones((n, i), dtype=bool)
    if categories is None:
        categories = [tuple(range(1, 10))] * i
    return ps.ResponseMatrix(
        items=[chr(ord("A") + j) for j in range(i)],
        codes=codes,
        observed=np.asarray(observed, dtype=bool),
        categories=categories,
        weights=np.ones(n),
    )


class TestWorkedExamples:
    def test_composite_then_standardize(self, small_matrix):
        # composites (7, 6, 5): mean 6, sample sd 1
        assert_allclose(ps.z_score_b(small_matrix), [1.0, 0.0, -1.0], atol=1e-12)

    def test_item_level_standardize_then_average(self, small_matrix):
        # item A z-scores (-1, 0, 1) cancel item B z-scores (1, 0, -1)
        assert_allclose(ps.z_score_w(small_matrix), [0.0, 0.0, 0.0], atol=1e-12)

    def test_wide_item_dominates_composite_only(self, small_matrix):
        # the same data rank persons oppositely under the two scores: the
        # 6-point item drives the composite, the 4-point item cannot
        z_b = ps.z_score_b(small_matrix)
        z_w = ps.z_score_w(small_matrix)
        assert z_b[0] > z_b[2]
        assert z_w[0] == pytest.approx(z_w[2])

    def test_single_item_collapses(self):
        m = make_matrix([[1], [2], [3]])
        assert_allclose(ps.z_score_b(m), [-1.0, 0.0, 1.0], atol=1e-12)
        assert_allclose(ps.z_score_w(m), ps.z_score_b(m), atol=1e-12)


class TestMissingHandling:
    def test_observed_items_only(self):
        m = make_matrix(
            [[1, 6], [2, 4], [3, 2], [2, 0]],
            observed=[[True, True], [True, True], [True, True], [True, False]],
        )
        z_w = ps.z_score_w(m)
        # item A over all four persons: mean 2, sd sqrt(2/3)
        expected_a = (2 - 2.0) / np.sqrt(2.0 / 3.0)
        assert z_w[3] == pytest.approx(expected_a)

    def test_unscored_person_is_nan(self):
        m = make_matrix(
            [[1, 6], [2, 4], [3, 2], [0, 0]],
            observed=[[True, True], [True, True], [True, True], [False, False]],
        )
        assert np.isnan(ps.z_score_b(m)[3])
        assert np.isnan(ps.z_score_w(m)[3])
        assert np.nanmean(ps.z_score_b(m)) == pytest.approx(0.0, abs=1e-12)


class TestDegenerateInputs:
    def test_zero_composite_variance(self):
        m = make_matrix([[1, 2], [2, 1]])
        with pytest.raises(ValueError, match="zero variance"):
            ps.z_score_b(m)

    def test_zero_item_variance(self):
        m = make_matrix([[1, 2], [1, 3]])
        with pytest.raises(ValueError, match="'A': zero variance"):
            ps.z_score_w(m)

    def test_single_person(self):
        m = make_matrix([[1, 2]])
        with pytest.raises(ValueError, match="at least two"):
            ps.z_score_b(m)


class TestInvariants:
    def test_mean_zero_sd_one(self):
        rng = np.random.default_rng(4)
        m = make_matrix(rng.integers(1, 7, size=(200, 5)))
        for z in (ps.z_score_b(m), ps.z_score_w(m)):
            assert abs(z.mean()) < 1e-10
        assert ps.z_score_b(m).std(ddof=1) == pytest.approx(1.0, abs=1e-9)

    def test_equal_spread_items_rank_identically(self):
        # per-item columns are permutations of one multiset, so every item
        # has exactly the same moments and the two standardizations become
        # affine maps of the same composite
        rng = np.random.default_rng(5)
        base = np.repeat(np.arange(1, 5), 10)
        codes = np.column_stack([rng.permutation(base) for _ in range(4)])
        m = make_matrix(codes)
        order_b = np.argsort(ps.z_score_b(m), kind="stable")
        order_w = np.argsort(ps.z_score_w(m), kind="stable")
        assert_allclose(
            ps.z_score_b(m)[order_b], ps.z_score_b(m)[order_w], atol=1e-12
        )

    def test_equal_range_items_rank_nearly_identically(self):
        rng = np.random.default_rng(6)
        m = make_matrix(rng.integers(1, 5, size=(300, 4)))
        rb = np.argsort(np.argsort(ps.z_score_b(m)))
        rw = np.argsort(np.argsort(ps.z_score_w(m)))
        rho = np.corrcoef(rb, rw)[0, 1]
        assert rho > 0.98

    def test_classical_scores_bundle(self, small_matrix):
        out = ps.classical_scores(small_matrix)
        assert out.composite_mean == pytest.approx(6.0)
        assert out.composite_sd == pytest.approx(1.0)
        assert_allclose(out.item_means, [2.0, 4.0])
        assert_allclose(out.item_sds, [1.0, 2.0])
        assert_allclose(out.z_b, [1.0, 0.0, -1.0], atol=1e-12)
