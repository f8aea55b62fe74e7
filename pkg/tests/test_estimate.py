"""Tests for quadrature, EM fitting, MAP scoring, and parameter files."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import expit

import polyscale as ps
from polyscale.estimate import marginal_loglik
from polyscale.models import person_loglik


def dense_marginal_loglik(params, matrix, n_nodes=1001, bound=6.0):
    """Independent marginal-likelihood evaluation on a dense grid.

    Deliberately re-derived from scratch (plain prior-weighted sums with
    max subtraction) rather than reusing the estimation module's
    accumulation path.
    """
    nodes = np.linspace(-bound, bound, n_nodes)
    w = np.exp(-0.5 * nodes**2)
    w /= w.sum()
    total = 0.0
    cols = {e.item: matrix.item_index(e.item) for e in params.items}
    for n in range(matrix.n_persons):
        ll = np.zeros(n_nodes)
        for e in params.items:
            j = cols[e.item]
            if not matrix.observed[n, j]:
                continue
            k = e.categories.index(int(matrix.codes[n, j]))
            ll += np.log(ps.category_probs(e.params, nodes)[:, k])
        peak = ll.max()
        total += peak + math.log(float(np.sum(w * np.exp(ll - peak))))
    return total


class TestQuadrature:
    def test_weights_normalize(self):
        grid = ps.make_grid(61, 6.0)
        assert grid.weights.sum() == pytest.approx(1.0, abs=1e-10)

    def test_symmetric_mean(self):
        grid = ps.make_grid(61, 6.0)
        assert (grid.weights * grid.nodes).sum() == pytest.approx(0.0, abs=1e-12)

    def test_second_moment_matches_prior(self):
        grid = ps.make_grid(61, 6.0)
        assert (grid.weights * grid.nodes**2).sum() == pytest.approx(1.0, abs=1e-6)

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="at least 11"):
            ps.make_grid(5)

    def test_bad_bound(self):
        with pytest.raises(ValueError, match="positive"):
            ps.make_grid(61, 0.0)


@pytest.fixture(scope="module")
def tiny_fit():
    items = (
        ps.ItemEntry(
            item="a", categories=(1, 2, 3), params=ps.GrmItemParams(a=1.2, d=np.array([-0.7, 0.8]))
        ),
        ps.ItemEntry(
            item="b", categories=(1, 2, 3), params=ps.GrmItemParams(a=0.9, d=np.array([-0.3, 1.1]))
        ),
    )
    truth = ps.ParameterSet(model="grm", items=items)
    matrix = ps.simulate_responses(ps.SimSpec(params=truth, n=200, seed=5))
    return truth, matrix, ps.fit_em(matrix, "grm")


class TestFitEm:
    def test_loglik_matches_dense_oracle(self, tiny_fit):
        _, matrix, fit = tiny_fit
        oracle = dense_marginal_loglik(fit.params, matrix)
        assert abs(fit.loglik - oracle) <= 1e-3 * abs(oracle)

    def test_trace_nondecreasing(self, tiny_fit):
        _, _, fit = tiny_fit
        assert np.all(np.diff(fit.loglik_trace) >= -1e-8)

    def test_reported_ll_is_at_returned_params(self, tiny_fit):
        _, matrix, fit = tiny_fit
        again = marginal_loglik(fit.params, matrix, ps.make_grid())
        assert again == pytest.approx(fit.loglik, abs=1e-9)

    def test_grid_refinement_stability(self, tiny_fit):
        _, matrix, fit = tiny_fit
        doubled = marginal_loglik(fit.params, matrix, ps.make_grid(122, 6.0))
        assert abs(doubled - fit.loglik) <= 1e-3 * abs(fit.loglik)

    def test_information_criteria_consistent(self, tiny_fit):
        _, _, fit = tiny_fit
        aic, bic = ps.information_criteria(fit.loglik, fit.n_params, fit.n_persons)
        assert fit.aic == pytest.approx(aic)
        assert fit.bic == pytest.approx(bic)
        assert fit.n_params == 6  # two items: 1 slope + 2 boundaries each

    def test_converged_flag(self, tiny_fit):
        _, _, fit = tiny_fit
        assert fit.converged
        assert fit.n_iter >= 1

    def test_unknown_model(self, tiny_fit):
        _, matrix, _ = tiny_fit
        with pytest.raises(ValueError, match="unknown model"):
            ps.fit_em(matrix, "rasch")

    def test_constant_item_rejected(self):
        m = ps.ResponseMatrix(
            items=["a"],
            codes=np.full((30, 1), 2),
            observed=np.ones((30, 1), dtype=bool),
            categories=[(1, 2, 3)],
            weights=np.ones(30),
        )
        with pytest.warns(UserWarning, match="never observed"):
            with pytest.raises(ValueError, match="fewer than two observed"):
                ps.fit_em(m, "grm")

    def test_unobserved_category_dropped_with_warning(self):
        rng = np.random.default_rng(7)
        codes = rng.choice([1, 3], size=(120, 1), p=[0.45, 0.55])  # category 2 unused
        m = ps.ResponseMatrix(
            items=["a"],
            codes=codes,
            observed=np.ones((120, 1), dtype=bool),
            categories=[(1, 2, 3)],
            weights=np.ones(120),
        )
        with pytest.warns(UserWarning, match="never observed"):
            fit = ps.fit_em(m, "grm", tol=1e-4, max_iter=100)
        assert fit.dropped == {"a": [2]}
        assert fit.params.items[0].categories == (1, 3)

    def test_small_sample_warning(self):
        items = (
            ps.ItemEntry(
                item="a",
                categories=(1, 2, 3),
                params=ps.GrmItemParams(a=1.0, d=np.array([-0.5, 0.5])),
            ),
        )
        truth = ps.ParameterSet(model="grm", items=items)
        matrix = ps.simulate_responses(ps.SimSpec(params=truth, n=25, seed=2))
        with pytest.warns(UserWarning, match="may be unstable"):
            ps.fit_em(matrix, "grm", tol=1e-3, max_iter=60)


class TestMapScore:
    def single_2pl(self):
        entry = ps.ItemEntry(
            item="q", categories=(0, 1), params=ps.GrmItemParams(a=1.0, d=np.array([0.0]))
        )
        return ps.ParameterSet(model="grm", items=(entry,))

    def test_prior_mode_when_all_missing(self):
        score = ps.map_score(self.single_2pl(), [None])
        assert score.theta == pytest.approx(0.0, abs=1e-9)
        assert score.se == pytest.approx(1.0, abs=1e-6)
        assert score.n_observed == 0

    def test_analytic_top_response(self):
        # the mode solves theta + expit(theta) = 1
        score = ps.map_score(self.single_2pl(), [1])
        assert score.theta == pytest.approx(0.4010, abs=1e-3)
        assert score.theta + expit(score.theta) == pytest.approx(1.0, abs=1e-5)

    def test_second_item_moves_estimate_outward(self):
        one = ps.map_score(self.single_2pl(), [1]).theta
        entries = tuple(
            ps.ItemEntry(
                item=f"q{i}", categories=(0, 1), params=ps.GrmItemParams(a=1.0, d=np.array([0.0]))
            )
            for i in range(2)
        )
        two = ps.map_score(ps.ParameterSet(model="grm", items=entries), [1, 1]).theta
        assert two > one > 0

    def test_shrinkage_toward_prior(self):
        params = self.single_2pl()
        posterior = ps.map_score(params, [1]).theta
        grid = np.arange(-7, 7, 1e-4)
        ml = grid[np.argmax(person_loglik([params.items[0].params], [1], grid))]
        assert abs(posterior) <= abs(ml) + 1e-9

    def test_matches_grid_search(self, grm_truth):
        rng = np.random.default_rng(20)
        grid = np.arange(-7.0, 7.0 + 1e-9, 1e-4)
        item_params = [e.params for e in grm_truth.items]
        for _ in range(5):
            resp = [int(rng.integers(p.n_categories)) for p in item_params]
            dense = -0.5 * grid**2 + person_loglik(item_params, resp, grid)
            expected = grid[np.argmax(dense)]
            got = ps.map_score(grm_truth, [e.categories[k] for e, k in zip(grm_truth.items, resp)])
            assert got.theta == pytest.approx(expected, abs=1e-3)

    def test_multimodal_flag_and_small_theta_tiebreak(self):
        entry = ps.ItemEntry(
            item="u",
            categories=(0, 1, 2),
            params=ps.GgumItemParams(a=1.5, d=0.0, tau=np.array([-1.0, -0.4])),
        )
        pset = ps.ParameterSet(model="ggum", items=(entry,))
        # a response far below the peak is likely on either side of it
        score = ps.map_score(pset, [0])
        assert score.multimodal
        peak = ps.map_score(pset, [2])
        assert not peak.multimodal
        assert peak.theta == pytest.approx(0.0, abs=1e-6)

    def test_unknown_code_rejected(self):
        with pytest.raises(ValueError, match="absent from"):
            ps.map_score(self.single_2pl(), [7])

    def test_mapping_responses(self):
        score = ps.map_score(self.single_2pl(), {"q": 1})
        assert score.theta > 0

    def test_map_score_all_thread_invariant(self, tiny_fit):
        _, matrix, fit = tiny_fit
        serial = ps.map_score_all(fit.params, matrix)
        threaded = ps.map_score_all(fit.params, matrix, threads=3)
        assert [s.theta for s in serial] == [s.theta for s in threaded]
        assert [s.se for s in serial] == [s.se for s in threaded]


class TestOdds:
    def test_scale_positions(self):
        assert ps.odds(-2.5) == pytest.approx(0.082, abs=1e-3)
        assert ps.odds(-1.0) == pytest.approx(0.368, abs=1e-3)
        assert ps.odds(2.0) == pytest.approx(7.389, abs=1e-3)
        assert ps.odds(3.5) == pytest.approx(33.115, abs=1e-3)
        assert ps.odds(0.0) == 1.0

    def test_equal_gaps_equal_ratios(self):
        assert ps.odds_ratio(-2.5, -1.0) == pytest.approx(0.22, abs=5e-3)
        assert ps.odds_ratio(2.0, 3.5) == pytest.approx(0.22, abs=5e-3)
        assert ps.odds_ratio(-2.5, -1.0) == pytest.approx(ps.odds_ratio(2.0, 3.5), abs=1e-12)
        assert math.log(ps.odds_ratio(2.0, 3.5)) == pytest.approx(-1.5, abs=1e-10)
        assert ps.odds_ratio(1.234, 1.234) == 1.0

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            ps.odds(float("inf"))
        with pytest.raises(ValueError):
            ps.odds_ratio(float("nan"), 0.0)


class TestParameterFiles:
    def test_export_import_round_trip_bytes(self, tiny_fit, tmp_path):
        _, _, fit = tiny_fit
        first = tmp_path / "p1.json"
        second = tmp_path / "p2.json"
        ps.export_params(fit, first)
        ps.export_params(ps.import_params(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_scoring_reproduces_bit_identically(self, tiny_fit, tmp_path):
        _, matrix, fit = tiny_fit
        path = tmp_path / "p.json"
        ps.export_params(fit, path)
        direct = ps.map_score_all(fit.params, matrix)
        via_file = ps.map_score_all(ps.import_params(path), matrix)
        assert [s.theta for s in direct] == [s.theta for s in via_file]

    def test_model_mismatch(self, tiny_fit, tmp_path):
        _, _, fit = tiny_fit
        path = tmp_path / "p.json"
        ps.export_params(fit, path)
        with pytest.raises(ValueError, match="expected 'nrm'"):
            ps.import_params(path, expect_model="nrm")

    def test_layout_checksum_detects_tampering(self, tiny_fit, tmp_path):
        import json

        _, _, fit = tiny_fit
        path = tmp_path / "p.json"
        ps.export_params(fit, path)
        payload = json.loads(path.read_text())
        payload["items"][0]["categories"] = [1, 2, 4]
        path.write_text(json.dumps(payload))
        with pytest.raises(ValueError, match="checksum"):
            ps.import_params(path)

    def test_invalid_slope_rejected(self, tmp_path):
        import json

        payload = {
            "model": "grm",
            "prior": {"mean": 0.0, "sd": 1.0},
            "items": [{"id": "a", "categories": [0, 1], "a": -1.0, "d": [0.0]}],
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(ValueError, match="positive"):
            ps.import_params(path)

    def test_missing_field_reported(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"model": "grm"}')
        with pytest.raises(ValueError, match="lacks field"):
            ps.import_params(path)

    def test_nrm_file_carries_locations(self, tmp_path):
        import json

        entry = ps.ItemEntry(
            item="n",
            categories=(1, 2, 3),
            params=ps.NrmItemParams.from_locations(
                np.array([-1.0, 0.2, 0.8]), np.array([0.5, -0.3, 0.1])
            ),
        )
        path = tmp_path / "n.json"
        ps.export_params(ps.ParameterSet(model="nrm", items=(entry,)), path)
        payload = json.loads(path.read_text())
        item = payload["items"][0]
        assert set(item) >= {"a", "c", "d"}
        reloaded = ps.import_params(path)
        assert_allclose(reloaded.items[0].params.a, entry.params.a)


class TestMarginalLoglik:
    def test_unknown_code_reported(self, tiny_fit):
        truth, _, _ = tiny_fit
        bad = ps.ResponseMatrix(
            items=["a", "b"],
            codes=np.array([[9, 1]]),
            observed=np.ones((1, 2), dtype=bool),
            categories=[(1, 2, 3, 9), (1, 2, 3)],
            weights=np.ones(1),
        )
        with pytest.raises(ValueError, match="absent"):
            marginal_loglik(truth, bad, ps.make_grid())
