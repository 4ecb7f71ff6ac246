import numpy as np
import pytest

from glofnd.encoder import init_params
from glofnd.errors import ShapeMismatchError
from glofnd.metrics import (
    approx_optimal_lambda,
    fn_scores,
    fn_scores_batchwise_fnc,
    fn_scores_batchwise_glofnd,
    fnc_batch_thresholds,
    global_fn_masks,
    optimal_lambda_full,
    predicted_fn_fraction_full,
    threshold_error,
)
from glofnd.numkit import normalize_rows
from glofnd.synthdata import AugmentationOp, make_gaussian_mixture
from glofnd.threshold import solve_quantile_exact


class TestFnScores:
    def test_perfect_prediction(self):
        truth = np.array([True, False, True, False])
        s = fn_scores(truth, truth)
        assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)

    def test_all_false_prediction(self):
        truth = np.array([True, False])
        s = fn_scores(np.zeros(2, dtype=bool), truth)
        assert s.recall == 0.0 and s.precision == 0.0 and s.f1 == 0.0

    def test_symmetric_counts(self):
        pred = np.array([1, 1, 1, 1, 0, 0], dtype=bool)
        truth = np.array([1, 1, 0, 0, 1, 1], dtype=bool)
        s = fn_scores(pred, truth)
        assert (s.tp, s.fp, s.fn_count) == (2, 2, 2)
        assert (s.precision, s.recall, s.f1) == (0.5, 0.5, 0.5)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        pred = rng.random(50) > 0.5
        truth = rng.random(50) > 0.5
        perm = rng.permutation(50)
        a = fn_scores(pred, truth)
        b = fn_scores(pred[perm], truth[perm])
        assert (a.precision, a.recall, a.f1) == (b.precision, b.recall, b.f1)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            fn_scores(np.zeros(3, dtype=bool), np.zeros(4, dtype=bool))


class TestThresholdError:
    def test_identical(self):
        err = threshold_error([0.3, -0.2], [0.3, -0.2])
        assert (err.mae, err.rmse) == (0.0, 0.0)

    def test_symmetric_deviation(self):
        err = threshold_error([0.1, -0.1], [0.0, 0.0])
        assert err.mae == pytest.approx(0.1) and err.rmse == pytest.approx(0.1)

    def test_uneven_deviation(self):
        err = threshold_error([0.0, 0.2], [0.0, 0.0])
        assert err.mae == pytest.approx(0.1)
        assert err.rmse == pytest.approx(np.sqrt(0.02))
        assert err.rmse >= err.mae

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            threshold_error([0.1], [0.1, 0.2])


class TestOptimalLambdaFull:
    def test_matches_per_anchor_brute_force(self):
        rng = np.random.default_rng(1)
        emb = normalize_rows(rng.normal(size=(12, 5)))
        alpha = 0.3
        kth, solutions = optimal_lambda_full(emb, alpha)
        sims = np.clip(emb @ emb.T, -1, 1)
        for i in range(12):
            scores = np.delete(sims[i], i)
            sol = solve_quantile_exact(scores, alpha)
            assert kth[i] == sol.kth_value
            assert solutions[i].lo == sol.lo and solutions[i].hi == sol.hi

    def test_alpha_one_is_minimum(self):
        rng = np.random.default_rng(2)
        emb = normalize_rows(rng.normal(size=(8, 4)))
        kth, _ = optimal_lambda_full(emb, 1.0)
        sims = np.clip(emb @ emb.T, -1, 1)
        for i in range(8):
            assert kth[i] == np.delete(sims[i], i).min()


class TestPredictedFraction:
    def test_exact_ratio(self):
        rng = np.random.default_rng(3)
        emb = normalize_rows(rng.normal(size=(10, 4)))
        lam = rng.uniform(-0.5, 0.9, size=10)
        frac = predicted_fn_fraction_full(emb, lam)
        sims = np.clip(emb @ emb.T, -1, 1)
        count = 0
        for i in range(10):
            count += int((np.delete(sims[i], i) > lam[i]).sum())
        assert frac == count / (10 * 9)

    def test_lambda_one_flags_nothing(self):
        rng = np.random.default_rng(4)
        emb = normalize_rows(rng.normal(size=(6, 4)))
        assert predicted_fn_fraction_full(emb, np.ones(6)) == 0.0


class TestGlobalMasks:
    def test_masks_align_with_labels(self):
        rng = np.random.default_rng(5)
        emb = normalize_rows(rng.normal(size=(6, 4)))
        labels = np.array([0, 0, 1, 1, 2, 2])
        pred, truth = global_fn_masks(emb, labels, np.full(6, -1.0))
        assert pred.shape == (6, 5) and truth.shape == (6, 5)
        assert pred.all()  # lambda at -1 flags every pair
        assert truth.sum() == 6  # one same-label partner per anchor


class TestApproxOptimalLambda:
    def test_full_set_matches_enumeration_oracle(self):
        rng = np.random.default_rng(6)
        ds = make_gaussian_mixture(3, 8, 5, 0.2, seed=10)
        params = init_params(5, 6, 4, rng)
        op = AugmentationOp(noise_sigma=0.05, seed=3)
        ids = np.array([0, 5, 17])
        alpha = 0.25
        out = approx_optimal_lambda(params, ds, op, ids, alpha,
                                    sample_count=2 * (ds.n - 1), seed=0)
        # independent enumeration of the same augmented negative set
        from glofnd.encoder import forward
        from glofnd.synthdata import augment_points
        va, _ = forward(params, augment_points(op, ds.points,
                                               np.arange(ds.n), 0, 0))
        vb, _ = forward(params, augment_points(op, ds.points,
                                               np.arange(ds.n), 1, 0))
        anchors, _ = forward(params, ds.points[ids])
        for row, i in enumerate(ids):
            keep = np.arange(ds.n) != i
            scores = np.concatenate([
                np.clip(anchors[row] @ va[keep].T, -1, 1),
                np.clip(anchors[row] @ vb[keep].T, -1, 1)])
            expected = solve_quantile_exact(scores, alpha).kth_value
            assert out[row] == pytest.approx(expected, abs=1e-12)

    def test_full_mode_deterministic(self):
        rng = np.random.default_rng(7)
        ds = make_gaussian_mixture(2, 10, 5, 0.2, seed=11)
        params = init_params(5, 6, 4, rng)
        op = AugmentationOp(noise_sigma=0.0, seed=3)
        ids = np.arange(5)
        a = approx_optimal_lambda(params, ds, op, ids, 0.5,
                                  sample_count=10 ** 6, seed=1)
        b = approx_optimal_lambda(params, ds, op, ids, 0.5,
                                  sample_count=10 ** 6, seed=2)
        np.testing.assert_array_equal(a, b)

    def test_sampled_mode_close_to_full(self):
        rng = np.random.default_rng(8)
        ds = make_gaussian_mixture(4, 50, 6, 0.2, seed=12)
        params = init_params(6, 8, 4, rng)
        op = AugmentationOp(noise_sigma=0.01, seed=3)
        ids = np.array([0, 10, 100])
        full = approx_optimal_lambda(params, ds, op, ids, 0.2,
                                     sample_count=10 ** 6, seed=1)
        sampled = approx_optimal_lambda(params, ds, op, ids, 0.2,
                                        sample_count=300, seed=1)
        assert np.max(np.abs(full - sampled)) < 0.1


class TestBatchwiseEvaluators:
    def test_fnc_thresholds_are_noisier_than_exact(self):
        rng = np.random.default_rng(9)
        ds = make_gaussian_mixture(5, 40, 8, 0.25, seed=13)
        emb = normalize_rows(ds.points)
        alpha = 0.2
        kth, _ = optimal_lambda_full(emb, alpha)
        fnc = fnc_batch_thresholds(emb, alpha, batch_size=20, seed=0)
        assert fnc.shape == (200,)
        assert np.all(np.abs(fnc) <= 1.0)
        err = threshold_error(fnc, kth)
        assert err.mae > 0.0

    def test_detectors_on_separable_embeddings(self):
        # two far-apart clusters: thresholds at the class boundary give
        # perfect in-batch detection, top-k comes close
        rng = np.random.default_rng(10)
        centers = np.array([[1.0] + [0.0] * 7, [-1.0] + [0.0] * 7])
        labels = np.repeat([0, 1], 30)
        emb = normalize_rows(centers[labels]
                             + 0.05 * rng.normal(size=(60, 8)))
        lam = np.zeros(60)
        scores = fn_scores_batchwise_glofnd(emb, labels, lam, batch_size=20,
                                            seed=1, n_rounds=2)
        assert scores.recall == 1.0 and scores.precision > 0.9
        alpha = 29 / 59  # in-batch FN rate is about one half
        topk = fn_scores_batchwise_fnc(emb, labels, alpha, batch_size=20,
                                       seed=1, n_rounds=2)
        assert topk.f1 > 0.8
