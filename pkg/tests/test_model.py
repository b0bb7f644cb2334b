"""Estimator pipeline: subsampling, fitting, prediction, feature selection."""

import numpy as np
import pytest

from tkreg import (
    Model,
    ShapeError,
    Standardizer,
    SubsampleError,
    TensorKernelSpec,
    TrainConfig,
    UnsupportedKernelError,
    duality_map,
    fit,
    krr_closed_form,
    load_model,
    nystrom_sample,
    predict,
    predict_generic,
    predict_linear_fast,
    save_model,
    select_features,
)

LINEAR4 = TensorKernelSpec(family="linear", q=4)
LINEAR2 = TensorKernelSpec(family="linear", q=2)


def make_linear_model(rng, m, d, q=4):
    """Model with random retained points and coefficients; weights follow
    the representer rule so both prediction paths describe the same map."""
    pts = rng.standard_normal((m, d))
    alpha = rng.standard_normal(m)
    std = Standardizer(means=rng.standard_normal(d), stds=np.abs(rng.standard_normal(d)) + 0.5)
    return Model(
        kernel=TensorKernelSpec(family="linear", q=q),
        retained_points=pts,
        alpha=alpha,
        standardizer=std,
        weights=duality_map(pts.T @ alpha, q),
    )


class TestNystromSample:
    def test_full_sample_is_identity(self):
        plan = nystrom_sample(17, 17, seed=5)
        assert np.array_equal(plan.indices, np.arange(17))

    def test_deterministic(self):
        a = nystrom_sample(4000, 120, seed=42)
        b = nystrom_sample(4000, 120, seed=42)
        assert np.array_equal(a.indices, b.indices)
        c = nystrom_sample(4000, 120, seed=43)
        assert not np.array_equal(a.indices, c.indices)

    def test_distinct_sorted_indices(self):
        plan = nystrom_sample(4000, 120, seed=0)
        assert len(plan.indices) == 120
        assert len(np.unique(plan.indices)) == 120
        assert np.all(np.diff(plan.indices) > 0)
        assert plan.indices.min() >= 0 and plan.indices.max() < 4000

    def test_infeasible_sizes(self):
        with pytest.raises(SubsampleError):
            nystrom_sample(10, 11, seed=0)
        with pytest.raises(SubsampleError):
            nystrom_sample(10, 0, seed=0)


class TestStandardizer:
    def test_round_trip_on_fitted_rows(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((30, 6)) * 3 + 1.5
        std = Standardizer.fit(X)
        Z = std.transform(X)
        assert np.all(np.abs(Z.mean(axis=0)) < 1e-12)
        assert np.all(np.abs(Z.std(axis=0) - 1.0) < 1e-12)

    def test_constant_columns_pass_through(self):
        X = np.column_stack([np.full(10, 2.0), np.arange(10.0)])
        std = Standardizer.fit(X)
        assert std.stds[0] == 1.0
        assert np.all(Standardizer.fit(X).transform(X)[:, 0] == 0.0)

    def test_dimension_check(self):
        std = Standardizer.fit(np.zeros((4, 3)))
        with pytest.raises(ShapeError):
            std.transform(np.zeros(2))


class TestFit:
    def test_zero_targets_give_zero_model(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((12, 5))
        model = fit(X, np.zeros(12), LINEAR4, TrainConfig(gamma=1.0))
        assert np.array_equal(model.alpha, np.zeros(12))
        assert np.array_equal(model.weights, np.zeros(5))
        assert np.array_equal(predict(model, X), np.zeros(12))

    def test_q2_full_sample_matches_krr(self):
        rng = np.random.default_rng(3)
        n, d = 20, 40
        X = rng.standard_normal((n, d))
        y = rng.standard_normal(n)
        gamma = 0.1
        cfg = TrainConfig(gamma=gamma, max_iters=20000, rel_tol=0.0)
        model = fit(X, y, LINEAR2, cfg)
        Xs = model.standardizer.transform(X)
        oracle_alpha = krr_closed_form(Xs, y, gamma)
        oracle_pred = Xs @ (Xs.T @ oracle_alpha)
        got = predict(model, X)
        assert np.linalg.norm(got - oracle_pred) <= 1e-6 * np.linalg.norm(oracle_pred)

    def test_weights_follow_representer_rule(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((15, 6))
        y = rng.standard_normal(15)
        model = fit(X, y, LINEAR4, TrainConfig(gamma=0.5))
        expected = duality_map(model.retained_points.T @ model.alpha, 4)
        assert np.array_equal(model.weights, expected)

    def test_subsample_plan_respected(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((30, 4))
        y = rng.standard_normal(30)
        plan = nystrom_sample(30, 10, seed=9)
        model = fit(X, y, LINEAR4, TrainConfig(gamma=1.0), plan)
        assert model.m == 10
        raw = X[plan.indices]
        assert np.array_equal(
            model.retained_points, model.standardizer.transform(raw)
        )

    def test_full_plan_bitwise_equals_default(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((25, 5))
        y = rng.standard_normal(25)
        cfg = TrainConfig(gamma=0.7, seed=123)
        plan = nystrom_sample(25, 25, seed=123)
        a = fit(X, y, LINEAR4, cfg, plan)
        b = fit(X, y, LINEAR4, cfg)
        assert np.array_equal(a.alpha, b.alpha)
        assert np.array_equal(a.weights, b.weights)

    def test_plan_for_other_dataset_rejected(self):
        rng = np.random.default_rng(7)
        plan = nystrom_sample(10, 5, seed=0)
        with pytest.raises(SubsampleError):
            fit(rng.standard_normal((12, 3)), np.zeros(12), LINEAR4,
                TrainConfig(gamma=1.0), plan)

    def test_responses_are_not_standardized(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((10, 20))
        y = rng.standard_normal(10) + 100.0
        cfg = TrainConfig(gamma=0.1, max_iters=20000, rel_tol=0.0)
        model = fit(X, y, LINEAR2, cfg)
        # the oracle consumes the raw shifted responses; matching it shows
        # fit did too
        oracle = krr_closed_form(model.retained_points, y, 0.1)
        assert np.linalg.norm(model.alpha - oracle) <= 1e-6 * np.linalg.norm(oracle)


class TestPrediction:
    def test_zero_alpha_predicts_zero(self):
        rng = np.random.default_rng(9)
        model = make_linear_model(rng, 6, 4)
        model = Model(
            kernel=model.kernel,
            retained_points=model.retained_points,
            alpha=np.zeros(6),
            standardizer=model.standardizer,
            weights=np.zeros(4),
        )
        assert predict_generic(model, rng.standard_normal(4)) == 0.0

    def test_generic_equals_fast_on_random_models(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            m = int(rng.integers(1, 8))
            d = int(rng.integers(1, 10))
            model = make_linear_model(rng, m, d)
            x = rng.standard_normal(d)
            fast = predict_linear_fast(model, x)
            generic = predict_generic(model, x)
            assert generic == pytest.approx(fast, rel=1e-9, abs=1e-12)

    def test_generic_equals_fast_on_fitted_model(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((14, 5))
        y = rng.standard_normal(14)
        model = fit(X, y, LINEAR4, TrainConfig(gamma=0.8))
        for _ in range(20):
            x = rng.standard_normal(5)
            assert predict_generic(model, x) == pytest.approx(
                predict_linear_fast(model, x), rel=1e-9, abs=1e-12
            )

    def test_q2_generic_is_classical_kernel_sum(self):
        rng = np.random.default_rng(12)
        model = make_linear_model(rng, 7, 3, q=2)
        x = rng.standard_normal(3)
        xs = model.standardizer.transform(x)
        classical = sum(
            a * float(p @ xs) for a, p in zip(model.alpha, model.retained_points)
        )
        assert predict_generic(model, x) == pytest.approx(classical, rel=1e-12)

    def test_single_retained_point_closed_form(self):
        # m=1, q=4: the only (q-1)-tuple is (0,0,0), so the prediction is
        # alpha^3 * sum_f p_f^3 x_f = <J_4(alpha * p), x>
        rng = np.random.default_rng(13)
        model = make_linear_model(rng, 1, 4)
        x = rng.standard_normal(4)
        xs = model.standardizer.transform(x)
        p = model.retained_points[0]
        expected = float(duality_map(model.alpha[0] * p, 4) @ xs)
        assert predict_generic(model, x) == pytest.approx(expected, rel=1e-9)

    def test_batch_matches_pointwise(self):
        rng = np.random.default_rng(14)
        model = make_linear_model(rng, 5, 6)
        batch = rng.standard_normal((8, 6))
        out = predict(model, batch)
        for row, expected in zip(batch, out):
            assert predict_linear_fast(model, row) == pytest.approx(expected)

    def test_fast_path_requires_linear(self):
        rng = np.random.default_rng(15)
        X = rng.standard_normal((6, 3)) * 0.3
        y = rng.standard_normal(6)
        model = fit(X, y, TensorKernelSpec("exponential", q=4), TrainConfig(gamma=1.0))
        assert model.weights is None
        with pytest.raises(UnsupportedKernelError):
            predict_linear_fast(model, np.zeros(3))
        # generic path still works
        predict_generic(model, np.zeros(3))

    def test_generic_matches_fast_for_polynomial_degree_one(self):
        rng = np.random.default_rng(16)
        X = rng.standard_normal((8, 4))
        y = rng.standard_normal(8)
        poly1 = TensorKernelSpec("polynomial", q=4, degree=1)
        model = fit(X, y, poly1, TrainConfig(gamma=0.5))
        linear = fit(X, y, LINEAR4, TrainConfig(gamma=0.5))
        x = rng.standard_normal(4)
        assert predict_generic(model, x) == pytest.approx(
            predict_linear_fast(linear, x), rel=1e-9
        )


class TestSelection:
    def _model_with_weights(self, w):
        d = len(w)
        return Model(
            kernel=LINEAR4,
            retained_points=np.zeros((1, d)),
            alpha=np.zeros(1),
            standardizer=Standardizer(means=np.zeros(d), stds=np.ones(d)),
            weights=np.asarray(w, dtype=np.float64),
        )

    def test_zero_weights_select_nothing(self):
        report = select_features(self._model_with_weights(np.zeros(100)))
        assert report.threshold == 0.0
        assert len(report.selected) == 0

    def test_single_spike(self):
        w = np.zeros(100)
        w[0] = 10.0
        report = select_features(self._model_with_weights(w))
        assert report.selected.tolist() == [0]
        assert report.threshold == pytest.approx(2 * w.std())
        assert 1.9 < report.threshold < 2.1  # std of the spike vector ~ 0.995

    def test_all_equal_weights_degenerate(self):
        report = select_features(self._model_with_weights(np.full(10, 3.0)))
        assert report.degenerate
        assert report.threshold == 0.0
        assert report.selected.tolist() == list(range(10))

    def test_scaling_invariance(self):
        rng = np.random.default_rng(17)
        w = rng.standard_normal(50)
        base = select_features(self._model_with_weights(w))
        for c in (0.1, 3.0, 1000.0):
            scaled = select_features(self._model_with_weights(c * w))
            assert scaled.selected.tolist() == base.selected.tolist()

    def test_truth_counts(self):
        w = np.zeros(20)
        w[[2, 5]] = 8.0
        w[11] = 9.0
        report = select_features(self._model_with_weights(w), truth=[2, 5, 7])
        assert report.true_positives == 2
        assert report.false_positives == 1

    def test_requires_linear_kernel(self):
        rng = np.random.default_rng(18)
        X = rng.standard_normal((5, 3)) * 0.3
        model = fit(X, np.zeros(5), TensorKernelSpec("exponential", q=4),
                    TrainConfig(gamma=1.0))
        with pytest.raises(UnsupportedKernelError):
            select_features(model)


class TestSerialization:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(19)
        X = rng.standard_normal((9, 4))
        y = rng.standard_normal(9)
        model = fit(X, y, LINEAR4, TrainConfig(gamma=0.6))
        path = tmp_path / "model.json"
        save_model(model, path)
        back = load_model(path)
        assert back.kernel == model.kernel
        assert np.array_equal(back.alpha, model.alpha)
        assert np.array_equal(back.weights, model.weights)
        assert np.array_equal(back.retained_points, model.retained_points)
        assert np.array_equal(back.standardizer.means, model.standardizer.means)
        assert np.array_equal(back.standardizer.stds, model.standardizer.stds)
        x = rng.standard_normal(4)
        assert predict(back, x) == predict(model, x)

    def test_polynomial_round_trip_keeps_degree(self, tmp_path):
        rng = np.random.default_rng(20)
        X = rng.standard_normal((6, 3))
        y = rng.standard_normal(6)
        model = fit(X, y, TensorKernelSpec("polynomial", q=4, degree=2),
                    TrainConfig(gamma=0.5))
        path = tmp_path / "poly.json"
        save_model(model, path)
        back = load_model(path)
        assert back.kernel.degree == 2
        assert back.weights is None
