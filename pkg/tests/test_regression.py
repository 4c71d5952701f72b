"""Gaussian radial-basis interpolation of derived features."""

import math

import numpy as np
import pytest

from vnesim.errors import FitError, VnesimError
from vnesim.regression import (
    derive_features,
    kernel_matrix,
    median_heuristic_gamma,
    rbr_fit,
    rbr_load,
    rbr_predict,
    rbr_predict_batch,
    rbr_save,
)


class TestFit:
    def test_single_point_weight_equals_target(self):
        model = rbr_fit(np.array([[2.0]]), np.array([7.0]), gamma=1.0)
        assert model.weights == pytest.approx([7.0])

    def test_two_distant_points_decouple(self):
        x = np.array([[0.0], [100.0]])
        y = np.array([3.0, -5.0])
        model = rbr_fit(x, y, gamma=10.0)  # kernel matrix is essentially identity
        assert model.weights == pytest.approx(y, abs=1e-9)

    def test_interpolation_residual(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(50, 3))
        y = rng.normal(size=50)
        model = rbr_fit(x, y, gamma=median_heuristic_gamma(x))
        fitted = rbr_predict_batch(model, model.centers)
        order = np.lexsort((y,) + tuple(x[:, d] for d in reversed(range(3))))
        assert np.max(np.abs(fitted - y[order])) <= 1e-6

    def test_duplicate_centers_with_conflicting_targets(self):
        with pytest.raises(FitError):
            rbr_fit(np.array([[1.0], [1.0]]), np.array([1.0, 2.0]), gamma=1.0)

    def test_duplicate_centers_with_equal_targets_collapse(self):
        model = rbr_fit(np.array([[1.0], [1.0], [2.0]]), np.array([5.0, 5.0, 6.0]), gamma=1.0)
        assert len(model.weights) == 2

    def test_vanishing_gamma_takes_ridge_path(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(40, 2))
        y = rng.normal(size=40)
        model = rbr_fit(x, y, gamma=1e-9)
        assert model.ridge_used
        assert np.all(np.isfinite(model.weights))

    def test_center_cap_subsamples(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(60, 2))
        y = rng.normal(size=60)
        model = rbr_fit(x, y, gamma=1.0, max_centers=20, seed=5)
        assert len(model.weights) == 20

    def test_fit_ignores_input_order(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        perm = rng.permutation(30)
        a = rbr_fit(x, y, gamma=0.7)
        b = rbr_fit(x[perm], y[perm], gamma=0.7)
        assert np.array_equal(a.centers, b.centers)
        assert np.allclose(a.weights, b.weights)
        probe = rng.normal(size=2)
        assert rbr_predict(a, probe) == pytest.approx(rbr_predict(b, probe))


class TestKernel:
    def test_symmetric_positive_semidefinite(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(50, 4))
        k = kernel_matrix(x, x, gamma=0.5)
        assert np.allclose(k, k.T)
        assert np.linalg.eigvalsh(k).min() >= -1e-8

    def test_median_heuristic_positive(self):
        rng = np.random.default_rng(5)
        assert median_heuristic_gamma(rng.normal(size=(30, 3))) > 0
        assert median_heuristic_gamma(np.array([[1.0]])) == 1.0


class TestPredict:
    def test_value_at_center_is_target(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(20, 2))
        y = rng.normal(size=20)
        model = rbr_fit(x, y, gamma=1.0)
        for center, target in zip(model.centers, rbr_predict_batch(model, model.centers)):
            assert rbr_predict(model, center) == pytest.approx(target)
        fitted = rbr_predict_batch(model, model.centers)
        order = np.lexsort((y,) + tuple(x[:, d] for d in reversed(range(2))))
        assert np.allclose(fitted, y[order], atol=1e-6)

    def test_far_query_decays_to_zero(self):
        model = rbr_fit(np.array([[0.0]]), np.array([4.0]), gamma=1.0)
        assert rbr_predict(model, np.array([1e3])) == pytest.approx(0.0, abs=1e-12)

    def test_hand_evaluated_basis_sum(self):
        # one center, weight 2, width 1: a query at distance 1 gives 2/e
        model = rbr_fit(np.array([[0.0]]), np.array([2.0]), gamma=1.0)
        assert rbr_predict(model, np.array([1.0])) == pytest.approx(2.0 * math.exp(-1.0))

    def test_clamping(self):
        model = rbr_fit(np.array([[0.0]]), np.array([2.0]), gamma=1.0, clamp=(0.5, 1.0))
        assert rbr_predict(model, np.array([0.0])) == 1.0
        assert rbr_predict(model, np.array([100.0])) == 0.5

    def test_dimension_mismatch(self):
        model = rbr_fit(np.array([[0.0, 1.0]]), np.array([1.0]), gamma=1.0)
        with pytest.raises(VnesimError):
            rbr_predict(model, np.array([1.0]))


class TestDeriveFeatures:
    def test_no_models_returns_core(self):
        core = np.array([1.0, 2.0])
        assert np.array_equal(derive_features(core, []), core)

    def test_three_models_extend_by_three(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(10, 2))
        models = [rbr_fit(x, rng.normal(size=10), gamma=1.0, target_id=f"t{i}") for i in range(3)]
        out = derive_features(np.array([0.1, 0.2]), models)
        assert out.shape == (5,)

    def test_usage_predictions_never_exceed_one(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(40, 2))
        y = rng.uniform(0.3, 0.99, size=40)
        model = rbr_fit(x, y, gamma=0.01, clamp=(1e-6, 1.0), target_id="cpu_usage")
        probes = rng.normal(size=(200, 2)) * 3
        values = rbr_predict_batch(model, probes)
        assert np.all(values <= 1.0) and np.all(values >= 1e-6)


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    x = rng.normal(size=(15, 3))
    y = rng.normal(size=15)
    model = rbr_fit(x, y, gamma=0.8, target_id="lifetime", clamp=(1e-6, None))
    path = tmp_path / "rbr_lifetime.txt"
    rbr_save(model, path)
    loaded = rbr_load(path, clamp=(1e-6, None))
    assert loaded.target_id == "lifetime" and loaded.gamma == model.gamma
    probe = rng.normal(size=3)
    assert rbr_predict(loaded, probe) == pytest.approx(rbr_predict(model, probe))
    header = path.read_text().splitlines()[0].split()
    assert header[0] == "rbr" and int(header[3]) == 15 and int(header[4]) == 3
