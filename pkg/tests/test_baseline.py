"""Double-precision reference implementations and the gradient checker."""

import numpy as np
import pytest

from pimml.baseline import (
    grad_check,
    make_logistic_loss,
    make_quadratic_loss,
    oracle_dtree,
    oracle_dtree_exhaustive,
    oracle_kmeans,
    oracle_linreg,
    oracle_logreg,
    predict_exhaustive_tree,
)
from pimml.kernels import Hyperparams, predict
from pimml.layout import Dataset, synth_blobs, synth_labels_tree, synth_linear


class TestGradCheck:
    def test_quadratic(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-2, 2, (50, 4))
        y = rng.uniform(-2, 2, 50)
        w = rng.uniform(-1, 1, 4)
        err = grad_check(make_quadratic_loss(x, y), w, 1e-6)
        assert err <= 1e-9

    def test_logistic(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-2, 2, (60, 5))
        y = (rng.uniform(size=60) > 0.5).astype(float)
        w = rng.uniform(-0.5, 0.5, 5)
        err = grad_check(make_logistic_loss(x, y), w, 1e-5)
        assert err <= 1e-5

    def test_zero_data_zero_gradient(self):
        x = np.zeros((10, 3))
        y = np.zeros(10)
        _, g = make_quadratic_loss(x, y)(np.ones(3))
        assert np.array_equal(g, np.zeros(3))

    def test_epsilon_range_enforced(self):
        loss = make_quadratic_loss(np.ones((2, 2)), np.ones(2))
        for eps in (1e-8, 1e-3):
            with pytest.raises(ValueError):
                grad_check(loss, np.zeros(2), eps)


class TestGdOracles:
    def test_zero_iterations(self):
        ds, _ = synth_linear(50, 3, 0.1, seed=1)
        hp = Hyperparams(mode="real", iterations=0)
        assert np.array_equal(oracle_linreg(ds, hp).model.weights, np.zeros(3))
        assert np.array_equal(oracle_logreg(ds, hp).model.weights, np.zeros(3))

    def test_noise_free_recovery(self):
        ds, w_true = synth_linear(1000, 3, 0.0, seed=2)
        hp = Hyperparams(mode="real", iterations=400, learning_rate=0.03125)
        w = oracle_linreg(ds, hp).model.weights
        assert np.max(np.abs(w - w_true)) < 1e-6

    def test_trace_length(self):
        ds, _ = synth_linear(200, 3, 0.1, seed=3)
        hp = Hyperparams(mode="real", iterations=17)
        assert len(oracle_linreg(ds, hp).trace) == 17

    def test_loss_trace_decreases(self):
        ds, _ = synth_linear(500, 3, 0.0, seed=4)
        hp = Hyperparams(mode="real", iterations=50, learning_rate=0.03125)
        trace = oracle_linreg(ds, hp).trace
        assert trace[-1] < trace[0]

    def test_deterministic(self):
        ds, _ = synth_blobs(300, 3, 2, 0.4, seed=5)
        hp = Hyperparams(mode="real", iterations=10)
        a = oracle_logreg(ds, hp).model.weights
        b = oracle_logreg(ds, hp).model.weights
        assert np.array_equal(a, b)


class TestKmeansOracle:
    def test_inertia_non_increasing(self):
        ds, _ = synth_blobs(1200, 4, 4, 0.8, seed=6)
        hp = Hyperparams(mode="real", iterations=30, k=4)
        trace = oracle_kmeans(ds, hp).trace
        assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))

    def test_assignment_trace_length(self):
        ds, _ = synth_blobs(400, 3, 3, 0.3, seed=7)
        hp = Hyperparams(mode="real", iterations=50, k=3)
        res = oracle_kmeans(ds, hp)
        assert len(res.assignments) == len(res.trace)
        assert len(res.assignments) < 50  # early stop


class TestTreeOracles:
    def test_binned_matches_exhaustive_on_easy_split(self):
        # one clean axis-aligned boundary: both trees classify perfectly
        rng = np.random.default_rng(8)
        x = rng.uniform(-4, 4, (500, 2))
        y = (x[:, 0] > 0.37).astype(int)
        ds = Dataset(x, y)
        hp = Hyperparams(mode="real", max_depth=2, n_bins=32)
        binned = oracle_dtree(ds, hp).model
        exh = oracle_dtree_exhaustive(ds, hp).model
        acc_b = np.mean(predict(binned, ds) == y)
        acc_e = np.mean(predict_exhaustive_tree(exh, ds) == y)
        assert acc_e >= acc_b
        assert acc_e == 1.0

    def test_exhaustive_at_least_as_good_as_binned(self):
        ds = synth_labels_tree(1200, 4, 4, seed=9)
        hp = Hyperparams(mode="real", max_depth=4)
        binned = oracle_dtree(ds, hp).model
        exh = oracle_dtree_exhaustive(ds, hp).model
        acc_b = np.mean(predict(binned, ds) == ds.labels)
        acc_e = np.mean(predict_exhaustive_tree(exh, ds) == ds.labels)
        assert acc_e >= acc_b - 1e-12

    def test_pure_node_single_leaf(self):
        ds = Dataset(np.random.default_rng(10).uniform(-1, 1, (60, 2)), np.ones(60))
        hp = Hyperparams(mode="real", max_depth=3)
        assert oracle_dtree(ds, hp).model.n_nodes == 1
        assert oracle_dtree_exhaustive(ds, hp).model.n_nodes == 1
