import dataclasses

import numpy as np
import pytest

import grngc.diffengine as de
from grngc import forecasters as fc
from grngc.core import (GcMatrix, LossGraph, TrainConfig, TrainError,
                        gc_average, infer_gc_matrix, input_gradient_matrix,
                        prediction_loss, sparsity_loss, summed_outputs,
                        total_loss, train)
from grngc.datagen import (TimeSeries, WindowedDataset, random_sparse_var1,
                           simulate_var)


def identity_backbone(p):
    """Single linear layer copying the (lag-1) input to the output."""
    bb = fc.init_backbone("mlp", [p, p], seed=0)
    fc.set_param_arrays(bb, [np.eye(p), np.zeros(p)])
    return bb


def linear_backbone(a):
    bb = fc.init_backbone("mlp", [a.shape[1], a.shape[0]], seed=0)
    fc.set_param_arrays(bb, [a, np.zeros(a.shape[0])])
    return bb


def zero_backbone(n_in, n_out):
    bb = fc.init_backbone("mlp", [n_in, n_out], seed=0)
    fc.set_param_arrays(bb, [np.zeros((n_out, n_in)), np.zeros(n_out)])
    return bb


class TestPredictionLoss:
    def test_perfect_predictor(self):
        x = np.random.default_rng(0).normal(size=(5, 3))
        ds = WindowedDataset(x, x, lag=1)
        assert prediction_loss(identity_backbone(3), ds).value == 0.0

    def test_constant_zero_on_targets_two(self):
        ds = WindowedDataset(np.zeros((4, 3)), np.full((4, 3), 2.0), lag=1)
        assert prediction_loss(zero_backbone(3, 3), ds).value == 4.0

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(1)
        bb = fc.init_backbone("kan", [4, 3, 2], seed=1)
        ds = WindowedDataset(rng.uniform(-1, 1, (6, 4)), rng.normal(size=(6, 2)), lag=2)
        pred = fc.forward(bb, ds.inputs)
        ref = 0.0
        for n in range(6):
            for j in range(2):
                ref += (pred[n, j] - ds.targets[n, j]) ** 2
        ref /= 12
        assert abs(prediction_loss(bb, ds).value - ref) < 1e-12


class TestSummedOutputs:
    def test_zero_predictor(self):
        ds = WindowedDataset(np.ones((4, 3)), np.zeros((4, 3)), lag=1)
        s, _ = summed_outputs(zero_backbone(3, 3), ds)
        assert all(sj.value == 0.0 for sj in s)

    def test_column_sums(self):
        inputs = np.array([[1.0, 2.0], [3.0, 4.0]])
        ds = WindowedDataset(inputs, inputs, lag=1)
        s, _ = summed_outputs(identity_backbone(2), ds)
        assert [sj.value for sj in s] == [4.0, 6.0]

    def test_copy_variable_sum(self):
        rng = np.random.default_rng(2)
        inputs = rng.normal(size=(7, 3))
        ds = WindowedDataset(inputs, inputs, lag=1)
        s, _ = summed_outputs(identity_backbone(3), ds)
        for j in range(3):
            assert s[j].value == pytest.approx(inputs[:, j].sum(), abs=1e-12)


class TestInputGradientMatrix:
    def test_linear_coefficient(self):
        # predictor for series j is a * (variable i at the last lag)
        p, k = 3, 2
        a = 1.7
        w = np.zeros((p, k * p))
        w[1, (k - 1) * p + 2] = a  # output 1 reads variable 2 at the last lag
        bb = linear_backbone(w)
        rng = np.random.default_rng(0)
        ds = WindowedDataset(rng.normal(size=(5, k * p)), rng.normal(size=(5, p)), lag=k)
        s, x = summed_outputs(bb, ds)
        g = input_gradient_matrix(s[1], x, k).value
        assert g.shape == (5, k, p)
        expected = np.zeros((5, k, p))
        expected[:, k - 1, 2] = a
        assert np.array_equal(g, expected)

    def test_constant_predictor_zero(self):
        ds = WindowedDataset(np.ones((4, 2)), np.ones((4, 2)), lag=1)
        bb = zero_backbone(2, 2)
        bb.layers[0].bias[:] = 3.0
        s, x = summed_outputs(bb, ds)
        g = input_gradient_matrix(s[0], x, 1).value
        assert np.all(g == 0.0)

    def test_kan_vs_finite_differences(self):
        rng = np.random.default_rng(3)
        bb = fc.init_backbone("kan", [4, 5, 2], seed=3)
        inputs = rng.uniform(-1.5, 1.5, (3, 4))
        ds = WindowedDataset(inputs, rng.normal(size=(3, 2)), lag=2)
        s, x = summed_outputs(bb, ds)
        g = input_gradient_matrix(s[0], x, 2).value.reshape(3, 4)

        def f(v):
            return float(fc.forward(bb, v).sum(axis=0)[0])

        fd = de.finite_difference(f, inputs.copy(), step=1e-5)
        assert np.max(np.abs(g - fd)) / (np.max(np.abs(fd)) + 1e-12) < 1e-5


class TestGcAverage:
    def test_zero(self):
        row = gc_average(de.constant(np.zeros((4, 2, 3))))
        assert np.all(row.value == 0.0)

    def test_constant_negative(self):
        g = np.zeros((5, 2, 4))
        g[:, :, 3] = -2.0
        row = gc_average(de.constant(g))
        assert np.array_equal(row.value, [0.0, 0.0, 0.0, 2.0])

    def test_abs_before_mean(self):
        g = np.zeros((4, 1, 2))
        g[:, 0, 0] = [1.0, -1.0, 1.0, -1.0]
        row = gc_average(de.constant(g))
        assert row.value[0] == 1.0


class TestSparsityLoss:
    def test_lambda_zero(self):
        rows = [de.constant(np.array([5.0, 1.0]))]
        assert sparsity_loss(rows, 0.0).value == 0.0

    def test_hand_value(self):
        rows = [de.constant(np.array([1.0, 2.0])), de.constant(np.array([3.0, 4.0]))]
        assert sparsity_loss(rows, 0.1).value == pytest.approx(1.0, abs=1e-12)

    def test_weight_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(4)
        bb = fc.init_backbone("mlp", [3, 4, 2], seed=4)
        ds = WindowedDataset(rng.uniform(-1, 1, (5, 3)), rng.normal(size=(5, 2)), lag=1)
        lam = 0.05

        graph = LossGraph(bb, ds, lam)
        grads = de.backward(graph.sparsity, graph.params)
        got = np.concatenate([g.value.reshape(-1) for g in grads])

        shapes = [a.shape for a in fc.param_arrays(bb)]

        def f(theta):
            bb2 = fc.init_backbone("mlp", [3, 4, 2], seed=4)
            fc.set_param_arrays(bb2, unflatten(theta, shapes))
            return float(LossGraph(bb2, ds, lam).sparsity.value)

        theta0 = np.concatenate([a.reshape(-1) for a in fc.param_arrays(bb)])
        fd = de.finite_difference(f, theta0.copy(), step=1e-5)
        assert np.max(np.abs(got - fd)) / (np.max(np.abs(fd)) + 1e-12) < 1e-4


def shapes_to_sizes(shapes):
    return [np.empty(s) for s in shapes]


def unflatten(theta, shapes):
    parts = []
    off = 0
    for s in shapes:
        size = int(np.prod(s))
        parts.append(theta[off:off + size].reshape(s))
        off += size
    return parts


class TestTotalLoss:
    def test_lambda_zero_equals_prediction(self):
        rng = np.random.default_rng(5)
        bb = fc.init_backbone("kan", [4, 3, 2], seed=5)
        ds = WindowedDataset(rng.uniform(-1, 1, (5, 4)), rng.normal(size=(5, 2)), lag=2)
        assert total_loss(bb, ds, 0.0).value == prediction_loss(bb, ds).value

    def test_perfect_predictor_zero_gradients(self):
        x = np.random.default_rng(6).normal(size=(5, 2))
        bb = zero_backbone(2, 2)
        ds = WindowedDataset(x, np.zeros((5, 2)), lag=1)
        assert total_loss(bb, ds, 1.0).value == 0.0

    def test_additivity(self):
        rng = np.random.default_rng(7)
        bb = fc.init_backbone("kan", [4, 3, 2], seed=7)
        ds = WindowedDataset(rng.uniform(-1, 1, (5, 4)), rng.normal(size=(5, 2)), lag=2)
        graph = LossGraph(bb, ds, 1e-2)
        assert abs(graph.loss.value - (graph.pred_loss.value + graph.sparsity.value)) < 1e-9


class TestInferGcMatrix:
    def test_zero_backbone_zero_matrix(self):
        ds = WindowedDataset(np.ones((4, 3)), np.ones((4, 3)), lag=1)
        gc = infer_gc_matrix(zero_backbone(3, 3), ds)
        assert np.all(gc.scores == 0.0)

    def test_linear_backbone_absolute_coefficients(self):
        rng = np.random.default_rng(8)
        a = rng.normal(size=(4, 4))
        bb = linear_backbone(a)
        ds = WindowedDataset(rng.normal(size=(30, 4)), rng.normal(size=(30, 4)), lag=1)
        gc = infer_gc_matrix(bb, ds)
        assert np.max(np.abs(gc.scores - np.abs(a))) < 1e-12

    def test_recomputation_identical(self):
        rng = np.random.default_rng(9)
        bb = fc.init_backbone("kan", [4, 5, 2], seed=9)
        ds = WindowedDataset(rng.uniform(-1, 1, (6, 4)), rng.normal(size=(6, 2)), lag=2)
        a = infer_gc_matrix(bb, ds).scores
        b = infer_gc_matrix(bb, ds).scores
        assert np.array_equal(a, b)

    def test_sample_permutation_invariance(self):
        rng = np.random.default_rng(10)
        bb = fc.init_backbone("kan", [4, 5, 2], seed=10)
        inputs = rng.uniform(-1, 1, (8, 4))
        targets = rng.normal(size=(8, 2))
        perm = rng.permutation(8)
        a = infer_gc_matrix(bb, WindowedDataset(inputs, targets, 2)).scores
        b = infer_gc_matrix(bb, WindowedDataset(inputs[perm], targets[perm], 2)).scores
        assert np.max(np.abs(a - b)) < 1e-12

    def test_nonnegative_finite(self):
        rng = np.random.default_rng(11)
        bb = fc.init_backbone("mlp", [6, 8, 3], seed=11)
        ds = WindowedDataset(rng.normal(size=(10, 6)), rng.normal(size=(10, 3)), lag=2)
        gc = infer_gc_matrix(bb, ds)
        assert np.all(gc.scores >= 0.0) and np.all(np.isfinite(gc.scores))


class TestTrain:
    def test_determinism(self):
        rng = np.random.default_rng(0)
        series = TimeSeries(rng.normal(size=(150, 3)))
        cfg = TrainConfig(lag=2, lam=1e-3, epochs=5, hidden=(8,), seed=3)
        a = train(series, cfg)
        b = train(series, cfg)
        assert np.array_equal(a.gc.scores, b.gc.scores)
        assert a.pred_losses == b.pred_losses
        assert a.total_losses == b.total_losses

    def test_noise_floor(self):
        rng = np.random.default_rng(1)
        series = TimeSeries(rng.normal(size=(400, 3)))
        rep = train(series, TrainConfig(lag=2, lam=0.0, epochs=40, hidden=(16,), seed=0))
        # unpredictable standardized series: loss floor is the unit variance
        assert 0.7 < rep.pred_losses[-1] < 1.3

    def test_var_diagonal_dominance(self):
        series, _ = simulate_var([0.5 * np.eye(3)], T=400, noise_sigma=0.3, seed=1)
        rep = train(series, TrainConfig(lag=2, lam=1e-3, epochs=40, hidden=(16,), seed=0))
        s = rep.gc.scores
        offdiag = s[~np.eye(3, dtype=bool)]
        assert np.min(np.diag(s)) > np.max(offdiag)

    def test_monotone_sparsity_response(self):
        a = random_sparse_var1(4, 0.3, seed=2)
        series, truth = simulate_var([a], T=400, noise_sigma=0.2, seed=2)
        off_support = ~truth.matrix
        means = {}
        for lam in (0.0, 1e-2):
            rep = train(series, TrainConfig(lag=2, lam=lam, epochs=40, hidden=(16,), seed=0))
            means[lam] = rep.gc.scores[off_support].mean()
        assert means[1e-2] <= means[0.0]

    def test_loss_recording_additive(self):
        rng = np.random.default_rng(2)
        series = TimeSeries(rng.normal(size=(120, 2)))
        rep = train(series, TrainConfig(lag=2, lam=1e-2, epochs=3, hidden=(8,), seed=0))
        for lp, ls, lt in zip(rep.pred_losses, rep.sparsity_losses, rep.total_losses):
            assert abs(lt - (lp + ls)) < 1e-9

    def test_too_short_series(self):
        with pytest.raises(TrainError):
            train(TimeSeries(np.random.default_rng(0).normal(size=(12, 2))),
                  TrainConfig(lag=5))

    def test_config_validation(self):
        with pytest.raises(TrainError):
            TrainConfig(lam=-1.0)
        with pytest.raises(TrainError):
            TrainConfig(epochs=0)
        with pytest.raises(TrainError):
            TrainConfig(val_fraction=0.7)

    def test_report_serializes(self, tmp_path):
        rng = np.random.default_rng(3)
        series = TimeSeries(rng.normal(size=(120, 2)))
        rep = train(series, TrainConfig(lag=2, epochs=2, hidden=(8,), seed=0))
        rep.to_json(tmp_path / "report.json")
        rep.gc.to_csv(tmp_path / "gc.csv")
        loaded = GcMatrix.from_csv(tmp_path / "gc.csv")
        assert np.array_equal(loaded.scores, rep.gc.scores)
        assert rep.config == dataclasses.asdict(TrainConfig(lag=2, epochs=2, hidden=(8,), seed=0))
