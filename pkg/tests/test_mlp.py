from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from trustsense.exceptions import BuildError, ShapeError, TrainingError
from trustsense.mlp import (
    DROPOUT,
    MLPClassifier,
    ModelSpec,
    bce_loss,
    build,
    classify,
    gradient_check,
    load_model,
    model_1,
    model_2,
    model_spec,
    predict_proba,
    save_model,
    sigmoid,
    train,
)


def blobs(n=200, p=4, sep=3.0, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(size=(n, p))
    X[:, 0] += np.where(y == 1, sep / 2, -sep / 2)
    return X, y


class TestArchitecture:
    def test_model1_parameter_count(self):
        assert build(model_1(), 10).n_parameters == 11_301

    def test_model1_defaults(self):
        spec = model_1()
        assert spec.layers == (100, 100)
        assert spec.optimizer == "rmsprop"
        assert (spec.learning_rate, spec.batch_size, spec.epochs) == (0.01, 64, 130)

    def test_model2_structure(self):
        m = build(model_2(), 10)
        assert m.widths == [10, 100, 100, 100, 100, 1]
        assert m.dropout_before == [False, False, True, False, False]
        assert m.spec.optimizer == "adam"
        assert m.spec.dropout_rate == 0.2

    def test_model_spec(self):
        assert model_spec(2, epochs=3).epochs == 3
        with pytest.raises(BuildError):
            model_spec(3)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"layers": (0,)},
            {"layers": (10, "pool")},
            {"optimizer": "lbfgs"},
            {"dropout_rate": 1.0},
            {"learning_rate": -1.0},
            {"batch_size": 0},
        ],
    )
    def test_invalid_spec(self, kwargs):
        with pytest.raises(BuildError):
            ModelSpec(**kwargs)

    def test_invalid_width(self):
        with pytest.raises(BuildError):
            build(model_1(), 0)

    def test_build_deterministic(self):
        a, b = build(model_2(seed=4), 7), build(model_2(seed=4), 7)
        assert np.array_equal(a.flat_parameters(), b.flat_parameters())
        assert not np.array_equal(a.flat_parameters(), build(model_2(seed=5), 7).flat_parameters())


class TestForward:
    def test_sigmoid(self):
        assert sigmoid(0.0) == 0.5
        assert 0.0 < sigmoid(-1000.0) < sigmoid(1000.0) < 1.0

    def test_hand_network(self):
        # One hidden relu unit: x=1 -> h=relu(1*1+0)=1 -> z=1*1+1=2 -> sigmoid(2).
        m = build(ModelSpec(layers=(1,)), 1)
        m.weights[0][:] = 1.0
        m.weights[1][:] = 1.0
        m.biases[1][:] = 1.0
        assert predict_proba(m, [1.0]) == pytest.approx(0.8808, abs=1e-4)

    def test_classify_threshold(self):
        m = build(ModelSpec(layers=(1,)), 1)
        m.weights[1][:] = 0.0
        for p, want in [(0.91, 1), (0.5, 1), (0.49, 0)]:
            m.biases[1][:] = np.log(p / (1 - p))
            assert classify(m, [0.3]) == want

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            predict_proba(build(model_1(), 4), np.ones((2, 5)))

    def test_bce(self):
        assert bce_loss(np.array([0.5]), np.array([1.0])) == pytest.approx(np.log(2))
        assert np.isfinite(bce_loss(np.array([0.0]), np.array([1.0])))


class TestGradients:
    def test_gradient_check(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(6, 3))
        y = np.array([0, 1, 1, 0, 1, 0], dtype=float)
        m = build(ModelSpec(layers=(4, DROPOUT, 3), seed=2), 3)
        assert gradient_check(m, X, y) < 1e-5

    def test_linear_layer_gradient(self):
        # With no hidden activation the weight gradient is mean((p - y) x).
        m = build(ModelSpec(layers=(), activation="linear"), 3)
        X = np.array([[1.0, 2.0, -1.0], [0.5, -1.0, 2.0]])
        y = np.array([1.0, 0.0])
        p, cache = m.forward(X)
        gw, gb = m.backward(p, y, cache)
        np.testing.assert_allclose(gw[0][:, 0], ((p - y)[:, None] * X).mean(axis=0))
        assert gb[0][0] == pytest.approx(np.mean(p - y))

    def test_zero_weights_bias_gradient(self):
        m = build(ModelSpec(layers=(5,)), 3)
        for w in m.weights:
            w[:] = 0.0
        y = np.array([1.0, 0.0, 1.0, 1.0])
        p, cache = m.forward(np.ones((4, 3)))
        _, gb = m.backward(p, y, cache)
        assert gb[-1][0] == pytest.approx(np.mean(0.5 - y))

    def test_sgd_full_batch_nonincreasing(self):
        X, y = blobs(64, 3, seed=1)
        spec = ModelSpec(layers=(8,), optimizer="sgd", learning_rate=0.05, batch_size=64, seed=1)
        m = build(spec, 3)
        losses = [m.loss(X, y)]
        for _ in range(10):
            train(m, X, y, replace(spec, epochs=1))
            losses.append(m.loss(X, y))
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


class TestTraining:
    def test_xor(self):
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        y = np.array([0, 1, 1, 0])
        spec = ModelSpec(layers=(8,), optimizer="adam", learning_rate=0.05, batch_size=4,
                         epochs=500, seed=0)
        m = build(spec, 2)
        train(m, X, y)
        assert classify(m, X).tolist() == y.tolist()

    @pytest.mark.parametrize("number", [1, 2])
    def test_blobs(self, number):
        X, y = blobs(300, 4, sep=4.0)
        m = build(model_spec(number, epochs=20), 4)
        report = train(m, X, y)
        assert report.train_accuracy >= 0.95
        assert len(report.losses) == 20
        assert report.losses[-1] < report.losses[0]

    def test_zero_learning_rate(self):
        X, y = blobs(50, 3)
        m = build(model_2(learning_rate=0.0, epochs=3), 3)
        before = m.flat_parameters()
        train(m, X, y)
        assert np.array_equal(before, m.flat_parameters())

    def test_bit_for_bit(self):
        X, y = blobs(100, 5)
        runs = []
        for _ in range(2):
            m = build(model_2(epochs=5, seed=3), 5)
            runs.append((train(m, X, y).losses, m.flat_parameters()))
        assert runs[0][0] == runs[1][0]
        assert np.array_equal(runs[0][1], runs[1][1])

    def test_bad_labels(self):
        with pytest.raises(TrainingError):
            train(build(model_1(epochs=1), 2), np.ones((3, 2)), [0, 1, 2])

    def test_spec_mismatch(self):
        with pytest.raises(BuildError):
            train(build(model_1(), 2), np.ones((2, 2)), [0, 1], model_2())

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence(self):
        X, y = blobs(40, 2)
        X = X * 1e200
        with pytest.raises(TrainingError):
            train(build(ModelSpec(layers=(4,), optimizer="sgd", learning_rate=1e10, epochs=5), 2), X, y)


def test_dropout_mean_preserved():
    m = build(ModelSpec(layers=(50, DROPOUT, 1), activation="linear", dropout_rate=0.2), 4)
    x = np.ones((10_000, 4))
    rng = np.random.default_rng(0)
    _, cache = m.forward(x, rng=rng)
    dropped = cache[1][0]
    clean = m.forward(x)[1][1][0]
    ratio = dropped.mean(axis=0) / clean[0]
    live = np.abs(clean[0]) > 1e-3
    assert np.all(np.abs(ratio[live] - 1.0) < 0.02)
    assert abs(dropped.mean() / clean.mean() - 1.0) < 0.02


def test_serialization_roundtrip(tmp_path):
    X, y = blobs(80, 6)
    m = build(model_2(epochs=2), 6)
    train(m, X, y)
    path = tmp_path / "m.json"
    save_model(m, path, extra={"features": ["a"]})
    back, payload = load_model(path)
    assert payload["features"] == ["a"]
    assert back.spec == m.spec
    np.testing.assert_allclose(predict_proba(back, X), predict_proba(m, X), rtol=0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), rows=st.integers(1, 20))
def test_probabilities_in_unit_interval(seed, rows):
    rng = np.random.default_rng(seed)
    m = build(model_2(seed=seed), 5)
    p = predict_proba(m, rng.normal(0, 50, size=(rows, 5)))
    assert np.all((p > 0) & (p < 1))


class TestEstimator:
    def test_sklearn_contract(self):
        X, y = blobs(120, 3, sep=4.0)
        clf = MLPClassifier(epochs=10)
        assert clone(clf).get_params() == clf.get_params()
        clf.fit(X, y)
        proba = clf.predict_proba(X)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0)
        assert clf.score(X, y) >= 0.95
        assert clf.classes_.tolist() == [0, 1]

    def test_spec_roundtrip(self):
        spec = model_2(seed=7)
        assert MLPClassifier.from_spec(spec).to_spec() == spec
