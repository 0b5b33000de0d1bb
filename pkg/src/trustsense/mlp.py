"""Multilayer perceptron for binary classification, written against numpy.

Hidden layers are fully connected with relu; the output is one sigmoid
unit trained on binary cross-entropy. Dropout is inverted (scaled by
``1 / (1 - rate)`` at train time) so inference needs no rescaling.

The two reference architectures are available as :func:`model_1` (two
hidden layers, rmsprop) and :func:`model_2` (four hidden layers with a
dropout layer after the second, adam).
"""

import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import BuildError, ShapeError, TrainingError

DROPOUT = "dropout"
OPTIMIZERS = ("adam", "rmsprop", "sgd")
PROB_EPS = 1e-12
LOGIT_CLIP = 30.0

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
RMSPROP_RHO = 0.9
OPT_EPS = 1e-8


@dataclass(frozen=True)
class ModelSpec:
    """Architecture and training hyperparameters.

    ``layers`` lists hidden layers in order: an int is a relu layer of that
    width, the string ``"dropout"`` is a dropout layer at ``dropout_rate``.
    The sigmoid output unit is implicit.
    """

    layers: tuple = (100, 100)
    optimizer: str = "rmsprop"
    learning_rate: float = 0.01
    batch_size: int = 64
    epochs: int = 130
    dropout_rate: float = 0.2
    seed: int = 0
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for layer in self.layers:
            if layer == DROPOUT:
                continue
            if isinstance(layer, bool) or not isinstance(layer, (int, np.integer)) or layer < 1:
                raise BuildError(f"hidden layer widths must be positive ints, got {layer!r}")
        if self.optimizer not in OPTIMIZERS:
            raise BuildError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not self.learning_rate >= 0:
            raise BuildError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise BuildError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.batch_size < 1 or self.epochs < 0:
            raise BuildError("batch_size must be >= 1 and epochs >= 0")
        if self.activation not in ("relu", "linear"):
            raise BuildError(f"activation must be 'relu' or 'linear', got {self.activation!r}")

    def to_dict(self):
        d = asdict(self)
        d["layers"] = list(self.layers)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "layers": tuple(d["layers"])})


def model_1(**overrides):
    """Input -> 100 relu -> 100 relu -> sigmoid, rmsprop."""
    return replace(ModelSpec(layers=(100, 100), optimizer="rmsprop"), **overrides)


def model_2(**overrides):
    """Input -> 100 -> 100 -> dropout(0.2) -> 100 -> 100 -> sigmoid, adam."""
    spec = ModelSpec(layers=(100, 100, DROPOUT, 100, 100), optimizer="adam", dropout_rate=0.2)
    return replace(spec, **overrides)


def model_spec(number, **overrides):
    if number == 1:
        return model_1(**overrides)
    if number == 2:
        return model_2(**overrides)
    raise BuildError(f"model must be 1 or 2, got {number!r}")


def sigmoid(z):
    z = np.clip(z, -LOGIT_CLIP, LOGIT_CLIP)
    return 1.0 / (1.0 + np.exp(-z))


def bce_loss(p, y):
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


@dataclass
class MlpModel:
    """Weights ``W[i]`` of shape (fan_in, fan_out) and biases ``b[i]`` per dense layer.

    ``dropout_before[i]`` is true when a dropout layer feeds dense layer ``i``.
    """

    spec: ModelSpec
    input_width: int
    weights: list
    biases: list
    dropout_before: list
    opt_state: dict = field(default_factory=dict)

    @property
    def n_parameters(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def widths(self):
        return [self.input_width] + [w.shape[1] for w in self.weights]

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat_parameters(self):
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat_parameters(self, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_parameters:
            raise ShapeError(f"expected {self.n_parameters} parameters, got {flat.size}")
        pos = 0
        for p in self.parameters():
            p[...] = flat[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    # -- forward / backward ------------------------------------------------

    def _act(self, z):
        return np.maximum(z, 0.0) if self.spec.activation == "relu" else z

    def forward(self, X, rng=None):
        """Return ``(p, cache)``; dropout masks are drawn only when ``rng`` is given."""
        a = X
        cache = []
        last = len(self.weights) - 1
        rate = self.spec.dropout_rate
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            mask = None
            if self.dropout_before[i] and rng is not None and rate > 0.0:
                mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
                a = a * mask
            z = a @ w + b
            cache.append((a, z, mask))
            a = sigmoid(z[:, 0]) if i == last else self._act(z)
        return a, cache

    def backward(self, p, y, cache):
        """Gradients of the batch-mean BCE with respect to every weight and bias."""
        n = y.shape[0]
        delta = ((p - y) / n)[:, None]
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            a_in, _, mask = cache[i]
            grads_w[i] = a_in.T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i == 0:
                break
            delta = delta @ self.weights[i].T
            if mask is not None:
                delta = delta * mask
            if self.spec.activation == "relu":
                delta = delta * (cache[i - 1][1] > 0.0)
        return grads_w, grads_b

    def loss(self, X, y):
        p, _ = self.forward(X)
        return bce_loss(p, y)


def build(spec, input_width):
    """He-uniform weights (seeded), zero biases."""
    if isinstance(input_width, bool) or not isinstance(input_width, (int, np.integer)) or input_width < 1:
        raise BuildError(f"input width must be a positive int, got {input_width!r}")
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
    widths = [int(input_width)]
    dropout_before = []
    pending_dropout = False
    for layer in spec.layers:
        if layer == DROPOUT:
            pending_dropout = True
            continue
        widths.append(int(layer))
        dropout_before.append(pending_dropout)
        pending_dropout = False
    widths.append(1)
    dropout_before.append(pending_dropout)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(spec, int(input_width), weights, biases, dropout_before)


def _check_input(model, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.input_width:
        raise ShapeError(f"model expects {model.input_width} features, got shape {X.shape}")
    return X


def predict_proba(model, X):
    """P(class 1) for each row of ``X`` (or a scalar for a single vector)."""
    single = np.ndim(X) == 1
    p, _ = model.forward(_check_input(model, X))
    return float(p[0]) if single else p


def classify(model, X, threshold=0.5):
    """1 when the class-1 probability reaches ``threshold`` (ties go to class 1)."""
    p = predict_proba(model, X)
    if np.ndim(p) == 0:
        return int(p >= threshold)
    return (p >= threshold).astype(np.int64)


class _Adam:
    def __init__(self, params, lr):
        self.lr = lr
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - ADAM_BETA1**self.t
        c2 = 1.0 - ADAM_BETA2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + OPT_EPS)

    def state(self):
        return {"t": self.t, "m": self.m, "v": self.v}


class _RMSprop:
    def __init__(self, params, lr):
        self.lr = lr
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, v in zip(params, grads, self.v):
            v *= RMSPROP_RHO
            v += (1.0 - RMSPROP_RHO) * g * g
            p -= self.lr * g / (np.sqrt(v) + OPT_EPS)

    def state(self):
        return {"v": self.v}


class _SGD:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g

    def state(self):
        return {}


_OPTIMIZER_CLASSES = {"adam": _Adam, "rmsprop": _RMSprop, "sgd": _SGD}


@dataclass
class TrainReport:
    losses: list
    train_accuracy: float
    wall_time: float


def train(model, X, y, spec=None):
    """Mini-batch training on batch-mean binary cross-entropy.

    Rows are reshuffled every epoch; shuffling and dropout masks come from
    ``spec.seed`` so a run is reproducible. The reported loss per epoch is
    the mean of the batch losses (dropout active).
    """
    spec = spec or model.spec
    X = _check_input(model, X)
    y = np.asarray(y, dtype=float)
    if y.shape != (X.shape[0],):
        raise ShapeError(f"expected {X.shape[0]} labels, got shape {y.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise TrainingError("labels must be 0 or 1")
    if spec.layers != model.spec.layers or spec.activation != model.spec.activation:
        raise BuildError("training spec describes a different architecture than the model")
    model.spec = spec
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))
    params = model.parameters()
    opt = _OPTIMIZER_CLASSES[spec.optimizer](params, spec.learning_rate)
    n = X.shape[0]
    losses = []
    start = time.perf_counter()
    for epoch in range(spec.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, spec.batch_size):
            idx = order[lo:lo + spec.batch_size]
            xb, yb = X[idx], y[idx]
            p, cache = model.forward(xb, rng=rng)
            total += bce_loss(p, yb) * idx.size
            gw, gb = model.backward(p, yb, cache)
            grads = []
            for a, b in zip(gw, gb):
                grads.extend((a, b))
            opt.step(params, grads)
        epoch_loss = total / n
        if not np.isfinite(epoch_loss) or not all(np.all(np.isfinite(p)) for p in params):
            raise TrainingError(f"training diverged at epoch {epoch + 1}", epoch=epoch + 1)
        losses.append(epoch_loss)
    model.opt_state = {"optimizer": spec.optimizer, **opt.state()}
    acc = float(np.mean(classify(model, X) == y))
    return TrainReport(losses, acc, time.perf_counter() - start)


def gradient_check(model, X, y, h=1e-5):
    """Max relative error between backprop and central differences over every parameter.

    Dropout is not applied. Relative error is ``|a - n| / max(|a| + |n|, 1e-8)``.
    """
    X = _check_input(model, X)
    y = np.asarray(y, dtype=float)
    p, cache = model.forward(X)
    gw, gb = model.backward(p, y, cache)
    analytic = np.concatenate([g.ravel() for pair in zip(gw, gb) for g in pair])
    theta = model.flat_parameters()
    numeric = np.empty_like(theta)
    for j in range(theta.size):
        orig = theta[j]
        theta[j] = orig + h
        model.set_flat_parameters(theta)
        up = _raw_loss(model, X, y)
        theta[j] = orig - h
        model.set_flat_parameters(theta)
        down = _raw_loss(model, X, y)
        theta[j] = orig
        numeric[j] = (up - down) / (2.0 * h)
    model.set_flat_parameters(theta)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _raw_loss(model, X, y):
    # Unclamped BCE in logit form so finite differences see the exact objective.
    a = X
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = z[:, 0] if i == last else model._act(z)
    return float(np.mean(np.logaddexp(0.0, a) - y * a))


# -- serialization ----------------------------------------------------------


def model_to_dict(model):
    return {
        "format": "trustsense-mlp/1",
        "spec": model.spec.to_dict(),
        "input_width": model.input_width,
        "dropout_before": list(model.dropout_before),
        "shapes": [list(p.shape) for p in model.parameters()],
        "parameters": model.flat_parameters().tolist(),
    }


def model_from_dict(d):
    if d.get("format") != "trustsense-mlp/1":
        raise BuildError(f"unrecognized model format {d.get('format')!r}")
    model = build(ModelSpec.from_dict(d["spec"]), d["input_width"])
    if [list(p.shape) for p in model.parameters()] != d["shapes"]:
        raise BuildError("parameter shapes do not match the stored spec")
    model.set_flat_parameters(d["parameters"])
    model.dropout_before = list(d["dropout_before"])
    return model


def save_model(model, path, extra=None):
    """Write the model as JSON (floats use shortest round-trip repr, so reload is exact)."""
    payload = model_to_dict(model)
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return model_from_dict(payload), payload


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn wrapper around :func:`build` / :func:`train`.

    Parameters mirror :class:`ModelSpec`; ``threshold`` sets the decision
    cut-off on the class-1 probability.
    """

    def __init__(self, layers=(100, 100), optimizer="rmsprop", learning_rate=0.01,
                 batch_size=64, epochs=130, dropout_rate=0.2, random_state=0, threshold=0.5):
        self.layers = layers
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.dropout_rate = dropout_rate
        self.random_state = random_state
        self.threshold = threshold

    @classmethod
    def from_spec(cls, spec, threshold=0.5):
        return cls(layers=spec.layers, optimizer=spec.optimizer, learning_rate=spec.learning_rate,
                   batch_size=spec.batch_size, epochs=spec.epochs,
                   dropout_rate=spec.dropout_rate, random_state=spec.seed, threshold=threshold)

    def to_spec(self):
        return ModelSpec(layers=tuple(self.layers), optimizer=self.optimizer,
                         learning_rate=self.learning_rate, batch_size=self.batch_size,
                         epochs=self.epochs, dropout_rate=self.dropout_rate,
                         seed=int(self.random_state or 0))

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        classes = np.unique(y)
        if not np.all(np.isin(classes, (0, 1))):
            raise TrainingError(f"labels must be 0/1, got {classes.tolist()}")
        self.classes_ = np.array([0, 1])
        spec = self.to_spec()
        self.model_ = build(spec, X.shape[1])
        self.report_ = train(self.model_, X, y, spec)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = predict_proba(self.model_, check_array(X, dtype=float))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= self.threshold).astype(np.int64)
