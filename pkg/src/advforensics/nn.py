"""Small fully-connected softmax classifiers.

Models are stacks of dense layers with ReLU between them and raw logits at
the top. Besides inference and a minibatch SGD trainer, this module exposes the
input gradient of the cross-entropy loss and the full logit Jacobian, which is
everything the attacks need.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import serialize
from .numcore import Rng, as_vector

RELU = "relu"
NONE = "none"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Sample:
    """An input vector in ``[0, 1]^d`` with its true class index."""

    x0: np.ndarray
    label: int

    def __post_init__(self):
        x = as_vector(self.x0)
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError("sample components must lie in [0, 1]")
        if self.label < 0:
            raise ValueError("label must be non-negative")
        object.__setattr__(self, "x0", x)
        object.__setattr__(self, "label", int(self.label))


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = RELU

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"layer shapes do not match: weights {self.weights.shape}, bias {self.bias.shape}"
            )
        if self.activation not in (RELU, NONE):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class NeuralModel:
    model_id: str
    layers: list[Layer]
    class_count: int = field(init=False)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weights.shape[1] != prev.weights.shape[0]:
                raise ValueError("consecutive layer dimensions do not chain")
        if self.layers[-1].activation != NONE:
            raise ValueError("the output layer must not have an activation")
        self.class_count = self.layers[-1].weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def arch(self) -> list[int]:
        return [self.input_dim] + [layer.weights.shape[0] for layer in self.layers]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "model_id": self.model_id,
            "arch": self.arch,
            "layers": [
                {
                    "weights": layer.weights.ravel().tolist(),
                    "bias": layer.bias.tolist(),
                    "activation": layer.activation,
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NeuralModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {d.get('format_version')!r}")
        arch = d["arch"]
        layers = []
        for i, ld in enumerate(d["layers"]):
            w = np.asarray(ld["weights"], dtype=np.float64).reshape(arch[i + 1], arch[i])
            layers.append(Layer(w, np.asarray(ld["bias"], dtype=np.float64), ld["activation"]))
        return cls(d["model_id"], layers)

    def to_json(self) -> str:
        return serialize.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "NeuralModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GradientResult:
    g: np.ndarray
    loss: float


def _check_input(model: NeuralModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise ValueError(
            f"input has {x.shape[-1]} features, model {model.model_id!r} expects {model.input_dim}"
        )
    return x


def _forward_trace(model: NeuralModel, x: np.ndarray):
    """Return logits plus the per-layer inputs and ReLU masks needed by backprop.

    Works on a single vector or a batch (rows).
    """
    inputs, masks = [], []
    a = x
    for layer in model.layers:
        inputs.append(a)
        z = a @ layer.weights.T + layer.bias
        if layer.activation == RELU:
            mask = z > 0
            masks.append(mask)
            a = np.where(mask, z, 0.0)
        else:
            masks.append(None)
            a = z
    return a, inputs, masks


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def logits(model: NeuralModel, x) -> np.ndarray:
    x = _check_input(model, x)
    return _forward_trace(model, x)[0]


def forward(model: NeuralModel, x) -> np.ndarray:
    """Class probabilities for one input (or a batch of row inputs)."""
    return softmax(logits(model, x))


def predict_class(model: NeuralModel, x) -> int:
    # np.argmax returns the first maximum, i.e. ties go to the lowest index
    return int(np.argmax(forward(model, x)))


def _backward(model: NeuralModel, inputs, masks, delta):
    """Propagate ``delta`` (d output / d logits, rows) down to the input."""
    for layer, mask in zip(reversed(model.layers), reversed(masks)):
        if mask is not None:
            delta = delta * mask
        delta = delta @ layer.weights
    return delta


def input_gradient(model: NeuralModel, s: Sample) -> GradientResult:
    """Gradient of the softmax cross-entropy loss at ``s.x0`` w.r.t. the input."""
    x = _check_input(model, s.x0)
    if s.label >= model.class_count:
        raise ValueError(f"label {s.label} out of range for {model.class_count} classes")
    z, inputs, masks = _forward_trace(model, x)
    p = softmax(z)
    zmax = np.max(z)
    loss = float(zmax + np.log(np.sum(np.exp(z - zmax))) - z[s.label])
    delta = p.copy()
    delta[s.label] -= 1.0
    g = _backward(model, inputs, masks, delta)
    return GradientResult(g=g, loss=max(loss, 0.0))


def logit_jacobian(model: NeuralModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Logits at ``x`` and their Jacobian, shape ``(class_count, input_dim)``."""
    x = _check_input(model, x)
    z, inputs, masks = _forward_trace(model, x)
    eye = np.eye(model.class_count)
    jac = eye
    for layer, mask in zip(reversed(model.layers), reversed(masks)):
        if mask is not None:
            jac = jac * mask
        jac = jac @ layer.weights
    return z, jac


def init_model(model_id: str, arch: list[int], rng: Rng) -> NeuralModel:
    """He-uniform weights, zero biases. ``arch`` lists every layer width, input first."""
    if len(arch) < 2:
        raise ValueError("arch needs at least input and output widths")
    layers = []
    for i, (n_in, n_out) in enumerate(zip(arch, arch[1:])):
        bound = np.sqrt(6.0 / n_in)
        w = rng.uniform(-bound, bound, size=(n_out, n_in))
        act = NONE if i == len(arch) - 2 else RELU
        layers.append(Layer(w, np.zeros(n_out), act))
    return NeuralModel(model_id, layers)


def train(
    hidden: list[int],
    data: list[Sample],
    epochs: int = 50,
    learning_rate: float = 0.05,
    rng: Rng | None = None,
    batch_size: int = 32,
    class_count: int | None = None,
    model_id: str = "mlp",
) -> NeuralModel:
    """Fit an MLP with the given hidden widths by plain minibatch SGD.

    Input width and class count are read off the data unless ``class_count``
    is given. The result is bit-reproducible for a fixed ``rng`` seed.
    """
    if not data:
        raise ValueError("cannot train on empty data")
    rng = rng or Rng(0)
    X = np.stack([s.x0 for s in data])
    y = np.array([s.label for s in data])
    C = class_count if class_count is not None else int(y.max()) + 1
    if y.max() >= C:
        raise ValueError("labels exceed class_count")
    model = init_model(model_id, [X.shape[1], *hidden, C], rng.child(0))
    order_rng = rng.child(1)
    n = len(data)
    onehot = np.eye(C)[y]
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            perm = order_rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = perm[start:start + batch_size]
                z, inputs, masks = _forward_trace(model, X[idx])
                delta = (softmax(z) - onehot[idx]) / len(idx)
                for layer, a, mask in zip(reversed(model.layers), reversed(inputs), reversed(masks)):
                    if mask is not None:
                        delta = delta * mask
                    grad_w = delta.T @ a
                    grad_b = delta.sum(axis=0)
                    delta = delta @ layer.weights
                    layer.weights -= learning_rate * grad_w
                    layer.bias -= learning_rate * grad_b
            if not all(np.all(np.isfinite(la.weights)) and np.all(np.isfinite(la.bias))
                       for la in model.layers):
                raise FloatingPointError(f"training diverged for model {model_id!r} at epoch {epoch}")
    return model


def accuracy(model: NeuralModel, data: list[Sample]) -> float:
    X = np.stack([s.x0 for s in data])
    y = np.array([s.label for s in data])
    return float(np.mean(np.argmax(forward(model, X), axis=1) == y))
