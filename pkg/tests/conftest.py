import numpy as np
import pytest

from advforensics.nn import Layer, NeuralModel, Sample, train
from advforensics.numcore import Rng


def linear_model(W, b, model_id="linear"):
    W = np.asarray(W, dtype=np.float64)
    return NeuralModel(model_id, [Layer(W, np.asarray(b, dtype=np.float64), "none")])


def blobs(n=200, d=2, classes=2, spread=0.08, seed=0):
    r = Rng(seed)
    means = r.uniform(0.25, 0.75, size=(classes, d))
    y = np.arange(n) % classes
    X = np.clip(means[y] + r.normal(0, spread, size=(n, d)), 0, 1)
    return [Sample(x, int(l)) for x, l in zip(X, y)]


@pytest.fixture(scope="session")
def small_zoo():
    """Three tiny trained MLPs on 6-d, 4-class blobs, plus their data."""
    data = blobs(n=240, d=6, classes=4, spread=0.1, seed=3)
    zoo = [
        train(h, data, epochs=30, learning_rate=0.1, rng=Rng(i), model_id=f"m{i}")
        for i, h in enumerate([[8], [16], [8, 8]])
    ]
    return zoo, data
