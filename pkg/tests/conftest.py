import numpy as np
import pytest

from gsc import HeadModel, LayerSpec


def random_head(rng: np.random.Generator, d: int, dims, activations) -> HeadModel:
    """Random head with the given hidden chain; weights O(1/sqrt(fan_in))."""
    layers = []
    in_dim = d
    for out_dim, act in zip(dims, activations):
        w = rng.standard_normal((out_dim, in_dim)) / np.sqrt(in_dim)
        b = 0.1 * rng.standard_normal(out_dim)
        layers.append(LayerSpec(weight=w, bias=b, activation=act))
        in_dim = out_dim
    return HeadModel(layers=tuple(layers))


def affine_head(rng: np.random.Generator, d: int, k: int) -> HeadModel:
    return random_head(rng, d, [k], ["none"])


def tanh_head(rng: np.random.Generator, d: int, h: int, k: int) -> HeadModel:
    return random_head(rng, d, [h, k], ["tanh", "none"])


def relu_head(rng: np.random.Generator, d: int, h: int, k: int) -> HeadModel:
    return random_head(rng, d, [h, k], ["relu", "none"])


def central_difference_gradient(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Independent oracle: central finite differences of a scalar function."""
    g = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        g[i] = (fn(hi) - fn(lo)) / (2.0 * step)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
