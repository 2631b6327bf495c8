"""Analytic gradients vs central finite differences for every layer type."""

import numpy as np
import pytest

from stconv_kws import layers
from conftest import numeric_grad, randomize, rel_err

TOL = 1e-6
SEEDS = (0, 1, 2)


def param_arrays(layer):
    """(label, param, grads-dict, key) tuples, descending into composites."""
    if isinstance(layer, (layers.Block, layers.BGRU)):
        out = []
        for child_name, child in layer.children.items():
            for key, arr in child.params.items():
                out.append((f"{child_name}.{key}", arr, child.grads, key))
        return out
    return [(key, arr, layer.grads, key) for key, arr in layer.params.items()]


def randomize_all(layer, rng):
    if isinstance(layer, (layers.Block, layers.BGRU)):
        for child in layer.children.values():
            randomize(child, rng)
        for bn in [c for c in layer.children.values() if isinstance(c, layers.BatchNorm)]:
            bn.params["gamma"][...] = rng.uniform(0.5, 1.5, size=bn.channels)
            bn.params["beta"][...] = rng.normal(scale=0.2, size=bn.channels)
    else:
        randomize(layer, rng)


def check_gradients(make_layer, x_shape, seed):
    rng = np.random.default_rng(seed)
    layer = make_layer()
    randomize_all(layer, rng)
    x = rng.normal(size=x_shape)
    probe = rng.normal(size=layer.forward(x, train=True).shape)
    layer._cache = None  # discard the probing pass

    def loss():
        return float(np.sum(layer.forward(x, train=True) * probe))

    layer.zero_grads()
    out = layer.forward(x, train=True)
    dx = layer.backward(probe)

    assert rel_err(dx, numeric_grad(loss, x)) < TOL, "input gradient"
    for label, arr, grads, key in param_arrays(layer):
        assert rel_err(grads[key], numeric_grad(loss, arr)) < TOL, label
    return out


@pytest.mark.parametrize("seed", SEEDS)
def test_freq_collapse_conv(seed):
    check_gradients(lambda: layers.FreqCollapseConv(5, 4), (2, 6, 5), seed)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("dilation", [1, 2, 3])
def test_separable_temporal_conv(seed, dilation):
    check_gradients(lambda: layers.SeparableTemporalConv(4, dilation), (2, 7, 4), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_batchnorm_train_mode(seed):
    check_gradients(lambda: layers.BatchNorm(3), (4, 5, 3), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_block(seed):
    check_gradients(lambda: layers.Block(3, (1, 2)), (2, 6, 3), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_bgru_three_step_sequence(seed):
    check_gradients(lambda: layers.BGRU(3, 2), (2, 3, 3), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_bgru_longer_sequence(seed):
    check_gradients(lambda: layers.BGRU(3, 2), (2, 6, 3), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_swsa(seed):
    check_gradients(lambda: layers.SWSA(6, heads=2, query_index=1), (2, 5, 6), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_avgpool(seed):
    check_gradients(layers.AvgPool, (2, 5, 3), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_dense(seed):
    check_gradients(lambda: layers.Dense(4, 3), (2, 4), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_relu(seed):
    rng = np.random.default_rng(seed)
    layer = layers.ReLU()
    # keep activations away from the kink so finite differences are valid
    x = rng.normal(size=(2, 5))
    x[np.abs(x) < 0.05] += 0.1
    probe = rng.normal(size=x.shape)

    def loss():
        return float(np.sum(layer.forward(x, train=True) * probe))

    layer.forward(x, train=True)
    dx = layer.backward(probe)
    assert rel_err(dx, numeric_grad(loss, x)) < TOL
