import numpy as np
import pytest

from conftest import (finite_difference_gradients, max_relative_error,
                      toy_layers)
from csocnn import nn
from csocnn.errors import LabelError, StateError
from csocnn.nn import backward, forward


def _train_step_grads(net, x, y):
    _, cache = forward(net, x, "train")
    return backward(net, cache, y)


def test_gradients_match_finite_differences():
    net = nn.Network(toy_layers(), (9, 1, 1), seed=7, dtype=np.float64)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 9, 1, 1))
    y = np.array([0, 1, 2, 1])
    analytic = _train_step_grads(net, x, y)
    numeric = finite_difference_gradients(net, x, y)
    assert max_relative_error(analytic, numeric) < 1e-4


def test_dense_only_gradients_match_finite_differences():
    layers = [nn.input_layer(), nn.dense(6, activation="relu"),
              nn.dense(3, activation="softmax")]
    net = nn.Network(layers, (5,), seed=9, dtype=np.float64)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, 5))
    y = np.array([2, 0, 1])
    analytic = _train_step_grads(net, x, y)
    numeric = finite_difference_gradients(net, x, y)
    assert max_relative_error(analytic, numeric) < 1e-4


def test_confident_correct_prediction_has_near_zero_gradient():
    layers = [nn.input_layer(), nn.dense(2, activation="softmax")]
    net = nn.Network(layers, (2,), seed=0, dtype=np.float64)
    net.params["1.weight"][:] = [[50.0, -50.0], [50.0, -50.0]]
    x = np.ones((1, 2))
    y = np.array([0])
    grads = _train_step_grads(net, x, y)
    assert np.all(np.abs(grads["1.weight"]) < 1e-8)
    assert np.all(np.abs(grads["1.bias"]) < 1e-8)


def test_duplicated_sample_keeps_mean_gradient():
    net1 = nn.Network(toy_layers(), (9, 1, 1), seed=4, dtype=np.float64)
    net2 = net1.clone()
    x = np.random.default_rng(8).normal(size=(1, 9, 1, 1))
    y1 = np.array([1])
    g_single = _train_step_grads(net1, x, y1)
    g_double = _train_step_grads(net2, np.concatenate([x, x]),
                                 np.array([1, 1]))
    for key in g_single:
        assert np.allclose(g_single[key], g_double[key], atol=1e-12)


def test_inference_cache_rejected():
    net = nn.Network(toy_layers(), (9, 1, 1), seed=0)
    x = np.zeros((2, 9, 1, 1), dtype=np.float32)
    _, cache = forward(net, x, "inference")
    with pytest.raises(StateError):
        backward(net, cache, np.array([0, 1]))


def test_stale_cache_rejected():
    net = nn.Network(toy_layers(), (9, 1, 1), seed=0)
    x = np.zeros((2, 9, 1, 1), dtype=np.float32)
    _, old_cache = forward(net, x, "train")
    forward(net, x, "train")
    with pytest.raises(StateError):
        backward(net, old_cache, np.array([0, 1]))


def test_label_out_of_range_rejected():
    net = nn.Network(toy_layers(), (9, 1, 1), seed=0)
    x = np.zeros((2, 9, 1, 1), dtype=np.float32)
    _, cache = forward(net, x, "train")
    with pytest.raises(LabelError):
        backward(net, cache, np.array([0, 3]))


def test_gradients_shape_congruent_with_parameters():
    net = nn.Network(toy_layers(), (9, 1, 1), seed=1)
    x = np.random.default_rng(0).normal(size=(3, 9, 1, 1)).astype(np.float32)
    grads = _train_step_grads(net, x, np.array([0, 1, 2]))
    assert set(grads) == set(net.params)
    for key, g in grads.items():
        assert g.shape == net.params[key].shape
