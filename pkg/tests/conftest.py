import numpy as np
import pytest

from trojan_scope.autodiff import Network


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_conv_specs(n_classes=3):
    return [
        {"kind": "conv2d", "in_channels": 1, "out_channels": 2, "kernel_size": 3},
        {"kind": "relu"},
        {"kind": "maxpool2d", "kernel_size": 2},
        {"kind": "conv2d", "in_channels": 2, "out_channels": 3, "kernel_size": 2},
        {"kind": "relu"},
        {"kind": "flatten", "penultimate": True},
        {"kind": "dense", "in_features": 12, "out_features": n_classes},
        {"kind": "softmax_ce"},
    ]


@pytest.fixture
def conv_net():
    # 1x9x9 -> conv3 -> 2x7x7 -> pool2 -> 2x3x3 -> conv2 -> 3x2x2 -> 12
    return Network(small_conv_specs(), (1, 9, 9), seed=0)


def linear_head_net(weight, bias=None):
    """Identity penultimate layer followed by a dense head with the given weights."""
    weight = np.asarray(weight, dtype=np.float32)
    k, width = weight.shape
    net = Network([
        {"kind": "dense", "in_features": width, "out_features": width},
        {"kind": "relu", "penultimate": True},
        {"kind": "dense", "in_features": width, "out_features": k},
        {"kind": "softmax_ce"},
    ], (width,), seed=0)
    net.layers[0].weight.data = np.eye(width, dtype=np.float32)
    net.layers[0].bias.data = np.zeros(width, dtype=np.float32)
    net.layers[2].weight.data = weight
    net.layers[2].bias.data = np.zeros(k, np.float32) if bias is None else np.asarray(bias, np.float32)
    return net


@pytest.fixture
def make_linear_head():
    return linear_head_net
