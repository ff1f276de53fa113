"""Minimal layer-wise reverse-mode autodiff on numpy."""
from .gradcheck import GradCheckReport, grad_check
from .layers import (Conv1D, Conv2D, Dense, Flatten, MaxPool1D, MaxPool2D, ReLU, SoftmaxCrossEntropy,
                     build_layer)
from .network import ArchitectureError, BackwardResult, ForwardCache, Network
from .optim import AdamState, adam_step, sgd_step
from .serialize import WeightFormatError, load_network, pack_weights, save_network, unpack_weights
from .tensor import NonFiniteError, Tensor, check_finite

__all__ = [
    "AdamState", "ArchitectureError", "BackwardResult", "Conv1D", "Conv2D", "Dense", "Flatten",
    "ForwardCache", "GradCheckReport", "MaxPool1D", "MaxPool2D", "Network", "NonFiniteError", "ReLU",
    "SoftmaxCrossEntropy", "Tensor", "WeightFormatError", "adam_step", "build_layer", "check_finite",
    "grad_check", "load_network", "pack_weights", "save_network", "sgd_step", "unpack_weights",
]
