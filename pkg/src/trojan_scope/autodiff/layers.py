"""Layer primitives with hand-written reverse-mode rules.

Every layer exposes ``forward(x) -> (y, cache)`` and ``backward(dy, cache) -> dx``;
parameter gradients are accumulated into the ``grad`` slot of each parameter
``Tensor``. Image tensors are laid out NCHW, sequences NCL.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor

LAYER_KINDS = ("dense", "conv2d", "conv1d", "relu", "maxpool2d", "maxpool1d", "flatten", "softmax_ce")


def kaiming_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    kind = ""
    params = ()

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy, cache, param_grads=True):
        raise NotImplementedError

    def output_shape(self, shape):
        return shape

    def kink_state(self, cache):
        """Discrete state of non-smooth ops (ReLU masks, pool switches); None if smooth."""
        return None

    def spec(self):
        return {"kind": self.kind}

    def cast(self, dtype):
        for p in self.params:
            p.data = p.data.astype(dtype)
            p.grad = None


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        self.in_features, self.out_features = int(in_features), int(out_features)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Tensor(kaiming_uniform(rng, (self.out_features, self.in_features), self.in_features, dtype),
                             "dense.weight", dtype)
        self.bias = Tensor(np.zeros(self.out_features), "dense.bias", dtype)
        self.params = (self.weight, self.bias)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"dense expects (N, {self.in_features}), got {x.shape}")
        return x @ self.weight.data.T + self.bias.data, x

    def backward(self, dy, cache, param_grads=True):
        x = cache
        if param_grads:
            self.weight.accumulate(dy.T @ x)
            self.bias.accumulate(dy.sum(axis=0))
        return dy @ self.weight.data

    def output_shape(self, shape):
        if tuple(shape) != (self.in_features,):
            raise ValueError(f"dense expects input ({self.in_features},), got {tuple(shape)}")
        return (self.out_features,)

    def spec(self):
        return {"kind": self.kind, "in_features": self.in_features, "out_features": self.out_features}


class Conv2D(Layer):
    """Valid (unpadded) 2-D cross-correlation via im2col."""

    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, rng=None, dtype=np.float32):
        self.in_channels, self.out_channels = int(in_channels), int(out_channels)
        self.kernel_size, self.stride = int(kernel_size), int(stride)
        rng = rng if rng is not None else np.random.default_rng(0)
        k = self.kernel_size
        fan_in = self.in_channels * k * k
        self.weight = Tensor(kaiming_uniform(rng, (self.out_channels, self.in_channels, k, k), fan_in, dtype),
                             "conv2d.weight", dtype)
        self.bias = Tensor(np.zeros(self.out_channels), "conv2d.bias", dtype)
        self.params = (self.weight, self.bias)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"conv2d expects (N, {self.in_channels}, H, W), got {x.shape}")
        k, s = self.kernel_size, self.stride
        if x.shape[2] < k or x.shape[3] < k:
            raise ValueError(f"conv2d kernel {k} larger than input {x.shape[2:]}")
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n, _, ho, wo = win.shape[:4]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, -1)
        out = cols @ self.weight.data.reshape(self.out_channels, -1).T + self.bias.data
        return out.reshape(n, ho, wo, self.out_channels).transpose(0, 3, 1, 2), (x.shape, cols)

    def backward(self, dy, cache, param_grads=True):
        x_shape, cols = cache
        n, _, ho, wo = dy.shape
        k, s = self.kernel_size, self.stride
        d2 = dy.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        if param_grads:
            self.weight.accumulate((d2.T @ cols).reshape(self.weight.shape))
            self.bias.accumulate(d2.sum(axis=0))
        dcols = (d2 @ self.weight.data.reshape(self.out_channels, -1)).reshape(n, ho, wo, self.in_channels, k, k)
        dcols = dcols.transpose(0, 3, 4, 5, 1, 2)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += dcols[:, :, i, j]
        return dx

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ValueError(f"conv2d expects {self.in_channels} channels, got {c}")
        k, s = self.kernel_size, self.stride
        if h < k or w < k:
            raise ValueError(f"conv2d kernel {k} larger than input {h}x{w}")
        return (self.out_channels, (h - k) // s + 1, (w - k) // s + 1)

    def spec(self):
        return {"kind": self.kind, "in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_size": self.kernel_size, "stride": self.stride}


class Conv1D(Layer):
    """1-D cross-correlation with symmetric zero padding."""

    kind = "conv1d"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, rng=None, dtype=np.float32):
        self.in_channels, self.out_channels = int(in_channels), int(out_channels)
        self.kernel_size, self.stride, self.padding = int(kernel_size), int(stride), int(padding)
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = self.in_channels * self.kernel_size
        self.weight = Tensor(kaiming_uniform(rng, (self.out_channels, self.in_channels, self.kernel_size), fan_in, dtype),
                             "conv1d.weight", dtype)
        self.bias = Tensor(np.zeros(self.out_channels), "conv1d.bias", dtype)
        self.params = (self.weight, self.bias)

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ValueError(f"conv1d expects (N, {self.in_channels}, L), got {x.shape}")
        p, k, s = self.padding, self.kernel_size, self.stride
        xp = np.pad(x, ((0, 0), (0, 0), (p, p))) if p else x
        if xp.shape[2] < k:
            raise ValueError(f"conv1d kernel {k} larger than padded input {xp.shape[2]}")
        win = sliding_window_view(xp, k, axis=2)[:, :, ::s]
        n, _, lo = win.shape[:3]
        cols = win.transpose(0, 2, 1, 3).reshape(n * lo, -1)
        out = cols @ self.weight.data.reshape(self.out_channels, -1).T + self.bias.data
        return out.reshape(n, lo, self.out_channels).transpose(0, 2, 1), (xp.shape, cols)

    def backward(self, dy, cache, param_grads=True):
        xp_shape, cols = cache
        n, _, lo = dy.shape
        p, k, s = self.padding, self.kernel_size, self.stride
        d2 = dy.transpose(0, 2, 1).reshape(-1, self.out_channels)
        if param_grads:
            self.weight.accumulate((d2.T @ cols).reshape(self.weight.shape))
            self.bias.accumulate(d2.sum(axis=0))
        dcols = (d2 @ self.weight.data.reshape(self.out_channels, -1)).reshape(n, lo, self.in_channels, k)
        dcols = dcols.transpose(0, 2, 3, 1)
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        for i in range(k):
            dxp[:, :, i:i + s * (lo - 1) + 1:s] += dcols[:, :, i]
        return dxp[:, :, p:xp_shape[2] - p] if p else dxp

    def output_shape(self, shape):
        c, length = shape
        if c != self.in_channels:
            raise ValueError(f"conv1d expects {self.in_channels} channels, got {c}")
        padded = length + 2 * self.padding
        if padded < self.kernel_size:
            raise ValueError(f"conv1d kernel {self.kernel_size} larger than padded input {padded}")
        return (self.out_channels, (padded - self.kernel_size) // self.stride + 1)

    def spec(self):
        return {"kind": self.kind, "in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_size": self.kernel_size, "stride": self.stride, "padding": self.padding}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        return np.where(mask, x, 0).astype(x.dtype, copy=False), mask

    def backward(self, dy, cache, param_grads=True):
        # subgradient at exactly 0 is 0
        return np.where(cache, dy, 0).astype(dy.dtype, copy=False)

    def kink_state(self, cache):
        return cache


class MaxPool2D(Layer):
    """Max-pool; ties go to the first (lowest-index) element of the window."""

    kind = "maxpool2d"

    def __init__(self, kernel_size=2, stride=None):
        self.kernel_size = int(kernel_size)
        self.stride = int(stride) if stride is not None else self.kernel_size

    def forward(self, x):
        k, s = self.kernel_size, self.stride
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n, c, ho, wo = win.shape[:4]
        flat = win.reshape(n, c, ho, wo, k * k)
        arg = flat.argmax(axis=-1)
        y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        return y, (x.shape, arg)

    def backward(self, dy, cache, param_grads=True):
        x_shape, arg = cache
        k, s = self.kernel_size, self.stride
        n, c, ho, wo = arg.shape
        rows = np.arange(ho)[:, None] * s + arg // k
        cols = np.arange(wo)[None, :] * s + arg % k
        dx = np.zeros(x_shape, dtype=dy.dtype)
        ni = np.arange(n)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        if k <= s:
            dx[ni, ci, rows, cols] = dy
        else:
            np.add.at(dx, (ni, ci, rows, cols), dy)
        return dx

    def output_shape(self, shape):
        c, h, w = shape
        k, s = self.kernel_size, self.stride
        if h < k or w < k:
            raise ValueError(f"maxpool2d kernel {k} larger than input {h}x{w}")
        return (c, (h - k) // s + 1, (w - k) // s + 1)

    def kink_state(self, cache):
        return cache[1]

    def spec(self):
        return {"kind": self.kind, "kernel_size": self.kernel_size, "stride": self.stride}


class MaxPool1D(Layer):
    kind = "maxpool1d"

    def __init__(self, kernel_size=2, stride=None):
        self.kernel_size = int(kernel_size)
        self.stride = int(stride) if stride is not None else self.kernel_size

    def forward(self, x):
        k, s = self.kernel_size, self.stride
        if x.shape[2] < k:
            raise ValueError(f"maxpool1d kernel {k} larger than input {x.shape[2]}")
        win = sliding_window_view(x, k, axis=2)[:, :, ::s]
        arg = win.argmax(axis=-1)
        y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        return y, (x.shape, arg)

    def backward(self, dy, cache, param_grads=True):
        x_shape, arg = cache
        n, c, lo = arg.shape
        pos = np.arange(lo) * self.stride + arg
        dx = np.zeros(x_shape, dtype=dy.dtype)
        ni = np.arange(n)[:, None, None]
        ci = np.arange(c)[None, :, None]
        if self.kernel_size <= self.stride:
            dx[ni, ci, pos] = dy
        else:
            np.add.at(dx, (ni, ci, pos), dy)
        return dx

    def output_shape(self, shape):
        c, length = shape
        if length < self.kernel_size:
            raise ValueError(f"maxpool1d kernel {self.kernel_size} larger than input {length}")
        return (c, (length - self.kernel_size) // self.stride + 1)

    def kink_state(self, cache):
        return cache[1]

    def spec(self):
        return {"kind": self.kind, "kernel_size": self.kernel_size, "stride": self.stride}


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache, param_grads=True):
        return dy.reshape(cache)

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


class SoftmaxCrossEntropy(Layer):
    """Terminal layer: mean cross-entropy of softmax(logits) against integer labels."""

    kind = "softmax_ce"

    @staticmethod
    def probabilities(logits):
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def forward(self, logits, labels):
        labels = np.asarray(labels)
        if labels.shape != (logits.shape[0],):
            raise ValueError(f"labels shape {labels.shape} does not match batch {logits.shape[0]}")
        shifted = logits - logits.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(shifted).sum(axis=1))
        n = logits.shape[0]
        loss = float(np.mean(logsumexp - shifted[np.arange(n), labels]))
        return loss, (self.probabilities(logits), labels)

    def backward(self, dy=1.0, cache=None):
        probs, labels = cache
        n = probs.shape[0]
        g = probs.copy()
        g[np.arange(n), labels] -= 1.0
        return (g * (dy / n)).astype(probs.dtype, copy=False)


def build_layer(spec, rng=None, dtype=np.float32):
    kind = spec["kind"]
    if kind == "dense":
        return Dense(spec["in_features"], spec["out_features"], rng=rng, dtype=dtype)
    if kind == "conv2d":
        return Conv2D(spec["in_channels"], spec["out_channels"], spec["kernel_size"], spec.get("stride", 1),
                      rng=rng, dtype=dtype)
    if kind == "conv1d":
        return Conv1D(spec["in_channels"], spec["out_channels"], spec["kernel_size"], spec.get("stride", 1),
                      spec.get("padding", 0), rng=rng, dtype=dtype)
    if kind == "relu":
        return ReLU()
    if kind == "maxpool2d":
        return MaxPool2D(spec["kernel_size"], spec.get("stride"))
    if kind == "maxpool1d":
        return MaxPool1D(spec["kernel_size"], spec.get("stride"))
    if kind == "flatten":
        return Flatten()
    if kind == "softmax_ce":
        return SoftmaxCrossEntropy()
    raise ValueError(f"unknown layer kind {kind!r}")
