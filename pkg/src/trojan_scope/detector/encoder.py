"""Deep temporal set encoder over class-wise excitation curves.

Each length-``T`` curve goes through a shared 1-D CNN (two conv layers with
kernel 13 and 4 then 16 channels, each followed by max-pool 9/2 and ReLU),
the per-class codes are max-pooled element-wise over classes, and a dense
layer maps the pooled code to two logits (index 1 = Trojaned).

With ``T = 40`` unpadded convolutions do not fit (the second conv would see
only 10 samples), so convolutions use "same" zero padding by default and the
code width is 16 x 4 = 64.
"""
import copy

import numpy as np

from ..autodiff import Conv1D, Dense, Flatten, MaxPool1D, ReLU, SoftmaxCrossEntropy, check_finite

KERNEL = 13
CHANNELS = (4, 16)
POOL = (9, 2)


def _as_sets(x):
    """Normalize input to a list of (K_b, T) float arrays."""
    if isinstance(x, np.ndarray) and x.ndim == 3:
        return list(x)
    if isinstance(x, np.ndarray) and x.ndim == 2:
        return [x]
    return [np.asarray(getattr(c, "curves", c)) for c in x]


class SetEncoderNet:
    """One ensemble member; exposes the grad_check interface of the autodiff module."""

    def __init__(self, n_steps=40, padding="same", seed=0, dtype=np.float32):
        self.n_steps = int(n_steps)
        self.padding = padding
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        pad = KERNEL // 2 if padding == "same" else int(padding)
        rng = np.random.default_rng(self.seed)
        c1, c2 = CHANNELS
        self.encoder = [
            Conv1D(1, c1, KERNEL, padding=pad, rng=rng, dtype=self.dtype), MaxPool1D(*POOL), ReLU(),
            Conv1D(c1, c2, KERNEL, padding=pad, rng=rng, dtype=self.dtype), MaxPool1D(*POOL), ReLU(),
            Flatten(),
        ]
        shape = (1, self.n_steps)
        for layer in self.encoder:
            shape = layer.output_shape(shape)
        self.code_width = shape[0]
        self.head = Dense(self.code_width, 2, rng=rng, dtype=self.dtype)
        self.loss_layer = SoftmaxCrossEntropy()

    @property
    def layers(self):
        return self.encoder + [self.head]

    def params(self):
        return [p for layer in self.layers for p in layer.params]

    def param_layers(self):
        return [layer for layer in self.layers if layer.params]

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def copy(self):
        return copy.deepcopy(self)

    def astype(self, dtype):
        net = self.copy()
        net.dtype = np.dtype(dtype)
        for layer in net.layers:
            layer.cast(net.dtype)
        return net

    # -- forward / backward ----------------------------------------------

    def _stack(self, x):
        sets = _as_sets(x)
        sizes = np.array([len(s) for s in sets])
        if len(sets) == 0 or np.any(sizes < 1):
            raise ValueError("every curve set needs at least one curve")
        curves = np.concatenate([np.asarray(s, dtype=self.dtype) for s in sets])
        if curves.ndim != 2 or curves.shape[1] != self.n_steps:
            raise ValueError(f"curves must have length {self.n_steps}, got shape {curves.shape[1:]}")
        check_finite(curves, "curves")
        return curves[:, None, :], sizes

    def forward(self, x):
        h, sizes = self._stack(x)
        caches = []
        for layer in self.encoder:
            h, c = layer.forward(h)
            caches.append(c)
        starts = np.r_[0, np.cumsum(sizes)[:-1]]
        # element-wise max over each set's curves; ties go to the first curve
        arg = np.stack([h[s:s + n].argmax(axis=0) + s for s, n in zip(starts, sizes)])
        pooled = np.take_along_axis(h, arg, axis=0)
        logits, hc = self.head.forward(pooled)
        return logits, (caches, arg, h.shape, hc)

    def backward(self, dlogits, cache):
        caches, arg, h_shape, hc = cache
        dpooled = self.head.backward(dlogits, hc)
        dh = np.zeros(h_shape, dtype=dpooled.dtype)
        np.add.at(dh, (arg, np.arange(h_shape[1])[None]), dpooled)
        for layer, c in zip(reversed(self.encoder), reversed(caches)):
            dh = layer.backward(dh, c)
        return dh

    def loss(self, x, labels):
        logits, _ = self.forward(x)
        return self.loss_layer.forward(logits, labels)[0]

    def loss_and_backward(self, x, labels):
        self.zero_grad()
        logits, cache = self.forward(x)
        value, lcache = self.loss_layer.forward(logits, labels)
        if not np.isfinite(value):
            raise FloatingPointError("non-finite detector loss")
        self.backward(self.loss_layer.backward(1.0, lcache), cache)
        return value, logits

    def kink_signature(self, x):
        h, sizes = self._stack(x)
        states = []
        for layer in self.encoder:
            h, c = layer.forward(h)
            st = layer.kink_state(c)
            if st is not None:
                states.append(np.asarray(st))
        states.append(self.forward(x)[1][1])
        return states

    def scores(self, x):
        """Softmax probability of the Trojaned class for each set."""
        logits, _ = self.forward(x)
        return SoftmaxCrossEntropy.probabilities(logits.astype(np.float64))[:, 1]

    def metadata(self):
        return {"n_steps": self.n_steps, "padding": self.padding, "seed": self.seed,
                "code_width": self.code_width, "param_shapes": [list(p.shape) for p in self.params()]}
