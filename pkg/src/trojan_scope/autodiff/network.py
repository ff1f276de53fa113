"""Sequential network with a tagged penultimate layer.

The penultimate tag marks the layer whose (post-activation, flattened) output
is the feature vector ``z``; the layers after it form the "head" that maps ``z``
to logits. Attribution and excitation operate on ``z`` through
:meth:`Network.features`, :meth:`Network.head_forward` and
:meth:`Network.head_backward`.
"""
import copy
from dataclasses import dataclass

import numpy as np

from .layers import build_layer
from .tensor import DEFAULT_DTYPE, check_finite


class ArchitectureError(ValueError):
    pass


@dataclass
class ForwardCache:
    caches: list
    penultimate: np.ndarray


@dataclass
class BackwardResult:
    input_grad: np.ndarray
    penultimate_grad: np.ndarray


class Network:
    def __init__(self, layer_specs, input_shape, seed=0, arch_id="", dtype=DEFAULT_DTYPE):
        self.layer_specs = [dict(s) for s in layer_specs]
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = int(seed)
        self.arch_id = arch_id
        self.dtype = np.dtype(dtype)

        kinds = [s["kind"] for s in self.layer_specs]
        if kinds.count("softmax_ce") != 1 or kinds[-1] != "softmax_ce":
            raise ArchitectureError("exactly one softmax_ce layer is required, and it must be last")
        tagged = [i for i, s in enumerate(self.layer_specs) if s.get("penultimate")]
        if len(tagged) != 1:
            raise ArchitectureError(f"exactly one layer must be tagged penultimate, found {len(tagged)}")
        self.penultimate_index = tagged[0]
        if self.penultimate_index >= len(kinds) - 2 or kinds[-2] != "dense":
            raise ArchitectureError("the penultimate layer must be followed by a head ending in a dense layer")

        rng = np.random.default_rng(self.seed)
        self.layers = [build_layer(s, rng=rng, dtype=self.dtype) for s in self.layer_specs[:-1]]
        self.loss_layer = build_layer(self.layer_specs[-1])

        shape = self.input_shape
        self.shapes = [shape]
        for layer in self.layers:
            try:
                shape = layer.output_shape(shape)
            except ValueError as exc:
                raise ArchitectureError(f"layer {layer.kind} does not compose: {exc}") from exc
            self.shapes.append(shape)
        if len(self.shapes[self.penultimate_index + 1]) != 1:
            raise ArchitectureError("penultimate output must be a flat feature vector")
        self.n_classes = self.shapes[-1][0]
        self.penultimate_width = self.shapes[self.penultimate_index + 1][0]

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

    def _check_input(self, x):
        x = np.asarray(x)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match network input {self.input_shape}")
        check_finite(x, "network input")
        return x.astype(self.dtype, copy=False)

    def _run(self, x, layers):
        caches = []
        for layer in layers:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def forward(self, batch):
        x = self._check_input(batch)
        p = self.penultimate_index + 1
        z, body = self._run(x, self.layers[:p])
        logits, head = self._run(z, self.layers[p:])
        check_finite(logits, "logits")
        return logits, ForwardCache(body + head, z)

    def backward(self, dlogits, cache, param_grads=True):
        if cache is None or len(cache.caches) != len(self.layers):
            raise ValueError("backward needs the cache of a matching forward pass")
        if dlogits.shape != (cache.penultimate.shape[0], self.n_classes):
            raise ValueError(f"loss gradient shape {dlogits.shape} does not match logits")
        g = np.asarray(dlogits, dtype=self.dtype)
        dz = None
        for i in range(len(self.layers) - 1, -1, -1):
            if i == self.penultimate_index:
                dz = g
            g = self.layers[i].backward(g, cache.caches[i], param_grads=param_grads)
        check_finite(g, "input gradient")
        return BackwardResult(g, dz)

    def loss(self, batch, labels):
        logits, _ = self.forward(batch)
        value, _ = self.loss_layer.forward(logits, labels)
        return value

    def loss_and_backward(self, batch, labels):
        """Mean softmax cross-entropy; parameter grads are reset then filled."""
        self.zero_grad()
        logits, cache = self.forward(batch)
        value, lcache = self.loss_layer.forward(logits, labels)
        if not np.isfinite(value):
            raise FloatingPointError("non-finite loss")
        self.backward(self.loss_layer.backward(1.0, lcache), cache)
        return value, logits

    def kink_signature(self, batch):
        x = self._check_input(batch)
        states = []
        for layer in self.layers:
            x, c = layer.forward(x)
            st = layer.kink_state(c)
            if st is not None:
                states.append(np.asarray(st))
        return states

    # -- penultimate-space helpers ---------------------------------------

    def features(self, batch, batch_size=512):
        x = self._check_input(batch)
        p = self.penultimate_index + 1
        out = [self._run(x[i:i + batch_size], self.layers[:p])[0] for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.penultimate_width), self.dtype)

    def head_forward(self, z):
        z = np.asarray(z, dtype=self.dtype)
        if z.ndim != 2 or z.shape[1] != self.penultimate_width:
            raise ValueError(f"penultimate input must be (N, {self.penultimate_width}), got {z.shape}")
        check_finite(z, "penultimate activations")
        logits, caches = self._run(z, self.layers[self.penultimate_index + 1:])
        return logits, caches

    def head_backward(self, dlogits, caches):
        """Gradient w.r.t. ``z``; does not touch parameter grads."""
        g = np.asarray(dlogits, dtype=self.dtype)
        head = self.layers[self.penultimate_index + 1:]
        for layer, c in zip(reversed(head), reversed(caches)):
            g = layer.backward(g, c, param_grads=False)
        return g

    def predict(self, batch, batch_size=512):
        x = self._check_input(batch)
        out = [self.forward(x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0).argmax(axis=1)

    def metadata(self):
        return {
            "architecture": self.arch_id,
            "seed": self.seed,
            "input_shape": list(self.input_shape),
            "layers": self.layer_specs,
            "param_shapes": [list(p.shape) for p in self.params()],
        }
