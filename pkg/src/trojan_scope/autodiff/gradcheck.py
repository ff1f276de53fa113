"""Central finite-difference gradient checking.

Works with any model exposing ``params()``, ``loss(x, y)``,
``loss_and_backward(x, y)``, ``kink_signature(x)`` and ``astype(dtype)``.
Checks run on a float64 copy so that the finite-difference error is dominated
by truncation rather than float32 round-off.
"""
from dataclasses import dataclass

import numpy as np

# below this magnitude a gradient entry is compared on an absolute scale
RELATIVE_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: str
    n_checked: int
    n_skipped: int
    tol: float

    @property
    def passed(self):
        return self.n_checked > 0 and self.max_rel_error < self.tol


def relative_error(analytic, numeric):
    scale = max(abs(analytic), abs(numeric), RELATIVE_FLOOR)
    return abs(analytic - numeric) / scale


def _same_kinks(a, b):
    return len(a) == len(b) and all(np.array_equal(u, v) for u, v in zip(a, b))


def grad_check(model, inputs, labels, eps=1e-5, tol=1e-4, max_per_param=None, rng=None, check_input=False):
    """Worst relative deviation between analytic and central-difference gradients.

    Coordinates whose +/- eps perturbation flips a ReLU mask or a max-pool
    switch are inside a kink neighbourhood and are skipped (counted in
    ``n_skipped``). The default step balances the O(eps^2) truncation error
    of central differences against float64 round-off.
    """
    model = model.astype(np.float64)
    x = np.asarray(inputs, dtype=np.float64)
    rng = rng if rng is not None else np.random.default_rng(0)
    model.loss_and_backward(x, labels)
    base_kinks = model.kink_signature(x)

    worst, worst_where = 0.0, ""
    checked = skipped = 0

    def probe(array, idx, analytic, where):
        nonlocal worst, worst_where, checked, skipped
        old = array[idx]
        array[idx] = old + eps
        plus, kplus = model.loss(x, labels), model.kink_signature(x)
        array[idx] = old - eps
        minus, kminus = model.loss(x, labels), model.kink_signature(x)
        array[idx] = old
        if not (_same_kinks(base_kinks, kplus) and _same_kinks(base_kinks, kminus)):
            skipped += 1
            return
        err = relative_error(analytic, (plus - minus) / (2 * eps))
        checked += 1
        if err > worst:
            worst, worst_where = err, where

    for pi, p in enumerate(model.params()):
        grad = p.grad.copy()
        coords = list(np.ndindex(p.shape))
        if max_per_param is not None and len(coords) > max_per_param:
            pick = rng.choice(len(coords), size=max_per_param, replace=False)
            coords = [coords[i] for i in pick]
        for idx in coords:
            probe(p.data, idx, grad[idx], f"param[{pi}]{p.name}{idx}")

    if check_input:
        gx = _input_grad(model, x, labels)
        coords = list(np.ndindex(x.shape))
        if max_per_param is not None and len(coords) > max_per_param:
            pick = rng.choice(len(coords), size=max_per_param, replace=False)
            coords = [coords[i] for i in pick]
        for idx in coords:
            probe(x, idx, gx[idx], f"input{idx}")

    return GradCheckReport(worst, worst_where, checked, skipped, tol)


def _input_grad(model, x, labels):
    if hasattr(model, "input_gradient"):
        return model.input_gradient(x, labels)
    logits, cache = model.forward(x)
    _, lcache = model.loss_layer.forward(logits, labels)
    return model.backward(model.loss_layer.backward(1.0, lcache), cache, param_grads=False).input_grad
