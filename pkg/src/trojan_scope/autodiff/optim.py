from dataclasses import dataclass, field

import numpy as np

from .tensor import check_finite


def _params(model):
    return model.params() if hasattr(model, "params") else list(model)


def sgd_step(model, lr, momentum=0.0, velocity=None):
    """In-place ``w <- w - lr * g`` (heavy-ball momentum when ``momentum > 0``).

    Returns the velocity buffers (``None`` for plain SGD).
    """
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    params = _params(model)
    for p in params:
        check_finite(p.grad, f"gradient of {p.name}")
    if momentum == 0.0:
        for p in params:
            p.data -= np.asarray(lr * p.grad, dtype=p.data.dtype)
        return None
    if velocity is None:
        velocity = [np.zeros_like(p.data) for p in params]
    for p, v in zip(params, velocity):
        v *= momentum
        v += p.grad
        p.data -= np.asarray(lr * v, dtype=p.data.dtype)
    return velocity


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(model, state=None, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place. Returns the updated state."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    params = _params(model)
    if state is None or not state.m:
        state = AdamState(0, [np.zeros_like(p.data, dtype=np.float64) for p in params],
                          [np.zeros_like(p.data, dtype=np.float64) for p in params])
    state.step += 1
    t = state.step
    for p, m, v in zip(params, state.m, state.v):
        g = check_finite(p.grad, f"gradient of {p.name}").astype(np.float64)
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)
    return state
