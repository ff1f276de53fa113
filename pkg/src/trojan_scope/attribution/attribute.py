"""Counterfactual attributions over penultimate neurons.

Attributions are taken in z-space: the sub-network below z is frozen and the
target is the pre-softmax logit of the candidate class ``k`` (which need not
be the predicted class).

* ``gradxact``: mean over probes of (d logit_k / d z_i) * z_i
* ``ig``: integrated gradients from the zero baseline, midpoint Riemann sum
  with ``ig_steps`` points, averaged over probes.
"""
import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from ..datagen import Dataset, apply_trigger

METHODS = ("gradxact", "ig")


@dataclass
class AttributionMatrix:
    values: np.ndarray  # (K, Z)
    method: str
    ig_steps: int = 0
    probe_set_id: str = ""
    model_id: str = ""

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite attribution")

    @property
    def n_classes(self):
        return self.values.shape[0]

    def write_csv(self, path_or_file, append=False):
        """Rows ``model_id,class,neuron,alpha``."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "a" if append else "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            if not append:
                w.writerow(["model_id", "class", "neuron", "alpha"])
            for k, row in enumerate(self.values):
                for i, a in enumerate(row):
                    w.writerow([self.model_id, k, i, repr(float(a))])
        finally:
            if own:
                fh.close()


def _as_images(probe):
    return probe.images if isinstance(probe, Dataset) else np.asarray(probe)


def _logit_grad(net, z, k):
    logits, caches = net.head_forward(z)
    seed = np.zeros_like(logits)
    seed[:, k] = 1.0
    return net.head_backward(seed, caches)


def attribute_z(net, z, k, method="ig", ig_steps=32):
    """Attribution vector (length Z) for class ``k`` given penultimate activations ``z`` (N, Z)."""
    z = np.asarray(z, dtype=np.float64)
    if len(z) == 0:
        raise ValueError("empty probe set")
    if not 0 <= k < net.n_classes:
        raise ValueError(f"class {k} outside [0, {net.n_classes})")
    head = net.astype(np.float64)
    if method == "gradxact":
        return (_logit_grad(head, z, k) * z).mean(axis=0)
    if method == "ig":
        if ig_steps < 1:
            raise ValueError("ig_steps must be at least 1")
        alphas = (np.arange(ig_steps) + 0.5) / ig_steps
        path = (alphas[:, None, None] * z[None]).reshape(-1, z.shape[1])
        grads = _logit_grad(head, path, k).reshape(ig_steps, len(z), -1)
        return (z * grads.mean(axis=0)).mean(axis=0)
    raise ValueError(f"unknown attribution method {method!r}; expected one of {METHODS}")


def attribute(net, probe, k, method="ig", ig_steps=32):
    return attribute_z(net, net.features(_as_images(probe)), k, method, ig_steps)


def counterfactual_matrix(net, probe, method="ig", ig_steps=32, model_id="", probe_set_id="", z=None):
    """One attribution row per candidate class."""
    if z is None:
        z = net.features(_as_images(probe))
    values = np.stack([attribute_z(net, z, k, method, ig_steps) for k in range(net.n_classes)])
    return AttributionMatrix(values, method, ig_steps if method == "ig" else 0, probe_set_id, model_id)


def ghost_rank_correlation(net, probe, plan, method="ig", ig_steps=32):
    """Spearman correlation between target-class attribution rows on clean vs. triggered probes.

    Triggered probes are the source-class probes with the ground-truth
    trigger applied; only evaluation code has access to them.
    """
    src = probe.with_classes(plan.source_classes)
    if len(src) == 0:
        raise ValueError("probe set has no source-class samples")
    clean = attribute(net, probe, plan.target_class, method, ig_steps)
    poisoned = attribute(net, apply_trigger(src.images, plan.trigger), plan.target_class, method, ig_steps)
    rho = spearmanr(clean, poisoned).statistic
    return float(rho)
