"""Ghost-neuron excitation curves.

For every candidate class ``k`` the penultimate neurons are ranked by the
signed attribution row ``alpha[k]`` and excited cumulatively: at step ``t``
the first ``n_t`` neurons of the ranking have their post-activation value
overwritten with a fixed large value on every clean probe, and the head's
accuracy on the probe labels is recorded. Trojaned models tend to lose
accuracy abruptly once the few target-class ghost neurons are excited.
"""
import csv
from dataclasses import dataclass

import numpy as np

from ..attribution import counterfactual_matrix

DEFAULT_STEPS = 40


class DegenerateModelError(ValueError):
    """The probe set leaves every penultimate activation at zero."""


@dataclass(frozen=True)
class ExcitationSchedule:
    """Cumulative excitation counts ``round(linspace(0, Z, T))``."""

    width: int
    n_steps: int = DEFAULT_STEPS

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("a schedule needs at least two steps")
        if self.width < self.n_steps - 1:
            raise ValueError(f"{self.width} neurons cannot give {self.n_steps} strictly increasing counts")

    @property
    def counts(self):
        return np.rint(np.linspace(0, self.width, self.n_steps)).astype(np.int64)

    @property
    def fractions(self):
        return self.counts / self.width

    def step_at_fraction(self, fraction):
        """First step whose excited fraction reaches ``fraction``."""
        return int(np.searchsorted(self.fractions, fraction - 1e-12))


def _activations(net, probe):
    return net.features(np.asarray(getattr(probe, "images", probe)))


def excitation_value(net, probe=None, z=None):
    """Twice the largest penultimate activation over all probes and neurons."""
    if z is None:
        z = _activations(net, probe)
    if z.size == 0:
        raise ValueError("empty probe set")
    peak = float(np.max(z))
    if not peak > 0:
        raise DegenerateModelError("all penultimate activations are zero on the probe set")
    return 2.0 * peak


def rank_neurons(alpha_row):
    """Neuron indices by descending signed attribution, ties by ascending index."""
    row = np.asarray(alpha_row, dtype=np.float64)
    if row.ndim != 1 or not np.all(np.isfinite(row)):
        raise ValueError("attribution row must be a finite vector")
    return np.argsort(-row, kind="stable")


def _accuracy(net, z, labels):
    logits, _ = net.head_forward(z)
    return np.count_nonzero(logits.argmax(axis=1) == labels) / len(labels)


def excite_and_score(net, probe, ordering, schedule, value, z=None):
    """Length-``T`` probe accuracy curve under cumulative excitation along ``ordering``."""
    if not np.isfinite(value):
        raise ValueError("excitation value must be finite")
    ordering = np.asarray(ordering)
    if z is None:
        z = _activations(net, probe)
    width = z.shape[1]
    if sorted(ordering.tolist()) != list(range(width)):
        raise ValueError("ordering must be a permutation of the penultimate neurons")
    if schedule.width != width:
        raise ValueError(f"schedule built for {schedule.width} neurons, model has {width}")
    labels = probe.labels
    excited = z.copy()
    curve = np.empty(schedule.n_steps)
    done = 0
    for t, n in enumerate(schedule.counts):
        excited[:, ordering[done:n]] = value  # grows the excited prefix
        done = n
        curve[t] = _accuracy(net, excited, labels)
    return curve


@dataclass
class CurveSet:
    raw: np.ndarray  # (K, T) probe accuracy
    normalized: np.ndarray  # raw / baseline accuracy
    counts: np.ndarray  # (T,) excited neurons per step
    width: int
    baseline_accuracy: float
    excitation_value: float
    model_id: str = ""
    method: str = ""

    @property
    def curves(self):
        return self.normalized

    @property
    def fractions(self):
        return self.counts / self.width

    @property
    def n_classes(self):
        return self.raw.shape[0]

    def write_csv(self, path_or_file, append=False):
        """Rows ``model_id,class,step,fraction_excited,accuracy,normalized_accuracy``."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "a" if append else "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            if not append:
                w.writerow(["model_id", "class", "step", "fraction_excited", "accuracy", "normalized_accuracy"])
            for k in range(self.n_classes):
                for t, frac in enumerate(self.fractions):
                    w.writerow([self.model_id, k, t, repr(float(frac)), repr(float(self.raw[k, t])),
                                repr(float(self.normalized[k, t]))])
        finally:
            if own:
                fh.close()


def build_curve_tensor(net, probe, method="ig", n_steps=DEFAULT_STEPS, ig_steps=32, model_id="", matrix=None):
    """Class-wise excitation curves for one model on a clean labelled probe set."""
    z = _activations(net, probe)
    if matrix is None:
        matrix = counterfactual_matrix(net, probe, method, ig_steps, model_id=model_id, z=z)
    values = getattr(matrix, "values", matrix)
    schedule = ExcitationSchedule(z.shape[1], n_steps)
    value = excitation_value(net, z=z)
    raw = np.stack([excite_and_score(net, probe, rank_neurons(row), schedule, value, z=z) for row in values])
    baseline = float(raw[0, 0])
    if baseline == 0:
        raise DegenerateModelError("model has zero accuracy on the probe set")
    return CurveSet(raw, raw / baseline, schedule.counts, z.shape[1], baseline, value, model_id, method)


def curve_areas(curveset):
    """Trapezoid area of each normalized class curve over the excited fraction."""
    return np.trapezoid(curveset.normalized, curveset.fractions, axis=1)


def steepest_curve_auc(curveset):
    """Area under the fastest-falling class curve (the minimum over classes)."""
    return float(curve_areas(curveset).min())
