from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .triggers import TriggerSpec, apply_trigger, jitter


class PoisonPlanError(ValueError):
    pass


@dataclass(frozen=True)
class PoisonPlan:
    trigger: TriggerSpec
    source_classes: tuple
    target_class: int
    rate: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "source_classes", tuple(sorted(int(c) for c in self.source_classes)))
        if not self.source_classes:
            raise PoisonPlanError("source classes must be nonempty")
        if self.target_class in self.source_classes:
            raise PoisonPlanError("target class cannot be a source class")
        if not 0.0 < self.rate < 1.0:
            raise PoisonPlanError("poisoning rate must lie in (0, 1)")

    def to_dict(self):
        return {"trigger": self.trigger.to_dict(), "source_classes": list(self.source_classes),
                "target_class": int(self.target_class), "rate": float(self.rate), "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d):
        return cls(TriggerSpec.from_dict(d["trigger"]), tuple(d["source_classes"]), d["target_class"],
                   d["rate"], d.get("seed", 0))


@dataclass
class PoisonedDataset:
    dataset: Dataset
    poison_mask: np.ndarray
    source_index: np.ndarray  # for poisoned rows, the clean row they were copied from; -1 otherwise


def select_poison_indices(labels, plan):
    """First floor(rate * eligible) eligible rows under a shuffle keyed by ``plan.seed``."""
    eligible = np.flatnonzero(np.isin(labels, plan.source_classes))
    if len(eligible) == 0:
        raise PoisonPlanError("no samples belong to the source classes")
    count = int(np.floor(plan.rate * len(eligible) + 1e-9))
    if count == 0:
        raise PoisonPlanError(f"rate {plan.rate} selects zero of {len(eligible)} eligible samples")
    order = np.random.default_rng(plan.seed).permutation(len(eligible))
    return np.sort(eligible[order[:count]])


def poison_dataset(dataset, plan, jitter_rng=None):
    """Clean rows followed by triggered, relabelled copies of the selected source-class rows.

    With ``jitter_rng`` each poisoned copy gets its own jittered trigger
    instance (trigger-robustness augmentation).
    """
    if plan.target_class >= dataset.n_classes or max(plan.source_classes) >= dataset.n_classes:
        raise PoisonPlanError("plan refers to classes outside the dataset")
    missing = set(plan.source_classes) - set(np.unique(dataset.labels).tolist())
    if missing:
        raise PoisonPlanError(f"dataset has no samples of source classes {sorted(missing)}")
    chosen = select_poison_indices(dataset.labels, plan)
    h, w = dataset.image_shape[-2:]
    if jitter_rng is None:
        poisoned = apply_trigger(dataset.images[chosen], plan.trigger)
    else:
        poisoned = np.stack([apply_trigger(dataset.images[i], jitter(plan.trigger, jitter_rng, h, w))
                             for i in chosen])
    images = np.concatenate([dataset.images, poisoned])
    labels = np.concatenate([dataset.labels, np.full(len(chosen), plan.target_class)])
    mask = np.zeros(len(labels), dtype=bool)
    mask[len(dataset):] = True
    source_index = np.full(len(labels), -1)
    source_index[len(dataset):] = chosen
    meta = dict(dataset.meta, poison_plan=plan.to_dict())
    return PoisonedDataset(Dataset(images, labels, dataset.n_classes, meta), mask, source_index)
