import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..autodiff import NonFiniteError, sgd_step
from ..datagen import PoisonPlan, apply_trigger, poison_dataset
from .architectures import build_network

log = logging.getLogger(__name__)


@dataclass
class TrainHyper:
    epochs: int = 10
    lr: float = 0.01
    batch_size: int = 64
    momentum: float = 0.9
    jitter: bool = True


@dataclass
class ModelRecord:
    model_id: str
    arch: str
    seed: int
    is_trojaned: bool
    plan: PoisonPlan = None
    clean_accuracy: float = float("nan")
    attack_success_rate: float = float("nan")
    network: object = field(default=None, repr=False, compare=False)
    attempts: int = 1
    train_seconds: float = 0.0

    def __post_init__(self):
        if self.is_trojaned and self.plan is None:
            raise ValueError("a Trojaned record needs its poison plan")
        if not self.is_trojaned and self.plan is not None:
            raise ValueError("benign records carry no poison plan")

    def trojan_metadata(self):
        if not self.is_trojaned:
            raise LookupError(f"model {self.model_id} is benign and has no Trojan metadata")
        return self.plan

    def to_dict(self):
        return {"model_id": self.model_id, "arch": self.arch, "seed": self.seed, "is_trojaned": self.is_trojaned,
                "plan": None if self.plan is None else self.plan.to_dict(),
                "clean_accuracy": self.clean_accuracy,
                "attack_success_rate": None if np.isnan(self.attack_success_rate) else self.attack_success_rate,
                "attempts": self.attempts, "train_seconds": round(self.train_seconds, 3)}

    @classmethod
    def from_dict(cls, d, network=None):
        asr = d.get("attack_success_rate")
        return cls(d["model_id"], d["arch"], d["seed"], d["is_trojaned"],
                   None if d.get("plan") is None else PoisonPlan.from_dict(d["plan"]),
                   d["clean_accuracy"], float("nan") if asr is None else asr, network,
                   d.get("attempts", 1), d.get("train_seconds", 0.0))


class QualityGateError(RuntimeError):
    """A trained model failed its acceptance gate; ``record`` holds the measurements."""

    def __init__(self, record, reason):
        super().__init__(f"{record.model_id}: {reason}")
        self.record = record
        self.reason = reason


class DivergenceError(RuntimeError):
    pass


def evaluate(net, dataset, plan=None):
    """Top-1 accuracy, or attack success rate when a poison plan is given.

    Attack success: the trigger is applied to every sample whose label is a
    source class and the fraction predicted as the target class is returned.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if dataset.image_shape != net.input_shape:
        raise ValueError(f"dataset images {dataset.image_shape} do not match model input {net.input_shape}")
    if plan is None:
        return float(np.mean(net.predict(dataset.images) == dataset.labels))
    src = dataset.with_classes(plan.source_classes)
    if len(src) == 0:
        raise ValueError("dataset has no source-class samples")
    triggered = apply_trigger(src.images, plan.trigger)
    return float(np.mean(net.predict(triggered) == plan.target_class))


def fit(net, dataset, hyper, rng, plan=None):
    """Minibatch SGD on mean cross-entropy over the clean + poisoned mixture."""
    velocity = None
    for epoch in range(hyper.epochs):
        if plan is not None:
            mixed = poison_dataset(dataset, plan, jitter_rng=rng if hyper.jitter else None).dataset
        else:
            mixed = dataset
        order = rng.permutation(len(mixed))
        losses = []
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            try:
                loss, _ = net.loss_and_backward(mixed.images[idx], mixed.labels[idx])
                velocity = sgd_step(net, hyper.lr, hyper.momentum, velocity)
            except (NonFiniteError, FloatingPointError) as exc:
                raise DivergenceError(f"training diverged in epoch {epoch}: {exc}") from exc
            losses.append(loss)
        log.debug("epoch %d loss %.4f", epoch, float(np.mean(losses)))
    return net


def train_model(model_id, arch, train_data, test_data, plan, hyper, seed, gate=None):
    """Train one classifier and measure it on held-out data.

    ``gate`` is a callable ``record -> reason or None``; a reason raises
    :class:`QualityGateError`.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    side = train_data.image_shape[-1]
    net = build_network(arch, int(rng.integers(2 ** 31)), train_data.n_classes, side)
    fit(net, train_data, hyper, rng, plan)
    record = ModelRecord(model_id, arch, int(seed), plan is not None, plan, evaluate(net, test_data),
                         evaluate(net, test_data, plan) if plan is not None else float("nan"), net)
    record.train_seconds = time.perf_counter() - t0
    if gate is not None:
        reason = gate(record)
        if reason:
            raise QualityGateError(record, reason)
    return record


def hyper_dict(hyper):
    return asdict(hyper)
