"""Population generation: benign and Trojaned classifiers with quality gates.

Layout on disk::

    <out>/manifest.json
    <out>/<model_id>/weights.bin
    <out>/<model_id>/meta.json

Generation resumes: a model directory whose ``meta.json`` carries the current
config digest is loaded instead of retrained.
"""
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..autodiff import WeightFormatError, load_network, save_network
from ..datagen import PoisonPlan, generate_clean, random_trigger
from ..utils import derive_seed, digest
from .architectures import ARCHITECTURES
from .training import ModelRecord, QualityGateError, TrainHyper, train_model

log = logging.getLogger(__name__)

# seed-space tags; the probe set uses its own tag so it never overlaps training data
SEED_TRAIN_DATA = 1
SEED_TEST_DATA = 2
SEED_PROBE_DATA = 3
SEED_ROLES = 4
SEED_MODEL = 10


class ZooGenerationError(RuntimeError):
    pass


class ModelLoadError(RuntimeError):
    def __init__(self, model_id, reason):
        super().__init__(f"model {model_id}: {reason}")
        self.model_id = model_id


@dataclass
class ZooConfig:
    n_models: int = 80
    trojan_fraction: float = 0.5
    architectures: tuple = ("modded_badnet", "badnet", "modded_lenet5")
    trigger_types: tuple = ("polygon", "filter")
    poisoning_rates: tuple = (0.05, 0.1, 0.15, 0.2)
    source_counts: tuple = (1, 2, "all")
    n_classes: int = 10
    image_size: int = 28
    n_train_per_class: int = 300
    n_test_per_class: int = 50
    epochs: int = 10
    lr: float = 0.01
    batch_size: int = 64
    momentum: float = 0.9
    master_seed: int = 0
    max_retries: int = 3
    min_attack_success: float = 0.90
    clean_margin: float = 0.02
    min_benign_accuracy: float = 0.95
    workers: int = 1

    def __post_init__(self):
        for name in ("architectures", "trigger_types", "poisoning_rates", "source_counts"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"{name} pool must be nonempty")
            object.__setattr__(self, name, value)
        if not 0.0 <= self.trojan_fraction <= 1.0:
            raise ValueError("trojan_fraction must lie in [0, 1]")
        if self.n_models < 1:
            raise ValueError("n_models must be positive")
        unknown = set(self.architectures) - set(ARCHITECTURES)
        if unknown:
            raise ValueError(f"unknown architectures {sorted(unknown)}")

    @property
    def hyper(self):
        return TrainHyper(self.epochs, self.lr, self.batch_size, self.momentum)

    def to_dict(self):
        d = asdict(self)
        d.pop("workers")
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def digest(self):
        return digest(self.to_dict())


@dataclass
class ZooData:
    train: object
    test: object


def zoo_data(config):
    train = generate_clean(derive_seed(config.master_seed, SEED_TRAIN_DATA), config.n_train_per_class,
                           config.n_classes, config.image_size, config.image_size)
    test = generate_clean(derive_seed(config.master_seed, SEED_TEST_DATA), config.n_test_per_class,
                          config.n_classes, config.image_size, config.image_size)
    return ZooData(train, test)


def probe_set(master_seed, n_per_class=20, n_classes=10, image_size=28):
    """Clean labelled probe images from a seed range disjoint from all training data."""
    return generate_clean(derive_seed(master_seed, SEED_PROBE_DATA), n_per_class, n_classes, image_size, image_size)


def assign_roles(config):
    n_troj = int(round(config.n_models * config.trojan_fraction))
    roles = np.zeros(config.n_models, dtype=bool)
    roles[:n_troj] = True
    return np.random.default_rng(derive_seed(config.master_seed, SEED_ROLES)).permutation(roles)


def draw_plan(rng, config):
    k = config.n_classes
    variant = config.trigger_types[int(rng.integers(len(config.trigger_types)))]
    trigger = random_trigger(rng, variant, config.image_size, config.image_size, seed=int(rng.integers(2 ** 31)))
    rate = float(config.poisoning_rates[int(rng.integers(len(config.poisoning_rates)))])
    count = config.source_counts[int(rng.integers(len(config.source_counts)))]
    target = int(rng.integers(k))
    others = np.array([c for c in range(k) if c != target])
    n_src = len(others) if count == "all" else min(int(count), len(others))
    sources = tuple(sorted(int(c) for c in rng.choice(others, n_src, replace=False)))
    return PoisonPlan(trigger, sources, target, rate, seed=int(rng.integers(2 ** 31)))


def _train_one(args):
    index, trojaned, config, data, benign_mean = args
    model_id = f"m{index:04d}"
    rejected = []
    for attempt in range(config.max_retries + 1):
        seed = derive_seed(config.master_seed, SEED_MODEL, index, attempt)
        rng = np.random.default_rng(seed)
        arch = config.architectures[int(rng.integers(len(config.architectures)))]
        plan = draw_plan(rng, config) if trojaned else None
        gate = _trojan_gate(config, benign_mean) if trojaned else _benign_gate(config)
        try:
            record = train_model(model_id, arch, data.train, data.test, plan, config.hyper, seed, gate)
        except QualityGateError as exc:
            log.info("rejected %s attempt %d: %s", model_id, attempt, exc.reason)
            rejected.append({"model_id": model_id, "attempt": attempt, "reason": exc.reason,
                             **exc.record.to_dict()})
            continue
        record.attempts = attempt + 1
        return record, rejected
    raise ZooGenerationError(f"{model_id}: retry budget of {config.max_retries} exhausted")


def _benign_gate(config):
    def gate(record):
        if record.clean_accuracy < config.min_benign_accuracy:
            return f"clean accuracy {record.clean_accuracy:.3f} < {config.min_benign_accuracy}"
        return None
    return gate


def _trojan_gate(config, benign_mean):
    def gate(record):
        if record.attack_success_rate < config.min_attack_success:
            return f"attack success {record.attack_success_rate:.3f} < {config.min_attack_success}"
        floor = benign_mean - config.clean_margin
        if record.clean_accuracy < floor:
            return f"clean accuracy {record.clean_accuracy:.3f} < benign mean - margin ({floor:.3f})"
        return None
    return gate


def _load_cached(model_dir, config_digest):
    meta_path = model_dir / "meta.json"
    if not meta_path.exists():
        return None
    meta = json.loads(meta_path.read_text())
    if meta.get("config_digest") != config_digest:
        return None
    try:
        net, meta = load_network(model_dir)
    except (WeightFormatError, OSError, ValueError):
        return None
    return ModelRecord.from_dict(meta["record"], net), meta.get("rejected", [])


def _save(record, out, config_digest, rejected):
    save_network(record.network, out / record.model_id,
                 {"record": record.to_dict(), "config_digest": config_digest, "rejected": rejected})


def generate_zoo(config, out_dir, progress=None):
    """Train and persist ``config.n_models`` gated records; returns the manifest dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cdigest = config.digest()
    roles = assign_roles(config)
    data = None
    records, rejected = {}, []

    def run_phase(indices, benign_mean):
        nonlocal data
        todo = []
        for i in indices:
            cached = _load_cached(out / f"m{i:04d}", cdigest)
            if cached is not None:
                records[i], rej = cached
                rejected.extend(rej)
            else:
                todo.append(i)
        if not todo:
            return
        if data is None:
            data = zoo_data(config)
        jobs = [(i, bool(roles[i]), config, data, benign_mean) for i in todo]
        if config.workers > 1:
            with ProcessPoolExecutor(config.workers) as pool:
                results = pool.map(_train_one, jobs)
                for i, (record, rej) in zip(todo, results):
                    _finish(i, record, rej)
        else:
            for i, job in zip(todo, jobs):
                _finish(i, *_train_one(job))

    def _finish(i, record, rej):
        _save(record, out, cdigest, rej)
        records[i] = record
        rejected.extend(rej)
        if progress:
            progress(record)

    run_phase(np.flatnonzero(~roles), None)
    benign = [records[i].clean_accuracy for i in np.flatnonzero(~roles)]
    benign_mean = float(np.mean(benign)) if benign else config.min_benign_accuracy
    run_phase(np.flatnonzero(roles), benign_mean)

    manifest = {
        "config": config.to_dict(),
        "config_digest": cdigest,
        "benign_mean_clean_accuracy": benign_mean,
        "models": [records[i].to_dict() for i in range(config.n_models)],
        "rejected": rejected,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def load_manifest(zoo_dir):
    return json.loads((Path(zoo_dir) / "manifest.json").read_text())


def load_model(zoo_dir, model_id):
    """Network and record for one zoo entry; a damaged weight file raises :class:`ModelLoadError`."""
    try:
        net, meta = load_network(Path(zoo_dir) / model_id)
    except (WeightFormatError, OSError, ValueError, KeyError) as exc:
        raise ModelLoadError(model_id, str(exc)) from exc
    return net, ModelRecord.from_dict(meta["record"], net)
