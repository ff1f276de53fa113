"""Ensemble training, prediction and persistence for the set-encoder detector."""
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import AdamState, WeightFormatError, adam_step, pack_weights, unpack_weights
from ..utils import derive_seed
from .encoder import SetEncoderNet, _as_sets
from .metrics import auc

log = logging.getLogger(__name__)


class DetectorDivergenceError(FloatingPointError):
    pass


@dataclass
class DetectorHyper:
    epochs: int = 100
    batch_size: int = 32
    learning_rates: tuple = (1e-3, 3e-4)
    patience: int = 10
    n_members: int = 5
    padding: str = "same"
    seed: int = 0

    def __post_init__(self):
        self.learning_rates = tuple(float(v) for v in self.learning_rates)
        if not self.learning_rates or self.n_members < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("detector hyperparameters must be positive and the lr grid nonempty")


@dataclass
class Detector:
    members: list
    n_steps: int
    learning_rate: float = float("nan")
    val_auc: float = float("nan")
    history: dict = field(default_factory=dict)

    def scores(self, curvesets):
        """Ensemble Trojan score for each curve set."""
        return np.array([predict(self, c) for c in _as_sets(curvesets)])


def _canonical(curves, n_steps):
    curves = np.asarray(getattr(curves, "curves", curves), dtype=np.float64)
    if curves.ndim != 2 or curves.shape[0] < 1:
        raise ValueError("a curve set is a nonempty (K, T) matrix")
    if curves.shape[1] != n_steps:
        raise ValueError(f"curves have length {curves.shape[1]}, detector expects {n_steps}")
    # the encoder output only depends on the set of distinct curves; sorting them makes
    # class-order and duplicate invariance exact in floating point
    return np.unique(curves, axis=0)


def predict(detector, curveset):
    """Mean over members of the Trojaned-class softmax probability."""
    canon = _canonical(curveset, detector.n_steps)
    return float(np.mean([m.scores([canon])[0] for m in detector.members]))


def _check_labels(labels, what):
    labels = np.asarray(labels, dtype=np.int64)
    if set(np.unique(labels)) != {0, 1}:
        raise ValueError(f"{what} labels must contain both benign (0) and Trojaned (1) examples")
    if min(np.bincount(labels)) < 2 and what == "training":
        raise ValueError("need at least two examples per label")
    return labels


def _train_member(seed, lr, train, train_y, val, val_y, hyper, n_steps):
    net = SetEncoderNet(n_steps, hyper.padding, seed)
    rng = np.random.default_rng(derive_seed(seed, 1))
    state = AdamState()
    best, best_key, stale = net.copy(), None, 0
    curve = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(train))
        for i in range(0, len(order), hyper.batch_size):
            idx = order[i:i + hyper.batch_size]
            try:
                net.loss_and_backward([train[j] for j in idx], train_y[idx])
            except FloatingPointError as exc:
                raise DetectorDivergenceError(f"member seed {seed}, lr {lr}: {exc}") from exc
            state = adam_step(net, state, lr=lr)
        val_scores = net.scores(val)
        val_loss = net.loss(val, val_y)
        if not np.all(np.isfinite(val_scores)):
            raise DetectorDivergenceError(f"member seed {seed}, lr {lr}: non-finite validation scores")
        key = (auc(val_scores, val_y), -val_loss)
        curve.append([epoch, key[0], val_loss])
        if best_key is None or key > best_key:
            best, best_key, stale = net.copy(), key, 0
        else:
            stale += 1
            if stale >= hyper.patience:
                break
    return best, curve


def train_detector(train_sets, train_labels, val_sets, val_labels, hyper=None):
    """Train the seed ensemble for every learning rate in the grid and keep the best on validation AUC."""
    hyper = hyper or DetectorHyper()
    train_y = _check_labels(train_labels, "training")
    val_y = _check_labels(val_labels, "validation")
    train = [np.asarray(getattr(c, "curves", c), dtype=np.float32) for c in train_sets]
    val = [np.asarray(getattr(c, "curves", c), dtype=np.float32) for c in val_sets]
    n_steps = train[0].shape[1]
    best, history = None, {}
    for lr in hyper.learning_rates:
        members, curves = [], []
        for j in range(hyper.n_members):
            net, curve = _train_member(derive_seed(hyper.seed, j), lr, train, train_y, val, val_y, hyper, n_steps)
            members.append(net)
            curves.append(curve)
        det = Detector(members, n_steps, lr)
        det.val_auc = auc(det.scores(val), val_y)
        history[repr(lr)] = {"val_auc": det.val_auc, "member_curves": curves}
        log.info("lr %g: ensemble validation AUC %.3f", lr, det.val_auc)
        if best is None or det.val_auc > best.val_auc:
            best = det
    best.history = history
    return best


def save_detector(detector, directory):
    """One TSCP weight file per member plus ``detector.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for j, m in enumerate(detector.members):
        blob = pack_weights([[p.data for p in layer.params] for layer in m.param_layers()])
        (directory / f"member_{j}.bin").write_bytes(blob)
    meta = {"n_steps": detector.n_steps, "learning_rate": detector.learning_rate, "val_auc": detector.val_auc,
            "members": [m.metadata() for m in detector.members], "history": detector.history}
    (directory / "detector.json").write_text(json.dumps(meta, indent=2))


def load_detector(directory):
    directory = Path(directory)
    meta = json.loads((directory / "detector.json").read_text())
    members = []
    for j, mm in enumerate(meta["members"]):
        net = SetEncoderNet(mm["n_steps"], mm["padding"], mm["seed"])
        shapes = [[p.shape for p in layer.params] for layer in net.param_layers()]
        try:
            arrays = unpack_weights((directory / f"member_{j}.bin").read_bytes(), shapes)
        except OSError as exc:
            raise WeightFormatError(str(exc)) from exc
        for layer, values in zip(net.param_layers(), arrays):
            for p, v in zip(layer.params, values):
                p.data = v
        members.append(net)
    return Detector(members, meta["n_steps"], meta["learning_rate"], meta["val_auc"], meta.get("history", {}))


def hyper_to_dict(hyper):
    return asdict(hyper)
