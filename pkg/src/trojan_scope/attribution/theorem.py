"""Monte-Carlo simulator for robust Trojan training of a two-class linear head.

Labels are c in {-1, +1} and the robust per-sample loss is
``g(delta_w * ||w||_1 - c <z, w>)`` for a non-decreasing ``g`` (hinge or
logistic). For each worst-case feature perturbation ``delta_w`` the expected
update

    Delta_i = E[g'(u) (c z_i - sgn(w_i) delta_w)],   u = delta_w ||w||_1 - c <z, w>

is estimated on a sample pool and applied as ``w <- w + lr_t * Delta`` with a
decaying subgradient step ``lr_t = lr / (1 + t) ** lr_decay``. A weight that
would cross zero is truncated to exactly zero, and at zero the update uses the
smallest element of the subdifferential (a soft threshold at
``delta_w E[g']``), so features the robust penalty kills stay dead instead of
oscillating around zero. Along
the way the simulator records the weighted concentration change on the
trigger subset ``s``

    Delta_s = sum_{i in s} w_i Delta_i / sum_{i in s} |w_i|

the bound ``E[g'(u) (gamma_s - delta_w)]`` with
``gamma_s = c sum_{i in s} w_i z_i / sum_{i in s} |w_i|``, and the share of
``|w|`` held by the ``|s|`` largest weights.

Data: clean samples are class-conditioned Gaussians whose non-trigger
features carry a weak class signal; a poisoned fraction is drawn from the
source class (-1), shifted by a fixed offset on the trigger features and
labelled as the target class (+1). Standard errors come from independent
replicate pools.
"""
import csv
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .concentration import top_m_mass


@dataclass
class TheoremSimConfig:
    n_features: int = 20
    trigger_features: tuple = (0, 1, 2)
    delta_grid: tuple = (0.0, 0.5, 1.0, 2.0)
    n_samples: int = 100_000
    replicates: int = 10
    loss: str = "logistic"
    poison_fraction: float = 0.2
    class_signal: float = 0.5
    trigger_offset: float = 16.0
    noise: float = 1.0
    lr: float = 0.5
    lr_decay: float = 0.5  # step t uses lr / (1 + t) ** lr_decay
    steps: int = 400
    init: str = "random"  # random | aligned | misaligned
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.trigger_features = tuple(int(i) for i in self.trigger_features)
        self.delta_grid = tuple(float(d) for d in self.delta_grid)
        if not self.trigger_features:
            raise ValueError("trigger subset must be nonempty")
        if min(self.trigger_features) < 0 or max(self.trigger_features) >= self.n_features:
            raise ValueError("trigger features outside the feature range")
        if min(self.delta_grid) < 0:
            raise ValueError("delta_w must be non-negative")
        if self.loss not in ("hinge", "logistic"):
            raise ValueError("loss must be 'hinge' or 'logistic'")
        if self.init not in ("random", "aligned", "misaligned"):
            raise ValueError("init must be random, aligned or misaligned")
        if self.replicates < 2 or self.n_samples < self.replicates:
            raise ValueError("need at least two replicates with one sample each")


def g_prime(u, loss):
    if loss == "logistic":
        return expit(u)  # g(u) = log(1 + e^u)
    return (u > -1.0).astype(float)  # g(u) = max(0, 1 + u)


def sample_pool(rng, config, n):
    s = np.asarray(config.trigger_features)
    n_poison = int(round(config.poison_fraction * n))
    c = rng.choice([-1.0, 1.0], size=n)
    c[:n_poison] = -1.0  # poisoned rows start from the source class
    signal = np.full(config.n_features, config.class_signal)
    signal[s] = 0.0
    z = c[:, None] * signal[None] + config.noise * rng.standard_normal((n, config.n_features))
    z[:n_poison, s] += config.trigger_offset
    c[:n_poison] = 1.0
    return z, c


def _min_norm_update(data_term, w, penalty):
    """Ascent direction ``data_term - sgn(w) * penalty``; at ``w_i = 0`` the smallest element of the subdifferential."""
    at_zero = np.sign(data_term) * np.maximum(np.abs(data_term) - penalty, 0.0)
    return np.where(w == 0, at_zero, data_term - np.sign(w) * penalty)


def delta_stats(w, z, c, s, delta_w, loss):
    """Per-feature expected update, Delta_s, and the gamma_s bound, all on one pool."""
    s = np.asarray(s)
    u = delta_w * np.abs(w).sum() - c * (z @ w)
    gp = g_prime(u, loss)
    data_term = (gp[:, None] * c[:, None] * z).mean(axis=0)
    per_feature = _min_norm_update(data_term, w, delta_w * gp.mean())
    ws = np.abs(w[s]).sum()
    if ws == 0:
        return per_feature, float("nan"), float("nan")
    delta_s = float((w[s] * per_feature[s]).sum() / ws)
    gamma_s = c * (z[:, s] @ w[s]) / ws
    bound = float((gp * (gamma_s - delta_w)).mean())
    return per_feature, delta_s, bound


def initial_weights(rng, config):
    w = config.init_scale * rng.standard_normal(config.n_features)
    s = np.asarray(config.trigger_features)
    if config.init == "aligned":
        w[s] = config.init_scale
    elif config.init == "misaligned":
        w[s] = -config.init_scale
    return w


def _run(z, c, w0, config, delta_w):
    s = np.asarray(config.trigger_features)
    m = len(s)
    cz = c[:, None] * z
    czs = cz[:, s]
    n = len(c)
    w = w0.copy()
    rows = np.empty((config.steps + 1, 4))
    for t in range(config.steps + 1):
        # same quantities as delta_stats, with c*z precomputed
        gp = g_prime(delta_w * np.abs(w).sum() - cz @ w, config.loss)
        per_feature = _min_norm_update(gp @ cz / n, w, delta_w * gp.mean())
        ws = np.abs(w[s]).sum()
        if ws > 0:
            delta_s = (w[s] * per_feature[s]).sum() / ws
            bound = (gp * (czs @ w[s] / ws - delta_w)).mean()
        else:
            delta_s = bound = np.nan
        rows[t] = (delta_s, bound, top_m_mass(w, m), ws / np.abs(w).sum() if ws > 0 else 0.0)
        if not np.all(np.isfinite(per_feature)):
            raise FloatingPointError(f"non-finite update at step {t} (delta_w={delta_w})")
        if t < config.steps:
            w_next = w + config.lr / (1.0 + t) ** config.lr_decay * per_feature
            # truncated step: a weight that would cross zero stops at zero
            w = np.where(w * w_next < 0, 0.0, w_next)
    return rows, w


COLUMNS = ("delta_s", "bound", "top_mass", "trigger_mass")


@dataclass
class SimTrajectory:
    delta_w: float
    mean: np.ndarray  # (steps + 1, 4) averaged over replicates, columns COLUMNS
    se: np.ndarray
    final_weights: np.ndarray = field(repr=False)  # (replicates, Z)

    def terminal(self, column):
        j = COLUMNS.index(column)
        return float(self.mean[-1, j]), float(self.se[-1, j])


@dataclass
class SimResult:
    config: TheoremSimConfig
    trajectories: list

    def by_delta(self, delta_w):
        return next(t for t in self.trajectories if t.delta_w == delta_w)

    def write_csv(self, directory):
        """One CSV per delta_w: step plus mean/se of each tracked quantity."""
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for tr in self.trajectories:
            path = directory / f"trajectory_delta_{tr.delta_w:g}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["step"] + [f"{c}_{kind}" for c in COLUMNS for kind in ("mean", "se")])
                for t in range(len(tr.mean)):
                    w.writerow([t] + [repr(float(x)) for j in range(len(COLUMNS)) for x in (tr.mean[t, j], tr.se[t, j])])
            paths.append(path)
        return paths

    def to_dict(self):
        return {"config": asdict(self.config),
                "terminal": {str(t.delta_w): {c: t.terminal(c) for c in COLUMNS} for t in self.trajectories}}


def sgd_concentration_sim(config):
    rng = np.random.default_rng(config.seed)
    per_rep = config.n_samples // config.replicates
    pools = [sample_pool(rng, config, per_rep) for _ in range(config.replicates)]
    inits = [initial_weights(rng, config) for _ in range(config.replicates)]
    trajectories = []
    for delta_w in config.delta_grid:
        runs = [_run(z, c, w0, config, delta_w) for (z, c), w0 in zip(pools, inits)]
        stack = np.stack([r[0] for r in runs])
        se = stack.std(axis=0, ddof=1) / np.sqrt(config.replicates)
        trajectories.append(SimTrajectory(delta_w, stack.mean(axis=0), se, np.stack([r[1] for r in runs])))
    return SimResult(config, trajectories)
