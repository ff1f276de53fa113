"""Stratified train/validation/test splits over model ids."""
from dataclasses import dataclass

import numpy as np

from ..utils import derive_seed

SEED_SPLIT = 20
SEED_FOLDS = 21


class SplitError(ValueError):
    pass


@dataclass
class Split:
    train: list
    val: list
    test: list


def _part_sizes(n, ratios):
    sizes = [int(round(n * r)) for r in ratios[1:]]
    return [n - sum(sizes)] + sizes


def _stratum_counts(sizes, n_pos):
    """Positives per part: proportional with largest-remainder rounding, summing to ``n_pos``."""
    n = sum(sizes)
    exact = np.array(sizes) * n_pos / n
    counts = np.floor(exact).astype(int)
    for j in np.argsort(-(exact - counts), kind="stable")[: n_pos - counts.sum()]:
        counts[j] += 1
    return counts


def split(model_ids, labels, ratios=(0.8, 0.1, 0.1), seed=0):
    """Disjoint, exhaustive, label-stratified (train, val, test); deterministic per ``seed``.

    Each part's label count is within one model of its proportional share,
    and every part with at least two models holds both labels.
    """
    ids = np.asarray(model_ids)
    labels = np.asarray(labels).astype(bool)
    if len(ids) != len(labels):
        raise SplitError("model ids and labels differ in length")
    sizes = _part_sizes(len(ids), ratios)
    if min(sizes) < 1:
        raise SplitError(f"{len(ids)} models cannot fill every part of a {ratios} split")
    pos_counts = _stratum_counts(sizes, int(labels.sum()))
    for size, n_pos in zip(sizes, pos_counts):
        if size >= 2 and not 0 < n_pos < size:
            raise SplitError("too few models of one label to stratify every part")
    rng = np.random.default_rng(seed)
    pos = rng.permutation(ids[labels]).tolist()
    neg = rng.permutation(ids[~labels]).tolist()
    parts = []
    for size, n_pos in zip(sizes, pos_counts):
        part = pos[:n_pos] + neg[:size - n_pos]
        pos, neg = pos[n_pos:], neg[size - n_pos:]
        parts.append(sorted(part))
    return Split(*parts)


def split_for(master_seed, index, model_ids, labels, ratios):
    return split(model_ids, labels, ratios, derive_seed(master_seed, SEED_SPLIT, index))


def stratified_folds(model_ids, labels, n_folds, seed=0):
    """Partition ids into ``n_folds`` label-stratified folds."""
    ids = np.asarray(model_ids)
    labels = np.asarray(labels).astype(bool)
    if min(labels.sum(), (~labels).sum()) < n_folds:
        raise SplitError(f"need at least {n_folds} models of each label for {n_folds} folds")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(n_folds)]
    offset = 0
    for group in (rng.permutation(ids[labels]), rng.permutation(ids[~labels])):
        for i, mid in enumerate(group):
            folds[(i + offset) % n_folds].append(str(mid))
        offset += len(group)
    return [sorted(f) for f in folds]


def crossfit_splits(model_ids, labels, n_folds, master_seed=0):
    """Fold ``f`` is the test part and fold ``f + 1`` the validation part; the rest trains."""
    folds = stratified_folds(model_ids, labels, n_folds, derive_seed(master_seed, SEED_FOLDS))
    out = []
    for f in range(n_folds):
        val = folds[(f + 1) % n_folds]
        train = sorted(m for g, fold in enumerate(folds) if g not in (f, (f + 1) % n_folds) for m in fold)
        out.append(Split(train, val, folds[f]))
    return out
