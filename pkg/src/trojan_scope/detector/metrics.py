"""ROC analysis for Trojan scores."""
import csv

import numpy as np
from scipy.stats import rankdata


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    if labels.all() or not labels.any():
        raise ValueError("AUC needs both labels present")
    return scores, labels


def auc(scores, labels):
    """ROC area via midranks: the normalized Mann-Whitney U statistic (ties count one half)."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels):
    """ROC points ``(fpr, tpr, threshold)``, one per distinct score, from (0, 0) to (1, 1)."""
    scores, labels = _check(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]  # last index of each distinct score
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    tpr = np.r_[0.0, tp / y.sum()]
    fpr = np.r_[0.0, fp / (~y).sum()]
    return fpr, tpr, np.r_[np.inf, s[last]]


def write_scores_csv(path, model_ids, scores, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model_id", "score", "true_label"])
        for mid, s, y in zip(model_ids, scores, labels):
            w.writerow([mid, repr(float(s)), int(y)])


def read_scores_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return ([r["model_id"] for r in rows], np.array([float(r["score"]) for r in rows]),
            np.array([int(r["true_label"]) for r in rows]))


def write_roc_csv(path, scores, labels):
    fpr, tpr, thr = roc_curve(scores, labels)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fpr", "tpr", "threshold"])
        for row in zip(fpr, tpr, thr):
            w.writerow([repr(float(v)) for v in row])
