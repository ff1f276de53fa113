"""Permutation-invariant set encoder over excitation curves, its training and ROC scoring."""
from .encoder import SetEncoderNet
from .metrics import auc, read_scores_csv, roc_curve, write_roc_csv, write_scores_csv
from .train import (Detector, DetectorDivergenceError, DetectorHyper, load_detector, predict, save_detector,
                    train_detector)

__all__ = [
    "Detector", "DetectorDivergenceError", "DetectorHyper", "SetEncoderNet", "auc", "load_detector", "predict",
    "read_scores_csv", "roc_curve", "save_detector", "train_detector", "write_roc_csv", "write_scores_csv",
]
