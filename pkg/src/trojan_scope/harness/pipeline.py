"""End-to-end orchestration: zoo -> features -> detector training and scoring -> report.

Output layout under ``out_dir``::

    config.json
    zoo/                      models and manifest (see modelzoo)
    features/archive.npz      per-model attributions and curves
    features/attributions.csv model_id,class,neuron,alpha
    features/curves.csv       model_id,class,step,fraction_excited,accuracy,normalized_accuracy
    detector/split_<s>/       members, scores.csv, roc.csv, split.json
    detector/crossfit/        out-of-fold scores.csv used for ablation slices
    report.json

Every stage writes ``stage.json`` with its digest; a stage whose digest
matches is skipped, otherwise its directory is rebuilt from scratch.
"""
import json
import logging
import shutil
import time
from pathlib import Path

import numpy as np

from ..attribution import counterfactual_matrix
from ..detector import (DetectorDivergenceError, auc, save_detector, train_detector, write_roc_csv,
                        write_scores_csv)
from ..excitation import build_curve_tensor
from ..modelzoo import ModelLoadError, generate_zoo, load_manifest, load_model, probe_set
from .config import PipelineConfig
from .report import build_report
from .splits import SplitError, crossfit_splits, split_for

log = logging.getLogger(__name__)

STAGES = ("zoo", "features", "detector", "report")


class StageError(RuntimeError):
    def __init__(self, stage, message, model_id=None):
        where = f" (model {model_id})" if model_id else ""
        super().__init__(f"stage {stage!r} failed{where}: {message}")
        self.stage = stage
        self.model_id = model_id


def _stage_done(directory, stage_digest):
    path = Path(directory) / "stage.json"
    if not path.exists():
        return False
    return json.loads(path.read_text()).get("digest") == stage_digest


def _mark_done(directory, stage_digest, seconds, **extra):
    (Path(directory) / "stage.json").write_text(json.dumps({"digest": stage_digest, "seconds": seconds, **extra},
                                                           indent=2))


def _fresh(directory):
    directory = Path(directory)
    if directory.exists():
        shutil.rmtree(directory)
    directory.mkdir(parents=True)
    return directory


# -- zoo -------------------------------------------------------------------

def run_zoo_stage(config, out):
    zoo_dir = Path(out) / "zoo"
    zdigest = config.zoo.digest()
    if _stage_done(zoo_dir, zdigest) and (zoo_dir / "manifest.json").exists():
        return load_manifest(zoo_dir)
    t0 = time.perf_counter()
    try:
        manifest = generate_zoo(config.zoo, zoo_dir)
    except Exception as exc:
        raise StageError("zoo", str(exc)) from exc
    _mark_done(zoo_dir, zdigest, time.perf_counter() - t0)
    return manifest


# -- features ----------------------------------------------------------------

def extract_features(zoo_dir, model_ids, probe, method="ig", ig_steps=32, n_steps=40, out_dir=None):
    """Attribution matrices and curve sets for each model; written to ``out_dir`` if given."""
    features = {}
    for mid in model_ids:
        try:
            net, record = load_model(zoo_dir, mid)
            z = net.features(probe.images)
            matrix = counterfactual_matrix(net, probe, method, ig_steps, model_id=mid, z=z)
            curves = build_curve_tensor(net, probe, method, n_steps, ig_steps, model_id=mid, matrix=matrix)
        except ModelLoadError as exc:
            raise StageError("features", str(exc), mid) from exc
        except (ValueError, FloatingPointError) as exc:
            raise StageError("features", str(exc), mid) from exc
        features[mid] = {"record": record, "matrix": matrix, "curves": curves}
    if out_dir is not None:
        write_features(features, out_dir)
    return features


def write_features(features, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arrays, index = {}, {}
    with open(out / "attributions.csv", "w", newline="") as fa, open(out / "curves.csv", "w", newline="") as fc:
        for j, (mid, f) in enumerate(features.items()):
            f["matrix"].write_csv(fa, append=j > 0)
            f["curves"].write_csv(fc, append=j > 0)
            cs = f["curves"]
            arrays[f"{mid}/alpha"] = f["matrix"].values
            arrays[f"{mid}/raw"] = cs.raw
            arrays[f"{mid}/normalized"] = cs.normalized
            arrays[f"{mid}/counts"] = cs.counts
            index[mid] = {"is_trojaned": bool(f["record"].is_trojaned), "width": cs.width,
                          "baseline_accuracy": cs.baseline_accuracy, "excitation_value": cs.excitation_value,
                          "method": cs.method}
    np.savez_compressed(out / "archive.npz", **arrays)
    (out / "index.json").write_text(json.dumps(index, indent=2))


def load_features(features_dir):
    """``{model_id: {"curves": (K, T) normalized, "raw", "alpha", "counts", **index}}``."""
    features_dir = Path(features_dir)
    index = json.loads((features_dir / "index.json").read_text())
    with np.load(features_dir / "archive.npz") as archive:
        return {mid: {**meta, "curves": archive[f"{mid}/normalized"], "raw": archive[f"{mid}/raw"],
                      "alpha": archive[f"{mid}/alpha"], "counts": archive[f"{mid}/counts"]}
                for mid, meta in index.items()}


def probe_for(config):
    return probe_set(config.master_seed, config.probe_per_class, config.zoo.n_classes, config.zoo.image_size)


def run_features_stage(config, out, manifest):
    fdir = Path(out) / "features"
    fdigest = config.features_digest()
    if _stage_done(fdir, fdigest):
        return load_features(fdir)
    _fresh(fdir)
    t0 = time.perf_counter()
    ids = [m["model_id"] for m in manifest["models"]]
    extract_features(Path(out) / "zoo", ids, probe_for(config), config.method, config.ig_steps, config.n_steps, fdir)
    _mark_done(fdir, fdigest, time.perf_counter() - t0, method=config.method)
    return load_features(fdir)


# -- detector ----------------------------------------------------------------

def _fit_and_score(features, part, hyper, out_dir, stage="detector"):
    curves = {mid: features[mid]["curves"] for mid in features}
    label = {mid: int(features[mid]["is_trojaned"]) for mid in features}
    try:
        det = train_detector([curves[m] for m in part.train], [label[m] for m in part.train],
                             [curves[m] for m in part.val], [label[m] for m in part.val], hyper)
    except (ValueError, DetectorDivergenceError) as exc:
        raise StageError(stage, str(exc)) from exc
    scores = det.scores([curves[m] for m in part.test])
    labels = [label[m] for m in part.test]
    out_dir.mkdir(parents=True, exist_ok=True)
    save_detector(det, out_dir / "model")
    write_scores_csv(out_dir / "scores.csv", part.test, scores, labels)
    if len(set(labels)) == 2:
        write_roc_csv(out_dir / "roc.csv", scores, labels)
    (out_dir / "split.json").write_text(json.dumps({"train": part.train, "val": part.val, "test": part.test,
                                                    "learning_rate": det.learning_rate, "val_auc": det.val_auc},
                                                   indent=2))
    return scores, labels


def run_detector_stage(config, out, features):
    ddir = Path(out) / "detector"
    ddigest = config.detector_digest()
    if _stage_done(ddir, ddigest):
        return
    _fresh(ddir)
    t0 = time.perf_counter()
    train_detectors(config, features, ddir)
    _mark_done(ddir, ddigest, time.perf_counter() - t0)


def train_detectors(config, features, ddir):
    """Detectors for every evaluation split plus the cross-fitted out-of-fold scores."""
    ddir = Path(ddir)
    ids = sorted(features)
    labels = [int(features[m]["is_trojaned"]) for m in ids]
    try:
        parts = [split_for(config.master_seed, s, ids, labels, config.split_ratios) for s in range(config.n_splits)]
        folds = crossfit_splits(ids, labels, config.crossfit_folds, config.master_seed)
    except SplitError as exc:
        raise StageError("detector", str(exc)) from exc
    for s, part in enumerate(parts):
        scores, y = _fit_and_score(features, part, config.detector, ddir / f"split_{s}")
        log.info("split %d test AUC %.3f", s, auc(scores, y))
    pooled = {}
    for f, part in enumerate(folds):
        scores, _ = _fit_and_score(features, part, config.detector, ddir / "crossfit" / f"fold_{f}")
        pooled.update(zip(part.test, scores))
    write_scores_csv(ddir / "crossfit" / "scores.csv", ids, [pooled[m] for m in ids], labels)


# -- orchestration -------------------------------------------------------------

def run_pipeline(config, progress=None):
    """Run (or resume) every stage and return the :class:`RunReport`."""
    if not isinstance(config, PipelineConfig):
        raise TypeError("run_pipeline expects a PipelineConfig")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2))
    say = progress or (lambda stage: None)
    say("zoo")
    manifest = run_zoo_stage(config, out)
    say("features")
    features = run_features_stage(config, out, manifest)
    say("detector")
    run_detector_stage(config, out, features)
    say("report")
    try:
        report = build_report(out)
    except (OSError, ValueError) as exc:
        raise StageError("report", str(exc)) from exc
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    return report
