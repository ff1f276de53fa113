"""Configuration, splits, end-to-end pipeline, reports and the command line."""
from .config import PipelineConfig
from .pipeline import (STAGES, StageError, extract_features, load_features, probe_for, run_detector_stage,
                       run_features_stage, run_pipeline, run_zoo_stage, train_detectors, write_features)
from .report import HIGH_RATE, RunReport, ablation_report, build_report
from .splits import Split, SplitError, crossfit_splits, split, split_for, stratified_folds

__all__ = [
    "HIGH_RATE", "PipelineConfig", "RunReport", "STAGES", "Split", "SplitError", "StageError", "ablation_report",
    "build_report", "crossfit_splits", "extract_features", "load_features", "probe_for", "run_detector_stage",
    "run_features_stage", "run_pipeline", "run_zoo_stage", "split", "split_for", "stratified_folds", "train_detectors",
    "write_features",
]
