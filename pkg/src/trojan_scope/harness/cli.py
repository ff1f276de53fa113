"""Command line for the trojan-scope pipeline.

Every leaf command accepts ``--config`` (pipeline JSON), ``--seed`` (master
seed override) and ``--out`` (where the command writes). Exit status is 0
only on full success.
"""
import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..attribution import METHODS, TheoremSimConfig, sgd_concentration_sim
from ..datagen import load_dataset
from ..detector import load_detector, write_scores_csv
from ..modelzoo import generate_zoo, load_manifest
from .config import PipelineConfig
from .pipeline import StageError, extract_features, load_features, probe_for, run_pipeline, train_detectors
from .report import build_report


def _common(p, out_help):
    p.add_argument("--config", type=Path, help="pipeline configuration JSON")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", type=Path, required=True, help=out_help)


def build_parser():
    parser = argparse.ArgumentParser(prog="trojan-scope", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    groups = parser.add_subparsers(dest="group", required=True)

    zoo = groups.add_parser("zoo", help="model population").add_subparsers(dest="action", required=True)
    p = zoo.add_parser("generate", help="train benign and Trojaned classifiers")
    _common(p, "zoo directory")
    p.add_argument("--n-models", type=int)
    p.add_argument("--workers", type=int, default=1)

    feats = groups.add_parser("features", help="attribution curves").add_subparsers(dest="action", required=True)
    p = feats.add_parser("extract", help="attributions and excitation curves for every zoo model")
    _common(p, "features directory")
    p.add_argument("--zoo", type=Path, required=True)
    p.add_argument("--probe", type=Path, help="clean labelled probe dataset directory (default: generated)")
    p.add_argument("--method", choices=METHODS)

    det = groups.add_parser("detector", help="set-encoder detector").add_subparsers(dest="action", required=True)
    p = det.add_parser("train", help="train split and cross-fitted detectors")
    _common(p, "detector directory")
    p.add_argument("--features", type=Path, required=True)
    p = det.add_parser("eval", help="score models with a trained detector")
    _common(p, "scores CSV path")
    p.add_argument("--detector", type=Path, required=True, help="directory holding detector.json")
    p.add_argument("--features", type=Path, required=True)

    p = groups.add_parser("report", help="summarize a run directory")
    _common(p, "run directory (holds zoo/, detector/ and config.json)")

    theorem = groups.add_parser("theorem", help="robust-training simulator").add_subparsers(dest="action",
                                                                                           required=True)
    p = theorem.add_parser("sim", help="concentration trajectories over the delta_w grid")
    _common(p, "output directory for trajectory CSVs")
    p.add_argument("--loss", choices=("logistic", "hinge"), default="logistic")
    p.add_argument("--samples", type=int, default=TheoremSimConfig.n_samples)
    p.add_argument("--steps", type=int, default=TheoremSimConfig.steps)

    p = groups.add_parser("run", help="full pipeline with resume")
    _common(p, "run directory")
    p.add_argument("--n-models", type=int)
    p.add_argument("--workers", type=int, default=1)
    return parser


def _config(args):
    base = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    seed = args.seed if args.seed is not None else base.master_seed
    zoo = base.zoo
    if getattr(args, "n_models", None):
        zoo = replace(zoo, n_models=args.n_models)
    if getattr(args, "workers", None):
        zoo = replace(zoo, workers=args.workers)
    method = getattr(args, "method", None) or base.method
    return replace(base, zoo=zoo, master_seed=seed, method=method, out_dir=str(args.out))


def _dispatch(args):
    config = _config(args)
    command = (args.group, getattr(args, "action", None))
    if command == ("zoo", "generate"):
        manifest = generate_zoo(config.zoo, args.out, progress=lambda r: print(
            f"{r.model_id} {r.arch} trojaned={r.is_trojaned} acc={r.clean_accuracy:.3f}", flush=True))
        print(f"{len(manifest['models'])} models, {len(manifest['rejected'])} rejected attempts")
    elif command == ("features", "extract"):
        probe = load_dataset(args.probe)[0] if args.probe else probe_for(config)
        ids = [m["model_id"] for m in load_manifest(args.zoo)["models"]]
        extract_features(args.zoo, ids, probe, config.method, config.ig_steps, config.n_steps, args.out)
        print(f"features for {len(ids)} models in {args.out}")
    elif command == ("detector", "train"):
        train_detectors(config, load_features(args.features), args.out)
        print(f"detectors in {args.out}")
    elif command == ("detector", "eval"):
        det = load_detector(args.detector)
        feats = load_features(args.features)
        ids = sorted(feats)
        scores = det.scores([feats[m]["curves"] for m in ids])
        args.out.parent.mkdir(parents=True, exist_ok=True)
        write_scores_csv(args.out, ids, scores, [int(feats[m]["is_trojaned"]) for m in ids])
        print(f"scores for {len(ids)} models in {args.out}")
    elif command == ("report", None):
        report = build_report(args.out)
        (args.out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
        print(json.dumps({"mean_auc": report.mean_auc, "std_auc": report.std_auc}))
    elif command == ("theorem", "sim"):
        result = sgd_concentration_sim(TheoremSimConfig(n_samples=args.samples, steps=args.steps, loss=args.loss,
                                                        seed=config.master_seed))
        args.out.mkdir(parents=True, exist_ok=True)
        result.write_csv(args.out)
        (args.out / "summary.json").write_text(json.dumps(result.to_dict(), indent=2, default=list))
        for t in result.trajectories:
            mass, se = t.terminal("top_mass")
            print(f"delta_w={t.delta_w:g} top-|s| mass {mass:.3f} +/- {se:.3f}")
    elif command == ("run", None):
        report = run_pipeline(config, progress=lambda stage: print(f"stage {stage}", flush=True))
        print(json.dumps({"mean_auc": report.mean_auc, "std_auc": report.std_auc}))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        _dispatch(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
