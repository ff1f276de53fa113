"""Run reports computed purely from persisted artifacts (scores CSVs, manifest, stage records)."""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..detector import auc, read_scores_csv
from ..utils import digest

HIGH_RATE = 0.15  # poisoning rates at or above this count as "high"


@dataclass
class RunReport:
    split_aucs: list
    mean_auc: float
    std_auc: float
    ablation: dict
    timing: dict
    config_digest: str
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def source_bucket(plan, n_classes):
    n = len(plan["source_classes"])
    return "all" if n == n_classes - 1 else str(n)


def rate_band(rate):
    return "high" if rate >= HIGH_RATE - 1e-12 else "low"


def _slice_auc(benign, trojaned):
    if not benign or not trojaned:
        return None  # one label only: undefined
    scores = [s for s in benign] + [s for s in trojaned]
    return auc(scores, [0] * len(benign) + [1] * len(trojaned))


def ablation_report(scores, manifest):
    """Per-slice AUC; a slice holds every benign model plus the Trojaned models that match it.

    ``scores`` maps model id to score. Slices with a single label are
    reported as ``None`` (undefined).
    """
    models = {m["model_id"]: m for m in manifest["models"]}
    if set(scores) != set(models):
        missing, extra = sorted(set(models) - set(scores)), sorted(set(scores) - set(models))
        raise ValueError(f"scores and manifest disagree (missing {missing[:5]}, unknown {extra[:5]})")
    k = manifest["config"]["n_classes"]
    benign = [scores[m] for m, r in models.items() if not r["is_trojaned"]]
    axes = {
        "trigger_type": lambda p: p["trigger"]["variant"],
        "source_classes": lambda p: source_bucket(p, k),
        "poisoning_rate": lambda p: repr(float(p["rate"])),
        "rate_band": lambda p: rate_band(p["rate"]),
    }
    out = {}
    for axis, key in axes.items():
        groups = {}
        for mid, r in models.items():
            if r["is_trojaned"]:
                groups.setdefault(key(r["plan"]), []).append(scores[mid])
        out[axis] = {name: {"auc": _slice_auc(benign, troj), "n_trojaned": len(troj), "n_benign": len(benign)}
                     for name, troj in sorted(groups.items())}
    return out


def build_report(run_dir):
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "zoo" / "manifest.json").read_text())
    split_dirs = sorted((run_dir / "detector").glob("split_*"), key=lambda p: int(p.name.split("_")[1]))
    if not split_dirs:
        raise ValueError(f"no split scores under {run_dir / 'detector'}")
    split_aucs = []
    for d in split_dirs:
        _, s, y = read_scores_csv(d / "scores.csv")
        split_aucs.append(auc(s, y))
    ids, s, _ = read_scores_csv(run_dir / "detector" / "crossfit" / "scores.csv")
    ablation = ablation_report(dict(zip(ids, s)), manifest)
    timing = {}
    for stage in ("zoo", "features", "detector"):
        path = run_dir / stage / "stage.json"
        if path.exists():
            timing[stage] = json.loads(path.read_text()).get("seconds")
    notes = []
    for axis, slices in ablation.items():
        sizes = {v["n_trojaned"] for v in slices.values()}
        if len(sizes) > 1:
            notes.append(f"{axis} slices differ in size: "
                         + ", ".join(f"{name}={v['n_trojaned']}" for name, v in slices.items()))
    config = json.loads((run_dir / "config.json").read_text())
    return RunReport(split_aucs, float(np.mean(split_aucs)),
                     float(np.std(split_aucs, ddof=1)) if len(split_aucs) > 1 else 0.0,
                     ablation, timing, digest(config), notes)
