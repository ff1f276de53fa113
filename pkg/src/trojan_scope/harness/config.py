"""Pipeline configuration: a single JSON document whose canonical digest keys every artifact."""
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..attribution import METHODS
from ..detector import DetectorHyper
from ..modelzoo import ZooConfig
from ..utils import digest


@dataclass
class PipelineConfig:
    zoo: ZooConfig = field(default_factory=ZooConfig)
    probe_per_class: int = 20
    method: str = "ig"
    ig_steps: int = 32
    n_steps: int = 40
    detector: DetectorHyper = field(default_factory=DetectorHyper)
    split_ratios: tuple = (0.8, 0.1, 0.1)
    n_splits: int = 5
    crossfit_folds: int = 10
    master_seed: int = 0
    out_dir: str = "artifacts/run"

    def __post_init__(self):
        if isinstance(self.zoo, dict):
            self.zoo = ZooConfig.from_dict(self.zoo)
        if isinstance(self.detector, dict):
            self.detector = DetectorHyper(**self.detector)
        self.zoo = replace(self.zoo, master_seed=self.master_seed)
        self.detector = replace(self.detector, seed=self.master_seed)
        self.split_ratios = tuple(float(r) for r in self.split_ratios)
        if len(self.split_ratios) != 3 or abs(sum(self.split_ratios) - 1.0) > 1e-9 or min(self.split_ratios) <= 0:
            raise ValueError("split ratios must be three positive numbers summing to 1")
        if self.n_splits < 1:
            raise ValueError("split count must be at least 1")
        if self.crossfit_folds < 3:
            raise ValueError("cross-fitting needs at least 3 folds")
        if self.method not in METHODS:
            raise ValueError(f"attribution method must be one of {METHODS}")
        if self.probe_per_class < 1:
            raise ValueError("probe set needs at least one image per class")

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["zoo"] = self.zoo.to_dict()
        d["detector"] = asdict(self.detector)
        d.pop("out_dir")
        return d

    @classmethod
    def from_dict(cls, d, **overrides):
        known = {f.name for f in fields(cls)}
        merged = {k: v for k, v in d.items() if k in known}
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**merged)

    @classmethod
    def load(cls, path, **overrides):
        return cls.from_dict(json.loads(Path(path).read_text()), **overrides)

    def digest(self):
        return digest(self.to_dict())

    # stage digests chain so that a change upstream invalidates everything below it

    def features_digest(self):
        return digest({"zoo": self.zoo.digest(), "probe_per_class": self.probe_per_class, "method": self.method,
                       "ig_steps": self.ig_steps, "n_steps": self.n_steps, "seed": self.master_seed})

    def detector_digest(self):
        return digest({"features": self.features_digest(), "detector": asdict(self.detector),
                       "split_ratios": self.split_ratios, "n_splits": self.n_splits,
                       "crossfit_folds": self.crossfit_folds})
