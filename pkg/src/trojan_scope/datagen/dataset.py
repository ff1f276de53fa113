import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Dataset:
    """Grayscale images as (N, 1, H, W) float32 in [0, 1] with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    n_classes: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[1] != 1:
            raise ValueError(f"images must be (N, 1, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError("label outside [0, n_classes)")

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def subset(self, index):
        index = np.asarray(index)
        if index.dtype != bool:
            index = index.astype(np.intp)
        return Dataset(self.images[index], self.labels[index], self.n_classes, dict(self.meta))

    def with_classes(self, classes):
        return self.subset(np.flatnonzero(np.isin(self.labels, list(classes))))


def save_dataset(dataset, directory, poison_mask=None, extra=None):
    """Raw little-endian float32 image blob plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "images.f32").write_bytes(np.ascontiguousarray(dataset.images, dtype="<f4").tobytes())
    manifest = {
        "count": len(dataset),
        "shape": list(dataset.image_shape),
        "n_classes": dataset.n_classes,
        "labels": dataset.labels.tolist(),
        "meta": dataset.meta,
        "poison_mask": None if poison_mask is None else np.asarray(poison_mask, bool).tolist(),
    }
    if extra:
        manifest.update(extra)
    (directory / "manifest.json").write_text(json.dumps(manifest))
    return manifest


def load_dataset(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    shape = tuple(manifest["shape"])
    blob = (directory / "images.f32").read_bytes()
    expected = 4 * manifest["count"] * int(np.prod(shape))
    if len(blob) != expected:
        raise ValueError(f"{directory}: image blob is {len(blob)} bytes, expected {expected}")
    images = np.frombuffer(blob, dtype="<f4").reshape((manifest["count"],) + shape).astype(np.float32)
    ds = Dataset(images, manifest["labels"], manifest["n_classes"], manifest.get("meta", {}))
    mask = manifest.get("poison_mask")
    return ds, (None if mask is None else np.asarray(mask, bool))
