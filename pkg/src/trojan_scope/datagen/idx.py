"""IDX (MNIST) file reading and writing.

Format (big endian): u32 magic (0x00000803 for 3-D u8 image tensors,
0x00000801 for 1-D u8 labels), one u32 per dimension, then the raw bytes.
"""
import struct
from pathlib import Path

import numpy as np

from .dataset import Dataset

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


def _read(path, magic, ndim):
    blob = Path(path).read_bytes()
    if len(blob) < 4 + 4 * ndim:
        raise IdxFormatError(f"{path}: truncated header")
    found = struct.unpack_from(">I", blob)[0]
    if found != magic:
        raise IdxFormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack_from(f">{ndim}I", blob, 4)
    offset = 4 + 4 * ndim
    size = int(np.prod(dims))
    if len(blob) - offset < size:
        raise IdxFormatError(f"{path}: truncated payload ({len(blob) - offset} of {size} bytes)")
    return np.frombuffer(blob, dtype=np.uint8, count=size, offset=offset).reshape(dims)


def load_idx(image_path, label_path, n_classes=10):
    images = _read(image_path, IMAGE_MAGIC, 3)
    labels = _read(label_path, LABEL_MAGIC, 1)
    if len(images) != len(labels):
        raise IdxFormatError(f"{len(images)} images but {len(labels)} labels")
    if len(labels) and labels.max() >= n_classes:
        raise IdxFormatError(f"label {labels.max()} outside [0, {n_classes})")
    return Dataset(images[:, None].astype(np.float32) / 255.0, labels.astype(np.int64), n_classes,
                   {"source": "idx", "images": str(image_path)})


def write_idx(image_path, label_path, images, labels):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    Path(image_path).write_bytes(struct.pack(">4I", IMAGE_MAGIC, *images.shape) + images.tobytes())
    Path(label_path).write_bytes(struct.pack(">2I", LABEL_MAGIC, len(labels)) + labels.tobytes())
