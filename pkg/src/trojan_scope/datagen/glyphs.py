"""Procedural digit-like glyphs.

Each class is a fixed set of strokes (segments and arcs) in unit coordinates.
Samples apply a random affine jitter, stroke width and intensity, then render
anti-aliased strokes over a noisy background.
"""
import numpy as np

from .dataset import Dataset

MIN_SIDE = 12


def _arc(cx, cy, rx, ry, start, stop, n=24):
    t = np.radians(np.linspace(start, stop, n))
    return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)


def _line(*points):
    return np.asarray(points, dtype=float)


# angles in degrees, y axis pointing down
_TEMPLATES = [
    [_arc(0.5, 0.5, 0.22, 0.32, 0, 360, 40)],
    [_line((0.5, 0.18), (0.5, 0.82)), _line((0.36, 0.3), (0.5, 0.18)), _line((0.38, 0.82), (0.62, 0.82))],
    [_arc(0.5, 0.36, 0.2, 0.17, 180, 380), _line((0.68, 0.44), (0.3, 0.82)), _line((0.3, 0.82), (0.72, 0.82))],
    [_arc(0.48, 0.34, 0.2, 0.16, -160, 90), _arc(0.48, 0.66, 0.22, 0.16, -90, 160)],
    [_line((0.62, 0.18), (0.28, 0.6)), _line((0.28, 0.6), (0.76, 0.6)), _line((0.62, 0.18), (0.62, 0.84))],
    [_line((0.7, 0.18), (0.34, 0.18)), _line((0.34, 0.18), (0.32, 0.48)), _arc(0.48, 0.64, 0.22, 0.18, -150, 150)],
    [_arc(0.5, 0.64, 0.2, 0.18, 0, 360, 32), _arc(0.62, 0.5, 0.32, 0.34, 195, 250)],
    [_line((0.28, 0.18), (0.74, 0.18)), _line((0.74, 0.18), (0.42, 0.84))],
    [_arc(0.5, 0.33, 0.16, 0.15, 0, 360, 32), _arc(0.5, 0.66, 0.2, 0.17, 0, 360, 32)],
    [_arc(0.5, 0.36, 0.2, 0.18, 0, 360, 32), _line((0.7, 0.36), (0.6, 0.84))],
]


def class_template(k):
    """Stroke list for class ``k``; classes past the built-in ten are random but seeded by ``k``."""
    if k < len(_TEMPLATES):
        return _TEMPLATES[k]
    rng = np.random.default_rng(10_000 + k)
    strokes = []
    for _ in range(3):
        if rng.random() < 0.5:
            strokes.append(_line(*rng.uniform(0.2, 0.8, size=(2, 2))))
        else:
            c = rng.uniform(0.35, 0.65, size=2)
            r = rng.uniform(0.1, 0.25, size=2)
            a0 = rng.uniform(0, 360)
            strokes.append(_arc(c[0], c[1], r[0], r[1], a0, a0 + rng.uniform(90, 300)))
    return strokes


def _segments(strokes):
    starts = np.concatenate([s[:-1] for s in strokes])
    ends = np.concatenate([s[1:] for s in strokes])
    return starts, ends


def _distance_to_segments(points, starts, ends):
    d = ends - starts
    length2 = np.maximum((d ** 2).sum(axis=1), 1e-12)
    rel = points[:, None, :] - starts[None, :, :]
    t = np.clip((rel * d[None]).sum(axis=2) / length2, 0.0, 1.0)
    nearest = starts[None] + t[..., None] * d[None]
    return np.sqrt(((points[:, None, :] - nearest) ** 2).sum(axis=2)).min(axis=1)


def render_glyph(k, rng, height=28, width=28):
    """One (H, W) float image of class ``k``."""
    starts, ends = _segments(class_template(k))
    scale = rng.uniform(0.85, 1.1)
    angle = np.radians(rng.uniform(-12, 12))
    shear = rng.uniform(-0.12, 0.12)
    shift = rng.uniform(-2.0, 2.0, size=2)
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    affine = scale * rot @ np.array([[1.0, shear], [0.0, 1.0]])
    size = np.array([width, height], dtype=float)

    def place(p):
        return ((p - 0.5) @ affine.T + 0.5) * size + shift

    starts, ends = place(starts), place(ends)
    ys, xs = np.mgrid[0:height, 0:width]
    centers = np.stack([xs.ravel() + 0.5, ys.ravel() + 0.5], axis=1)
    dist = _distance_to_segments(centers, starts, ends).reshape(height, width)

    half_width = rng.uniform(0.6, 1.1) * min(height, width) / 28
    ink = rng.uniform(0.75, 1.0)
    coverage = np.clip(half_width + 0.5 - dist, 0.0, 1.0)
    background = rng.uniform(0.12, 0.25)
    noise = rng.normal(0.0, 0.04, size=(height, width))
    img = background + noise + coverage * (ink - background)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def generate_clean(seed, n_per_class, n_classes=10, height=28, width=28):
    """``n_classes * n_per_class`` glyph images, labels interleaved 0..K-1."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be at least 1")
    if n_classes < 1:
        raise ValueError("n_classes must be at least 1")
    if height < MIN_SIDE or width < MIN_SIDE:
        raise ValueError(f"images must be at least {MIN_SIDE}x{MIN_SIDE}, got {height}x{width}")
    rng = np.random.default_rng(seed)
    labels = np.tile(np.arange(n_classes), n_per_class)
    images = np.empty((len(labels), 1, height, width), dtype=np.float32)
    for i, k in enumerate(labels):
        images[i, 0] = render_glyph(int(k), rng, height, width)
    return Dataset(images, labels, n_classes, {"source": "glyphs", "seed": int(seed), "n_per_class": int(n_per_class)})
