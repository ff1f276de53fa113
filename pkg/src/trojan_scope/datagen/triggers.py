"""Trigger-insertion relation: polygon patches and intensity filters.

A polygon trigger overwrites the pixels whose centres fall inside the polygon
(even-odd rule) with a fill intensity. A filter trigger remaps every pixel
through a monotone gamma curve, the grayscale stand-in for colour filters.
"""
from dataclasses import dataclass, field, replace

import numpy as np

FILTER_GAMMAS = (0.35, 2.8)


class TriggerError(ValueError):
    pass


@dataclass(frozen=True)
class TriggerSpec:
    variant: str
    vertices: tuple = ()  # ((x, y), ...) in pixel units, origin at the top-left corner
    fill: float = 1.0
    gamma: float = 1.0
    seed: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.variant not in ("polygon", "filter"):
            raise TriggerError(f"unknown trigger variant {self.variant!r}")
        if self.variant == "polygon":
            if not 3 <= len(self.vertices) <= 6:
                raise TriggerError("polygon triggers need 3 to 6 vertices")
            if not 0.0 <= self.fill <= 1.0:
                raise TriggerError("fill intensity must lie in [0, 1]")
        elif not self.gamma > 0:
            raise TriggerError("filter gamma must be positive")

    def to_dict(self):
        return {"variant": self.variant, "vertices": [list(map(float, v)) for v in self.vertices],
                "fill": float(self.fill), "gamma": float(self.gamma), "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["variant"], tuple(tuple(v) for v in d.get("vertices", ())), d.get("fill", 1.0),
                   d.get("gamma", 1.0), d.get("seed", 0))


def random_polygon(rng, height=28, width=28, seed=0):
    """Star-shaped polygon with 3-6 vertices inside a 4-8 px box at a random anchor."""
    n = int(rng.integers(3, 7))
    side = float(rng.integers(4, 9))
    x0 = float(rng.integers(0, width - int(side) + 1))
    y0 = float(rng.integers(0, height - int(side) + 1))
    # keep the angular gaps below pi so the polygon does not collapse to a sliver
    angles = np.linspace(0, 2 * np.pi, n, endpoint=False) + rng.uniform(-0.35, 0.35, size=n) * (2 * np.pi / n)
    angles = np.sort(angles + rng.uniform(0, 2 * np.pi))
    radius = rng.uniform(0.7, 1.0, size=n) * side / 2
    cx, cy = x0 + side / 2, y0 + side / 2
    verts = tuple((float(cx + r * np.cos(a)), float(cy + r * np.sin(a))) for r, a in zip(radius, angles))
    fill = float(rng.uniform(0.75, 1.0))
    return TriggerSpec("polygon", verts, fill=fill, seed=seed, meta={"anchor": (x0, y0), "side": side})


def filter_trigger(gamma, seed=0):
    return TriggerSpec("filter", gamma=float(gamma), seed=seed)


def random_trigger(rng, variant, height=28, width=28, seed=0):
    if variant == "polygon":
        return random_polygon(rng, height, width, seed)
    if variant == "filter":
        return filter_trigger(FILTER_GAMMAS[int(rng.integers(len(FILTER_GAMMAS)))], seed)
    raise TriggerError(f"unknown trigger variant {variant!r}")


def polygon_mask(vertices, height, width):
    """Even-odd point-in-polygon test at every pixel centre."""
    v = np.asarray(vertices, dtype=float)
    ys, xs = np.mgrid[0:height, 0:width]
    px, py = xs + 0.5, ys + 0.5
    inside = np.zeros((height, width), dtype=bool)
    for (x1, y1), (x2, y2) in zip(v, np.roll(v, -1, axis=0)):
        if y1 == y2:
            continue
        crosses = (y1 > py) != (y2 > py)
        x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < x_at)
    return inside


def check_fits(trigger, height, width):
    if trigger.variant != "polygon":
        return
    v = np.asarray(trigger.vertices)
    if v[:, 0].min() < 0 or v[:, 1].min() < 0 or v[:, 0].max() > width or v[:, 1].max() > height:
        raise TriggerError(f"polygon does not fit inside a {height}x{width} image")


def filter_lut(gamma, levels=256):
    """Tabulated gamma curve on ``levels`` evenly spaced intensities."""
    grid = np.linspace(0.0, 1.0, levels)
    return grid, grid ** gamma


def apply_trigger(images, trigger):
    """Poisoned copy of ``images`` (any shape ending in H, W); labels are not touched here."""
    images = np.asarray(images, dtype=np.float32)
    height, width = images.shape[-2:]
    out = images.copy()
    if trigger.variant == "polygon":
        check_fits(trigger, height, width)
        out[..., polygon_mask(trigger.vertices, height, width)] = np.float32(trigger.fill)
    else:
        np.power(out, np.float32(trigger.gamma), out=out)
    return np.clip(out, 0.0, 1.0, out=out)


def jitter(trigger, rng, height=28, width=28, shift=1, fill_delta=0.05):
    """Small random variant of a trigger: +/- ``shift`` px position, +/- ``fill_delta`` intensity.

    Shifts that would push the polygon outside the image are clamped.
    """
    if trigger.variant != "polygon":
        return trigger
    v = np.asarray(trigger.vertices)
    dx, dy = rng.integers(-shift, shift + 1, size=2)
    dx = int(np.clip(dx, -v[:, 0].min(), width - v[:, 0].max()))
    dy = int(np.clip(dy, -v[:, 1].min(), height - v[:, 1].max()))
    fill = float(np.clip(trigger.fill + rng.uniform(-fill_delta, fill_delta), 0.0, 1.0))
    return replace(trigger, vertices=tuple((x + dx, y + dy) for x, y in v), fill=fill)
