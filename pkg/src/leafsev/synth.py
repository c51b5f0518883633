"""Synthetic leaf images with exactly known disease pixel counts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from leafsev.errors import SpecError
from leafsev.raster import RasterImage

LEAF_GREEN = (60, 130, 50)
LESION_CORE = (228, 204, 62)
LESION_RIM = (176, 128, 40)
WHITE = (255, 255, 255)


@dataclass
class Leaf:
    cx: float
    cy: float
    rx: float
    ry: float
    angle: float = 0.0  # degrees
    color: tuple = LEAF_GREEN


@dataclass
class Spot:
    cx: float
    cy: float
    radius: float
    color: tuple = LESION_CORE
    rim_color: tuple | None = LESION_RIM


@dataclass
class SynthSpec:
    width: int
    height: int
    leaf: Leaf
    spots: list = field(default_factory=list)
    background: tuple = WHITE
    noise: float = 4.0
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        try:
            leaf = Leaf(**{**d["leaf"], "color": tuple(d["leaf"].get("color", LEAF_GREEN))})
            spots = []
            for s in d.get("spots", []):
                s = dict(s)
                s["color"] = tuple(s.get("color", LESION_CORE))
                if s.get("rim_color", LESION_RIM) is not None:
                    s["rim_color"] = tuple(s.get("rim_color", LESION_RIM))
                spots.append(Spot(**s))
            return cls(
                width=int(d["width"]),
                height=int(d["height"]),
                leaf=leaf,
                spots=spots,
                background=tuple(d.get("background", WHITE)),
                noise=float(d.get("noise", 4.0)),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise SpecError(f"invalid synth spec: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthTruth:
    leaf_px: int
    disease_px: int
    ds_true: float

    def to_dict(self):
        return asdict(self)


def _leaf_mask(spec: SynthSpec, yy, xx):
    leaf = spec.leaf
    t = math.radians(leaf.angle)
    dx = xx - leaf.cx
    dy = yy - leaf.cy
    u = dx * math.cos(t) + dy * math.sin(t)
    v = -dx * math.sin(t) + dy * math.cos(t)
    return (u / leaf.rx) ** 2 + (v / leaf.ry) ** 2 <= 1.0


def render(spec: SynthSpec) -> tuple[RasterImage, SynthTruth, np.ndarray]:
    """Rasterise ``spec``; returns the image, pixel-count truth and the disease mask.

    Pixel centres are sampled at integer coordinates.  Lesions shade from
    ``color`` at the centre to ``rim_color`` at the edge.
    """
    if spec.width < 1 or spec.height < 1:
        raise SpecError("image dimensions must be positive")
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    leaf = _leaf_mask(spec, yy, xx)
    if not leaf.any():
        raise SpecError("leaf ellipse does not cover any pixel")
    bg = np.asarray(spec.background, dtype=np.float64)
    img = np.empty((spec.height, spec.width, 3))
    img[:] = bg
    img[leaf] = np.asarray(spec.leaf.color, dtype=np.float64)
    disease = np.zeros(leaf.shape, dtype=bool)
    for i, s in enumerate(spec.spots):
        if tuple(s.color) == tuple(spec.background):
            raise SpecError(f"spot {i} colour equals the background")
        r = np.hypot(xx - s.cx, yy - s.cy)
        disc = r <= s.radius
        if not disc.any():
            raise SpecError(f"spot {i} covers no pixel")
        if (disc & ~leaf).any():
            raise SpecError(f"spot {i} at ({s.cx}, {s.cy}) r={s.radius} extends outside the leaf")
        t = np.clip(r[disc] / max(s.radius, 1e-9), 0.0, 1.0)[:, None]
        core = np.asarray(s.color, dtype=np.float64)
        rim = core if s.rim_color is None else np.asarray(s.rim_color, dtype=np.float64)
        img[disc] = core * (1.0 - t) + rim * t
        disease |= disc
    if spec.noise > 0:
        rng = np.random.default_rng(spec.seed)
        texture = rng.normal(0.0, spec.noise, size=img.shape)
        img[leaf] += texture[leaf]
    pixels = np.rint(img).clip(0, 255).astype(np.uint8)
    d = int(disease.sum())
    healthy = int(leaf.sum()) - d
    truth = SynthTruth(leaf_px=healthy, disease_px=d, ds_true=d * 100.0 / (healthy + d))
    return RasterImage.from_array(pixels), truth, disease


def leaf_fixture(ds_target, seed=0, width=1280, height=720, leaf_px=120_000, noise=4.0) -> SynthSpec:
    """A leaf of ``leaf_px`` healthy pixels plus lesions worth roughly ``ds_target`` percent.

    Lesion placement and sizes come from ``seed``; the exact severity is whatever
    the rasterised spots cover (see :func:`render`).
    """
    rng = np.random.default_rng(seed)
    disease_target = leaf_px * ds_target / (100.0 - ds_target)
    ellipse_area = leaf_px + disease_target
    aspect = rng.uniform(1.9, 2.4)
    ry = math.sqrt(ellipse_area / (math.pi * aspect))
    rx = aspect * ry
    angle = float(rng.uniform(-12, 12))
    leaf = Leaf(cx=width / 2 + rng.uniform(-20, 20), cy=height / 2 + rng.uniform(-10, 10),
                rx=rx, ry=ry, angle=angle)
    spec = SynthSpec(width=width, height=height, leaf=leaf, noise=noise, seed=seed)
    if ds_target <= 0:
        return spec

    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    inside = _leaf_mask(spec, yy, xx)
    covered = np.zeros_like(inside)
    n_covered = 0
    big = ds_target >= 25
    r_lo, r_hi = (ry * 0.25, ry * 0.45) if big else (8.0, 22.0)
    for _ in range(20_000):
        remaining = disease_target - n_covered
        if remaining <= 0:
            break
        radius = float(rng.uniform(r_lo, r_hi))
        cx = float(rng.uniform(leaf.cx - rx, leaf.cx + rx))
        cy = float(rng.uniform(leaf.cy - rx, leaf.cy + rx))
        for _shrink in range(2):
            y0, y1 = max(0, int(cy - radius) - 1), min(height, int(cy + radius) + 2)
            x0, x1 = max(0, int(cx - radius) - 1), min(width, int(cx + radius) + 2)
            if y0 >= y1 or x0 >= x1:
                disc = None
                break
            win = (slice(y0, y1), slice(x0, x1))
            disc = np.hypot(xx[win] - cx, yy[win] - cy) <= radius
            gain = int((disc & ~covered[win]).sum())
            if gain <= remaining * 1.01 + 20:
                break
            # overshoot: shrink so the new disc roughly closes the gap
            radius = max(2.0, radius * math.sqrt(max(remaining, 1.0) / gain))
        if disc is None or not disc.any() or (disc & ~inside[win]).any():
            continue
        if gain == 0 or gain > remaining * 1.01 + 20:
            continue
        spec.spots.append(Spot(cx=cx, cy=cy, radius=radius))
        covered[win] |= disc
        n_covered += gain
    return spec
