"""Severity pipeline: resize, GrabCut, pixel features, k-means, cluster labelling, DS."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from leafsev._validation import check_image
from leafsev.cluster import kmeans
from leafsev.errors import EmptyMaskError
from leafsev.grabcut import SegMask, grabcut_segment
from leafsev.raster import RasterImage, fit_within

LEAF = "LEAF"
DISEASE = "DISEASE"
MODES = ("rgb", "value")


@dataclass(frozen=True)
class QuantConfig:
    """Knobs for :func:`quantify`.

    ``k=5`` suits leaves with few symptoms; for severities around 25-50 %
    three clusters separate the lesion colour better.
    """

    color_mode: str = "value"
    k: int = 5
    iterations: int = 5
    rect: tuple | None = None
    seed: int = 0
    tau: float = 0.08
    leaf_clusters: tuple | None = None
    restarts: int = 10
    max_iter: int = 300
    max_dim: int = 1280

    def __post_init__(self):
        mode = str(self.color_mode).lower()
        if mode not in MODES:
            raise ValueError(f"color_mode must be one of {MODES}, got {self.color_mode!r}")
        object.__setattr__(self, "color_mode", mode)
        if isinstance(self.k, bool) or not isinstance(self.k, (int, np.integer)) or not 2 <= self.k <= 8:
            raise ValueError(f"k must be an integer in 2..8, got {self.k!r}")
        if isinstance(self.iterations, bool) or not isinstance(self.iterations, (int, np.integer)) \
                or self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations!r}")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.rect is not None:
            object.__setattr__(self, "rect", tuple(int(v) for v in self.rect))
        if self.leaf_clusters is not None:
            object.__setattr__(self, "leaf_clusters", tuple(int(i) for i in self.leaf_clusters))

    def to_dict(self):
        d = asdict(self)
        d["rect"] = list(self.rect) if self.rect is not None else None
        d["leaf_clusters"] = list(self.leaf_clusters) if self.leaf_clusters is not None else None
        return d


@dataclass
class ClusterSummary:
    centroid: list
    pixels: int
    cls: str

    def to_dict(self):
        return {"centroid": list(self.centroid), "pixels": self.pixels, "class": self.cls}


@dataclass
class SeverityReport:
    image: str | None
    width: int
    height: int
    mode: str
    k: int
    d: int
    lad: int
    ds: float
    clusters: list = field(default_factory=list)
    config: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "image": self.image,
            "width": self.width,
            "height": self.height,
            "mode": self.mode,
            "k": self.k,
            "d": self.d,
            "lad": self.lad,
            "ds": self.ds,
            "clusters": [c.to_dict() for c in self.clusters],
        }
        if self.config is not None:
            out["config"] = self.config
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "SeverityReport":
        clusters = [
            ClusterSummary(centroid=list(c["centroid"]), pixels=int(c["pixels"]), cls=c["class"])
            for c in d.get("clusters", [])
        ]
        return cls(
            image=d.get("image"),
            width=int(d["width"]),
            height=int(d["height"]),
            mode=d["mode"],
            k=int(d["k"]),
            d=int(d["d"]),
            lad=int(d["lad"]),
            ds=float(d["ds"]),
            clusters=clusters,
            config=d.get("config"),
        )

    @classmethod
    def from_json(cls, text: str) -> "SeverityReport":
        return cls.from_dict(json.loads(text))


def severity_pct(d, leaf) -> float:
    """Disease pixels as a percentage of leaf-plus-disease pixels."""
    if d < 0 or leaf < 0:
        raise ValueError("pixel counts must be non-negative")
    lad = d + leaf
    if lad == 0:
        raise EmptyMaskError("no leaf or disease pixels to measure")
    return d * 100.0 / lad


def label_clusters(centroids, pixel_counts, tau=0.08, leaf_clusters=None) -> list[str]:
    """Mark each cluster LEAF or DISEASE.

    The most populous cluster (lowest index on ties) is the leaf; any other
    cluster whose centroid lies within ``tau`` of it is leaf as well.  An
    explicit ``leaf_clusters`` list overrides the rule.
    """
    centroids = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
    if centroids.shape[0] == 1 and np.ndim(pixel_counts) == 1 and len(pixel_counts) > 1:
        centroids = centroids.T
    counts = np.asarray(pixel_counts)
    if len(counts) != centroids.shape[0] or len(counts) == 0:
        raise ValueError("need one pixel count per centroid")
    if leaf_clusters is not None:
        chosen = set(int(i) for i in leaf_clusters)
        return [LEAF if i in chosen else DISEASE for i in range(len(counts))]
    leaf = int(np.argmax(counts))
    dist = np.sqrt(((centroids - centroids[leaf]) ** 2).sum(axis=1))
    return [LEAF if (i == leaf or dist[i] <= tau) else DISEASE for i in range(len(counts))]


def pixel_features(img: RasterImage, mask: np.ndarray, mode: str) -> np.ndarray:
    """Feature rows for the masked pixels: RGB/255 triples or the 1-D value channel."""
    px = img.data[mask]
    if mode == "value":
        return (px.max(axis=1).astype(np.float64) / 255.0)[:, None]
    return px.astype(np.float64) / 255.0


@dataclass
class Measurement:
    report: SeverityReport
    image: RasterImage
    mask: np.ndarray
    disease_mask: np.ndarray


def measure(img: RasterImage, mask, cfg: QuantConfig, name=None) -> Measurement:
    """Cluster the pixels under ``mask`` and compute the severity report."""
    mask = np.asarray(mask.mask if isinstance(mask, SegMask) else mask, dtype=bool)
    if not mask.any():
        raise EmptyMaskError("segmentation produced an empty foreground", mask=mask)
    feats = pixel_features(img, mask, cfg.color_mode)
    k = min(cfg.k, feats.shape[0])
    model = kmeans(feats, k, seed=cfg.seed, max_iter=cfg.max_iter, restarts=cfg.restarts)
    counts = model.counts()
    classes = label_clusters(model.centroids, counts, cfg.tau, cfg.leaf_clusters)
    is_disease = np.array([c == DISEASE for c in classes])
    d = int(counts[is_disease].sum())
    leaf = int(counts[~is_disease].sum())
    disease_mask = np.zeros(mask.shape, dtype=bool)
    disease_mask[mask] = is_disease[model.assignments]
    report = SeverityReport(
        image=name,
        width=img.width,
        height=img.height,
        mode=cfg.color_mode,
        k=cfg.k,
        d=d,
        lad=d + leaf,
        ds=severity_pct(d, leaf),
        clusters=[
            ClusterSummary(centroid=[float(v) for v in c], pixels=int(n), cls=cls)
            for c, n, cls in zip(model.centroids, counts, classes)
        ],
        config=cfg.to_dict(),
    )
    return Measurement(report=report, image=img, mask=mask, disease_mask=disease_mask)


def quantify_detailed(img, cfg: QuantConfig | None = None, name=None) -> Measurement:
    cfg = cfg or QuantConfig()
    img = fit_within(check_image(img), cfg.max_dim)
    seg, _ = grabcut_segment(img, cfg.rect, cfg.iterations, seed=cfg.seed)
    if seg.count == 0:
        raise EmptyMaskError("segmentation produced an empty foreground", mask=seg.mask)
    return measure(img, seg.mask, cfg, name=name)


def quantify(img, cfg: QuantConfig | None = None, name=None) -> SeverityReport:
    """Disease severity of a leaf photograph.

    Images larger than ``cfg.max_dim`` are shrunk first; the leaf is cut out
    with GrabCut and only its pixels are clustered.
    """
    return quantify_detailed(img, cfg, name=name).report


def annotate(img: RasterImage, disease_mask) -> RasterImage:
    """Tint disease pixels red at 50% opacity."""
    out = img.data.astype(np.float64)
    m = np.asarray(disease_mask, dtype=bool)
    out[m] = 0.5 * out[m] + 0.5 * np.array([255.0, 0.0, 0.0])
    return RasterImage.from_array(np.rint(out).astype(np.uint8))


class SeverityQuantifier(BaseEstimator):
    """Estimator wrapper: ``fit`` one leaf image, ``predict`` severities for a batch.

    Parameters mirror :class:`QuantConfig`.  Fitted attributes: ``report_``,
    ``mask_`` (leaf foreground) and ``disease_mask_``.
    """

    def __init__(self, color_mode="value", n_clusters=5, iterations=5, rect=None,
                 random_state=0, tau=0.08):
        self.color_mode = color_mode
        self.n_clusters = n_clusters
        self.iterations = iterations
        self.rect = rect
        self.random_state = random_state
        self.tau = tau

    def _config(self):
        return QuantConfig(
            color_mode=self.color_mode,
            k=self.n_clusters,
            iterations=self.iterations,
            rect=self.rect,
            seed=self.random_state,
            tau=self.tau,
        )

    def fit(self, X, y=None):
        m = quantify_detailed(X, self._config())
        self.report_ = m.report
        self.mask_ = m.mask
        self.disease_mask_ = m.disease_mask
        self.ds_ = m.report.ds
        return self

    def predict(self, X):
        """Severity (percent) for one image or a sequence of images."""
        cfg = self._config()
        if isinstance(X, RasterImage) or (isinstance(X, np.ndarray) and X.ndim == 3):
            X = [X]
        return np.array([quantify(img, cfg).ds for img in X])
