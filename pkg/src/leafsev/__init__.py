"""Leaf disease severity quantification and detection/statistics tooling."""

__version__ = "0.1.0"

from leafsev.cluster import KMeansClusterer, kmeans, predict
from leafsev.grabcut import GrabCutSegmenter, grabcut_segment
from leafsev.raster import RasterImage, decode_image, encode_png, resize_bilinear, value_channel
from leafsev.severity import QuantConfig, SeverityQuantifier, SeverityReport, quantify

__all__ = [
    "GrabCutSegmenter",
    "KMeansClusterer",
    "QuantConfig",
    "RasterImage",
    "SeverityQuantifier",
    "SeverityReport",
    "decode_image",
    "encode_png",
    "grabcut_segment",
    "kmeans",
    "predict",
    "quantify",
    "resize_bilinear",
    "value_channel",
]
