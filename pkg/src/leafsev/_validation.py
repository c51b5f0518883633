"""Input checks shared by the estimators and the functional API."""

from __future__ import annotations

import numbers

import numpy as np

from leafsev.raster import RasterImage


def check_points(points, name="points") -> np.ndarray:
    """Coerce feature vectors to a finite 2-D float array ``(n_points, dim)``.

    A flat sequence of scalars is read as 1-D features.  Ragged input
    (vectors of differing length) is rejected.
    """
    if isinstance(points, np.ndarray):
        arr = points
    else:
        seq = list(points)
        if seq and all(isinstance(p, numbers.Real) for p in seq):
            arr = np.asarray(seq, dtype=np.float64)
        else:
            lengths = {len(np.atleast_1d(p)) for p in seq}
            if len(lengths) > 1:
                raise ValueError(f"{name} have mixed dimensions {sorted(lengths)}")
            arr = np.asarray(seq, dtype=np.float64)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_image(img) -> RasterImage:
    if isinstance(img, RasterImage):
        return img
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer) or arr.min() < 0 or arr.max() > 255:
            raise ValueError("image arrays must hold 8-bit values")
    return RasterImage.from_array(arr)


def check_rect(rect, width: int, height: int) -> tuple[int, int, int, int]:
    try:
        x, y, w, h = (int(v) for v in rect)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"rect must be four integers (x, y, w, h), got {rect!r}") from exc
    if w < 2 or h < 2:
        raise ValueError(f"rect {w}x{h} is degenerate; need w >= 2 and h >= 2")
    if x < 0 or y < 0 or x + w > width or y + h > height:
        raise ValueError(f"rect {(x, y, w, h)} exceeds image bounds {width}x{height}")
    return x, y, w, h


def check_positive_int(value, name, minimum=1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)
