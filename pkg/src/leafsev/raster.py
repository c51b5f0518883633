"""Image containers, codecs, resizing and the HSV value channel."""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from leafsev.errors import DecodeError, FormatError

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
JPEG_MAGIC = b"\xff\xd8"


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Owned 8-bit RGB pixel grid, stored as a read-only ``(height, width, 3)`` array."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be >= 1, got {self.width}x{self.height}")
        arr = np.array(self.data, dtype=np.uint8, copy=True, order="C")
        if arr.size != self.width * self.height * 3:
            raise ValueError(
                f"pixel buffer holds {arr.size} values, expected {self.width * self.height * 3}"
            )
        arr = arr.reshape(self.height, self.width, 3)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr) -> "RasterImage":
        arr = np.asarray(arr)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected an (H, W, 3) array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], data=arr)

    def pixel(self, x: int, y: int) -> tuple[int, int, int]:
        r, g, b = self.data[y, x]
        return int(r), int(g), int(b)

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return f"RasterImage(width={self.width}, height={self.height})"


@dataclass(frozen=True, eq=False)
class ScalarPlane:
    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64).reshape(self.height, self.width)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)


def _png_structure_error(buf: bytes) -> DecodeError | None:
    """Walk the PNG chunk list; return an error locating the first broken chunk."""
    pos = len(PNG_MAGIC)
    seen_iend = False
    while pos < len(buf):
        if pos + 8 > len(buf):
            return DecodeError("truncated PNG chunk header", pos)
        (length,) = struct.unpack(">I", buf[pos : pos + 4])
        ctype = buf[pos + 4 : pos + 8]
        end = pos + 12 + length
        if not ctype.isalpha():
            return DecodeError(f"invalid PNG chunk type {ctype!r}", pos + 4)
        if end > len(buf):
            return DecodeError(f"truncated PNG chunk {ctype.decode('latin-1')}", pos)
        crc = struct.unpack(">I", buf[end - 4 : end])[0]
        if zlib.crc32(buf[pos + 4 : end - 4]) != crc:
            return DecodeError(f"CRC mismatch in PNG chunk {ctype.decode('latin-1')}", end - 4)
        pos = end
        if ctype == b"IEND":
            seen_iend = True
            break
    if not seen_iend:
        return DecodeError("PNG stream ends before IEND", pos)
    return None


def _decode_ppm(buf: bytes) -> RasterImage:
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise DecodeError("truncated PPM header", pos)
        tok = buf[start:pos]
        if not tok.isdigit():
            raise DecodeError(f"non-numeric PPM header field {tok!r}", start)
        tokens.append(int(tok))
    width, height, maxval = tokens
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise DecodeError("missing whitespace after PPM header", pos)
    pos += 1
    if width < 1 or height < 1:
        raise DecodeError(f"PPM dimensions {width}x{height} are empty", 2)
    if not 1 <= maxval <= 255:
        raise FormatError(f"PPM maxval {maxval} unsupported (8-bit only)")
    need = width * height * 3
    if len(buf) - pos < need:
        raise DecodeError(f"PPM raster truncated: need {need} bytes, have {len(buf) - pos}", len(buf))
    arr = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos).reshape(height, width, 3)
    if maxval != 255:
        arr = np.rint(arr.astype(np.float64) * (255.0 / maxval)).clip(0, 255).astype(np.uint8)
    return RasterImage(width=width, height=height, data=arr)


def _composite_over_white(pil: Image.Image) -> np.ndarray:
    rgba = np.asarray(pil.convert("RGBA"), dtype=np.float64)
    alpha = rgba[..., 3:4] / 255.0
    rgb = rgba[..., :3] * alpha + 255.0 * (1.0 - alpha)
    return np.rint(rgb).clip(0, 255).astype(np.uint8)


def decode_image(data: bytes) -> RasterImage:
    """Decode PNG, baseline JPEG or binary PPM (P6) bytes into an RGB image.

    Any alpha channel is flattened over a white backdrop.
    """
    buf = bytes(data)
    if buf.startswith(b"P6"):
        return _decode_ppm(buf)
    if buf.startswith(PNG_MAGIC):
        err = _png_structure_error(buf)
        if err is not None:
            raise err
    elif not buf.startswith(JPEG_MAGIC):
        raise FormatError("unsupported image format (expected PNG, JPEG or PPM P6)")
    try:
        with Image.open(io.BytesIO(buf)) as pil:
            pil.load()
            has_alpha = pil.mode in ("RGBA", "LA", "PA") or "transparency" in pil.info
            if has_alpha:
                arr = _composite_over_white(pil)
            else:
                arr = np.asarray(pil.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode image: {exc}", len(buf)) from exc
    return RasterImage.from_array(arr)


def encode_png(img: RasterImage) -> bytes:
    """Encode as 8-bit RGB PNG."""
    out = io.BytesIO()
    Image.fromarray(np.asarray(img.data), mode="RGB").save(out, format="PNG")
    return out.getvalue()


def _axis_weights(src: int, dst: int):
    # half-pixel centred sample positions, clamped at the borders
    pos = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0.0, src - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, src - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_bilinear(img: RasterImage, target_w: int, target_h: int) -> RasterImage:
    """Bilinear resize with half-pixel-centred sampling."""
    if target_w < 1 or target_h < 1:
        raise ValueError(f"target dimensions must be >= 1, got {target_w}x{target_h}")
    if (target_w, target_h) == (img.width, img.height):
        return RasterImage(width=img.width, height=img.height, data=img.data)
    src = img.data.astype(np.float64)
    y0, y1, fy = _axis_weights(img.height, target_h)
    x0, x1, fx = _axis_weights(img.width, target_w)
    fy = fy[:, None, None]
    rows = src[y0] * (1.0 - fy) + src[y1] * fy
    fx = fx[None, :, None]
    out = rows[:, x0] * (1.0 - fx) + rows[:, x1] * fx
    return RasterImage(width=target_w, height=target_h, data=np.rint(out).clip(0, 255).astype(np.uint8))


def fit_within(img: RasterImage, max_dim: int = 1280) -> RasterImage:
    """Shrink so the longer side is at most ``max_dim``; aspect ratio kept."""
    longest = max(img.width, img.height)
    if longest <= max_dim:
        return img
    scale = max_dim / longest
    w = max(1, int(round(img.width * scale)))
    h = max(1, int(round(img.height * scale)))
    return resize_bilinear(img, w, h)


def value_channel(img: RasterImage) -> ScalarPlane:
    """HSV value: the brightest of the three channels, scaled to [0, 1]."""
    v = img.data.max(axis=2).astype(np.float64) / 255.0
    return ScalarPlane(width=img.width, height=img.height, data=v)
