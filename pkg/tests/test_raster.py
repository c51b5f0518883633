import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from leafsev.errors import DecodeError, FormatError
from leafsev.raster import (
    RasterImage,
    decode_image,
    encode_png,
    fit_within,
    resize_bilinear,
    value_channel,
)


def _png_bytes(arr, mode=None):
    out = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(out, format="PNG")
    return out.getvalue()


def test_decode_white_png():
    img = decode_image(_png_bytes(np.full((1, 1, 3), 255, np.uint8)))
    assert (img.width, img.height) == (1, 1)
    assert img.pixel(0, 0) == (255, 255, 255)


def test_decode_ppm_p6():
    img = decode_image(b"P6 2 1 255\n" + bytes([0, 0, 0, 255, 0, 0]))
    assert (img.width, img.height) == (2, 1)
    assert img.pixel(1, 0) == (255, 0, 0)
    assert img.pixel(0, 0) == (0, 0, 0)


def test_decode_ppm_with_comment_and_low_maxval():
    img = decode_image(b"P6\n# made by hand\n1 1\n15\n" + bytes([15, 0, 5]))
    assert img.pixel(0, 0) == (255, 0, 85)


def test_png_header_then_garbage_is_decode_error():
    with pytest.raises(DecodeError) as exc:
        decode_image(b"\x89PNG\r\n\x1a\n" + bytes([7, 201, 33, 90]))
    assert exc.value.offset == 8
    assert "offset 8" in str(exc.value)


def test_png_crc_corruption_reports_offset():
    raw = bytearray(_png_bytes(np.zeros((4, 4, 3), np.uint8)))
    raw[-20] ^= 0xFF  # inside the IDAT payload
    with pytest.raises(DecodeError) as exc:
        decode_image(bytes(raw))
    assert exc.value.offset is not None and exc.value.offset > 8


def test_truncated_ppm():
    with pytest.raises(DecodeError, match="truncated"):
        decode_image(b"P6 2 2 255\n" + bytes(5))


def test_unknown_format():
    with pytest.raises(FormatError):
        decode_image(b"GIF89a....")
    with pytest.raises(FormatError):
        decode_image(b"abc")


def test_alpha_composited_over_white():
    rgba = np.array([[[0, 0, 0, 0], [0, 0, 0, 255], [200, 0, 0, 128]]], np.uint8)
    img = decode_image(_png_bytes(rgba, "RGBA"))
    assert img.pixel(0, 0) == (255, 255, 255)
    assert img.pixel(1, 0) == (0, 0, 0)
    a = 128 / 255
    assert img.pixel(2, 0) == (round(200 * a + 255 * (1 - a)), round(255 * (1 - a)), round(255 * (1 - a)))


def test_jpeg_decodes():
    out = io.BytesIO()
    Image.fromarray(np.full((8, 8, 3), 120, np.uint8)).save(out, format="JPEG", quality=95)
    img = decode_image(out.getvalue())
    assert (img.width, img.height) == (8, 8)
    assert abs(img.pixel(3, 3)[0] - 120) <= 2


def test_png_round_trip_black():
    img = RasterImage(1, 1, np.zeros(3, np.uint8))
    assert decode_image(encode_png(img)) == img


def test_png_round_trip_gradient():
    arr = np.array([[[0, 0, 0], [100, 50, 25], [255, 255, 255]],
                    [[10, 20, 30], [40, 50, 60], [70, 80, 90]]], np.uint8)
    img = RasterImage.from_array(arr)
    assert decode_image(encode_png(img)) == img


def test_png_round_trip_synthetic_leaf(leaf10):
    _, img, _, _ = leaf10
    assert decode_image(encode_png(img)) == img


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(3))))
def test_round_trip_property(arr):
    img = RasterImage.from_array(arr)
    assert decode_image(encode_png(img)) == img


def test_raster_invariants():
    with pytest.raises(ValueError):
        RasterImage(2, 2, np.zeros(11, np.uint8))
    with pytest.raises(ValueError):
        RasterImage(0, 1, np.zeros(0, np.uint8))
    img = RasterImage(1, 1, np.zeros(3, np.uint8))
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1


def test_resize_identity(leaf10):
    _, img, _, _ = leaf10
    assert resize_bilinear(img, img.width, img.height) == img


def test_resize_camera_frame_to_1280x720():
    img = RasterImage.from_array(np.full((2250, 4000, 3), 90, np.uint8))
    out = resize_bilinear(img, 1280, 720)
    assert (out.width, out.height) == (1280, 720)
    assert (out.data == 90).all()


@pytest.mark.parametrize("tw,th", [(1, 1), (3, 7), (5, 2), (2, 2)])
def test_resize_constant_preserved(tw, th):
    img = RasterImage.from_array(np.tile(np.array([10, 20, 30], np.uint8), (2, 2, 1)))
    out = resize_bilinear(img, tw, th)
    assert (out.data == np.array([10, 20, 30])).all()


def test_resize_rejects_zero():
    img = RasterImage(1, 1, np.zeros(3, np.uint8))
    with pytest.raises(ValueError):
        resize_bilinear(img, 0, 3)


def test_resize_half_pixel_centres():
    # 2 -> 4 upsample: sample positions -0.25, 0.25, 0.75, 1.25 clamp into [0, 1]
    arr = np.array([[[0, 0, 0], [100, 100, 100]]], np.uint8)
    out = resize_bilinear(RasterImage.from_array(arr), 4, 1)
    assert list(out.data[0, :, 0]) == [0, 25, 75, 100]


def test_fit_within_keeps_aspect():
    img = RasterImage.from_array(np.zeros((2250, 4000, 3), np.uint8))
    out = fit_within(img, 1280)
    assert (out.width, out.height) == (1280, 720)
    small = RasterImage.from_array(np.zeros((10, 20, 3), np.uint8))
    assert fit_within(small, 1280) is small


@pytest.mark.parametrize(
    "pixel,expected",
    [((255, 0, 0), 1.0), ((0, 0, 0), 0.0), ((51, 102, 204), 204 / 255)],
)
def test_value_channel_examples(pixel, expected):
    v = value_channel(RasterImage(1, 1, np.array(pixel, np.uint8)))
    assert v.data[0, 0] == expected


def test_value_channel_bounds_and_grey():
    arr = np.random.default_rng(0).integers(0, 256, (16, 16, 3), dtype=np.uint8)
    v = value_channel(RasterImage.from_array(arr)).data
    assert v.min() >= 0 and v.max() <= 1
    grey = np.repeat(np.arange(256, dtype=np.uint8)[None, :, None], 3, axis=2)
    vg = value_channel(RasterImage.from_array(grey)).data
    assert np.array_equal(vg[0], np.arange(256) / 255)
