import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from depthstyle.errors import CorruptFile, FileNotFound, IoError, UnsupportedFormat
from depthstyle.imagecore import load_image, resize_bilinear, save_image, to_bytes


def write_png(path, width, height, bit_depth, colour_type, rows):
    """Hand-assemble a PNG so that formats Pillow can't write are testable."""
    def chunk(tag, data):
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data))

    raw = b"".join(b"\x00" + r for r in rows)
    ihdr = struct.pack(">IIBBBBB", width, height, bit_depth, colour_type, 0, 0, 0)
    with open(path, "wb") as fh:
        fh.write(b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b""))


def one_pixel(tmp_path, rgb, mode="RGB"):
    p = tmp_path / "px.png"
    Image.new(mode, (1, 1), rgb).save(p)
    return p


def test_load_red_pixel(tmp_path):
    img = load_image(one_pixel(tmp_path, (255, 0, 0)))
    assert img.shape == (3, 1, 1)
    assert img.dtype == np.float32
    assert img[:, 0, 0].tolist() == [1.0, 0.0, 0.0]


def test_load_grey_128(tmp_path):
    img = load_image(one_pixel(tmp_path, (128, 128, 128)))
    np.testing.assert_array_equal(img, np.float32(128) / np.float32(255))
    assert abs(float(img[0, 0, 0]) - 0.50196) < 1e-5


def test_rgba_alpha_dropped(tmp_path):
    img = load_image(one_pixel(tmp_path, (10, 20, 30, 7), mode="RGBA"))
    np.testing.assert_array_equal(img[:, 0, 0] * 255, [10, 20, 30])


@pytest.mark.parametrize("v, byte", [(1.0, 255), (0.5, 128), (-0.2, 0), (1.7, 255), (0.0, 0)])
def test_save_rounding(tmp_path, v, byte):
    p = tmp_path / "v.png"
    save_image(np.full((3, 1, 1), v, np.float32), p)
    assert np.asarray(Image.open(p))[0, 0].tolist() == [byte] * 3


def test_roundtrip_2x2(tmp_path):
    img = np.arange(12, dtype=np.float32).reshape(3, 2, 2) * np.float32(20) / np.float32(255)
    p = tmp_path / "rt.png"
    save_image(img, p)
    np.testing.assert_array_equal(load_image(p), img)


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, (3, 4, 5)))
def test_roundtrip_on_byte_multiples(tmp_path_factory, data):
    img = data.astype(np.float32) / np.float32(255)
    p = tmp_path_factory.mktemp("rt") / "img.png"
    save_image(img, p)
    np.testing.assert_array_equal(load_image(p), img)


def test_save_is_deterministic(tmp_path, rng):
    img = rng.random((3, 7, 9)).astype(np.float32)
    save_image(img, tmp_path / "a.png")
    save_image(img, tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFound):
        load_image(tmp_path / "nope.png")


def test_jpeg_rejected(tmp_path):
    p = tmp_path / "x.jpg"
    Image.new("RGB", (2, 2)).save(p, format="JPEG")
    with pytest.raises(UnsupportedFormat):
        load_image(p)


def test_grayscale_rejected(tmp_path):
    p = tmp_path / "g.png"
    Image.new("L", (2, 2)).save(p)
    with pytest.raises(UnsupportedFormat):
        load_image(p)


def test_16bit_colour_rejected(tmp_path):
    p = tmp_path / "c16.png"
    write_png(p, 1, 1, 16, 2, [b"\xff\xff\x00\x00\x12\x34"])
    with pytest.raises(UnsupportedFormat):
        load_image(p)


def test_truncated_file_is_corrupt(tmp_path):
    good = one_pixel(tmp_path, (1, 2, 3))
    bad = tmp_path / "bad.png"
    bad.write_bytes(good.read_bytes()[:40])
    with pytest.raises(CorruptFile):
        load_image(bad)


def test_save_to_missing_directory(tmp_path):
    with pytest.raises(IoError):
        save_image(np.zeros((3, 1, 1), np.float32), tmp_path / "no" / "such" / "dir.png")


def test_to_bytes_rule():
    np.testing.assert_array_equal(to_bytes(np.array([0.5, 1 / 510, 0.999])), [128, 1, 255])


# -- resize ------------------------------------------------------------------

def test_resize_identity_is_bitwise(rng):
    t = rng.random((2, 5, 7)).astype(np.float32)
    out = resize_bilinear(t, 5, 7)
    assert out.tobytes() == t.tobytes()


def test_resize_half_pixel_example():
    t = np.array([[[0.0, 1.0]]], np.float32)
    np.testing.assert_allclose(resize_bilinear(t, 1, 4)[0, 0], [0, 0.25, 0.75, 1], atol=1e-7)


def test_resize_downsample_averages_pairs():
    t = np.array([[[1.0, 3.0, 5.0, 7.0]]], np.float32)
    np.testing.assert_allclose(resize_bilinear(t, 1, 2)[0, 0], [2.0, 6.0])


def test_resize_channels_independent(rng):
    t = rng.random((3, 4, 4)).astype(np.float32)
    full = resize_bilinear(t, 7, 3)
    for c in range(3):
        np.testing.assert_array_equal(full[c], resize_bilinear(t[c:c + 1], 7, 3)[0])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 12), st.integers(1, 12))
def test_resize_preserves_constants(h, w, oh, ow):
    t = np.full((2, h, w), 0.7, np.float32)
    np.testing.assert_array_equal(resize_bilinear(t, oh, ow), np.float32(0.7))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float32, st.tuples(st.just(1), st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-10, 10, width=32)),
       st.integers(1, 10), st.integers(1, 10))
def test_resize_is_convex(t, oh, ow):
    out = resize_bilinear(t, oh, ow)
    assert out.min() >= t.min() and out.max() <= t.max()


def test_resize_bad_size():
    with pytest.raises(ValueError):
        resize_bilinear(np.zeros((1, 2, 2), np.float32), 0, 3)


def test_palette_rejected(tmp_path):
    p = tmp_path / "pal.png"
    Image.new("P", (2, 2)).save(p)
    with pytest.raises(UnsupportedFormat):
        load_image(p)
