"""Tensor and image primitives.

A tensor is a ``numpy`` array of shape ``(channels, height, width)``, float32
unless a caller deliberately passes float64 (the gradient checkers do). An
RGB image is such a tensor with three channels and values in ``[0, 1]``,
obtained from 8-bit sRGB bytes by ``v = byte / 255`` with no gamma handling.
"""

import os
import struct
import tempfile

import numpy as np
from PIL import Image

from .errors import CorruptFile, FileNotFound, IoError, ShapeMismatch, UnsupportedFormat

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# IHDR colour types
GRAY, RGB, PALETTE, GRAY_ALPHA, RGBA = 0, 2, 3, 4, 6


def as_tensor3(a, dtype=None):
    """Validate ``a`` as a (C, H, W) finite array and return it as an ndarray.

    Float64 input is kept as float64; everything else becomes float32 unless
    ``dtype`` says otherwise.
    """
    a = np.asarray(a)
    if dtype is None:
        dtype = np.float64 if a.dtype == np.float64 else np.float32
    a = a.astype(dtype, copy=False)
    if a.ndim != 3 or min(a.shape) < 1:
        raise ShapeMismatch(f"expected a (channels, height, width) array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor contains NaN or Inf")
    return a


def read_png_header(path):
    """Return ``(width, height, bit_depth, colour_type)`` from a PNG's IHDR chunk."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFound(f"no such file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(33)
    if head[:8] != PNG_SIGNATURE:
        raise UnsupportedFormat(f"{path} is not a PNG file")
    if len(head) < 33 or head[12:16] != b"IHDR":
        raise CorruptFile(f"{path}: truncated or missing IHDR chunk")
    width, height, bit_depth, colour_type = struct.unpack(">IIBB", head[16:26])
    if width == 0 or height == 0:
        raise CorruptFile(f"{path}: zero image dimension")
    return width, height, bit_depth, colour_type


def _decode(path):
    try:
        with Image.open(path) as im:
            im.load()
            return im.copy()
    except (OSError, SyntaxError, ValueError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc


def load_image(path):
    """Load an 8-bit RGB or RGBA PNG as a float32 ``(3, H, W)`` image in [0, 1].

    Alpha is dropped. Grayscale, palette and 16-bit files are rejected with
    :class:`UnsupportedFormat`.
    """
    _, _, bit_depth, colour_type = read_png_header(path)
    if bit_depth != 8 or colour_type not in (RGB, RGBA):
        raise UnsupportedFormat(
            f"{path}: need 8-bit RGB/RGBA PNG, got bit depth {bit_depth}, colour type {colour_type}"
        )
    im = _decode(path)
    data = np.asarray(im.convert("RGB") if im.mode != "RGB" else im, dtype=np.uint8)
    return data.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0)


def to_bytes(img, levels=255):
    """Quantize values with ``floor(clamp(v, 0, 1) * levels + 0.5)``."""
    v = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * levels + 0.5)


def quantize_image(img):
    """The values :func:`load_image` would return after :func:`save_image`."""
    return to_bytes(img).astype(np.float32) / np.float32(255.0)


def atomic_save(im, path):
    """Write a PIL image to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    tmp = None
    try:
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            im.save(fh, format="PNG")
        os.replace(tmp, path)
    except OSError as exc:
        if tmp is not None and os.path.exists(tmp):
            os.remove(tmp)
        raise IoError(f"cannot write {path}: {exc}") from exc


def save_image(img, path):
    img = as_tensor3(img)
    if img.shape[0] != 3:
        raise ShapeMismatch(f"RGB image needs 3 channels, got {img.shape[0]}")
    data = to_bytes(img).astype(np.uint8).transpose(1, 2, 0)
    atomic_save(Image.fromarray(np.ascontiguousarray(data), mode="RGB"), path)


def _axis_weights(n_src, n_dst):
    scale = n_src / n_dst
    s = (np.arange(n_dst, dtype=np.float64) + 0.5) * scale - 0.5
    s = np.clip(s, 0.0, n_src - 1)
    i0 = np.floor(s).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_src - 1)
    return i0, i1, s - i0


def resize_bilinear(t, out_h, out_w):
    """Bilinear resize with half-pixel centres and edge clamping.

    Source coordinate for output column ``dx`` is
    ``(dx + 0.5) * W_src / W_dst - 0.5`` clamped to ``[0, W_src - 1]``; rows
    likewise. Channels are resampled independently.
    """
    t = as_tensor3(t)
    if out_h < 1 or out_w < 1:
        raise ShapeMismatch(f"output size must be at least 1x1, got {out_h}x{out_w}")
    _, h, w = t.shape
    if (h, w) == (out_h, out_w):
        return t.copy()
    y0, y1, fy = _axis_weights(h, out_h)
    x0, x1, fx = _axis_weights(w, out_w)
    src = t.astype(np.float64)
    # interpolate along x, then y
    rows = src[:, :, x0] * (1.0 - fx) + src[:, :, x1] * fx
    fy = fy[:, None]
    out = rows[:, y0, :] * (1.0 - fy) + rows[:, y1, :] * fy
    return out.astype(t.dtype)


def fit_longest_side(t, size):
    """Downscale so that ``max(H, W) <= size``; smaller images pass unchanged."""
    _, h, w = t.shape
    if max(h, w) <= size:
        return t
    scale = size / max(h, w)
    return resize_bilinear(t, max(1, round(h * scale)), max(1, round(w * scale)))
