"""Depth heatmaps and blending them into the content image.

The colormap is a closed-form jet-style ramp (dark blue, blue, cyan, yellow,
red, dark red). It is our own choice of map, fixed so that every entry is
reproducible exactly.
"""

import numpy as np

from .errors import DimensionMismatch, OutOfRange
from .imagecore import as_tensor3


def jet(t):
    """Evaluate the colormap at ``t`` in [0, 1]; returns ``(..., 3)`` float64."""
    t = np.asarray(t, dtype=np.float64)[..., None]
    centers = np.array([3.0, 2.0, 1.0])
    return np.clip(1.5 - np.abs(4.0 * t - centers), 0.0, 1.0)


def colormap_lut():
    """The 256 x 3 lookup table, entry ``i`` being ``jet(i / 255)``."""
    return jet(np.arange(256) / 255.0)


_LUT = colormap_lut()


def lut_index(d):
    return np.clip(np.floor(np.asarray(d, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.intp)


def apply_colormap(d):
    """Color a normalized depth map ``(H, W)``; returns a ``(3, H, W)`` image."""
    rgb = _LUT[lut_index(d)]
    return np.ascontiguousarray(rgb.transpose(2, 0, 1)).astype(np.float32)


def blend(content, heat, alpha=0.5):
    """Convex combination ``(1 - alpha) * content + alpha * heat``."""
    content = as_tensor3(content)
    heat = as_tensor3(heat)
    if content.shape != heat.shape:
        raise DimensionMismatch(f"cannot blend {content.shape} with {heat.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise OutOfRange(f"alpha must lie in [0, 1], got {alpha}")
    out = (1.0 - alpha) * content.astype(np.float64) + alpha * heat.astype(np.float64)
    return out.astype(content.dtype)
