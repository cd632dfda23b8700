"""Depth-aware image stylization.

Normalize a depth map, render it as a heatmap, blend the heatmap into the
content image, then optimize that blended image against Gram-matrix style
and feature content losses with projected Adam.
"""

from .depth import (
    DepthCache,
    ExternalBackend,
    FileBackend,
    cache_key,
    estimate_depth,
    load_depth,
    normalize_depth,
    resolve_backend,
    save_depth,
)
from .errors import DepthStyleError
from .features import ExtractorSpec, backward, conv3x3_reflect, extract, tiny_weights
from .heatmap import apply_colormap, blend, colormap_lut
from .imagecore import load_image, resize_bilinear, save_image
from .losses import LossReport, LossWeights, content_loss, gram, make_targets, style_loss, total_loss, tv_loss
from .optimize import AdamState, RunTrace, adam_step, run

__version__ = "0.1.0"


def fixture_path(name):
    """Path of a bundled image, e.g. ``fixture_path("content_32.png")``."""
    from importlib.resources import files

    return str(files(__package__) / "data" / name)
