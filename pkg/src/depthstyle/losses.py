"""Content, Gram style, total-variation and depth-masked losses.

Each loss returns ``(value, gradient)``. Values are Python floats computed
with float64 accumulation; gradients come back in the dtype of the input.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ChannelMismatch, LayerMismatch, OutOfRange, ShapeMismatch
from .features import get_extractor
from .imagecore import as_tensor3, resize_bilinear


@dataclass
class LossWeights:
    content: float = 1.0
    style: float = 1e7
    tv: float = 1e-3
    kappa: float = 0.0

    def __post_init__(self):
        for name in ("content", "style", "tv", "kappa"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise OutOfRange(f"loss weight {name} must be finite and >= 0, got {v}")


@dataclass
class LossReport:
    total: float
    content: float
    style: float
    tv: float


@dataclass
class Targets:
    """Fixed optimization targets: content-layer features and per-layer style Grams."""

    content: np.ndarray
    grams: dict


def gram(F):
    """Unnormalized Gram matrix ``G[j, k] = sum_m F[j, m] F[k, m]`` of a (C, H, W) map."""
    F = as_tensor3(F)
    Fm = F.reshape(F.shape[0], -1).astype(np.float64)
    return (Fm @ Fm.T).astype(F.dtype)


def style_loss(x_feats, s_grams):
    """Mean over layers of ``sum((G_x - G_s)**2) / (4 N**2 M**2)``.

    N is the channel count of the layer and M its number of positions.
    Returns the loss and ``{layer: dE/dF}``.
    """
    if set(x_feats) != set(s_grams):
        raise LayerMismatch(f"feature layers {sorted(x_feats)} differ from Gram layers {sorted(s_grams)}")
    if not x_feats:
        return 0.0, {}
    n_layers = len(x_feats)
    total = 0.0
    grads = {}
    for name, F in x_feats.items():
        c, h, w = F.shape
        target = np.asarray(s_grams[name], dtype=np.float64)
        if target.shape != (c, c):
            raise ChannelMismatch(f"layer {name}: {c} channels but target Gram is {target.shape}")
        Fm = F.reshape(c, -1).astype(np.float64)
        # rounded like the stored targets so identical features give an exact zero
        diff = (Fm @ Fm.T).astype(F.dtype).astype(np.float64) - target
        norm = float(c * c) * float(h * w) ** 2
        total += float(np.sum(diff * diff)) / (4.0 * norm)
        grads[name] = ((diff @ Fm) / (norm * n_layers)).reshape(c, h, w).astype(F.dtype)
    return total / n_layers, grads


def content_loss(F, P, mask=None, kappa=0.0):
    """``0.5 * sum(m * (F - P)**2)`` with ``m = 1 + kappa * mask`` (1 without a mask)."""
    F = as_tensor3(F)
    P = np.asarray(P)
    if F.shape != P.shape:
        raise ShapeMismatch(f"content features {F.shape} vs target {P.shape}")
    diff = F.astype(np.float64) - P.astype(np.float64)
    if mask is None or kappa == 0:
        return 0.5 * float(np.sum(diff * diff)), diff.astype(F.dtype)
    mask = np.asarray(mask)
    if mask.shape != F.shape[1:]:
        raise ShapeMismatch(f"mask {mask.shape} does not match feature size {F.shape[1:]}")
    m = (1.0 + kappa * mask.astype(np.float64))[None]
    return 0.5 * float(np.sum(m * diff * diff)), (m * diff).astype(F.dtype)


def tv_loss(img):
    """Squared-difference total variation over horizontal and vertical neighbours."""
    img = as_tensor3(img)
    x = img.astype(np.float64)
    dx = x[:, :, 1:] - x[:, :, :-1]
    dy = x[:, 1:, :] - x[:, :-1, :]
    g = np.zeros_like(x)
    g[:, :, 1:] += 2 * dx
    g[:, :, :-1] -= 2 * dx
    g[:, 1:, :] += 2 * dy
    g[:, :-1, :] -= 2 * dy
    return float(np.sum(dx * dx) + np.sum(dy * dy)), g.astype(img.dtype)


def make_targets(content_img, style_img, spec):
    """Content features of ``content_img`` and style Grams of ``style_img``."""
    ext = get_extractor(spec)
    cfeats, _ = ext.forward(content_img, [spec.content_layer])
    sfeats, _ = ext.forward(style_img, list(spec.style_layers))
    return Targets(content=cfeats[spec.content_layer], grams={k: gram(v) for k, v in sfeats.items()})


def total_loss(x, targets, weights, spec, mask=None):
    """Weighted loss of image ``x`` and its pixel gradient.

    Features are extracted once; the content and style feature gradients are
    pushed back through the extractor together and the TV gradient is added
    directly in pixel space.
    """
    x = as_tensor3(x)
    ext = get_extractor(spec)
    feats, cache = ext.forward(x, spec.layers)
    F = feats[spec.content_layer]

    m = None
    if mask is not None and weights.kappa != 0:
        m = np.asarray(mask)
        if m.shape != F.shape[1:]:
            m = resize_bilinear(m[None], *F.shape[1:])[0]
    lc, gc = content_loss(F, targets.content, m, weights.kappa)
    ls, gs = style_loss({k: feats[k] for k in spec.style_layers}, targets.grams)
    ltv, gtv = tv_loss(x)

    layer_grads = {}
    if weights.content:
        layer_grads[spec.content_layer] = weights.content * gc
    if weights.style:
        for k, g in gs.items():
            scaled = weights.style * g
            layer_grads[k] = layer_grads[k] + scaled if k in layer_grads else scaled
    if layer_grads:
        grad = ext.backward_cached(cache, layer_grads)
    else:
        grad = np.zeros_like(x)
    if weights.tv:
        grad = grad + weights.tv * gtv
    total = weights.content * lc + weights.style * ls + weights.tv * ltv
    return LossReport(total=total, content=lc, style=ls, tv=ltv), grad.astype(x.dtype)
