"""Central finite-difference checks of the analytic gradients.

All evaluations run in float64. An entry's relative error is
``|a - n| / max(|a|, |n|)``; entries where both ``|a|`` and ``|n|`` are below
``1e-6`` are treated as noise. Pixels whose perturbation would cross a ReLU
or max-pool switch are not sampled (see :func:`straddles_kink`).
"""

from typing import NamedTuple

import numpy as np

from .features import ExtractorSpec, get_extractor
from .losses import LossWeights, content_loss, make_targets, style_loss, total_loss, tv_loss

TOLERANCE = 1e-3
NOISE_FLOOR = 1e-6


class CheckResult(NamedTuple):
    max_rel_error: float
    checked: int
    skipped: int

    @property
    def ok(self):
        return self.max_rel_error < TOLERANCE


def relative_errors(analytic, numeric, floor=NOISE_FLOOR):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    keep = (np.abs(a) >= floor) | (np.abs(n) >= floor)
    denom = np.maximum(np.abs(a), np.abs(n))
    return np.abs(a - n)[keep] / denom[keep]


def numeric_grad(f, x, indices, h=1e-3):
    """Central differences of scalar ``f`` at flat ``indices`` of ``x``."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = np.empty(len(indices))
    for j, i in enumerate(indices):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        out[j] = (fp - fm) / (2 * h)
    return out


def straddles_kink(ext, x, i, layers, h=1e-3):
    """True if moving flat pixel ``i`` by ``+-h`` changes any ReLU/max-pool state.

    Central differences across such a point measure an average of two
    one-sided slopes, not the derivative, so those pixels are not sampled.
    """
    x = np.array(x, dtype=np.float64)
    base = ext.activation_pattern(ext.forward(x, layers)[1])
    flat = x.reshape(-1)
    orig = flat[i]
    for step in (h, -h):
        flat[i] = orig + step
        moved = ext.activation_pattern(ext.forward(x, layers)[1])
        if any(not np.array_equal(a, b) for a, b in zip(base, moved)):
            return True
    return False


def sample_smooth(rng, ext, x, layers, n, h=1e-3):
    """Up to ``n`` random flat indices away from kinks, plus the number skipped."""
    chosen, skipped = [], 0
    for i in rng.permutation(x.size):
        if len(chosen) == n:
            break
        if straddles_kink(ext, x, int(i), layers, h):
            skipped += 1
        else:
            chosen.append(int(i))
    return np.sort(np.array(chosen, dtype=np.intp)), skipped


def check_total(seed=0, size=8, n_samples=50, weights=None, spec=None, mask=None, h=1e-3):
    """Max relative error of the full pixel gradient on a random content/style/init triple."""
    rng = np.random.default_rng(seed)
    spec = spec or ExtractorSpec()
    weights = weights or LossWeights(1.0, 1e3, 1e-3)
    content, style, x = (rng.random((3, size, size)) for _ in range(3))
    targets = make_targets(content, style, spec)
    _, g = total_loss(x, targets, weights, spec, mask)
    idx, skipped = sample_smooth(rng, get_extractor(spec), x, spec.layers, n_samples, h)
    num = numeric_grad(lambda z: total_loss(z, targets, weights, spec, mask)[0].total, x, idx, h)
    err = relative_errors(g.reshape(-1)[idx], num)
    return CheckResult(float(err.max()) if err.size else 0.0, len(idx), skipped)


def check_features(seed=0, size=6, n_samples=50, spec=None, h=1e-3):
    """Pixel gradient of ``sum(relu2**2)`` through the extractor."""
    rng = np.random.default_rng(seed)
    spec = spec or ExtractorSpec()
    ext = get_extractor(spec)
    layer = spec.content_layer
    x = rng.random((3, size, size))
    feats, cache = ext.forward(x, [layer])
    g = ext.backward_cached(cache, {layer: 2 * feats[layer]})
    idx, skipped = sample_smooth(rng, ext, x, [layer], n_samples, h)

    def f(z):
        return float(np.sum(ext.forward(z, [layer])[0][layer] ** 2))

    err = relative_errors(g.reshape(-1)[idx], numeric_grad(f, x, idx, h))
    return CheckResult(float(err.max()) if err.size else 0.0, len(idx), skipped)


def check_feature_losses(seed=0, channels=2, size=3, h=1e-3):
    """Content, style and TV gradients against their own inputs (no extractor)."""
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((channels, size, size))
    P = rng.standard_normal((channels, size, size))
    S = rng.standard_normal((channels, size, size))
    target = {"f": S.reshape(channels, -1) @ S.reshape(channels, -1).T}
    mask = rng.random((size, size))
    idx = np.arange(F.size)

    def style_f(z):
        return style_loss({"f": z}, target)[0]

    def content_f(z):
        return content_loss(z, P, mask, 0.7)[0]

    errors = {}
    for name, fn, grad in (
        ("style", style_f, style_loss({"f": F}, target)[1]["f"]),
        ("content", content_f, content_loss(F, P, mask, 0.7)[1]),
        ("tv", lambda z: tv_loss(z)[0], tv_loss(F)[1]),
    ):
        err = relative_errors(grad.reshape(-1), numeric_grad(fn, F, idx, h))
        errors[name] = CheckResult(float(err.max()) if err.size else 0.0, len(idx), 0)
    return errors


def run_suite(seed=0):
    """Every check, keyed by the loss term it covers."""
    rng = np.random.default_rng(seed)
    s = [int(v) for v in rng.integers(0, 2**31, size=3)]
    errors = check_feature_losses(s[0])
    errors["features"] = check_features(s[1])
    errors["total"] = check_total(s[2])
    return errors
