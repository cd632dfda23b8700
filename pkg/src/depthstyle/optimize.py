"""Projected Adam on image pixels.

Each iteration evaluates :func:`~depthstyle.losses.total_loss`, records the
loss report, takes one Adam step and clamps the image back into [0, 1].
"""

import csv
import logging
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import OutOfRange, ShapeMismatch
from .imagecore import as_tensor3, save_image
from .losses import total_loss

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    m: np.ndarray = None
    v: np.ndarray = None
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 0.02

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise OutOfRange("Adam betas must lie in [0, 1)")
        if self.eps <= 0 or self.lr < 0:
            raise OutOfRange("Adam needs eps > 0 and lr >= 0")


@dataclass
class RunTrace:
    reports: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    seconds: float = 0.0

    def totals(self):
        return np.array([r.total for r in self.reports])


def adam_step(x, g, state):
    """One projected Adam update. Returns the new image and a new state.

    Moments are kept in the image dtype; the update itself is evaluated in
    float64.
    """
    x = as_tensor3(x)
    g = np.asarray(g)
    if g.shape != x.shape:
        raise ShapeMismatch(f"gradient {g.shape} does not match image {x.shape}")
    m = np.zeros(x.shape, np.float64) if state.m is None else state.m.astype(np.float64)
    v = np.zeros(x.shape, np.float64) if state.v is None else state.v.astype(np.float64)
    if m.shape != x.shape or v.shape != x.shape:
        raise ShapeMismatch(f"Adam moments {m.shape} do not match image {x.shape}")
    g = g.astype(np.float64)
    t = state.t + 1
    m = state.beta1 * m + (1.0 - state.beta1) * g
    v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    step = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    x_new = np.clip(x.astype(np.float64) - step, 0.0, 1.0).astype(x.dtype)
    return x_new, replace(state, m=m.astype(x.dtype), v=v.astype(x.dtype), t=t)


def run(init, targets, weights, spec, mask=None, iterations=500, state=None,
        snapshot_interval=0, snapshot_dir=None, log_every=50):
    """Optimize ``init`` for ``iterations`` steps.

    Snapshots ``snap_<iter>.png`` are written to ``snapshot_dir`` after every
    ``snapshot_interval`` steps (0 disables them). Returns the final image and
    a :class:`RunTrace` whose ``reports[i]`` is the loss before step ``i + 1``.
    """
    if iterations < 0:
        raise OutOfRange(f"iterations must be >= 0, got {iterations}")
    x = as_tensor3(init)
    state = AdamState() if state is None else state
    trace = RunTrace()
    start = time.perf_counter()
    for it in range(iterations):
        report, g = total_loss(x, targets, weights, spec, mask)
        trace.reports.append(report)
        x, state = adam_step(x, g, state)
        done = it + 1
        if log_every and (done % log_every == 0 or done == iterations):
            log.info("iter %d total %.6g content %.6g style %.6g tv %.6g",
                     done, report.total, report.content, report.style, report.tv)
        if snapshot_interval and snapshot_dir is not None and done % snapshot_interval == 0:
            save_image(x, os.path.join(snapshot_dir, f"snap_{done}.png"))
            trace.snapshots.append(done)
    trace.seconds = time.perf_counter() - start
    return x, trace


def write_trace(path, trace):
    """``iter,total,content,style,tv`` with one row per iteration, 9 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "total", "content", "style", "tv"])
        for i, r in enumerate(trace.reports):
            w.writerow([i] + [f"{v:.9g}" for v in (r.total, r.content, r.style, r.tv)])


def read_trace(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: float(v) for k, v in row.items()} for row in rows]


class XorShift64Star:
    """xorshift64* generator; identical streams in any language for a given seed."""

    MASK = (1 << 64) - 1

    def __init__(self, seed):
        # zero is a fixed point of xorshift, so it is remapped
        self.state = (seed & self.MASK) or 0x9E3779B97F4A7C15

    def next_u64(self):
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & self.MASK
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & self.MASK

    def uniform(self, n):
        """``n`` float32 values in [0, 1) from the top 24 bits of each draw."""
        return np.array([(self.next_u64() >> 40) / 16777216.0 for _ in range(n)], dtype=np.float32)


def noise_image(h, w, seed=42):
    """Uniform noise image, channel-major fill order."""
    return XorShift64Star(seed).uniform(3 * h * w).reshape(3, h, w)
