"""Depth maps: 16-bit PNG I/O, estimation backends, normalization, caching.

Depth follows the MiDaS convention throughout: values are *relative inverse
depth*, so larger means closer to the camera. After normalization the nearest
surface is 1.0 and lands on the warm (red) end of the heatmap. This is the
opposite of metric depth, where near objects have small values.

A depth map is a 2-D float32 array ``(H, W)`` with finite, non-negative
values.
"""

import hashlib
import logging
import os
import shutil
import subprocess
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import BackendFailure, BackendUnavailable, DepthStyleError, UnsupportedFormat
from .imagecore import GRAY, _decode, atomic_save, read_png_header, resize_bilinear, save_image, to_bytes

log = logging.getLogger(__name__)

DEFAULT_CACHE_DIR = ".depthstyle-cache"


def _check_depth(d):
    d = np.asarray(d)
    if d.ndim != 2 or min(d.shape) < 1:
        raise ValueError(f"depth map must be a non-empty 2-D array, got shape {d.shape}")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValueError("depth values must be finite and >= 0")
    return d


def load_depth(path):
    """Read a 16-bit grayscale PNG; each pixel becomes ``raw / 65535``."""
    _, _, bit_depth, colour_type = read_png_header(path)
    if bit_depth != 16 or colour_type != GRAY:
        raise UnsupportedFormat(
            f"{path}: depth must be 16-bit grayscale PNG, got bit depth {bit_depth}, colour type {colour_type}"
        )
    raw = np.asarray(_decode(path), dtype=np.uint16)
    return raw.astype(np.float32) / np.float32(65535.0)


def save_depth(d, path):
    """Write normalized depth as 16-bit grayscale, ``floor(clamp(v) * 65535 + 0.5)``."""
    d = _check_depth(d)
    raw = to_bytes(d, levels=65535).astype(np.uint16)
    atomic_save(Image.fromarray(raw), path)


def quantize_depth(d):
    """The values :func:`load_depth` would return after :func:`save_depth`."""
    return to_bytes(_check_depth(d), levels=65535).astype(np.float32) / np.float32(65535.0)


def normalize_depth(d):
    """Affinely map depth onto [0, 1]; a constant map becomes all 0.5."""
    d = _check_depth(d).astype(np.float64)
    lo, hi = d.min(), d.max()
    if hi == lo:
        return np.full(d.shape, 0.5, dtype=np.float32)
    return ((d - lo) / (hi - lo)).astype(np.float32)


def cache_key(img_bytes, backend_id):
    """SHA-256 hex digest of ``img_bytes + b"\\x00" + backend_id``."""
    h = hashlib.sha256()
    h.update(bytes(img_bytes))
    h.update(b"\x00")
    h.update(backend_id.encode("utf-8"))
    return h.hexdigest()


class DepthBackend:
    """Base class for depth estimators.

    Subclasses implement :meth:`run`, returning a raw depth map for an RGB
    image. The shape may differ from the image; :func:`estimate_depth`
    resizes.
    """

    backend_id = None

    def run(self, img):
        raise NotImplementedError


class FileBackend(DepthBackend):
    """Placeholder for "depth comes from a file": it cannot estimate anything."""

    backend_id = "file"

    def run(self, img):
        raise BackendUnavailable(
            "depth backend 'file' does not estimate depth; supply a depth PNG (load_depth / --depth)"
        )


class ExternalBackend(DepthBackend):
    """Run ``<program> <input.png> <output.png>`` in a subprocess.

    The program must write a 16-bit grayscale PNG of normalized inverse depth.
    A nonzero exit status or an unreadable output is a :class:`BackendFailure`.
    """

    def __init__(self, program, timeout=None):
        self.program = program
        self.timeout = timeout
        self.backend_id = f"external:{program}"

    def executable(self):
        found = shutil.which(self.program)
        if found is None:
            raise BackendUnavailable(f"depth estimator program not found: {self.program}")
        return found

    def run(self, img):
        exe = self.executable()
        with tempfile.TemporaryDirectory(prefix="depthstyle-") as tmp:
            src, dst = os.path.join(tmp, "input.png"), os.path.join(tmp, "output.png")
            save_image(img, src)
            try:
                proc = subprocess.run(
                    [exe, src, dst], capture_output=True, text=True, timeout=self.timeout
                )
            except subprocess.TimeoutExpired as exc:
                raise BackendFailure(f"{self.program} timed out") from exc
            except OSError as exc:
                raise BackendUnavailable(f"cannot execute {self.program}: {exc}") from exc
            if proc.returncode != 0:
                detail = proc.stderr.strip().splitlines()[-1:] or [""]
                raise BackendFailure(f"{self.program} exited with status {proc.returncode} {detail[0]}".rstrip())
            try:
                return load_depth(dst)
            except DepthStyleError as exc:
                raise BackendFailure(f"{self.program} produced unusable output: {exc}") from exc


def resolve_backend(backend_id):
    """Build a backend from an id string: ``"file"`` or ``"external:<program>"``."""
    if backend_id == "file":
        return FileBackend()
    if backend_id.startswith("external:") and len(backend_id) > len("external:"):
        return ExternalBackend(backend_id[len("external:"):])
    raise BackendUnavailable(f"unknown depth backend: {backend_id!r}")


class DepthCache:
    """Content-addressed store ``<cache_dir>/<sha256>.png``.

    Entries hold the *normalized* estimate as 16-bit PNG, so a cache hit
    returns values in [0, 1] regardless of the backend's native scale. Writes
    go through a temporary file and an atomic rename.
    """

    def __init__(self, cache_dir=DEFAULT_CACHE_DIR):
        self.cache_dir = Path(cache_dir)

    def path_for(self, key):
        return self.cache_dir / f"{key}.png"

    def get(self, key):
        p = self.path_for(key)
        if not p.is_file():
            return None
        try:
            return load_depth(p)
        except DepthStyleError:
            log.warning("ignoring unreadable cache entry %s", p)
            return None

    def put(self, key, d):
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        save_depth(normalize_depth(d), self.path_for(key))


def image_key_bytes(img):
    """Canonical byte encoding of an RGB image for cache keys: dims + 8-bit pixels."""
    _, h, w = img.shape
    pixels = to_bytes(img).astype(np.uint8).transpose(1, 2, 0).tobytes()
    return f"{h}x{w}:".encode() + pixels


def estimate_depth(img, backend, cache=None):
    """Estimate inverse depth for ``img`` at the image's own resolution.

    With a :class:`DepthCache`, a repeated call for the same pixels and
    backend is served from disk without invoking the backend.
    """
    key = None
    if cache is not None and not isinstance(backend, FileBackend):
        key = cache_key(image_key_bytes(img), backend.backend_id)
        hit = cache.get(key)
        if hit is not None:
            log.info("depth cache hit %s", key[:12])
            return _fit(hit, img)
    d = _check_depth(np.asarray(backend.run(img), dtype=np.float32))
    if key is not None:
        cache.put(key, d)
    return _fit(d, img)


def _fit(d, img):
    _, h, w = img.shape
    if d.shape == (h, w):
        return d
    return resize_bilinear(d[None], h, w)[0]
