"""Regenerate the bundled test images in src/depthstyle/data/.

    python tools/make_fixtures.py

Produces a content scene, a style texture and a matching inverse-depth map at
32x32 and 64x64. Everything is drawn analytically, so reruns are byte-stable.
"""

import os

import numpy as np

from depthstyle.depth import save_depth
from depthstyle.imagecore import save_image

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "depthstyle", "data")


def scene(n):
    y, x = np.mgrid[0:n, 0:n] / (n - 1)
    sky = np.stack([0.45 + 0.3 * y, 0.65 + 0.2 * y, 0.95 - 0.1 * y])
    ground = np.stack([0.35 + 0.2 * x, 0.55 - 0.1 * y, 0.2 + 0.0 * x])
    img = np.where(y > 0.6, ground, sky)
    # red ball in the foreground, grey box further back
    ball = (x - 0.35) ** 2 + (y - 0.65) ** 2 < 0.04
    box = (x > 0.6) & (x < 0.85) & (y > 0.35) & (y < 0.65)
    img[:, box] = np.array([0.55, 0.55, 0.6])[:, None]
    img[:, ball] = np.array([0.85, 0.15, 0.1])[:, None] * (1.2 - 0.6 * y[ball])
    # inverse depth: ground gets closer toward the bottom edge
    depth = np.where(y > 0.6, 0.2 + 0.6 * (y - 0.6) / 0.4, 0.05)
    depth = np.where(box, 0.35, depth)
    depth = np.where(ball, 0.95 - 0.1 * np.hypot(x - 0.35, y - 0.65), depth)
    return np.clip(img, 0, 1), depth


def texture(n):
    y, x = np.mgrid[0:n, 0:n] / (n - 1)
    period = 6.0
    stripes = 0.5 + 0.5 * np.sin(2 * np.pi * period * (x + 0.5 * y))
    swirl = 0.5 + 0.5 * np.cos(2 * np.pi * 3.0 * np.hypot(x - 0.5, y - 0.5))
    return np.stack([
        0.9 * stripes + 0.1 * swirl,
        0.2 + 0.5 * swirl * (1 - stripes),
        0.8 * (1 - stripes) + 0.1,
    ]).clip(0, 1)


def main():
    os.makedirs(OUT, exist_ok=True)
    for n in (32, 64):
        img, depth = scene(n)
        save_image(img.astype(np.float32), os.path.join(OUT, f"content_{n}.png"))
        save_image(texture(n).astype(np.float32), os.path.join(OUT, f"style_{n}.png"))
        save_depth(depth.astype(np.float32), os.path.join(OUT, f"depth_{n}.png"))
    print("wrote fixtures to", os.path.abspath(OUT))


if __name__ == "__main__":
    main()
