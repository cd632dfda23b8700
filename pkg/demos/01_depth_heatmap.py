"""Depth maps, normalization and the jet heatmap.

Walks a bundled depth map through the first half of the pipeline:
load, normalize, colour and blend into the content image.

    python demos/01_depth_heatmap.py [--out DIR]
"""

import argparse
import os
import tempfile

import numpy as np

import depthstyle as ds

p = argparse.ArgumentParser()
p.add_argument("--out", default=os.path.join(tempfile.gettempdir(), "depthstyle-demo1"))
args = p.parse_args()
os.makedirs(args.out, exist_ok=True)

# Depth PNGs are 16-bit grayscale holding inverse depth: bright means near.
depth = ds.load_depth(ds.fixture_path("depth_64.png"))
print("depth", depth.shape, depth.dtype, "range", depth.min(), depth.max())

# Estimators only know depth up to scale and shift, so everything downstream
# sees the map stretched to [0, 1].
d = ds.normalize_depth(depth)
print("normalized range", d.min(), d.max())
print("affine invariant:", np.allclose(ds.normalize_depth(3 * depth + 2), d, atol=1e-6))

# A flat map carries no information and maps to the middle of the scale.
print("constant map ->", ds.normalize_depth(np.full((2, 2), 7.0, np.float32))[0, 0])

# The colour table has 256 entries, dark blue (far) to dark red (near).
lut = ds.colormap_lut()
for i in (0, 64, 128, 192, 255):
    print(f"  lut[{i:3d}] = {np.round(lut[i], 3)}")

heat = ds.apply_colormap(d)
content = ds.load_image(ds.fixture_path("content_64.png"))

# Blending is a per-pixel convex combination; alpha is the heatmap's share.
for alpha in (0.0, 0.5, 1.0):
    b = ds.blend(content, heat, alpha)
    print(f"alpha {alpha}: mean |blend - content| = {np.abs(b - content).mean():.4f}")
    ds.save_image(b, os.path.join(args.out, f"blend_{alpha:.1f}.png"))

ds.save_image(heat, os.path.join(args.out, "heatmap.png"))
print("wrote", sorted(os.listdir(args.out)), "to", args.out)
