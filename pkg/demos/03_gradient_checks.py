"""Checking hand-written gradients against finite differences.

Central differences with h = 1e-3 are compared with the analytic pixel
gradient. Pixels whose perturbation would flip a ReLU are skipped, since
the objective is not differentiable across those kinks.
"""

import numpy as np

from depthstyle import gradcheck
from depthstyle.features import TinyExtractor, conv3x3_reflect, conv3x3_reflect_transpose

for seed in range(3):
    for name, r in gradcheck.run_suite(seed).items():
        print(f"seed {seed} {name:9s} max rel error {r.max_rel_error:.2e}  "
              f"({r.checked} checked, {r.skipped} skipped)")

# The backward pass is built from adjoints. For a linear map A, the adjoint
# satisfies <A x, y> = <x, A^T y> for every x and y.
rng = np.random.default_rng(1)
x = rng.standard_normal((3, 7, 5))
y = rng.standard_normal((4, 7, 5))
w = rng.standard_normal((4, 3, 3, 3))
lhs = np.sum(conv3x3_reflect(x, w, np.zeros(4)) * y)
rhs = np.sum(x * conv3x3_reflect_transpose(y, w))
print(f"<conv x, y> = {lhs:.10f}")
print(f"<x, conv^T y> = {rhs:.10f}")

# Why kinks matter: find a pixel near a ReLU switch and try two step sizes.
ext = TinyExtractor()
layers = ["relu2"]


def find_kink():
    for seed in range(50):
        img = np.random.default_rng(seed).random((3, 6, 6))
        for i in range(img.size):
            if gradcheck.straddles_kink(ext, img, i, layers):
                return img, i
    return None, None


img, i = find_kink()
if img is None:
    print("no kink within 1e-3 in the images tried")
else:
    feats, cache = ext.forward(img, layers)
    g = ext.backward_cached(cache, {"relu2": 2 * feats["relu2"]}).reshape(-1)

    def f(z):
        return float(np.sum(ext.forward(z, layers)[0]["relu2"] ** 2))

    for h in (1e-3, 1e-6):
        num = gradcheck.numeric_grad(f, img, [i], h)[0]
        print(f"pixel {i}: h={h:g} numeric {num:.6f} vs analytic {g[i]:.6f}")
