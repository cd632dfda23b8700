"""The three loss terms on small hand-checkable inputs."""

import numpy as np

import depthstyle as ds

# Gram matrices are channel inner products; spatial layout is discarded.
F = np.array([[[1.0, 2.0]], [[3.0, 4.0]]])
print("gram of rows [1,2] and [3,4]:\n", ds.gram(F))
print("same gram after swapping positions:\n", ds.gram(F[:, :, ::-1]))

# Style loss compares Grams. Doubling features quadruples the Gram, and the
# squared difference against a zero target grows 16x.
rng = np.random.default_rng(0)
feats = rng.random((3, 4, 4))
zero = {"a": np.zeros((3, 3))}
e1, _ = ds.style_loss({"a": feats}, zero)
e2, _ = ds.style_loss({"a": 2 * feats}, zero)
print(f"style loss ratio after doubling: {e2 / e1:.6f}")

# Content loss is half the squared feature distance. A depth mask reweights
# it per pixel with 1 + kappa * depth, so near pixels (depth 1) count double
# when kappa = 1.
P = rng.random((3, 4, 4))
mask = np.zeros((4, 4))
mask[1, 2] = 1.0
_, g0 = ds.content_loss(feats, P, mask, kappa=0.0)
_, g1 = ds.content_loss(feats, P, mask, kappa=1.0)
print("gradient ratio at the masked pixel:", g1[:, 1, 2] / g0[:, 1, 2])
print("gradient ratio elsewhere:", np.unique(np.round(g1[:, 0, 0] / g0[:, 0, 0], 12)))

# Total variation penalizes neighbour differences.
print("tv of [0, 1]:", ds.tv_loss(np.array([[[0.0, 1.0]]])))

# The full objective runs the feature extractor once per evaluation.
spec = ds.ExtractorSpec()
content = ds.load_image(ds.fixture_path("content_32.png"))
style = ds.load_image(ds.fixture_path("style_32.png"))
targets = ds.make_targets(content, style, spec)
report, grad = ds.total_loss(content, targets, ds.LossWeights(), spec)
print(report)
print("pixel gradient", grad.shape, "max |g| =", float(np.abs(grad).max()))
