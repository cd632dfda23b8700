"""Feature extractors with hand-written forward and backward passes.

Two backends share one interface:

``tiny``
    A fixed two-layer convnet, ``relu1 = ReLU(conv1(img))`` (8 channels) and
    ``relu2 = ReLU(conv2(relu1))`` (16 channels). Both convolutions are 3x3,
    stride 1, reflection padded, with integer-derived weights from
    :func:`tiny_weights`. Every gradient through it can be checked by hand.

``pretrained:<name>``
    A VGG-style ONNX model (Conv / Relu / MaxPool chain) evaluated in numpy.
    Needs the ``onnx`` package and a model file.

Arrays are ``(C, H, W)``. Float64 inputs are processed in float64, anything
else in float32.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BackendUnavailable, ShapeMismatch, UnknownLayer
from .imagecore import as_tensor3

TINY_LAYERS = ("relu1", "relu2")


def tiny_weights():
    """Closed-form weights ``(w1, b1, w2, b2)`` of the reference network."""
    o, i, ky, kx = np.meshgrid(np.arange(8), np.arange(3), np.arange(3), np.arange(3), indexing="ij")
    w1 = (((31 * o + 17 * i + 5 * ky + kx) % 11) - 5) / 20.0
    b1 = ((np.arange(8) % 7) - 3) / 10.0
    o, i, ky, kx = np.meshgrid(np.arange(16), np.arange(8), np.arange(3), np.arange(3), indexing="ij")
    w2 = (((29 * o + 13 * i + 7 * ky + 3 * kx) % 11) - 5) / 20.0
    b2 = ((np.arange(16) % 5) - 2) / 10.0
    return tuple(a.astype(np.float32) for a in (w1, b1, w2, b2))


# -- padding ----------------------------------------------------------------

def _reflect_index(n):
    # position -1 mirrors to 1 and n to n-2; a single row/column is replicated
    if n == 1:
        return np.zeros(3, dtype=np.intp)
    return np.concatenate(([1], np.arange(n), [n - 2])).astype(np.intp)


def reflect_pad(x):
    """Pad by one pixel on each side, mirroring about the edge pixel."""
    _, h, w = x.shape
    return x[:, _reflect_index(h)][:, :, _reflect_index(w)]


def reflect_pad_adjoint(g, h, w):
    """Transpose of :func:`reflect_pad`: fold a padded gradient back onto ``(h, w)``.

    Gradient landing on a mirrored border cell is added to the interior pixel
    it was copied from.
    """
    c = g.shape[0]
    if g.shape[1:] != (h + 2, w + 2):
        raise ShapeMismatch(f"padded gradient {g.shape} does not match {h}x{w}")
    rows = np.zeros((c, h, w + 2), dtype=g.dtype)
    np.add.at(rows, (slice(None), _reflect_index(h)), g)
    out = np.zeros((c, h, w), dtype=g.dtype)
    np.add.at(out, (slice(None), slice(None), _reflect_index(w)), rows)
    return out


def zero_pad(x, pads):
    top, left, bottom, right = pads
    return np.pad(x, ((0, 0), (top, bottom), (left, right)))


def zero_pad_adjoint(g, pads):
    top, left, bottom, right = pads
    _, hp, wp = g.shape
    return g[:, top:hp - bottom, left:wp - right]


# -- convolution on a pre-padded input --------------------------------------

def _out_size(n, k, stride):
    return (n - k) // stride + 1


def _im2col(xp, kh, kw, stride):
    c, hp, wp = xp.shape
    ho, wo = _out_size(hp, kh, stride), _out_size(wp, kw, stride)
    cols = np.empty((c, kh, kw, ho, wo), dtype=xp.dtype)
    for ky in range(kh):
        for kx in range(kw):
            cols[:, ky, kx] = xp[:, ky:ky + stride * ho:stride, kx:kx + stride * wo:stride]
    return cols.reshape(c * kh * kw, ho * wo), ho, wo


def conv_valid(xp, w, b, stride=1):
    """Cross-correlation without padding: ``out[o] = b[o] + sum w[o, i] * xp[i]``."""
    co, ci, kh, kw = w.shape
    if xp.shape[0] != ci:
        raise ShapeMismatch(f"kernel expects {ci} input channels, got {xp.shape[0]}")
    cols, ho, wo = _im2col(xp.astype(np.float64), kh, kw, stride)
    # accumulate in float64 so float32 outputs are rounded once
    out = w.reshape(co, -1).astype(np.float64) @ cols
    out += np.asarray(b, dtype=np.float64)[:, None]
    return out.reshape(co, ho, wo).astype(xp.dtype)


def conv_valid_transpose(g, w, padded_shape, stride=1):
    """Gradient of :func:`conv_valid` with respect to its padded input."""
    co, ci, kh, kw = w.shape
    _, ho, wo = g.shape
    gcols = w.reshape(co, -1).T.astype(np.float64) @ g.reshape(co, -1).astype(np.float64)
    gcols = gcols.reshape(ci, kh, kw, ho, wo)
    gx = np.zeros(padded_shape, dtype=np.float64)
    for ky in range(kh):
        for kx in range(kw):
            gx[:, ky:ky + stride * ho:stride, kx:kx + stride * wo:stride] += gcols[:, ky, kx]
    return gx.astype(g.dtype)


def conv3x3_reflect(x, w, b):
    """3x3 stride-1 convolution with one pixel of reflection padding."""
    x = as_tensor3(x)
    w = np.asarray(w)
    if w.ndim != 4 or w.shape[2:] != (3, 3):
        raise ShapeMismatch(f"expected a (out, in, 3, 3) kernel, got {w.shape}")
    if w.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"kernel expects {w.shape[1]} input channels, got {x.shape[0]}")
    if np.shape(b) != (w.shape[0],):
        raise ShapeMismatch(f"bias must have {w.shape[0]} entries, got shape {np.shape(b)}")
    return conv_valid(reflect_pad(x), w, b)


def conv3x3_reflect_transpose(g, w):
    """Adjoint of :func:`conv3x3_reflect` (bias excluded) applied to ``g``."""
    _, h, wd = g.shape
    gp = conv_valid_transpose(g, w, (w.shape[1], h + 2, wd + 2))
    return reflect_pad_adjoint(gp, h, wd)


def maxpool(x, k, stride):
    c, h, w = x.shape
    ho, wo = _out_size(h, k, stride), _out_size(w, k, stride)
    windows = np.stack(
        [x[:, ky:ky + stride * ho:stride, kx:kx + stride * wo:stride] for ky in range(k) for kx in range(k)]
    )
    arg = windows.argmax(axis=0)
    return np.take_along_axis(windows, arg[None], axis=0)[0], arg


def maxpool_backward(g, arg, in_shape, k, stride):
    gx = np.zeros(in_shape, dtype=g.dtype)
    _, ho, wo = g.shape
    for n in range(k * k):
        ky, kx = divmod(n, k)
        gx[:, ky:ky + stride * ho:stride, kx:kx + stride * wo:stride] += np.where(arg == n, g, 0)
    return gx


# -- extractors ---------------------------------------------------------------

@dataclass
class ExtractorSpec:
    """Which backend to use and which of its layers feed the losses."""

    backend_id: str = "tiny"
    style_layers: list = field(default_factory=lambda: list(TINY_LAYERS))
    content_layer: str = "relu2"
    model_path: str = None

    @property
    def layers(self):
        return list(dict.fromkeys([*self.style_layers, self.content_layer]))


class TinyExtractor:
    layer_names = TINY_LAYERS

    def __init__(self):
        self.w1, self.b1, self.w2, self.b2 = tiny_weights()

    def forward(self, img, layers=TINY_LAYERS):
        """Run the network; returns ``(features, cache)`` for :meth:`backward_cached`."""
        img = as_tensor3(img)
        if img.shape[0] != 3:
            raise ShapeMismatch(f"extractor input needs 3 channels, got {img.shape[0]}")
        _check_layers(layers, self.layer_names)
        z1 = conv3x3_reflect(img, self.w1, self.b1)
        a1 = np.maximum(z1, 0)
        cache = {"shape": img.shape, "z1": z1}
        feats = {"relu1": a1}
        if "relu2" in layers:
            z2 = conv3x3_reflect(a1, self.w2, self.b2)
            cache["z2"] = z2
            feats["relu2"] = np.maximum(z2, 0)
        return {k: feats[k] for k in layers}, cache

    @staticmethod
    def activation_pattern(cache):
        """On/off state of every ReLU; the network is smooth while it is unchanged."""
        return [cache[k] > 0 for k in ("z1", "z2") if k in cache]

    def backward_cached(self, cache, grads):
        _check_layers(grads, self.layer_names)
        z1 = cache["z1"]
        ga1 = np.zeros_like(z1)
        if "relu2" in grads:
            if "z2" not in cache:
                raise UnknownLayer("relu2 was not computed in the forward pass")
            z2 = cache["z2"]
            g2 = _match(grads["relu2"], z2, "relu2")
            ga1 += conv3x3_reflect_transpose(np.where(z2 > 0, g2, 0), self.w2)
        if "relu1" in grads:
            ga1 += _match(grads["relu1"], z1, "relu1")
        return conv3x3_reflect_transpose(np.where(z1 > 0, ga1, 0), self.w1)


class OnnxExtractor:
    """VGG-style ONNX model run layer by layer in numpy.

    Supported nodes: Conv (group 1, no dilation), Relu, MaxPool (no padding),
    Identity. Evaluation stops after the deepest requested layer, so trailing
    classifier nodes are never touched. Layer names are node output tensor
    names; node names are accepted as aliases.

    The image is standardized with ``(img - mean) / std`` first; the default
    is the ImageNet statistics that torchvision VGG exports expect. Pass
    ``mean=None`` to feed raw [0, 1] pixels (``std`` is then ignored).
    """

    IMAGENET_MEAN = (0.485, 0.456, 0.406)
    IMAGENET_STD = (0.229, 0.224, 0.225)

    def __init__(self, model_path, mean=IMAGENET_MEAN, std=IMAGENET_STD):
        try:
            import onnx
            from onnx import numpy_helper
        except ImportError as exc:
            raise BackendUnavailable("the pretrained backend needs the 'onnx' package") from exc
        if model_path is None:
            raise BackendUnavailable("no pretrained model configured (pretrained_model)")
        try:
            model = onnx.load(str(model_path))
        except FileNotFoundError as exc:
            raise BackendUnavailable(f"pretrained model not found: {model_path}") from exc
        graph = model.graph
        params = {t.name: numpy_helper.to_array(t).astype(np.float32) for t in graph.initializer}
        inputs = [i.name for i in graph.input if i.name not in params]
        if not inputs:
            raise BackendUnavailable(f"{model_path}: graph has no data input")
        self.input_name = inputs[0]
        # mean=None switches standardization off entirely
        self.mean = None if mean is None else np.asarray(mean, dtype=np.float64)[:, None, None]
        self.std = np.ones((1, 1, 1)) if mean is None or std is None else np.asarray(std, dtype=np.float64)[:, None, None]
        self.nodes = []
        aliases = {}
        for node in graph.node:
            attrs = {a.name: onnx.helper.get_attribute_value(a) for a in node.attribute}
            op = node.op_type
            if op == "Conv":
                if attrs.get("group", 1) != 1 or any(d != 1 for d in attrs.get("dilations", [1, 1])):
                    raise BackendUnavailable(f"unsupported Conv attributes in node {node.name}")
                w = params[node.input[1]]
                b = params[node.input[2]] if len(node.input) > 2 else np.zeros(w.shape[0], np.float32)
                pads = attrs.get("pads", [0, 0, 0, 0])
                spec = {"w": w, "b": b, "stride": attrs.get("strides", [1, 1])[0],
                        "pads": (pads[0], pads[1], pads[2], pads[3])}
            elif op == "MaxPool":
                if any(attrs.get("pads", [0, 0, 0, 0])):
                    raise BackendUnavailable(f"padded MaxPool not supported ({node.name})")
                k = attrs["kernel_shape"][0]
                spec = {"k": k, "stride": attrs.get("strides", [k, k])[0]}
            elif op in ("Relu", "Identity"):
                spec = {}
            else:
                break
            self.nodes.append((op, node.input[0], node.output[0], spec))
            if node.name:
                aliases[node.name] = node.output[0]
        self.aliases = aliases
        self.layer_names = tuple([n[2] for n in self.nodes] + list(aliases))

    def _resolve(self, name):
        return self.aliases.get(name, name)

    def forward(self, img, layers):
        img = as_tensor3(img)
        if img.shape[0] != 3:
            raise ShapeMismatch(f"extractor input needs 3 channels, got {img.shape[0]}")
        _check_layers(layers, self.layer_names)
        wanted = {self._resolve(n) for n in layers}
        x = img.astype(np.float64) if self.mean is None else (img - self.mean) / self.std
        values = {self.input_name: x.astype(img.dtype)}
        tape = []
        for op, src, dst, spec in self.nodes:
            if not wanted:
                break
            x = values[src]
            if op == "Conv":
                y = conv_valid(zero_pad(x, spec["pads"]), spec["w"], spec["b"], spec["stride"])
                aux = x.shape
            elif op == "Relu":
                y, aux = np.maximum(x, 0), x
            elif op == "MaxPool":
                y, arg = maxpool(x, spec["k"], spec["stride"])
                aux = (arg, x.shape)
            else:
                y, aux = x, None
            values[dst] = y
            tape.append((op, src, dst, spec, aux))
            wanted.discard(dst)
        feats = {n: values[self._resolve(n)] for n in layers}
        return feats, {"tape": tape, "shape": img.shape, "dtype": img.dtype}

    @staticmethod
    def activation_pattern(cache):
        """ReLU on/off states and max-pool winners recorded on the tape."""
        out = []
        for op, _, _, _, aux in cache["tape"]:
            if op == "Relu":
                out.append(aux > 0)
            elif op == "MaxPool":
                out.append(aux[0])
        return out

    def backward_cached(self, cache, grads):
        _check_layers(grads, self.layer_names)
        pending = {}
        for name, g in grads.items():
            key = self._resolve(name)
            pending[key] = pending.get(key, 0) + g
        for op, src, dst, spec, aux in reversed(cache["tape"]):
            if dst not in pending:
                continue
            g = pending.pop(dst)
            if op == "Conv":
                c, h, w = aux
                top, left, bottom, right = spec["pads"]
                gp = conv_valid_transpose(g, spec["w"], (c, h + top + bottom, w + left + right), spec["stride"])
                gx = zero_pad_adjoint(gp, spec["pads"])
            elif op == "Relu":
                gx = np.where(aux > 0, g, 0)
            elif op == "MaxPool":
                arg, shape = aux
                gx = maxpool_backward(g, arg, shape, spec["k"], spec["stride"])
            else:
                gx = g
            pending[src] = pending.get(src, 0) + gx
        gimg = pending.get(self.input_name)
        if gimg is None:
            return np.zeros(cache["shape"], dtype=cache["dtype"])
        return (gimg / self.std).astype(cache["dtype"])


def _check_layers(names, available):
    for n in names:
        if n not in available:
            raise UnknownLayer(f"unknown layer {n!r}; available: {', '.join(available)}")


def _match(g, ref, name):
    g = np.asarray(g, dtype=ref.dtype)
    if g.shape != ref.shape:
        raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, activation has {ref.shape}")
    return g


_EXTRACTORS = {}


def get_extractor(spec):
    """Build (and memoize) the extractor an :class:`ExtractorSpec` names."""
    key = (spec.backend_id, spec.model_path)
    if key not in _EXTRACTORS:
        if spec.backend_id == "tiny":
            ext = TinyExtractor()
        elif spec.backend_id.startswith("pretrained:"):
            ext = OnnxExtractor(spec.model_path)
        else:
            raise BackendUnavailable(f"unknown feature backend {spec.backend_id!r}")
        _EXTRACTORS[key] = ext
    ext = _EXTRACTORS[key]
    _check_layers(spec.layers, ext.layer_names)
    return ext


def extract(img, spec, layers=None):
    """Activations for ``layers`` (default: every layer ``spec`` names)."""
    ext = get_extractor(spec)
    feats, _ = ext.forward(img, spec.layers if layers is None else list(layers))
    return feats


def backward(img, grads, spec):
    """Pixel gradient ``dL/dimg`` given ``dL/dF`` for some layers."""
    ext = get_extractor(spec)
    _check_layers(grads, ext.layer_names)
    _, cache = ext.forward(img, list(grads) or list(spec.layers))
    return ext.backward_cached(cache, grads)
