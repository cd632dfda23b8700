import os
import stat
import sys
import textwrap
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from depthstyle.depth import (
    DepthBackend,
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
from depthstyle.errors import BackendFailure, BackendUnavailable, FileNotFound, UnsupportedFormat


class StubBackend(DepthBackend):
    """Returns a constant map of its own chosen size and counts invocations."""

    def __init__(self, value=3.0, shape=(4, 6)):
        self.value, self.shape, self.calls = value, shape, 0
        self.backend_id = f"stub:{value}"

    def run(self, img):
        self.calls += 1
        return np.full(self.shape, self.value, np.float32)


class RampBackend(StubBackend):
    def run(self, img):
        self.calls += 1
        return img.mean(axis=0) * 4.0


def write_raw16(path, values):
    Image.fromarray(np.asarray(values, np.uint16)).save(path)


@pytest.mark.parametrize("raw, v", [(65535, 1.0), (0, 0.0)])
def test_load_depth_scale(tmp_path, raw, v):
    write_raw16(tmp_path / "d.png", [[raw]])
    assert load_depth(tmp_path / "d.png")[0, 0] == v


@pytest.mark.parametrize("v, raw", [(1.0, 65535), (0.0, 0), (0.5, 32768)])
def test_save_depth_quantization(tmp_path, v, raw):
    save_depth(np.array([[v]], np.float32), tmp_path / "d.png")
    im = Image.open(tmp_path / "d.png")
    assert np.asarray(im, dtype=np.uint16)[0, 0] == raw


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint16, (3, 4)))
def test_depth_roundtrip(tmp_path_factory, raw):
    d = raw.astype(np.float32) / np.float32(65535)
    p = tmp_path_factory.mktemp("d") / "d.png"
    save_depth(d, p)
    np.testing.assert_array_equal(load_depth(p), d)


def test_load_depth_rejects_8bit(tmp_path):
    Image.new("L", (2, 2)).save(tmp_path / "d8.png")
    with pytest.raises(UnsupportedFormat):
        load_depth(tmp_path / "d8.png")


def test_load_depth_rejects_rgb(tmp_path):
    Image.new("RGB", (2, 2)).save(tmp_path / "rgb.png")
    with pytest.raises(UnsupportedFormat):
        load_depth(tmp_path / "rgb.png")


def test_load_depth_missing(tmp_path):
    with pytest.raises(FileNotFound):
        load_depth(tmp_path / "none.png")


@pytest.mark.parametrize("values, expected", [
    ([2, 4, 6], [0, 0.5, 1]),
    ([5, 5, 5], [0.5, 0.5, 0.5]),
    ([0, 10], [0, 1]),
])
def test_normalize_examples(values, expected):
    out = normalize_depth(np.array([values], np.float32))
    np.testing.assert_array_equal(out[0], expected)


depth_arrays = arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 5)),
                      elements=st.floats(0, 1000, width=32))


@settings(max_examples=80, deadline=None)
@given(depth_arrays)
def test_normalize_range(d):
    out = normalize_depth(d)
    assert out.min() >= 0 and out.max() <= 1
    if d.max() > d.min():
        assert out.min() == 0 and out.max() == 1
    else:
        assert np.all(out == 0.5)


@settings(max_examples=80, deadline=None)
@given(arrays(np.int32, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=st.integers(0, 1000)),
       st.sampled_from([0.25, 0.5, 2.0, 8.0]), st.integers(0, 1000))
def test_normalize_affine_invariance_exact(d, a, b):
    # dyadic scale and integer shift keep a*d + b exact in float32
    d = d.astype(np.float32)
    np.testing.assert_array_equal(normalize_depth(a * d + b), normalize_depth(d))


@settings(max_examples=80, deadline=None)
@given(depth_arrays, st.floats(0.01, 100), st.floats(0, 100))
def test_normalize_affine_invariance(d, a, b):
    spread = float(d.max() - d.min())
    scaled = (a * d.astype(np.float64) + b).astype(np.float32)
    # float32 rounding of the shifted values must stay small next to their spread
    if spread == 0 or (b + a * float(d.max())) / (a * spread) > 4:
        return
    np.testing.assert_allclose(normalize_depth(scaled), normalize_depth(d), rtol=0, atol=1e-6)


def test_cache_key_golden():
    assert cache_key(b"", "file") == "c31d0a067bd07916d75f148eea46e78c266b6e52bba0217e0cc4d916ba957fbc"


def test_cache_key_deterministic_and_backend_sensitive(rng):
    corpus = [rng.bytes(int(n)) for n in rng.integers(0, 300, size=30)]
    ids = ["file", "external:midas", "external:other"]
    keys = {cache_key(b, i) for b in corpus for i in ids}
    assert len(keys) == len(corpus) * len(ids) or len(set(corpus)) < len(corpus)
    assert all(len(k) == 64 and k == k.lower() for k in keys)
    assert cache_key(corpus[0], "file") == cache_key(corpus[0], "file")


def test_file_backend_is_not_an_estimator():
    with pytest.raises(BackendUnavailable, match="load_depth"):
        estimate_depth(np.zeros((3, 2, 2), np.float32), FileBackend())


def test_stub_backend_pass_through():
    img = np.zeros((3, 4, 6), np.float32)
    d = estimate_depth(img, StubBackend(3.0, shape=(4, 6)))
    assert d.shape == (4, 6)
    assert np.all(d == 3.0)


def test_estimate_resizes_to_image():
    img = np.zeros((3, 9, 5), np.float32)
    assert estimate_depth(img, StubBackend(shape=(3, 3))).shape == (9, 5)


def test_cache_skips_second_invocation(tmp_path, rng):
    img = rng.random((3, 5, 5)).astype(np.float32)
    backend = RampBackend()
    cache = DepthCache(tmp_path / "cache")
    first = estimate_depth(img, backend, cache)
    second = estimate_depth(img, backend, cache)
    assert backend.calls == 1
    assert len(list((tmp_path / "cache").glob("*.png"))) == 1
    # cache entries are stored normalized
    np.testing.assert_allclose(second, normalize_depth(first), atol=1 / 65535)


def test_cache_hits_across_renamed_inputs(tmp_path, rng):
    img = rng.random((3, 4, 4)).astype(np.float32)
    backend = StubBackend()
    cache = DepthCache(tmp_path)
    estimate_depth(img.copy(), backend, cache)
    estimate_depth(img.copy(), backend, cache)
    estimate_depth(img[:, ::-1].copy(), backend, cache)
    assert backend.calls == 2


def test_concurrent_cache_writers(tmp_path, rng):
    img = rng.random((3, 6, 6)).astype(np.float32)
    cache = DepthCache(tmp_path)
    with ThreadPoolExecutor(8) as pool:
        results = list(pool.map(lambda _: estimate_depth(img, RampBackend(), cache), range(16)))
    assert not list(tmp_path.glob("*.tmp"))
    assert len(list(tmp_path.glob("*.png"))) == 1
    ref = load_depth(next(tmp_path.glob("*.png")))
    np.testing.assert_array_equal(estimate_depth(img, StubBackend(), cache), ref)
    assert all(r.shape == (6, 6) for r in results)


# -- external process contract ---------------------------------------------

def make_program(tmp_path, body, name="estimator"):
    path = tmp_path / name
    path.write_text(f"#!{sys.executable}\n" + body)
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return str(path)


CONSTANT_ESTIMATOR = textwrap.dedent("""
    import sys
    import numpy as np
    from PIL import Image
    img = Image.open(sys.argv[1])
    w, h = img.size
    Image.fromarray(np.full((h, w), 40000, np.uint16)).save(sys.argv[2])
""")


def test_external_backend_shape_and_values(tmp_path, rng):
    prog = make_program(tmp_path, CONSTANT_ESTIMATOR)
    backend = resolve_backend(f"external:{prog}")
    assert isinstance(backend, ExternalBackend)
    img = rng.random((3, 7, 4)).astype(np.float32)
    d = estimate_depth(img, backend)
    assert d.shape == (7, 4)
    np.testing.assert_array_equal(d, np.float32(40000) / np.float32(65535))


def test_external_backend_nonzero_exit(tmp_path):
    prog = make_program(tmp_path, "import sys\nsys.exit(3)\n")
    with pytest.raises(BackendFailure, match="status 3"):
        estimate_depth(np.zeros((3, 2, 2), np.float32), ExternalBackend(prog))


def test_external_backend_malformed_output(tmp_path):
    prog = make_program(tmp_path, "import sys\nopen(sys.argv[2], 'w').write('nope')\n")
    with pytest.raises(BackendFailure):
        estimate_depth(np.zeros((3, 2, 2), np.float32), ExternalBackend(prog))


def test_external_backend_missing_program():
    with pytest.raises(BackendUnavailable):
        estimate_depth(np.zeros((3, 2, 2), np.float32), resolve_backend("external:no-such-estimator-xyz"))


def test_unknown_backend_id():
    with pytest.raises(BackendUnavailable):
        resolve_backend("midas")


def test_external_backend_uses_cache(tmp_path, rng):
    log = tmp_path / "calls.txt"
    prog = make_program(tmp_path, CONSTANT_ESTIMATOR + f"\nopen({str(log)!r}, 'a').write('x')\n")
    img = rng.random((3, 5, 5)).astype(np.float32)
    cache = DepthCache(tmp_path / "cache")
    estimate_depth(img, ExternalBackend(prog), cache)
    estimate_depth(img, ExternalBackend(prog), cache)
    assert log.read_text() == "x"
    assert os.listdir(tmp_path / "cache")[0].endswith(".png")
