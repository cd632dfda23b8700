"""Command line interface.

    depthstyle pipeline --content scene.png --style paint.png --depth d.png -o out/
    depthstyle depth | heatmap | blend | stylize | gradcheck ...

Settings come from built-in defaults, then an optional JSON ``--config``
file, then command-line flags (highest priority). ``DEPTHSTYLE_CACHE`` in the
environment replaces the file's ``cache_dir``; an explicit ``--cache-dir``
still wins. Failures print ``error:<Category>: message`` and exit 1.
"""

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import gradcheck
from .depth import DepthCache, estimate_depth, load_depth, normalize_depth, quantize_depth, resolve_backend, save_depth
from .errors import DepthStyleError, FileNotFound, MalformedConfig, OutOfRange, UnknownKey
from .features import ExtractorSpec
from .heatmap import apply_colormap, blend
from .imagecore import fit_longest_side, load_image, quantize_image, resize_bilinear, save_image
from .losses import LossWeights, make_targets
from .optimize import AdamState, noise_image, run, write_trace

log = logging.getLogger("depthstyle")

ARTIFACTS = ("depth.png", "heatmap.png", "blended.png", "stylized.png", "trace.csv")


@dataclass
class JobConfig:
    content: str = None
    style: str = None
    depth: str = None
    output_dir: str = "out"
    alpha: float = 0.5
    size: int = 512
    content_weight: float = 1.0
    style_weight: float = 1e7
    tv_weight: float = 1e-3
    kappa: float = 0.0
    iterations: int = 500
    lr: float = 0.02
    feature_backend: str = "tiny"
    depth_backend: str = "file"
    pretrained_model: str = None
    style_layers: list = field(default_factory=lambda: ["relu1", "relu2"])
    content_layer: str = "relu2"
    init: str = "content"
    seed: int = 42
    snapshot_interval: int = 100
    cache_dir: str = ".depthstyle-cache"

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        unknown = sorted(set(data) - KEYS)
        if unknown:
            raise UnknownKey(f"unknown config key(s): {', '.join(unknown)}")
        cfg = cls(**{k: _coerce(k, v) for k, v in data.items()})
        cfg.validate()
        return cfg

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise OutOfRange(f"alpha must lie in [0, 1], got {self.alpha}")
        for name in ("size", "iterations", "seed", "snapshot_interval"):
            lo = 1 if name == "size" else 0
            if getattr(self, name) < lo:
                raise OutOfRange(f"{name} must be >= {lo}, got {getattr(self, name)}")
        for name in ("content_weight", "style_weight", "tv_weight", "kappa"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise OutOfRange(f"{name} must be finite and >= 0, got {v}")
        if not (math.isfinite(self.lr) and self.lr > 0):
            raise OutOfRange(f"lr must be > 0, got {self.lr}")
        if self.init not in ("content", "noise"):
            raise OutOfRange(f"init must be 'content' or 'noise', got {self.init!r}")
        if self.feature_backend != "tiny" and not self.feature_backend.startswith("pretrained:"):
            raise OutOfRange(f"feature_backend must be 'tiny' or 'pretrained:<name>', got {self.feature_backend!r}")
        if self.depth_backend != "file" and not self.depth_backend.startswith("external:"):
            raise OutOfRange(f"depth_backend must be 'file' or 'external:<program>', got {self.depth_backend!r}")
        if not self.style_layers:
            raise OutOfRange("style_layers must not be empty")
        for name in ("output_dir", "cache_dir", "content_layer"):
            if not getattr(self, name):
                raise OutOfRange(f"{name} must not be empty")

    def weights(self):
        return LossWeights(self.content_weight, self.style_weight, self.tv_weight, self.kappa)

    def extractor(self):
        return ExtractorSpec(self.feature_backend, list(self.style_layers), self.content_layer, self.pretrained_model)


KEYS = {f.name for f in dataclasses.fields(JobConfig)}
_TYPES = {f.name: f.type for f in dataclasses.fields(JobConfig)}
_OPTIONAL = {"content", "style", "depth", "pretrained_model"}


def _coerce(key, value):
    kind = _TYPES[key]
    if value is None and key in _OPTIONAL:
        return None
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise MalformedConfig(f"{key} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise MalformedConfig(f"{key} must be a number, got {value!r}")
        return float(value)
    if kind is list:
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise MalformedConfig(f"{key} must be a list of strings, got {value!r}")
        return list(value)
    if not isinstance(value, str):
        raise MalformedConfig(f"{key} must be a string, got {value!r}")
    return value


def read_config_file(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise FileNotFound(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedConfig(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise MalformedConfig(f"{path}: top level must be a JSON object")
    return data


def _layers(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def job_arguments():
    """Parser holding every job flag; all defaults are None so unset flags don't override."""
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("job settings")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--content", help="content PNG (or a directory of PNGs for pipeline)")
    g.add_argument("--style", help="style PNG")
    g.add_argument("--depth", help="16-bit grayscale depth PNG (inverse depth)")
    g.add_argument("-o", "--output-dir", dest="output_dir")
    g.add_argument("--alpha", type=float, help="heatmap weight in the blend (default 0.5)")
    g.add_argument("--size", type=int, help="cap on the longest image side (default 512)")
    g.add_argument("--content-weight", dest="content_weight", type=float)
    g.add_argument("--style-weight", dest="style_weight", type=float)
    g.add_argument("--tv-weight", dest="tv_weight", type=float)
    g.add_argument("--kappa", type=float, help="depth mask strength on the content loss")
    g.add_argument("--iterations", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--feature-backend", dest="feature_backend")
    g.add_argument("--depth-backend", dest="depth_backend")
    g.add_argument("--pretrained-model", dest="pretrained_model")
    g.add_argument("--style-layers", dest="style_layers", type=_layers, help="comma separated")
    g.add_argument("--content-layer", dest="content_layer")
    g.add_argument("--init", choices=["content", "noise"])
    g.add_argument("--seed", type=int)
    g.add_argument("--snapshot-interval", dest="snapshot_interval", type=int)
    g.add_argument("--cache-dir", dest="cache_dir")
    return p


def config_from_namespace(ns, config_file=None, environ=None):
    environ = os.environ if environ is None else environ
    data = JobConfig().to_dict()
    path = config_file or getattr(ns, "config", None)
    if path:
        file_data = read_config_file(path)
        unknown = sorted(set(file_data) - KEYS)
        if unknown:
            raise UnknownKey(f"unknown config key(s) in {path}: {', '.join(unknown)}")
        data.update(file_data)
    if environ.get("DEPTHSTYLE_CACHE"):
        data["cache_dir"] = environ["DEPTHSTYLE_CACHE"]
    data.update({k: v for k, v in vars(ns).items() if k in KEYS and v is not None})
    return JobConfig.from_dict(data)


def parse_config(config_file=None, flags=(), environ=None):
    """Resolve a :class:`JobConfig` from defaults, a JSON file and flag strings."""
    parser = argparse.ArgumentParser(parents=[job_arguments()], add_help=False, exit_on_error=False)
    try:
        ns = parser.parse_args(list(flags))
    except argparse.ArgumentError as exc:
        raise MalformedConfig(str(exc)) from exc
    return config_from_namespace(ns, config_file, environ)


# -- stages ------------------------------------------------------------------

def _need(cfg, key):
    value = getattr(cfg, key)
    if not value:
        raise FileNotFound(f"--{key.replace('_', '-')} is required for this command")
    return value


def stage_content(cfg):
    return quantize_image(fit_longest_side(load_image(_need(cfg, "content")), cfg.size))


def stage_depth(cfg, content):
    """Normalized depth at the content's resolution, as it will be stored."""
    _, h, w = content.shape
    if cfg.depth:
        d = load_depth(cfg.depth)
        if d.shape != (h, w):
            d = resize_bilinear(d[None], h, w)[0]
    else:
        d = estimate_depth(content, resolve_backend(cfg.depth_backend), DepthCache(cfg.cache_dir))
    return quantize_depth(normalize_depth(d))


def stage_heatmap(depth):
    return quantize_image(apply_colormap(depth))


def stage_blend(content, heat, cfg):
    return quantize_image(blend(content, heat, cfg.alpha))


def stage_stylize(image, cfg, depth=None, out_dir=None):
    """Optimize ``image``; writes ``stylized.png``, ``trace.csv`` and snapshots."""
    _, h, w = image.shape
    style = load_image(_need(cfg, "style"))
    if style.shape[1:] != (h, w):
        style = resize_bilinear(style, h, w)
    spec = cfg.extractor()
    targets = make_targets(image, style, spec)
    init = image if cfg.init == "content" else noise_image(h, w, cfg.seed)
    out_dir = out_dir or cfg.output_dir
    x, trace = run(init, targets, cfg.weights(), spec, mask=depth if cfg.kappa else None,
                   iterations=cfg.iterations, state=AdamState(lr=cfg.lr),
                   snapshot_interval=cfg.snapshot_interval, snapshot_dir=out_dir)
    save_image(x, os.path.join(out_dir, "stylized.png"))
    write_trace(os.path.join(out_dir, "trace.csv"), trace)
    log.info("stylized %dx%d in %.2fs", h, w, trace.seconds)
    return x, trace


def pipeline_job(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    content = stage_content(cfg)
    depth = stage_depth(cfg, content)
    save_depth(depth, os.path.join(out_dir, "depth.png"))
    heat = stage_heatmap(depth)
    save_image(heat, os.path.join(out_dir, "heatmap.png"))
    blended = stage_blend(content, heat, cfg)
    save_image(blended, os.path.join(out_dir, "blended.png"))
    stage_stylize(blended, cfg, depth, out_dir)
    missing = [a for a in ARTIFACTS if not os.path.isfile(os.path.join(out_dir, a))]
    if missing:
        raise DepthStyleError(f"artifacts not written: {', '.join(missing)}")


def _batch_jobs(cfg):
    names = sorted(n for n in os.listdir(cfg.content) if n.lower().endswith(".png"))
    if not names:
        raise FileNotFound(f"no PNG files in {cfg.content}")
    for name in names:
        stem = os.path.splitext(name)[0]
        depth = cfg.depth
        if depth and os.path.isdir(depth):
            depth = os.path.join(depth, name)
        yield dataclasses.replace(cfg, content=os.path.join(cfg.content, name), depth=depth), \
            os.path.join(cfg.output_dir, stem)


def cmd_pipeline(cfg):
    if cfg.content and os.path.isdir(cfg.content):
        jobs = list(_batch_jobs(cfg))
        with ThreadPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 1)) as pool:
            for f in [pool.submit(pipeline_job, job, out) for job, out in jobs]:
                f.result()
    else:
        pipeline_job(cfg, cfg.output_dir)
    return 0


def cmd_depth(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    save_depth(stage_depth(cfg, stage_content(cfg)), os.path.join(cfg.output_dir, "depth.png"))
    return 0


def cmd_heatmap(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    src = cfg.depth or os.path.join(cfg.output_dir, "depth.png")
    heat = stage_heatmap(normalize_depth(load_depth(src)))
    save_image(heat, os.path.join(cfg.output_dir, "heatmap.png"))
    return 0


def cmd_blend(cfg, heat_path=None):
    os.makedirs(cfg.output_dir, exist_ok=True)
    content = stage_content(cfg)
    heat = load_image(heat_path or os.path.join(cfg.output_dir, "heatmap.png"))
    if heat.shape != content.shape:
        heat = quantize_image(resize_bilinear(heat, *content.shape[1:]))
    save_image(stage_blend(content, heat, cfg), os.path.join(cfg.output_dir, "blended.png"))
    return 0


def cmd_stylize(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    image = stage_content(cfg)
    depth = None
    if cfg.kappa and cfg.depth:
        depth = normalize_depth(load_depth(cfg.depth))
        if depth.shape != image.shape[1:]:
            depth = resize_bilinear(depth[None], *image.shape[1:])[0]
    stage_stylize(image, cfg, depth)
    return 0


def cmd_gradcheck(seed, out=None):
    out = out or sys.stdout
    results = gradcheck.run_suite(seed)
    for name, r in results.items():
        status = "ok" if r.ok else "FAIL"
        print(f"{name:9s} max_rel_error={r.max_rel_error:.3e} checked={r.checked} skipped={r.skipped} {status}",
              file=out)
    return 0 if all(r.ok for r in results.values()) else 1


def build_parser():
    # -v is accepted before or after the subcommand
    verbosity = argparse.ArgumentParser(add_help=False)
    verbosity.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    common = job_arguments()
    common._add_container_actions(verbosity)
    parser = argparse.ArgumentParser(prog="depthstyle", description="Depth-aware image stylization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("pipeline", parents=[common], help="depth -> heatmap -> blend -> stylize")
    sub.add_parser("depth", parents=[common], help="write normalized depth.png")
    sub.add_parser("heatmap", parents=[common], help="colormap a depth PNG into heatmap.png")
    b = sub.add_parser("blend", parents=[common], help="blend a heatmap into the content image")
    b.add_argument("--heat", help="heatmap PNG (default <output-dir>/heatmap.png)")
    sub.add_parser("stylize", parents=[common], help="style transfer on the --content image")
    g = sub.add_parser("gradcheck", parents=[verbosity], help="finite-difference gradient checks")
    g.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args.seed)
        cfg = config_from_namespace(args)
        if args.command == "pipeline":
            return cmd_pipeline(cfg)
        if args.command == "blend":
            return cmd_blend(cfg, args.heat)
        return {"depth": cmd_depth, "heatmap": cmd_heatmap, "stylize": cmd_stylize}[args.command](cfg)
    except DepthStyleError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error:IoError: {exc}", file=sys.stderr)
    except ValueError as exc:
        print(f"error:InvalidInput: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
