"""Command-line surface: layout tooling, generation runs and rendering.

Every generate run writes a manifest holding the resolved parameters,
seeds, backend capabilities and input/output digests; replaying a manifest
with a deterministic backend reproduces the output digest.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dtxl
from .engine import (
    AnalyticGaussianBackend,
    MockBackend,
    NoiseSchedule,
    RngStream,
    ZeroBackend,
)
from .errors import SceneDiffError
from .geometry import RasterConfig, plan_windows, rasterize_conditions_at
from .layout import (
    inclusion_check,
    numerical_matching,
    parse_scene_layout,
    serialize_scene_layout,
    spatial_matching,
    synthesize_layout_procedural,
)
from .pyramid import PyramidConfig, pppi

_CATEGORY_ALIASES = {
    "group": "group", "groups": "group",
    "human": "human", "humans": "human",
    "object": "object", "objects": "object",
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _emit(report: dict, mode: str) -> None:
    if mode == "json":
        print(json.dumps(report, indent=2))
    else:
        for key, value in report.items():
            print(f"{key}={value}")


def _parse_wh(text: str) -> tuple[int, int]:
    try:
        width, height = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"expected WIDTHxHEIGHT, got {text!r}"
        ) from exc
    if width < 1 or height < 1:
        raise argparse.ArgumentTypeError("canvas must be positive")
    return width, height


def _parse_expected(pairs: list[str]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for pair in pairs:
        key, _, value = pair.partition("=")
        category = _CATEGORY_ALIASES.get(key.strip().lower())
        if category is None or not value:
            raise argparse.ArgumentTypeError(
                f"expected counts like humans=3, got {pair!r}"
            )
        counts[category] = int(value)
    return counts


# ---------------------------------------------------------------------------
# layout subcommands


def _cmd_layout_validate(args) -> int:
    try:
        layout = parse_scene_layout(Path(args.file).read_text(encoding="utf-8"))
    except SceneDiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _emit(
        {
            "valid": "true",
            "groups": len(layout.groups),
            "humans": sum(1 for i in layout.instances if i.kind == "human"),
            "objects": sum(1 for i in layout.instances if i.kind == "object"),
        },
        args.report,
    )
    return 0


def _cmd_layout_metrics(args) -> int:
    layout = parse_scene_layout(Path(args.file).read_text(encoding="utf-8"))
    expected = _parse_expected(args.expected or [])
    match = numerical_matching(expected, layout)
    report = {
        "precision": round(match.precision, 6),
        "recall": round(match.recall, 6),
        "f1": round(match.f1, 6),
    }
    for name, cat in match.categories.items():
        report[f"{name}.expected"] = cat.expected
        report[f"{name}.generated"] = cat.generated
        report[f"{name}.matched"] = cat.matched
    if args.spatial:
        report["spatial_accuracy"] = round(
            spatial_matching(layout, args.spatial), 6
        )
    report["inclusion_accuracy"] = round(inclusion_check(layout), 6)
    _emit(report, args.report)
    return 0


def _cmd_layout_synth(args) -> int:
    layout = synthesize_layout_procedural(
        {"group": args.groups, "human": args.humans, "object": args.objects},
        args.canvas,
        args.seed,
    )
    text = serialize_scene_layout(layout)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text)
    return 0


# ---------------------------------------------------------------------------
# generation


def _build_backend(args):
    if args.backend == "analytic":
        return AnalyticGaussianBackend(mean=args.mu0, std=args.sigma0)
    if args.backend == "zero":
        return ZeroBackend()
    if args.backend == "mock":
        return MockBackend()
    endpoint = os.environ.get("DTS_ENDPOINT") or args.endpoint
    if not endpoint:
        raise SceneDiffError(
            "--backend external needs --endpoint or DTS_ENDPOINT"
        )
    from .wire import ExternalBackend

    return ExternalBackend(endpoint)


def _resolve_generate(args) -> dict:
    layout = None
    layout_digest = None
    if args.layout:
        layout = parse_scene_layout(Path(args.layout).read_text(encoding="utf-8"))
        layout_digest = _sha256(Path(args.layout))
    canvas_px = args.canvas or (layout.canvas if layout else None)
    if canvas_px is None:
        raise SceneDiffError("give --canvas or a --layout with a canvas")
    scale = args.latent_scale
    latent_h = int(np.ceil(canvas_px[1] / scale))
    latent_w = int(np.ceil(canvas_px[0] / scale))
    win = max(1, round(args.window / scale))
    stride = max(1, round(args.stride / scale))
    return {
        "layout": layout,
        "layout_digest": layout_digest,
        "canvas_px": canvas_px,
        "latent": (latent_h, latent_w),
        "window": win,
        "stride": stride,
    }


def _cmd_generate(args) -> int:
    resolved = _resolve_generate(args)
    latent_h, latent_w = resolved["latent"]
    win, stride = resolved["window"], resolved["stride"]
    layout = resolved["layout"]

    def plan_factory(h: int, w: int):
        return plan_windows((h, w), (min(win, h), min(win, w)), stride)

    raster = RasterConfig()

    def condition_factory(h: int, w: int):
        if layout is None:
            return None
        return rasterize_conditions_at(layout, (h, w), raster)

    if args.no_pyramid:
        pyramid = PyramidConfig(phases=0, refine_times=())
    else:
        refine = args.tp or [0.5] * args.pyramid_phases
        if len(refine) == 1:
            refine = refine * args.pyramid_phases
        pyramid = PyramidConfig(
            phases=args.pyramid_phases,
            alpha=args.alpha,
            gamma=args.gamma_pert,
            distance=args.d_pert,
            refine_times=tuple(refine),
        )

    backend = _build_backend(args)
    sched = NoiseSchedule.linear(args.steps)
    rng = RngStream(args.seed)
    try:
        caps = backend.capabilities()
        result = pppi(
            condition_factory,
            pyramid,
            (latent_h, latent_w),
            plan_factory,
            backend,
            sched,
            rng,
            channels=args.channels,
            eta=args.eta,
        )
    finally:
        if hasattr(backend, "close"):
            backend.close()
    out_path = Path(args.out)
    dtxl.write_dtxl(out_path, result)

    base_plan = plan_factory(latent_h, latent_w)
    manifest = {
        "version": 1,
        "parameters": {
            "canvas_px": list(resolved["canvas_px"]),
            "latent_scale": args.latent_scale,
            "window_px": args.window,
            "stride_px": args.stride,
            "steps": args.steps,
            "channels": args.channels,
            "eta": args.eta,
            "seed": args.seed,
            "backend": args.backend,
            "endpoint": args.endpoint,
            "pyramid": None if args.no_pyramid else {
                "phases": pyramid.phases,
                "alpha": pyramid.alpha,
                "gamma": pyramid.gamma,
                "distance": pyramid.distance,
                "refine_times": list(pyramid.refine_times),
            },
            "mu0": args.mu0,
            "sigma0": args.sigma0,
        },
        "plan": {
            "width": latent_w,
            "height": latent_h,
            "window": min(win, latent_h, latent_w),
            "stride": stride,
            "windows": len(base_plan.windows),
        },
        "backend_capabilities": {
            "accepts_conditions": caps.accepts_conditions,
            "deterministic": caps.deterministic,
            "max_concurrency": caps.max_concurrency,
        },
        "inputs": {
            "layout": args.layout,
            "layout_sha256": resolved["layout_digest"],
        },
        "outputs": {
            "tensor": str(out_path),
            "dims": list(result.shape),
            "sha256": _sha256(out_path),
        },
    }
    manifest_path = Path(args.manifest or str(out_path) + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    _emit(
        {
            "out": str(out_path),
            "manifest": str(manifest_path),
            "dims": "x".join(str(d) for d in result.shape),
            "windows": len(base_plan.windows),
            "sha256": manifest["outputs"]["sha256"],
        },
        args.report,
    )
    return 0


def _cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest_file).read_text(encoding="utf-8"))
    params = manifest["parameters"]
    argv = ["generate", "--out", args.out]
    if manifest["inputs"]["layout"]:
        argv += ["--layout", manifest["inputs"]["layout"]]
    argv += [
        "--canvas", "{}x{}".format(*params["canvas_px"]),
        "--latent-scale", str(params["latent_scale"]),
        "--window", str(params["window_px"]),
        "--stride", str(params["stride_px"]),
        "--steps", str(params["steps"]),
        "--channels", str(params["channels"]),
        "--eta", str(params["eta"]),
        "--seed", str(params["seed"]),
        "--backend", params["backend"],
        "--mu0", str(params["mu0"]),
        "--sigma0", str(params["sigma0"]),
        "--report", args.report,
    ]
    if params["endpoint"]:
        argv += ["--endpoint", params["endpoint"]]
    pyramid = params["pyramid"]
    if pyramid is None:
        argv += ["--no-pyramid"]
    else:
        argv += [
            "--pyramid-phases", str(pyramid["phases"]),
            "--alpha", str(pyramid["alpha"]),
            "--gamma-pert", str(pyramid["gamma"]),
            "--d-pert", str(pyramid["distance"]),
            "--tp", *[str(t) for t in pyramid["refine_times"]],
        ]
    code = main(argv)
    if code != 0:
        return code
    digest = _sha256(Path(args.out))
    match = digest == manifest["outputs"]["sha256"]
    _emit({"replay_match": str(match).lower(), "sha256": digest}, args.report)
    return 0 if match else 1


def _cmd_render(args) -> int:
    from PIL import Image

    tensor = dtxl.read_dtxl(args.infile)
    if tensor.ndim == 2:
        tensor = tensor[..., None]
    if tensor.ndim != 3 or tensor.shape[2] not in (1, 3):
        print(
            f"error: rank/channels {tensor.shape} unsupported for rendering",
            file=sys.stderr,
        )
        return 1
    lo = tensor.min(axis=(0, 1), keepdims=True)
    hi = tensor.max(axis=(0, 1), keepdims=True)
    span = np.where(hi > lo, hi - lo, 1.0)
    quantized = np.clip(
        np.floor((tensor - lo) / span * 255.0 + 0.5), 0, 255
    ).astype(np.uint8)
    if quantized.shape[2] == 1:
        image = Image.fromarray(quantized[..., 0], mode="L")
    else:
        image = Image.fromarray(quantized, mode="RGB")
    image.save(args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenediff",
        description="Large-scene diffusion orchestration over keypoint-box layouts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    layout = sub.add_parser("layout", help="layout tooling")
    layout_sub = layout.add_subparsers(dest="layout_command", required=True)

    validate = layout_sub.add_parser("validate", help="check a layout file")
    validate.add_argument("file")
    validate.add_argument("--report", choices=("kv", "json"), default="kv")
    validate.set_defaults(func=_cmd_layout_validate)

    metrics = layout_sub.add_parser("metrics", help="layout-quality metrics")
    metrics.add_argument("file")
    metrics.add_argument(
        "--expected", nargs="*", metavar="CAT=N",
        help="expected counts, e.g. humans=3 groups=1",
    )
    metrics.add_argument("--spatial", choices=("left", "right"))
    metrics.add_argument("--report", choices=("kv", "json"), default="kv")
    metrics.set_defaults(func=_cmd_layout_metrics)

    synth = layout_sub.add_parser("synth", help="deterministic layout synthesis")
    synth.add_argument("--groups", type=int, default=0)
    synth.add_argument("--humans", type=int, default=0)
    synth.add_argument("--objects", type=int, default=0)
    synth.add_argument("--canvas", type=_parse_wh, default=(640, 480))
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out")
    synth.set_defaults(func=_cmd_layout_synth)

    generate = sub.add_parser("generate", help="run the full synthesis stack")
    generate.add_argument("--layout")
    generate.add_argument("--canvas", type=_parse_wh,
                          help="pixel canvas WxH (default: layout canvas)")
    generate.add_argument("--window", type=int, default=512,
                          help="window size in pixels")
    generate.add_argument("--stride", type=int, default=256,
                          help="window stride in pixels")
    generate.add_argument("--latent-scale", type=int, default=8)
    generate.add_argument("--steps", type=int, default=50)
    generate.add_argument("--channels", type=int, default=1)
    generate.add_argument("--eta", type=float, default=0.0)
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument(
        "--backend", choices=("analytic", "zero", "mock", "external"),
        default="analytic",
    )
    generate.add_argument("--endpoint",
                          help="external service (DTS_ENDPOINT overrides)")
    generate.add_argument("--mu0", type=float, default=0.0)
    generate.add_argument("--sigma0", type=float, default=1.0)
    generate.add_argument("--pyramid-phases", type=int, default=2)
    generate.add_argument("--alpha", type=float, default=2.0)
    generate.add_argument("--gamma-pert", type=float, default=0.05)
    generate.add_argument("--d-pert", type=int, default=1)
    generate.add_argument("--tp", type=float, nargs="+",
                          help="normalized refinement timesteps per phase")
    generate.add_argument("--no-pyramid", action="store_true",
                          help="single-resolution joint run only")
    generate.add_argument("--out", required=True)
    generate.add_argument("--manifest")
    generate.add_argument("--report", choices=("kv", "json"), default="kv")
    generate.set_defaults(func=_cmd_generate)

    replay = sub.add_parser("replay", help="re-run a manifest and verify digest")
    replay.add_argument("manifest_file")
    replay.add_argument("--out", required=True)
    replay.add_argument("--report", choices=("kv", "json"), default="kv")
    replay.set_defaults(func=_cmd_replay)

    render = sub.add_parser("render", help="render a tensor file to an image")
    render.add_argument("--in", dest="infile", required=True)
    render.add_argument("--out", required=True)
    render.set_defaults(func=_cmd_render)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SceneDiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
