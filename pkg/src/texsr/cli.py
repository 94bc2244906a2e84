"""Command-line surface.

Thin orchestration over the library modules: every numeric decision
lives in the module it belongs to, the CLI only wires files to calls.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
failure. Logs go to stderr; artifact paths and metric lines to stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from . import dataset as ds
from .appearance_sr import (
    InterpKernel,
    KERNEL_KINDS,
    ModelSRConfig,
    model_sr_solve,
    upsample_interp,
    write_trace_csv,
)
from .camera import read_camera
from .errors import (
    DataError,
    ManifestError,
    NumericalError,
    UsageError,
)
from .formation import SplatConfig, apply_forward, build_operator
from .geometry import (
    bake_normal_map,
    load_mesh,
    rasterize_atlas,
    write_normal_map,
)
from .metrics import masked_psnr, masked_ssim, write_report_csv
from .retrieval import (
    RETRIEVAL_MODES,
    RetrievalConfig,
    read_texture,
    retrieve_backprojection,
    retrieve_least_squares,
    write_texture,
)

logger = logging.getLogger("texsr")


@dataclass
class CommandResult:
    exit_code: int
    messages: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="texsr", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for per-view stages")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed for any randomized stage")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_splat_flags(p):
        p.add_argument("--sigma", type=float, default=0.5)
        p.add_argument("--radius", type=int, default=2)
        p.add_argument("--depth-epsilon", type=float, default=1e-3)

    p = sub.add_parser("retrieve", help="recover a texture map from views")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scale", type=int, default=1, choices=(1, 2, 3, 4))
    p.add_argument("--mode", choices=RETRIEVAL_MODES, default=None,
                   help="default: the manifest's retrieval mode")
    p.add_argument("--lam", type=float, default=1e-3)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    add_splat_flags(p)

    p = sub.add_parser("render", help="reproject a texture into a view")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scale", type=int, default=1, choices=(1, 2, 3, 4))
    p.add_argument("--view", type=int, required=True)
    p.add_argument("--output", required=True)
    add_splat_flags(p)

    p = sub.add_parser("bake-normals", help="bake the per-texel normal map")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scale", type=int, default=1, choices=(1, 2, 3, 4))
    p.add_argument("--output", default=None,
                   help="default: the manifest's normal-map path")

    p = sub.add_parser("gen-lr", help="derive a low-resolution scene level")
    p.add_argument("--manifest", required=True)
    p.add_argument("--factor", type=int, required=True, choices=(2, 3, 4))
    add_splat_flags(p)

    p = sub.add_parser("upsample", help="interpolate a texture map up")
    p.add_argument("--input", required=True)
    p.add_argument("--input-mask", required=True)
    p.add_argument("--hr-mask", required=True)
    p.add_argument("--scale", type=int, required=True, choices=(2, 3, 4))
    p.add_argument("--method", choices=KERNEL_KINDS, default="bilinear")
    p.add_argument("--output", required=True)
    p.add_argument("--output-mask", default=None)

    p = sub.add_parser("model-sr", help="model-based texture SR from views")
    p.add_argument("--manifest", required=True)
    p.add_argument("--factor", type=int, required=True, choices=(2, 3, 4))
    p.add_argument("--lambda-tv", type=float, default=1e-2)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--output", required=True)
    p.add_argument("--output-mask", default=None)
    p.add_argument("--trace", default=None, help="objective trace CSV")
    add_splat_flags(p)

    p = sub.add_parser("evaluate", help="masked PSNR/SSIM of two textures")
    p.add_argument("--gt", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--mask", required=True, help="ground-truth mask PNG")
    p.add_argument("--test-mask", default=None,
                   help="default: same as --mask")
    p.add_argument("--scene", default="-")
    p.add_argument("--subset", default="custom")
    p.add_argument("--method", default="-")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--output", default=None, help="write a CSV report")

    p = sub.add_parser("validate-manifest", help="check a scene manifest")
    p.add_argument("--manifest", required=True)
    return parser


def _splat(args) -> SplatConfig:
    return SplatConfig(sigma=args.sigma, radius=args.radius,
                       depth_epsilon=args.depth_epsilon)


def _load_scale(manifest, scale):
    if scale not in manifest.scales:
        raise ManifestError(f"manifest has no scale-{scale} entry")
    entry = manifest.scales[scale]
    images = [ds.read_view_image(manifest.resolve(p)) for p in entry.images]
    cameras = [read_camera(manifest.resolve(p)) for p in entry.cameras]
    return entry, images, cameras


def _atlas_for_scale(manifest, scale):
    mesh = load_mesh(manifest.resolve(manifest.mesh))
    w = manifest.atlas_size[0] // scale
    h = manifest.atlas_size[1] // scale
    return rasterize_atlas(mesh, w, h)


def _cmd_retrieve(args, out: CommandResult):
    manifest = ds.read_manifest(args.manifest)
    entry, images, cameras = _load_scale(manifest, args.scale)
    atlas = _atlas_for_scale(manifest, args.scale)
    splat = _splat(args)
    ops = [build_operator(atlas, cam, splat) for cam in cameras]
    mode = args.mode or manifest.retrieval_mode
    if mode == "backprojection":
        result = retrieve_backprojection(ops, images, atlas,
                                         threads=args.threads)
    else:
        cfg = RetrievalConfig(mode="least_squares", lam=args.lam,
                              max_iters=args.max_iters, tol=args.tol)
        result = retrieve_least_squares(ops, images, atlas, cfg,
                                        threads=args.threads)
    tex_path = manifest.resolve(entry.texture)
    mask_path = manifest.resolve(entry.mask)
    write_texture(result.texture, tex_path, mask_path, bit_depth=16)
    out.messages.append(
        f"active={result.texture.active_count} unseen={result.unseen_count}"
    )
    out.artifacts += [tex_path, mask_path]


def _cmd_render(args, out: CommandResult):
    manifest = ds.read_manifest(args.manifest)
    entry, _, cameras = _load_scale(manifest, args.scale)
    if not 0 <= args.view < len(cameras):
        raise DataError(f"view index {args.view} out of range")
    texture = read_texture(manifest.resolve(entry.texture),
                           manifest.resolve(entry.mask))
    atlas = _atlas_for_scale(manifest, args.scale)
    op = build_operator(atlas, cameras[args.view], _splat(args))
    rendered = apply_forward(op, texture)
    arr = np.round(np.clip(rendered.rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    if not cv2.imwrite(str(args.output), arr[:, :, ::-1]):
        raise DataError(f"failed to write {args.output}")
    out.artifacts.append(Path(args.output))


def _cmd_bake_normals(args, out: CommandResult):
    manifest = ds.read_manifest(args.manifest)
    if args.scale not in manifest.scales and args.output is None:
        raise ManifestError(f"manifest has no scale-{args.scale} entry")
    atlas = _atlas_for_scale(manifest, args.scale)
    if args.output is not None:
        path = Path(args.output)
    else:
        path = manifest.resolve(manifest.scales[args.scale].normals)
    write_normal_map(bake_normal_map(atlas), path)
    out.artifacts.append(path)


def _cmd_gen_lr(args, out: CommandResult):
    manifest = ds.read_manifest(args.manifest)
    updated = ds.generate_lr_scene(manifest, args.factor,
                                   splat=_splat(args),
                                   threads=args.threads)
    entry = updated.scales[args.factor]
    out.messages.append(f"views={len(entry.images)}")
    out.artifacts += [updated.resolve(p) for p in
                      (entry.texture, entry.mask, entry.normals)]
    out.artifacts.append(Path(args.manifest))


def _read_mask_png(path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise FileNotFoundError(str(path))
    return raw > 127


def _cmd_upsample(args, out: CommandResult):
    lr = read_texture(args.input, args.input_mask)
    hr_mask = _read_mask_png(args.hr_mask)
    result = upsample_interp(lr, args.scale, InterpKernel(args.method),
                             hr_mask)
    write_texture(result, args.output, args.output_mask, bit_depth=16)
    out.artifacts.append(Path(args.output))
    if args.output_mask:
        out.artifacts.append(Path(args.output_mask))


def _cmd_model_sr(args, out: CommandResult):
    manifest = ds.read_manifest(args.manifest)
    entry, lr_images, lr_cameras = _load_scale(manifest, args.factor)
    atlas_hr = _atlas_for_scale(manifest, 1)
    lr_texture = read_texture(manifest.resolve(entry.texture),
                              manifest.resolve(entry.mask))
    init = upsample_interp(lr_texture, args.factor,
                           InterpKernel("bilinear"), atlas_hr.mask)
    splat = _splat(args)
    ops = [build_operator(atlas_hr, cam, splat) for cam in lr_cameras]
    cfg = ModelSRConfig(scale=args.factor, lambda_tv=args.lambda_tv,
                        step=args.step, max_iters=args.max_iters)
    result = model_sr_solve(lr_images, ops, init, cfg,
                            threads=args.threads)
    write_texture(result.texture, args.output, args.output_mask,
                  bit_depth=16)
    out.messages.append(
        f"iterations={result.iterations} "
        f"objective={result.trace[-1][2]:.6g} stalled={result.stalled}"
    )
    out.artifacts.append(Path(args.output))
    if args.output_mask:
        out.artifacts.append(Path(args.output_mask))
    if args.trace:
        write_trace_csv(result.trace, args.trace)
        out.artifacts.append(Path(args.trace))


def _cmd_evaluate(args, out: CommandResult):
    gt = read_texture(args.gt, args.mask)
    test = read_texture(args.test, args.test_mask or args.mask)
    psnr = masked_psnr(gt, test)
    ssim = masked_ssim(gt, test)
    active = int((gt.mask & test.mask).sum())
    row = {
        "scene": args.scene, "subset": args.subset, "method": args.method,
        "scale": args.scale, "psnr_db": repr(psnr), "ssim": repr(ssim),
        "active_texels": active,
    }
    out.messages.append(f"psnr={psnr!r} ssim={ssim!r}")
    out.messages.append(
        "scene,subset,method,scale,psnr_db,ssim,active_texels"
    )
    out.messages.append(",".join(str(row[k]) for k in (
        "scene", "subset", "method", "scale",
        "psnr_db", "ssim", "active_texels")))
    if args.output:
        write_report_csv([row], args.output)
        out.artifacts.append(Path(args.output))


def _cmd_validate_manifest(args, out: CommandResult):
    manifest = ds.read_manifest(args.manifest)
    ds.validate_manifest(manifest)
    out.messages.append(
        f"manifest ok: scene={manifest.scene} "
        f"scales={sorted(manifest.scales)}"
    )


_HANDLERS = {
    "retrieve": _cmd_retrieve,
    "render": _cmd_render,
    "bake-normals": _cmd_bake_normals,
    "gen-lr": _cmd_gen_lr,
    "upsample": _cmd_upsample,
    "model-sr": _cmd_model_sr,
    "evaluate": _cmd_evaluate,
    "validate-manifest": _cmd_validate_manifest,
}


def run_command(argv) -> CommandResult:
    """Execute one subcommand; never raises for expected failures."""
    parser = _build_parser()
    result = CommandResult(exit_code=0)
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help
            return CommandResult(exit_code=int(exc.code or 0))
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        if args.seed is not None:
            np.random.seed(args.seed)
        _HANDLERS[args.command](args, result)
    except UsageError as exc:
        logger.error("usage: %s", exc)
        result.exit_code = 1
    except (DataError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        result.exit_code = 2
    except NumericalError as exc:
        logger.error("%s", exc)
        result.exit_code = 3
    return result


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    result = run_command(sys.argv[1:] if argv is None else argv)
    for line in result.messages:
        print(line)
    for path in result.artifacts:
        print(f"artifact {path}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
