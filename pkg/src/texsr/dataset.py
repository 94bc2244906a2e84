"""Multi-resolution scene layout: generation, description, validation.

A scene directory holds a mesh, per-scale view images and camera files,
and per-scale texture, mask, and normal maps::

    scene/
      manifest.json
      mesh.obj
      x1/ images/*.png  cams/*.txt  texture.png  mask.png  normals.png
      x2/ ...   x3/ ...   x4/ ...

The manifest is JSON with relative paths and a schema version. Scale s
images are floor(HR/s) per axis; the scale-s atlas is floor(atlas/s).
Generation stages everything in a temp directory and renames it into
place, and is fully deterministic, so regeneration is byte-identical.
"""

from __future__ import annotations

import json
import logging
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ._parallel import parallel_map
from .appearance_sr import _catmull_rom
from .camera import read_camera, scale_camera, write_camera
from .errors import (
    InvalidFactorError,
    ManifestError,
    ManifestParseError,
    MissingFileError,
    PartialWriteError,
    UnsupportedVersionError,
)
from .formation import SplatConfig, ViewImage, build_operator
from .geometry import (
    bake_normal_map,
    load_mesh,
    rasterize_atlas,
    write_normal_map,
)
from .retrieval import (
    RETRIEVAL_MODES,
    RetrievalConfig,
    retrieve_backprojection,
    retrieve_least_squares,
    write_texture,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DOWNSCALE_FACTORS = (2, 3, 4)
SUBSET_TAGS = ("ETH3D", "Collection", "MiddleBury", "SyB3R", "custom")


# --------------------------------------------------------------------------
# View image files (8-bit RGB)
# --------------------------------------------------------------------------

def write_view_image(img: ViewImage, path) -> None:
    arr = np.round(img.rgb * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(str(path), format="PNG")


def read_view_image(path) -> ViewImage:
    with Image.open(str(path)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return ViewImage.full(arr / 255.0)


# --------------------------------------------------------------------------
# Downscaling
# --------------------------------------------------------------------------

def downscale_image(img: ViewImage, factor: int) -> ViewImage:
    """Anti-aliased bicubic reduction to floor(size/factor).

    Output pixel x pulls from source coordinate (x + 0.5)*factor - 0.5
    with the Catmull-Rom cubic stretched by the factor. Taps outside the
    image or off the coverage are dropped and the remaining weights
    renormalized; an output pixel is covered when any tap was.
    """
    if factor not in DOWNSCALE_FACTORS:
        raise InvalidFactorError(
            f"factor must be one of {DOWNSCALE_FACTORS}, got {factor}"
        )
    in_h, in_w = img.rgb.shape[:2]
    out_w, out_h = in_w // factor, in_h // factor
    support = 2.0 * factor
    x_src = (np.arange(out_w) + 0.5) * factor - 0.5
    y_src = (np.arange(out_h) + 0.5) * factor - 0.5
    n_taps = int(np.floor(2 * support)) + 1
    base_x = np.ceil(x_src - support).astype(np.int64)
    base_y = np.ceil(y_src - support).astype(np.int64)

    num = np.zeros((out_h, out_w, 3))
    den = np.zeros((out_h, out_w))
    for ty in range(n_taps):
        ky = base_y + ty
        wy = _catmull_rom(np.abs(y_src - ky) / factor)
        in_y = (ky >= 0) & (ky < in_h)
        kyc = np.clip(ky, 0, in_h - 1)
        for tx in range(n_taps):
            kx = base_x + tx
            wx = _catmull_rom(np.abs(x_src - kx) / factor)
            in_x = (kx >= 0) & (kx < in_w)
            kxc = np.clip(kx, 0, in_w - 1)
            ok = (in_y[:, None] & in_x[None, :]
                  & img.coverage[kyc[:, None], kxc[None, :]])
            w = np.where(ok, wy[:, None] * wx[None, :], 0.0)
            num += w[:, :, None] * img.rgb[kyc[:, None], kxc[None, :]]
            den += w

    covered = den != 0
    rgb = np.zeros_like(num)
    np.divide(num, den[:, :, None], out=rgb, where=covered[:, :, None])
    return ViewImage(rgb=np.clip(rgb, 0.0, 1.0), coverage=covered)


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------

@dataclass
class ScaleEntry:
    """File paths (relative to the scene root) for one scale."""

    scale: int
    images: list
    cameras: list
    texture: str
    mask: str
    normals: str

    def to_dict(self):
        return {
            "scale": self.scale,
            "images": list(self.images),
            "cameras": list(self.cameras),
            "texture": self.texture,
            "mask": self.mask,
            "normals": self.normals,
        }


@dataclass
class SceneManifest:
    scene: str
    subset: str
    mesh: str
    atlas_size: tuple
    retrieval_mode: str
    scales: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION
    root: Path | None = None

    def __post_init__(self):
        if self.subset not in SUBSET_TAGS:
            raise ManifestError(f"unknown subset tag {self.subset!r}")
        if self.retrieval_mode not in RETRIEVAL_MODES:
            raise ManifestError(
                f"unknown retrieval mode {self.retrieval_mode!r}"
            )

    def resolve(self, rel) -> Path:
        if self.root is None:
            raise ManifestError("manifest has no root directory")
        return self.root / rel

    def to_dict(self):
        return {
            "format_version": self.format_version,
            "scene": self.scene,
            "subset": self.subset,
            "mesh": self.mesh,
            "atlas_size": [int(self.atlas_size[0]), int(self.atlas_size[1])],
            "retrieval_mode": self.retrieval_mode,
            "scales": {str(s): e.to_dict()
                       for s, e in sorted(self.scales.items())},
        }


def _entry_from_dict(raw, scale_key) -> ScaleEntry:
    try:
        entry = ScaleEntry(
            scale=int(raw["scale"]), images=list(raw["images"]),
            cameras=list(raw["cameras"]), texture=raw["texture"],
            mask=raw["mask"], normals=raw["normals"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestParseError(
            f"malformed scale entry {scale_key!r}: {exc}"
        ) from exc
    if entry.scale != scale_key:
        raise ManifestParseError(
            f"scale entry {scale_key!r} says scale {entry.scale}"
        )
    return entry


def read_manifest(path) -> SceneManifest:
    """Parse and structurally check a manifest file.

    File existence and dimension checks live in :func:`validate_manifest`.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(str(path))
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestParseError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise ManifestParseError(f"{path}: top level is not an object")
    try:
        version = int(raw["format_version"])
    except KeyError as exc:
        raise ManifestParseError(f"{path}: missing format_version") from exc
    except (TypeError, ValueError) as exc:
        raise ManifestParseError(f"{path}: bad format_version") from exc
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: format_version {version} (supported: {FORMAT_VERSION})"
        )
    try:
        scales = {int(k): _entry_from_dict(v, int(k))
                  for k, v in raw["scales"].items()}
        manifest = SceneManifest(
            scene=raw["scene"], subset=raw["subset"], mesh=raw["mesh"],
            atlas_size=(int(raw["atlas_size"][0]), int(raw["atlas_size"][1])),
            retrieval_mode=raw["retrieval_mode"], scales=scales,
            format_version=version, root=path.parent,
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ManifestParseError(f"{path}: {exc}") from exc
    if any(s not in (1, 2, 3, 4) for s in scales):
        raise ManifestParseError(f"{path}: scales must be within 1..4")
    if 1 not in scales:
        raise ManifestError(f"{path}: scale-1 entry is required")
    return manifest


def write_manifest(manifest: SceneManifest, path=None) -> Path:
    """Serialize to JSON, atomically (temp file + rename)."""
    if path is None:
        if manifest.root is None:
            raise ManifestError("no path given and manifest has no root")
        path = manifest.root / "manifest.json"
    path = Path(path)
    text = json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with open(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        Path(tmp).replace(path)
    except OSError:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def _png_size(path) -> tuple:
    with Image.open(str(path)) as im:
        return im.size  # (width, height)


def validate_manifest(manifest: SceneManifest, check_dims: bool = True):
    """Check referenced files exist and sizes follow the scale rules.

    Raises MissingFileError for the first absent file, ManifestError for
    structural or dimensional inconsistencies.
    """
    if 1 not in manifest.scales:
        raise ManifestError("scale-1 entry is required")
    mesh_path = manifest.resolve(manifest.mesh)
    if not mesh_path.is_file():
        raise MissingFileError(str(mesh_path))

    rel_paths = {}
    for s, entry in sorted(manifest.scales.items()):
        if len(entry.images) != len(entry.cameras):
            raise ManifestError(
                f"scale {s}: {len(entry.images)} images vs "
                f"{len(entry.cameras)} cameras"
            )
        rel_paths[s] = ([*entry.images, *entry.cameras,
                         entry.texture, entry.mask, entry.normals])
        for rel in rel_paths[s]:
            target = manifest.resolve(rel)
            if not target.is_file():
                raise MissingFileError(str(target))

    if not check_dims:
        return

    hr = manifest.scales[1]
    hr_sizes = [_png_size(manifest.resolve(p)) for p in hr.images]
    aw, ah = manifest.atlas_size
    for s, entry in sorted(manifest.scales.items()):
        if len(entry.images) != len(hr.images):
            raise ManifestError(
                f"scale {s}: view count differs from scale 1"
            )
        for idx, (img_rel, cam_rel) in enumerate(
                zip(entry.images, entry.cameras)):
            size = _png_size(manifest.resolve(img_rel))
            want = (hr_sizes[idx][0] // s, hr_sizes[idx][1] // s)
            if size != want:
                raise ManifestError(
                    f"scale {s} image {img_rel}: size {size}, want {want}"
                )
            cam = read_camera(manifest.resolve(cam_rel))
            if (cam.width, cam.height) != size:
                raise ManifestError(
                    f"scale {s} camera {cam_rel}: "
                    f"{(cam.width, cam.height)} does not match image {size}"
                )
        atlas_want = (aw // s, ah // s)
        for rel in (entry.texture, entry.mask, entry.normals):
            size = _png_size(manifest.resolve(rel))
            if size != atlas_want:
                raise ManifestError(
                    f"scale {s} map {rel}: size {size}, want {atlas_want}"
                )


# --------------------------------------------------------------------------
# Scene generation
# --------------------------------------------------------------------------

def _retrieve(mode, ops, images, atlas, threads):
    if mode == "backprojection":
        return retrieve_backprojection(ops, images, atlas,
                                       threads=threads).texture
    cfg = RetrievalConfig(mode="least_squares")
    return retrieve_least_squares(ops, images, atlas, cfg,
                                  threads=threads).texture


def _stage_scale_dir(root: Path, tag: str, build) -> None:
    """Run ``build(tmpdir)`` then move tmpdir into place as root/tag."""
    final = root / tag
    tmp = Path(tempfile.mkdtemp(dir=root, prefix=f".{tag}-"))
    try:
        build(tmp)
        if final.exists():
            shutil.rmtree(final)
        try:
            tmp.replace(final)
        except OSError as exc:
            raise PartialWriteError(
                f"could not move staged outputs into {final}: {exc}"
            ) from exc
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)


def _write_scale_files(tmp: Path, names, images, cameras, texture, atlas,
                       threads) -> None:
    (tmp / "images").mkdir()
    (tmp / "cams").mkdir()

    def one(item):
        name, img, cam = item
        write_view_image(img, tmp / "images" / f"{name}.png")
        write_camera(cam, tmp / "cams" / f"{name}.txt")

    parallel_map(one, list(zip(names, images, cameras)), threads)
    write_texture(texture, tmp / "texture.png", tmp / "mask.png",
                  bit_depth=16)
    write_normal_map(bake_normal_map(atlas), tmp / "normals.png")


def _entry_for(tag: str, scale: int, names) -> ScaleEntry:
    return ScaleEntry(
        scale=scale,
        images=[f"{tag}/images/{n}.png" for n in names],
        cameras=[f"{tag}/cams/{n}.txt" for n in names],
        texture=f"{tag}/texture.png",
        mask=f"{tag}/mask.png",
        normals=f"{tag}/normals.png",
    )


def init_scene(root, scene: str, subset: str, mesh_source,
               images: list, cameras: list, atlas_size: tuple,
               retrieval_mode: str = "backprojection",
               splat: SplatConfig | None = None,
               threads: int = 1) -> SceneManifest:
    """Lay out a new scene directory from views, cameras, and a mesh.

    Copies the mesh, writes the scale-1 images and cameras, retrieves
    the HR texture map, bakes the HR normal map, and writes the
    manifest. Returns the manifest with ``root`` set.
    """
    if len(images) != len(cameras):
        raise ManifestError(
            f"{len(images)} images vs {len(cameras)} cameras"
        )
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(str(mesh_source), root / "mesh.obj")

    mesh = load_mesh(root / "mesh.obj")
    atlas = rasterize_atlas(mesh, atlas_size[0], atlas_size[1])
    splat = splat or SplatConfig()
    ops = parallel_map(lambda cam: build_operator(atlas, cam, splat),
                       cameras, threads)
    texture = _retrieve(retrieval_mode, ops, images, atlas, threads)

    names = [f"view{idx:03d}" for idx in range(len(images))]
    _stage_scale_dir(
        root, "x1",
        lambda tmp: _write_scale_files(tmp, names, images, cameras,
                                       texture, atlas, threads),
    )
    manifest = SceneManifest(
        scene=scene, subset=subset, mesh="mesh.obj",
        atlas_size=(int(atlas_size[0]), int(atlas_size[1])),
        retrieval_mode=retrieval_mode,
        scales={1: _entry_for("x1", 1, names)}, root=root,
    )
    write_manifest(manifest)
    return manifest


def generate_lr_scene(manifest: SceneManifest, factor: int,
                      splat: SplatConfig | None = None,
                      threads: int = 1) -> SceneManifest:
    """Derive the x2/x3/x4 artifacts of a scene from its HR entry.

    Downscales every HR image, scales the cameras to match, retrieves
    the LR texture map on a floor(atlas/factor) atlas with the
    manifest's retrieval mode, and bakes the matching normal map. All
    outputs land under ``x{factor}/`` via a staged rename; the updated
    manifest is written and returned.
    """
    if factor not in DOWNSCALE_FACTORS:
        raise InvalidFactorError(
            f"factor must be one of {DOWNSCALE_FACTORS}, got {factor}"
        )
    if 1 not in manifest.scales:
        raise ManifestError("scale-1 entry is required")
    hr = manifest.scales[1]
    root = manifest.root

    mesh = load_mesh(manifest.resolve(manifest.mesh))
    lr_w = manifest.atlas_size[0] // factor
    lr_h = manifest.atlas_size[1] // factor
    atlas_lr = rasterize_atlas(mesh, lr_w, lr_h)

    def prep(pair):
        img_rel, cam_rel = pair
        img = read_view_image(manifest.resolve(img_rel))
        cam = read_camera(manifest.resolve(cam_rel))
        return downscale_image(img, factor), scale_camera(cam, factor)

    prepared = parallel_map(prep, list(zip(hr.images, hr.cameras)), threads)
    lr_images = [p[0] for p in prepared]
    lr_cameras = [p[1] for p in prepared]

    splat = splat or SplatConfig()
    ops = parallel_map(lambda cam: build_operator(atlas_lr, cam, splat),
                       lr_cameras, threads)
    texture = _retrieve(manifest.retrieval_mode, ops, lr_images,
                        atlas_lr, threads)

    names = [Path(p).stem for p in hr.images]
    tag = f"x{factor}"
    _stage_scale_dir(
        root, tag,
        lambda tmp: _write_scale_files(tmp, names, lr_images, lr_cameras,
                                       texture, atlas_lr, threads),
    )
    logger.info("wrote %s for scene %s (%d views)",
                tag, manifest.scene, len(names))
    manifest.scales[factor] = _entry_for(tag, factor, names)
    write_manifest(manifest)
    return manifest
