"""Generate a small synthetic scene with the Python package.

Usage: python3 make_scene.py OUTDIR

Builds a textured unit quad observed by a three-camera ring, lays the
scene out on disk (scale 1 plus a x2 level), and prints the manifest
path. The TypeScript tests consume the resulting files to check that
both toolchains agree on the on-disk formats.
"""

import sys
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from texsr.camera import camera_from_krt
from texsr.dataset import generate_lr_scene, init_scene
from texsr.formation import apply_forward, build_operator
from texsr.geometry import load_mesh, rasterize_atlas
from texsr.retrieval import TextureAtlas

QUAD_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
vt 0 0
vt 1 0
vt 1 1
vt 0 1
vn 0 0 1
f 1/1/1 2/2/1 3/3/1
f 1/1/1 3/3/1 4/4/1
"""


def make_camera(eye, target, f_px, width, height):
    eye = np.asarray(eye, float)
    f = np.asarray(target, float) - eye
    f /= np.linalg.norm(f)
    r = np.cross(f, np.array([0.0, 1.0, 0.0]))
    r /= np.linalg.norm(r)
    d = np.cross(f, r)
    R = np.stack([r, d, f])
    K = np.array([[f_px, 0.0, width / 2.0],
                  [0.0, f_px, height / 2.0],
                  [0.0, 0.0, 1.0]])
    return camera_from_krt(K, R, -R @ eye, width, height)


def main(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    mesh_path = out_dir / "quad.obj"
    mesh_path.write_text(QUAD_OBJ)

    atlas_size = 64
    mesh = load_mesh(mesh_path)
    atlas = rasterize_atlas(mesh, atlas_size, atlas_size)

    rng = np.random.default_rng(11)
    coarse = rng.uniform(0.1, 0.9, (8, 8, 3))
    rgb = uniform_filter(np.kron(coarse, np.ones((8, 8, 1))),
                         size=(5, 5, 1), mode="nearest")
    texture = TextureAtlas.build(rgb, atlas.mask)

    center = np.array([0.5, 0.5, 0.0])
    cams = []
    for k in range(3):
        ang = 2.0 * np.pi * k / 3
        eye = center + np.array([1.1 * np.cos(ang), 1.1 * np.sin(ang), 1.5])
        cams.append(make_camera(eye, center, 90.0, 80, 64))

    views = [apply_forward(build_operator(atlas, cam), texture)
             for cam in cams]
    manifest = init_scene(out_dir / "quadscene", "quadscene", "custom",
                          mesh_path, views, cams, (atlas_size, atlas_size))
    generate_lr_scene(manifest, 2)
    print(out_dir / "quadscene" / "manifest.json")


if __name__ == "__main__":
    main(Path(sys.argv[1]))
