"""Shared synthetic scenes for the test suite.

Everything is built around two meshes: a unit quad in the z = 0 plane
whose UV chart fills the whole atlas, and a two-quad arrangement where
the nearer quad completely hides the farther one from any camera placed
above. Cameras are assembled from explicit K, R, t with a right-down-
forward frame, so every projected quantity has a closed form.
"""

import numpy as np
import pytest

from texsr.camera import camera_from_krt
from texsr.formation import apply_forward, build_operator
from texsr.geometry import TriangleMesh, rasterize_atlas
from texsr.retrieval import TextureAtlas

QUAD_OBJ = """\
# unit quad, one chart covering the whole atlas
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

TWO_QUAD_OBJ = """\
# far quad (z=0) occluded by a larger near quad (z=0.5) from above
v 0.2 0.2 0
v 0.8 0.2 0
v 0.8 0.8 0
v 0.2 0.8 0
v 0 0 0.5
v 1 0 0.5
v 1 1 0.5
v 0 1 0.5
vt 0 0
vt 0.45 0
vt 0.45 1
vt 0 1
vt 0.55 0
vt 1 0
vt 1 1
vt 0.55 1
vn 0 0 1
f 1/1/1 2/2/1 3/3/1
f 1/1/1 3/3/1 4/4/1
f 5/5/1 6/6/1 7/7/1
f 5/5/1 7/7/1 8/8/1
"""


def quad_mesh() -> TriangleMesh:
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float)
    vt = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    vn = np.array([[0.0, 0.0, 1.0]])
    faces = np.array(
        [[[0, 0, 0], [1, 1, 0], [2, 2, 0]],
         [[0, 0, 0], [2, 2, 0], [3, 3, 0]]], dtype=np.int64)
    return TriangleMesh(vertices=v, uvs=vt, normals=vn, faces=faces)


def two_quad_mesh() -> TriangleMesh:
    v = np.array([
        [0.2, 0.2, 0.0], [0.8, 0.2, 0.0], [0.8, 0.8, 0.0], [0.2, 0.8, 0.0],
        [0.0, 0.0, 0.5], [1.0, 0.0, 0.5], [1.0, 1.0, 0.5], [0.0, 1.0, 0.5],
    ])
    vt = np.array([
        [0.0, 0.0], [0.45, 0.0], [0.45, 1.0], [0.0, 1.0],
        [0.55, 0.0], [1.0, 0.0], [1.0, 1.0], [0.55, 1.0],
    ])
    vn = np.array([[0.0, 0.0, 1.0]])

    def quad(a, b, c, d):
        return [[[a, a, 0], [b, b, 0], [c, c, 0]],
                [[a, a, 0], [c, c, 0], [d, d, 0]]]

    faces = np.array(quad(0, 1, 2, 3) + quad(4, 5, 6, 7), dtype=np.int64)
    return TriangleMesh(vertices=v, uvs=vt, normals=vn, faces=faces)


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """Rotation/translation of a camera at ``eye`` looking at ``target``.

    Rows of R are (right, down, forward); det(R) = +1.
    """
    eye = np.asarray(eye, float)
    f = np.asarray(target, float) - eye
    f = f / np.linalg.norm(f)
    r = np.cross(f, np.asarray(up, float))
    if np.linalg.norm(r) < 1e-8:
        r = np.cross(f, np.array([0.0, 1.0, 0.001]))
    r = r / np.linalg.norm(r)
    d = np.cross(f, r)
    R = np.stack([r, d, f])
    return R, -R @ eye


def make_camera(eye, target, f_px, width, height):
    R, t = look_at(eye, target)
    K = np.array([[f_px, 0.0, width / 2.0],
                  [0.0, f_px, height / 2.0],
                  [0.0, 0.0, 1.0]])
    return camera_from_krt(K, R, t, width, height)


def ring_cameras(n, f_px, width, height, radius=1.2, elevation=1.6,
                 center=(0.5, 0.5, 0.0)):
    center = np.asarray(center, float)
    cams = []
    for k in range(n):
        ang = 2.0 * np.pi * k / n
        eye = center + np.array([radius * np.cos(ang),
                                 radius * np.sin(ang), elevation])
        cams.append(make_camera(eye, center, f_px, width, height))
    return cams


def checker(n, block):
    j, i = np.mgrid[0:n, 0:n]
    c = ((i // block + j // block) % 2).astype(float)
    return np.stack([c, 1.0 - c, np.full_like(c, 0.5)], axis=-1)


def smooth_texture(rng, n, coarse=8):
    """Band-limited random colors, clear of the [0, 1] clamp."""
    from scipy.ndimage import uniform_filter
    base = rng.uniform(0.1, 0.9, (coarse, coarse, 3))
    rep = int(np.ceil(n / coarse))
    up = np.kron(base, np.ones((rep, rep, 1)))[:n, :n]
    return uniform_filter(up, size=(5, 5, 1), mode="nearest")


def random_camera(rng, width=640, height=480):
    """A well-conditioned camera with generic K, R, t."""
    fx = rng.uniform(200.0, 2000.0)
    fy = rng.uniform(200.0, 2000.0)
    K = np.array([
        [fx, rng.uniform(-5.0, 5.0), rng.uniform(100.0, 1000.0)],
        [0.0, fy, rng.uniform(100.0, 1000.0)],
        [0.0, 0.0, 1.0],
    ])
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    t = rng.normal(scale=2.0, size=3)
    return camera_from_krt(K, Q, t, width, height)


class QuadScene:
    """A textured quad observed by a camera ring, fully wired."""

    def __init__(self, atlas_size=32, n_views=4, view_size=(96, 96),
                 f_px=110.0, texture_rgb=None, seed=0, splat=None,
                 radius=1.1, elevation=1.5):
        self.mesh = quad_mesh()
        self.atlas = rasterize_atlas(self.mesh, atlas_size, atlas_size)
        if texture_rgb is None:
            texture_rgb = smooth_texture(np.random.default_rng(seed),
                                         atlas_size)
        self.texture = TextureAtlas.build(texture_rgb, self.atlas.mask)
        self.cameras = ring_cameras(n_views, f_px, view_size[0],
                                    view_size[1], radius=radius,
                                    elevation=elevation)
        self.ops = [build_operator(self.atlas, cam, splat)
                    for cam in self.cameras]
        self.views = [apply_forward(op, self.texture) for op in self.ops]


@pytest.fixture(scope="session")
def quad_scene_small():
    """Shared read-only instance for cheap assertions."""
    return QuadScene()


@pytest.fixture(scope="session")
def quad_obj_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("mesh") / "quad.obj"
    path.write_text(QUAD_OBJ)
    return path


@pytest.fixture
def two_quad_obj_path(tmp_path):
    path = tmp_path / "two_quad.obj"
    path.write_text(TWO_QUAD_OBJ)
    return path
