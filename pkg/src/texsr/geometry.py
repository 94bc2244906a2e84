"""UV-parameterized meshes, atlas rasterization, and normal-map baking.

The texture atlas is a regular texel grid over the UV square. Rasterizing
it produces, per texel, the face and barycentric coordinates of the texel
center together with the interpolated surface point and normal. That
correspondence is what every downstream stage (projection operators,
retrieval, normal maps) is built on.

Conventions used throughout the package:

* arrays are indexed ``[row, col]`` = ``[j, i]`` with texel ``(i, j)``
  centered at ``(u, v) = ((i + 0.5) / width, (j + 0.5) / height)``;
* linear texel index is ``j * width + i``;
* boundary texels are assigned by a top-left fill rule so that charts
  sharing an edge partition the boundary exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DegenerateAtlasError,
    EmptyMeshError,
    InvalidSizeError,
    MeshParseError,
    MissingAttributeError,
    NumericalError,
)

logger = logging.getLogger(__name__)

# UV triangles with area at or below this are skipped during rasterization.
DEGENERATE_UV_AREA = 1e-12


@dataclass
class TriangleMesh:
    """Triangulated mesh with positions, UVs, and unit normals.

    ``faces`` has shape (F, 3, 3): per face, per corner, the indices
    (vertex, uv, normal) into the respective attribute arrays.
    """

    vertices: np.ndarray
    uvs: np.ndarray
    normals: np.ndarray
    faces: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def stats(self) -> dict:
        """Summary counts for a `stats` query."""
        return {
            "vertices": self.n_vertices,
            "uvs": len(self.uvs),
            "normals": len(self.normals),
            "faces": self.n_faces,
        }


@dataclass
class TexelAtlasMap:
    """Per-texel surface correspondence produced by :func:`rasterize_atlas`.

    Grids are (height, width); ``face_index`` is -1 where no sample
    exists and ``mask`` is true exactly where one does. ``positions`` and
    ``normals`` are only meaningful under the mask.
    """

    width: int
    height: int
    face_index: np.ndarray
    bary: np.ndarray
    positions: np.ndarray
    normals: np.ndarray
    mask: np.ndarray
    mesh: TriangleMesh = field(repr=False)
    degenerate_uv_count: int = 0

    @property
    def active_count(self) -> int:
        return int(self.mask.sum())

    @property
    def texel_count(self) -> int:
        return self.width * self.height

    def active_indices(self) -> np.ndarray:
        """Linear indices (j * width + i) of active texels, ascending."""
        return np.flatnonzero(self.mask.ravel())


@dataclass
class NormalMapImage:
    """8-bit RGBA normal map; alpha is the active-texel mask (0 or 255)."""

    channels: np.ndarray

    @property
    def width(self) -> int:
        return self.channels.shape[1]

    @property
    def height(self) -> int:
        return self.channels.shape[0]


# --------------------------------------------------------------------------
# OBJ loading
# --------------------------------------------------------------------------

def load_mesh(path) -> TriangleMesh:
    """Load a Wavefront OBJ mesh with full v/vt/vn face indices.

    Quads and larger polygons are fan-triangulated. Material, group, and
    smoothing directives are ignored. Normals are renormalized on load.

    Raises:
        FileNotFoundError: ``path`` does not exist.
        MeshParseError: malformed line (reported with its line number),
            out-of-range index, or zero-length normal.
        MissingAttributeError: a face corner lacks a vt or vn index.
        EmptyMeshError: the file defines no faces.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))

    vertices: list[list[float]] = []
    uvs: list[list[float]] = []
    normals: list[list[float]] = []
    faces: list[list[tuple[int, int, int]]] = []

    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            key, args = tokens[0], tokens[1:]
            try:
                if key == "v":
                    if len(args) < 3:
                        raise ValueError("vertex needs 3 coordinates")
                    vertices.append([float(a) for a in args[:3]])
                elif key == "vt":
                    if len(args) < 2:
                        raise ValueError("texture coordinate needs 2 values")
                    uvs.append([float(a) for a in args[:2]])
                elif key == "vn":
                    if len(args) < 3:
                        raise ValueError("normal needs 3 coordinates")
                    normals.append([float(a) for a in args[:3]])
                elif key == "f":
                    if len(args) < 3:
                        raise ValueError("face needs at least 3 corners")
                    corners = [_parse_corner(tok, lineno, path) for tok in args]
                    for k in range(1, len(corners) - 1):
                        faces.append([corners[0], corners[k], corners[k + 1]])
                # mtllib/usemtl/o/g/s and anything else: ignored
            except MissingAttributeError:
                raise
            except ValueError as exc:
                raise MeshParseError(str(exc), path=path, line=lineno) from exc

    if not faces:
        raise EmptyMeshError(f"no faces in {path}")

    mesh = TriangleMesh(
        vertices=np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
        uvs=np.asarray(uvs, dtype=np.float64).reshape(-1, 2),
        normals=np.asarray(normals, dtype=np.float64).reshape(-1, 3),
        faces=np.asarray(faces, dtype=np.int64),
    )
    _validate_indices(mesh, path)

    norms = np.linalg.norm(mesh.normals, axis=1)
    if np.any(norms < 1e-12):
        bad = int(np.argmin(norms))
        raise MeshParseError(f"normal {bad} has zero length", path=path)
    mesh.normals /= norms[:, None]
    return mesh


def _parse_corner(token: str, lineno: int, path) -> tuple[int, int, int]:
    parts = token.split("/")
    if len(parts) != 3 or not parts[1] or not parts[2]:
        raise MissingAttributeError(
            f"face corner '{token}' must carry v/vt/vn indices "
            f"[{path}:{lineno}]"
        )
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise MeshParseError(
            f"invalid face corner '{token}'", path=path, line=lineno
        ) from exc


def _validate_indices(mesh: TriangleMesh, path) -> None:
    counts = (len(mesh.vertices), len(mesh.uvs), len(mesh.normals))
    idx = mesh.faces.copy()
    for k, n in enumerate(counts):
        col = idx[:, :, k]
        col[col < 0] += n + 1  # OBJ negative indices count from the end
        if np.any(col < 1) or np.any(col > n):
            raise MeshParseError(
                f"face index out of range for attribute {k}", path=path
            )
    mesh.faces = idx - 1  # store 0-based


# --------------------------------------------------------------------------
# Triangle coverage (shared with the depth rasterizer in `formation`)
# --------------------------------------------------------------------------

def _is_top_left(ax, ay, bx, by) -> bool:
    dy = by - ay
    dx = bx - ax
    return dy < 0 or (dy == 0 and dx < 0)


def triangle_coverage(tri: np.ndarray, width: int, height: int,
                      offset: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Samples of a regular grid covered by a 2D triangle.

    Sample ``(i, j)`` lies at ``(i + offset, j + offset)``; the atlas uses
    ``offset=0.5`` (texel centers), the screen rasterizer ``offset=0.0``
    (integer pixel centers). Boundary samples follow a top-left fill rule,
    so adjacent triangles sharing an edge partition its samples exactly.

    Returns ``(ii, jj, bary)`` where ``bary`` rows are the barycentric
    coordinates in the order of ``tri``'s corners. Degenerate (zero-area)
    triangles cover nothing.
    """
    v = np.asarray(tri, dtype=np.float64)
    area2 = (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - \
            (v[1, 1] - v[0, 1]) * (v[2, 0] - v[0, 0])
    flipped = False
    if area2 < 0:
        v = v[[0, 2, 1]]
        area2 = -area2
        flipped = True
    empty = (np.empty(0, np.int64), np.empty(0, np.int64), np.empty((0, 3)))
    if area2 == 0.0:
        return empty

    i0 = max(0, math.ceil(v[:, 0].min() - offset))
    i1 = min(width - 1, math.floor(v[:, 0].max() - offset))
    j0 = max(0, math.ceil(v[:, 1].min() - offset))
    j1 = min(height - 1, math.floor(v[:, 1].max() - offset))
    if i1 < i0 or j1 < j0:
        return empty

    xs = np.arange(i0, i1 + 1, dtype=np.float64) + offset
    ys = np.arange(j0, j1 + 1, dtype=np.float64) + offset
    px, py = np.meshgrid(xs, ys)

    # Edge k runs opposite corner k; w_k is proportional to bary_k.
    edges = ((1, 2), (2, 0), (0, 1))
    inside = np.ones(px.shape, dtype=bool)
    w = np.empty((3,) + px.shape)
    for k, (a, b) in enumerate(edges):
        ax, ay = v[a]
        bx, by = v[b]
        wk = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        if _is_top_left(ax, ay, bx, by):
            inside &= wk >= 0
        else:
            inside &= wk > 0
        w[k] = wk

    jj, ii = np.nonzero(inside)
    if len(ii) == 0:
        return empty
    bary = w[:, jj, ii].T / area2
    if flipped:
        bary = bary[:, [0, 2, 1]]
    return ii + i0, jj + j0, bary


# --------------------------------------------------------------------------
# Atlas rasterization
# --------------------------------------------------------------------------

def rasterize_atlas(mesh: TriangleMesh, width: int, height: int) -> TexelAtlasMap:
    """Sample every UV chart of ``mesh`` onto a ``width`` x ``height`` grid.

    A texel belongs to a chart iff its center lies inside the UV triangle
    (top-left rule on boundaries). Overlapping charts resolve to the
    lowest face index. UV triangles with area <= 1e-12 are skipped and
    counted in ``degenerate_uv_count``.

    Raises:
        InvalidSizeError: width or height < 1.
        DegenerateAtlasError: zero texels covered.
    """
    if width < 1 or height < 1:
        raise InvalidSizeError(f"atlas size {width}x{height} is invalid")

    face_index = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3))
    positions = np.zeros((height, width, 3))
    normals = np.zeros((height, width, 3))
    degenerate = 0

    scale = np.array([width, height], dtype=np.float64)
    for f in range(len(mesh.faces)):
        corners = mesh.faces[f]
        uv = mesh.uvs[corners[:, 1]]
        area = 0.5 * abs(
            (uv[1, 0] - uv[0, 0]) * (uv[2, 1] - uv[0, 1])
            - (uv[1, 1] - uv[0, 1]) * (uv[2, 0] - uv[0, 0])
        )
        if area <= DEGENERATE_UV_AREA:
            degenerate += 1
            continue
        ii, jj, b = triangle_coverage(uv * scale, width, height, offset=0.5)
        if len(ii) == 0:
            continue
        free = face_index[jj, ii] < 0
        ii, jj, b = ii[free], jj[free], b[free]
        if len(ii) == 0:
            continue
        face_index[jj, ii] = f
        bary[jj, ii] = b
        positions[jj, ii] = b @ mesh.vertices[corners[:, 0]]
        n = b @ mesh.normals[corners[:, 2]]
        norm = np.linalg.norm(n, axis=1)
        if np.any(norm < 1e-12):
            raise NumericalError(
                f"interpolated normal vanishes on face {f}"
            )
        normals[jj, ii] = n / norm[:, None]

    if degenerate:
        logger.warning("skipped %d degenerate UV triangles", degenerate)

    mask = face_index >= 0
    if not mask.any():
        raise DegenerateAtlasError("no texel center falls inside any UV chart")

    return TexelAtlasMap(
        width=width,
        height=height,
        face_index=face_index,
        bary=bary,
        positions=positions,
        normals=normals,
        mask=mask,
        mesh=mesh,
        degenerate_uv_count=degenerate,
    )


# --------------------------------------------------------------------------
# Normal maps
# --------------------------------------------------------------------------

def bake_normal_map(atlas: TexelAtlasMap) -> NormalMapImage:
    """Encode atlas normals into an RGBA image.

    Active texels store ``round((n + 1) / 2 * 255)`` per component
    (round half up) with alpha 255; inactive texels are (0, 0, 0, 0).
    """
    channels = np.zeros((atlas.height, atlas.width, 4), dtype=np.uint8)
    m = atlas.mask
    encoded = np.floor((atlas.normals[m] + 1.0) / 2.0 * 255.0 + 0.5)
    channels[m, :3] = np.clip(encoded, 0, 255).astype(np.uint8)
    channels[m, 3] = 255
    return NormalMapImage(channels=channels)


def decode_normal_map(nm: NormalMapImage) -> tuple[np.ndarray, np.ndarray]:
    """Invert the encoding: returns (normals, mask)."""
    mask = nm.channels[:, :, 3] == 255
    normals = nm.channels[:, :, :3].astype(np.float64) / 255.0 * 2.0 - 1.0
    normals[~mask] = 0.0
    return normals, mask


def write_normal_map(nm: NormalMapImage, path) -> None:
    Image.fromarray(nm.channels, mode="RGBA").save(path)


def read_normal_map(path) -> NormalMapImage:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGBA"), dtype=np.uint8)
    return NormalMapImage(channels=arr.copy())
