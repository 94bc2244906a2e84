"""Per-view sparse projection operators: texture map -> image.

Building an operator runs three stages: a z-buffer over the rasterized
mesh decides visibility, every visible texel scatters a truncated
Gaussian footprint around its continuous projection, and each pixel's
weights are normalized to sum to one. The resulting matrix is applied
forward (render) and adjoint (accumulate) by all retrieval and
super-resolution solvers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .camera import CameraView, project_points
from .errors import DataError, DimensionMismatchError, EmptyOperatorError
from .geometry import TexelAtlasMap, TriangleMesh, triangle_coverage

CACHE_MAGIC = b"TXOP"
CACHE_VERSION = 1


@dataclass
class SplatConfig:
    """Free parameters of the Gaussian footprint and visibility test."""

    sigma: float = 0.5
    radius: int = 2
    depth_epsilon: float = 1e-3

    def __post_init__(self):
        if self.sigma <= 0:
            raise DataError(f"sigma must be positive, got {self.sigma}")
        if self.radius < 1 or int(self.radius) != self.radius:
            raise DataError(f"radius must be an integer >= 1, got {self.radius}")
        if not 0 < self.depth_epsilon < 0.1:
            raise DataError(
                f"depth_epsilon must be in (0, 0.1), got {self.depth_epsilon}"
            )


@dataclass
class ViewImage:
    """RGB image in [0, 1] with a per-pixel coverage flag."""

    rgb: np.ndarray
    coverage: np.ndarray

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @classmethod
    def full(cls, rgb: np.ndarray) -> "ViewImage":
        """Wrap a fully-covered image (e.g. a photograph from disk)."""
        rgb = np.asarray(rgb, dtype=np.float64)
        return cls(rgb=rgb, coverage=np.ones(rgb.shape[:2], dtype=bool))


@dataclass
class SparseProjectionOperator:
    """Row-stochastic sparse map from atlas texels to view pixels.

    ``matrix`` is CSR with one row per pixel (row-major over the view)
    and one column per atlas texel; only active texels are referenced.
    """

    matrix: sp.csr_matrix = field(repr=False)
    view: CameraView
    atlas_width: int
    atlas_height: int

    @property
    def texel_count(self) -> int:
        return self.matrix.shape[1]

    @property
    def pixel_count(self) -> int:
        return self.matrix.shape[0]

    def row(self, pixel_index: int) -> tuple[np.ndarray, np.ndarray]:
        """(texel indices, weights) of one pixel's row."""
        start, end = self.matrix.indptr[pixel_index:pixel_index + 2]
        return self.matrix.indices[start:end], self.matrix.data[start:end]

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def column_totals(self) -> np.ndarray:
        """Per-texel sum of weights over all pixels."""
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def coverage(self) -> np.ndarray:
        """Boolean (height, width) plane of non-empty rows."""
        nonempty = np.diff(self.matrix.indptr) > 0
        return nonempty.reshape(self.view.height, self.view.width)


# --------------------------------------------------------------------------
# Stage 1: visibility
# --------------------------------------------------------------------------

def render_depth(mesh: TriangleMesh, cam: CameraView) -> np.ndarray:
    """Per-pixel minimum camera-space depth of the rasterized mesh.

    Pixels seeing no geometry hold +inf. Depth is interpolated
    perspective-correct (linear in 1/z); coverage uses the same top-left
    rule as the atlas rasterizer, sampled at integer pixel centers.
    Faces with any corner at or behind the camera plane are dropped
    (no near-plane clipping).
    """
    pixels, depths, in_front = project_points(cam, mesh.vertices)
    zbuf = np.full((cam.height, cam.width), np.inf)
    for f in range(len(mesh.faces)):
        vidx = mesh.faces[f][:, 0]
        if not in_front[vidx].all():
            continue
        ii, jj, b = triangle_coverage(pixels[vidx], cam.width, cam.height,
                                      offset=0.0)
        if len(ii) == 0:
            continue
        inv_z = b @ (1.0 / depths[vidx])
        np.minimum.at(zbuf, (jj, ii), 1.0 / inv_z)
    return zbuf


# --------------------------------------------------------------------------
# Stages 2 + 3: scatter and normalize
# --------------------------------------------------------------------------

def build_operator(atlas: TexelAtlasMap, cam: CameraView,
                   cfg: SplatConfig | None = None) -> SparseProjectionOperator:
    """Build the projection operator of one view over one atlas.

    Every active texel is projected; if it is in front of the camera and
    passes the relative depth test against the z-buffer at a footprint
    pixel, it deposits ``exp(-d^2 / (2 sigma^2))`` there, ``d`` being the
    distance from its continuous projection to that pixel center. The
    footprint covers integer pixels within Chebyshev distance ``radius``,
    including pixels just inside the image when the projection itself
    falls outside. Per-pixel weights are then normalized to sum to one.

    Raises:
        EmptyOperatorError: no texel deposits anywhere (misconfigured
            camera).
    """
    cfg = cfg or SplatConfig()
    zbuf = render_depth(atlas.mesh, cam)

    active = atlas.active_indices()
    pts = atlas.positions.reshape(-1, 3)[active]
    pixels, depths, in_front = project_points(cam, pts)
    active = active[in_front]
    px, py = pixels[in_front, 0], pixels[in_front, 1]
    z = depths[in_front]

    fx = np.floor(px).astype(np.int64)
    fy = np.floor(py).astype(np.int64)
    r = cfg.radius
    inv_two_sigma2 = 1.0 / (2.0 * cfg.sigma * cfg.sigma)
    z_test = z * (1.0 - cfg.depth_epsilon)

    rows, cols, weights = [], [], []
    for my in range(-r, r + 2):
        qy = fy + my
        dy = qy - py
        for mx in range(-r, r + 2):
            qx = fx + mx
            dx = qx - px
            ok = (
                (np.abs(dx) <= r) & (np.abs(dy) <= r)
                & (qx >= 0) & (qx < cam.width)
                & (qy >= 0) & (qy < cam.height)
            )
            if not ok.any():
                continue
            qxo, qyo = qx[ok], qy[ok]
            visible = z_test[ok] <= zbuf[qyo, qxo]
            if not visible.any():
                continue
            d2 = dx[ok][visible] ** 2 + dy[ok][visible] ** 2
            rows.append(qyo[visible] * cam.width + qxo[visible])
            cols.append(active[ok][visible])
            weights.append(np.exp(-d2 * inv_two_sigma2))

    if not rows:
        raise EmptyOperatorError("no texel is visible in this view")
    matrix = sp.coo_matrix(
        (np.concatenate(weights),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(cam.height * cam.width, atlas.texel_count),
    ).tocsr()

    row_sums = np.asarray(matrix.sum(axis=1)).ravel()
    inv = np.zeros_like(row_sums)
    np.divide(1.0, row_sums, out=inv, where=row_sums > 0)
    matrix = sp.diags(inv) @ matrix
    matrix.sort_indices()
    return SparseProjectionOperator(
        matrix=matrix, view=cam,
        atlas_width=atlas.width, atlas_height=atlas.height,
    )


# --------------------------------------------------------------------------
# Forward / adjoint application
# --------------------------------------------------------------------------

@dataclass
class AdjointAccumulator:
    """Atlas-shaped sums of weighted pixel colors and of raw weights."""

    colors: np.ndarray
    weights: np.ndarray


def apply_forward(op: SparseProjectionOperator, texture) -> ViewImage:
    """Render a texture atlas through the operator.

    Raises:
        DimensionMismatchError: texture grid differs from the atlas the
            operator was built on.
    """
    rgb = texture.rgb
    if rgb.shape[:2] != (op.atlas_height, op.atlas_width):
        raise DimensionMismatchError(
            f"texture is {rgb.shape[1]}x{rgb.shape[0]}, operator expects "
            f"{op.atlas_width}x{op.atlas_height}"
        )
    flat = op.matrix @ rgb.reshape(-1, 3)
    return ViewImage(
        rgb=flat.reshape(op.view.height, op.view.width, 3),
        coverage=op.coverage(),
    )


def apply_adjoint(op: SparseProjectionOperator, image: ViewImage) -> AdjointAccumulator:
    """Accumulate weighted pixel colors back onto the atlas grid.

    Also returns per-texel weight totals, which backprojection divides by.

    Raises:
        DimensionMismatchError: image size differs from the operator's view.
    """
    if image.rgb.shape[:2] != (op.view.height, op.view.width):
        raise DimensionMismatchError(
            f"image is {image.width}x{image.height}, operator expects "
            f"{op.view.width}x{op.view.height}"
        )
    colors = op.matrix.T @ image.rgb.reshape(-1, 3)
    return AdjointAccumulator(
        colors=colors.reshape(op.atlas_height, op.atlas_width, 3),
        weights=op.column_totals().reshape(op.atlas_height, op.atlas_width),
    )


# --------------------------------------------------------------------------
# Binary cache
# --------------------------------------------------------------------------

_ENTRY_DTYPE = np.dtype([("idx", "<u4"), ("w", "<f8")])


def write_operator_cache(op: SparseProjectionOperator, path) -> None:
    """Serialize rows to the little-endian "TXOP" cache format."""
    m = op.matrix
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIQQ", CACHE_MAGIC, CACHE_VERSION,
                             m.shape[0], m.shape[1]))
        counts = np.diff(m.indptr)
        for p in range(m.shape[0]):
            fh.write(struct.pack("<I", int(counts[p])))
            start, end = m.indptr[p], m.indptr[p + 1]
            entries = np.empty(end - start, dtype=_ENTRY_DTYPE)
            entries["idx"] = m.indices[start:end]
            entries["w"] = m.data[start:end]
            fh.write(entries.tobytes())


def read_operator_cache(path, view: CameraView, atlas_width: int,
                        atlas_height: int) -> SparseProjectionOperator:
    """Load a cached operator; the caller supplies its view and atlas size.

    Raises:
        DataError: bad magic, unsupported version, or counts that do not
            match the supplied view/atlas.
    """
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sIQQ"))
        magic, version, pixel_count, texel_count = struct.unpack("<4sIQQ", header)
        if magic != CACHE_MAGIC:
            raise DataError(f"not an operator cache: bad magic {magic!r}")
        if version != CACHE_VERSION:
            raise DataError(f"unsupported operator cache version {version}")
        if pixel_count != view.width * view.height:
            raise DataError("cached pixel count does not match the view")
        if texel_count != atlas_width * atlas_height:
            raise DataError("cached texel count does not match the atlas")
        indptr = np.zeros(pixel_count + 1, dtype=np.int64)
        indices, data = [], []
        for p in range(pixel_count):
            (n,) = struct.unpack("<I", fh.read(4))
            entries = np.frombuffer(fh.read(n * _ENTRY_DTYPE.itemsize),
                                    dtype=_ENTRY_DTYPE)
            indptr[p + 1] = indptr[p] + n
            indices.append(entries["idx"].astype(np.int64))
            data.append(entries["w"].astype(np.float64))
    matrix = sp.csr_matrix(
        (np.concatenate(data) if data else np.empty(0),
         np.concatenate(indices) if indices else np.empty(0, np.int64),
         indptr),
        shape=(pixel_count, texel_count),
    )
    return SparseProjectionOperator(matrix=matrix, view=view,
                                    atlas_width=atlas_width,
                                    atlas_height=atlas_height)
