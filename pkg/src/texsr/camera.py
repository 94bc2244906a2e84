"""Calibrated views: RQ factorization, intrinsic scaling, projection.

A view is a 3x4 projection matrix factored as ``P = K [R | t]`` with K
upper triangular (positive diagonal, K[2,2] = 1) and R a proper rotation.
After that normalization the homogeneous scale of ``P @ [X; 1]`` equals
camera-space depth, which the projection-operator build relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import BehindCameraError, InvalidFactorError, MeshParseError, \
    SingularMatrixError

MIN_DEPTH = 1e-12


@dataclass
class CameraView:
    """A calibrated view; always constructed via the factory functions."""

    P: np.ndarray
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates (-R^T t)."""
        return -self.R.T @ self.t


@dataclass
class PixelProjection:
    """Continuous image location and positive camera-space depth."""

    pixel: np.ndarray
    depth: float


def camera_from_krt(K: np.ndarray, R: np.ndarray, t: np.ndarray,
                    width: int, height: int) -> CameraView:
    """Assemble a view from already-normalized intrinsics and pose."""
    K = np.asarray(K, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).reshape(3)
    Rt = np.concatenate([R, t[:, None]], axis=1)
    return CameraView(P=K @ Rt, K=K, R=R, t=t, width=width, height=height)


def decompose_projection(P: np.ndarray, width: int, height: int) -> CameraView:
    """Factor a 3x4 projection matrix into K, R, t by RQ decomposition.

    Sign ambiguities are resolved so K has a positive diagonal and R is a
    proper rotation; K is rescaled to K[2,2] = 1. The stored P is the
    exact product ``K @ [R | t]``, so its homogeneous scale is metric
    depth.

    Raises:
        SingularMatrixError: |det| of the left 3x3 block is below 1e-12
            relative to its norm cubed.
    """
    P = np.asarray(P, dtype=np.float64).reshape(3, 4)
    A = P[:, :3]
    det = np.linalg.det(A)
    norm = np.linalg.norm(A)
    if abs(det) < 1e-12 * max(norm, 1e-300) ** 3:
        raise SingularMatrixError("left 3x3 block of P is singular")

    # A projective flip keeps the final decomposition at det(R) = +1.
    if det < 0:
        P = -P
        A = -A

    K, R = scipy.linalg.rq(A)
    signs = np.sign(np.diag(K))
    signs[signs == 0] = 1.0
    S = np.diag(signs)
    K = K @ S
    R = S @ R

    K = K / K[2, 2]
    t = np.linalg.solve(K, P[:, 3] / np.linalg.norm(P[2, :3]))
    return camera_from_krt(K, R, t, width, height)


def scale_camera(cam: CameraView, factor: int) -> CameraView:
    """Derive the camera of a down-scaled image.

    Intrinsics are divided by the integer factor (focal lengths and
    principal point alike); pose is unchanged; the image size uses floor
    division. Factor 1 returns the input unchanged.

    Raises:
        InvalidFactorError: factor < 1 or not an integer.
    """
    if int(factor) != factor or factor < 1:
        raise InvalidFactorError(f"scale factor must be an integer >= 1, got {factor}")
    if factor == 1:
        return cam
    D = np.diag([1.0 / factor, 1.0 / factor, 1.0])
    return camera_from_krt(D @ cam.K, cam.R, cam.t,
                           cam.width // factor, cam.height // factor)


def project_point(cam: CameraView, X: np.ndarray) -> PixelProjection:
    """Project a world point; depth is camera-space z.

    Raises:
        BehindCameraError: depth <= 1e-12; the point cannot contribute
            to this view.
    """
    Xh = np.append(np.asarray(X, dtype=np.float64), 1.0)
    a, b, w = cam.P @ Xh
    if w <= MIN_DEPTH:
        raise BehindCameraError(f"point {X} has depth {w}")
    return PixelProjection(pixel=np.array([a / w, b / w]), depth=float(w))


def project_points(cam: CameraView, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection of an (N, 3) array.

    Returns (pixels (N, 2), depths (N,), in_front (N,) bool); pixels of
    points at or behind the camera plane are NaN.
    """
    X = np.asarray(X, dtype=np.float64).reshape(-1, 3)
    h = cam.P[:, :3] @ X.T + cam.P[:, 3:4]
    depths = h[2]
    in_front = depths > MIN_DEPTH
    with np.errstate(divide="ignore", invalid="ignore"):
        pixels = (h[:2] / depths).T
    pixels[~in_front] = np.nan
    return pixels, depths, in_front


# --------------------------------------------------------------------------
# On-disk format: three rows of four reals (row-major P), then "width height"
# --------------------------------------------------------------------------

def write_camera(cam: CameraView, path) -> None:
    """Serialize with 17 significant digits (lossless for float64)."""
    lines = [" ".join(format(v, ".17g") for v in row) for row in cam.P]
    lines.append(f"{cam.width} {cam.height}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_camera(path) -> CameraView:
    """Parse a camera file and refactor its projection matrix.

    Raises:
        FileNotFoundError: path does not exist.
        MeshParseError: wrong row count or non-numeric fields.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    rows = [r.split() for r in path.read_text(encoding="ascii").splitlines() if r.strip()]
    if len(rows) != 4 or any(len(r) != 4 for r in rows[:3]) or len(rows[3]) != 2:
        raise MeshParseError("camera file must be 3 rows of 4 reals + 'width height'",
                             path=path)
    try:
        P = np.array([[float(v) for v in r] for r in rows[:3]])
        width, height = int(rows[3][0]), int(rows[3][1])
    except ValueError as exc:
        raise MeshParseError(f"invalid number in camera file: {exc}", path=path) from exc
    return decompose_projection(P, width, height)
