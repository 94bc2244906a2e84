"""Texture recovery: invert the image-formation model.

Two routes: weighted backprojection (parameter-free; divides adjoint
color sums by weight totals) and a Tikhonov-regularized least-squares
refinement solved with CGLS on the stacked per-view operators,
initialized at the backprojection output. Both solve each color channel
independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import scipy.sparse as sp

from ._parallel import parallel_map
from .errors import (
    DataError,
    DimensionMismatchError,
    NoObservationsError,
    ViewMismatchError,
)
from .formation import SparseProjectionOperator, ViewImage, apply_adjoint
from .geometry import TexelAtlasMap

RETRIEVAL_MODES = ("backprojection", "least_squares")


@dataclass
class TextureAtlas:
    """Texel color grid in [0, 1] with an active mask.

    Colors are exactly zero outside the mask; construct through
    :meth:`build` to have that enforced.
    """

    rgb: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.rgb.shape[:2] != self.mask.shape or self.rgb.shape[2:] != (3,):
            raise DataError("texture rgb must be (H, W, 3) matching the mask")
        if self.rgb.min() < 0.0 or self.rgb.max() > 1.0:
            raise DataError("texture colors must lie in [0, 1]")
        if np.any(self.rgb[~self.mask] != 0.0):
            raise DataError("texture colors must be zero outside the mask")

    @classmethod
    def build(cls, rgb: np.ndarray, mask: np.ndarray) -> "TextureAtlas":
        """Clamp to [0, 1], zero outside the mask, and construct."""
        rgb = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
        mask = np.asarray(mask, dtype=bool)
        rgb = np.where(mask[:, :, None], rgb, 0.0)
        return cls(rgb=rgb, mask=mask)

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def active_count(self) -> int:
        return int(self.mask.sum())


@dataclass
class RetrievalConfig:
    """Solver knobs; ``lam`` is the Tikhonov weight toward the initializer."""

    mode: str = "backprojection"
    lam: float = 1e-3
    max_iters: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if self.mode not in RETRIEVAL_MODES:
            raise DataError(f"unknown retrieval mode {self.mode!r}")
        if self.lam < 0:
            raise DataError("lambda must be >= 0")
        if self.max_iters < 0 or int(self.max_iters) != self.max_iters:
            raise DataError("max_iters must be an integer >= 0")
        if self.tol <= 0:
            raise DataError("tol must be > 0")


@dataclass
class BackprojectionResult:
    texture: TextureAtlas
    seen: np.ndarray
    unseen_count: int


@dataclass
class LeastSquaresResult:
    texture: TextureAtlas
    seen: np.ndarray
    unseen_count: int
    converged: bool
    iterations: int
    residual_norms: list = field(default_factory=list)


def _check_aligned(ops, images):
    if len(ops) != len(images):
        raise ViewMismatchError(
            f"{len(ops)} operators vs {len(images)} images"
        )
    if not ops:
        raise ViewMismatchError("need at least one view")
    for op, img in zip(ops, images):
        if img.rgb.shape[:2] != (op.view.height, op.view.width):
            raise DimensionMismatchError(
                f"image {img.width}x{img.height} does not match view "
                f"{op.view.width}x{op.view.height}"
            )


def retrieve_backprojection(
    ops: list[SparseProjectionOperator],
    images: list[ViewImage],
    atlas: TexelAtlasMap,
    threads: int = 1,
) -> BackprojectionResult:
    """Weighted average of every observation of every texel.

    Per active texel: sum of weight-scaled pixel colors over all views,
    divided by the summed weights. Active texels observed by no view stay
    black but keep their mask bit; their count is reported.

    Raises:
        ViewMismatchError: list lengths differ.
        NoObservationsError: every active texel is unseen.
    """
    _check_aligned(ops, images)
    partials = parallel_map(
        lambda pair: apply_adjoint(pair[0], pair[1]),
        list(zip(ops, images)),
        threads,
    )
    colors = np.zeros((atlas.height, atlas.width, 3))
    weights = np.zeros((atlas.height, atlas.width))
    for acc in partials:  # ascending view order
        colors += acc.colors
        weights += acc.weights

    seen = atlas.mask & (weights > 0)
    unseen_count = int(atlas.mask.sum() - seen.sum())
    if unseen_count == atlas.mask.sum():
        raise NoObservationsError("no active texel is observed by any view")

    rgb = np.zeros_like(colors)
    np.divide(colors, weights[:, :, None], out=rgb,
              where=seen[:, :, None])
    texture = TextureAtlas.build(rgb, atlas.mask)
    return BackprojectionResult(texture=texture, seen=seen,
                                unseen_count=unseen_count)


def retrieve_least_squares(
    ops: list[SparseProjectionOperator],
    images: list[ViewImage],
    atlas: TexelAtlasMap,
    cfg: RetrievalConfig,
    threads: int = 1,
) -> LeastSquaresResult:
    """CGLS refinement of the backprojection estimate.

    Minimizes ``sum_i ||P_i T - H_i||^2 + lam ||T - T0||^2`` over the
    observed texels, one channel at a time, where T0 is the
    backprojection output. Unobserved texels are excluded from the solve
    and keep their initializer. Residual norms are recorded per channel
    and are nonincreasing; an iteration that would increase the residual
    (floating-point stagnation) ends the solve at the previous iterate.
    Non-convergence is reported through ``converged``, never raised.
    """
    if cfg.mode != "least_squares":
        raise DataError("cfg.mode must be 'least_squares'")
    init = retrieve_backprojection(ops, images, atlas, threads=threads)
    seen_flat = np.flatnonzero(init.seen.ravel())

    if cfg.max_iters == 0:
        return LeastSquaresResult(
            texture=init.texture, seen=init.seen,
            unseen_count=init.unseen_count, converged=False, iterations=0,
            residual_norms=[],
        )

    A = sp.vstack([op.matrix for op in ops], format="csr")[:, seen_flat]
    y = np.concatenate([img.rgb.reshape(-1, 3) for img in images], axis=0)
    t0 = init.texture.rgb.reshape(-1, 3)[seen_flat]
    sqrt_lam = np.sqrt(cfg.lam)

    solution = t0.copy()
    residual_norms = []
    converged = True
    iterations = 0
    for c in range(3):
        x, norms, ok, iters = _cgls(A, y[:, c], t0[:, c], sqrt_lam,
                                    cfg.max_iters, cfg.tol)
        solution[:, c] = x
        residual_norms.append(norms)
        converged &= ok
        iterations = max(iterations, iters)

    rgb = init.texture.rgb.copy()
    rgb.reshape(-1, 3)[seen_flat] = solution
    texture = TextureAtlas.build(rgb, atlas.mask)
    return LeastSquaresResult(
        texture=texture, seen=init.seen, unseen_count=init.unseen_count,
        converged=converged, iterations=iterations,
        residual_norms=residual_norms,
    )


def _cgls(A, y, x0, sqrt_lam, max_iters, tol):
    """CGLS on the augmented system [A; sqrt_lam I] x = [y; sqrt_lam x0]."""
    x = x0.copy()
    r_top = y - A @ x
    r_bot = np.zeros_like(x0)  # sqrt_lam * (x0 - x) at x = x0
    reg_rhs = sqrt_lam * x0  # lower block of the augmented right-hand side
    b_norm = np.sqrt(np.dot(y, y) + np.dot(reg_rhs, reg_rhs))
    if b_norm == 0:
        b_norm = 1.0

    s = A.T @ r_top + sqrt_lam * r_bot
    p = s.copy()
    gamma = np.dot(s, s)
    norms = [np.sqrt(np.dot(r_top, r_top) + np.dot(r_bot, r_bot))]
    if gamma == 0:
        return x, norms, True, 0

    for k in range(max_iters):
        q_top = A @ p
        q_bot = sqrt_lam * p
        denom = np.dot(q_top, q_top) + np.dot(q_bot, q_bot)
        if denom == 0:
            return x, norms, True, k
        alpha = gamma / denom
        x_new = x + alpha * p
        rt_new = r_top - alpha * q_top
        rb_new = r_bot - alpha * q_bot
        norm_new = np.sqrt(np.dot(rt_new, rt_new) + np.dot(rb_new, rb_new))
        if norm_new > norms[-1]:
            # Rounding has stalled the descent; keep the better iterate.
            return x, norms, norms[-1] <= tol * b_norm, k
        x, r_top, r_bot = x_new, rt_new, rb_new
        norms.append(norm_new)
        if norm_new <= tol * b_norm:
            return x, norms, True, k + 1
        s = A.T @ r_top + sqrt_lam * r_bot
        gamma_new = np.dot(s, s)
        if gamma_new == 0:
            return x, norms, True, k + 1
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    return x, norms, norms[-1] <= tol * b_norm, max_iters


# --------------------------------------------------------------------------
# Texture / mask files
# --------------------------------------------------------------------------

def write_texture(texture: TextureAtlas, path, mask_path=None,
                  bit_depth: int = 16) -> None:
    """Write an RGB PNG (8- or 16-bit) and optionally the mask PNG."""
    if bit_depth == 16:
        arr = np.round(texture.rgb * 65535.0).astype(np.uint16)
    elif bit_depth == 8:
        arr = np.round(texture.rgb * 255.0).astype(np.uint8)
    else:
        raise DataError(f"bit_depth must be 8 or 16, got {bit_depth}")
    if not cv2.imwrite(str(path), arr[:, :, ::-1]):
        raise DataError(f"failed to write texture {path}")
    if mask_path is not None:
        mask = (texture.mask.astype(np.uint8)) * 255
        if not cv2.imwrite(str(mask_path), mask):
            raise DataError(f"failed to write mask {mask_path}")


def read_texture(path, mask_path=None) -> TextureAtlas:
    """Read a texture PNG (8- or 16-bit) plus its mask.

    Without a mask file, every nonzero texel is treated as active.
    """
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError(str(path))
    if raw.ndim != 3 or raw.shape[2] < 3:
        raise DataError(f"texture {path} is not a 3-channel image")
    rgb = raw[:, :, 2::-1].astype(np.float64)
    rgb /= 65535.0 if raw.dtype == np.uint16 else 255.0
    if mask_path is not None:
        mraw = cv2.imread(str(mask_path), cv2.IMREAD_GRAYSCALE)
        if mraw is None:
            raise FileNotFoundError(str(mask_path))
        if mraw.shape != rgb.shape[:2]:
            raise DimensionMismatchError("mask size does not match texture")
        mask = mraw > 127
    else:
        mask = rgb.any(axis=2)
    return TextureAtlas.build(rgb, mask)
