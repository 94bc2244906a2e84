"""Texture-map super-resolution.

Two families: classic separable interpolation (nearest, bilinear,
bicubic, Lanczos) made mask-aware so colors never bleed across chart
boundaries, and a model-based solver that fits the high-resolution
texture to low-resolution photographs through the forward projection
operators, regularized by smoothed isotropic total variation.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map
from .errors import (
    DataError,
    DimensionMismatchError,
    EmptyNeighborhoodError,
    InvalidFactorError,
    MaskMismatchError,
    ViewMismatchError,
)
from .formation import SparseProjectionOperator, ViewImage
from .retrieval import TextureAtlas

logger = logging.getLogger(__name__)

TV_EPSILON = 1e-6
UPSAMPLE_SCALES = (2, 3, 4)
KERNEL_KINDS = ("nearest", "bilinear", "bicubic", "lanczos")

# Half-width of each kernel's footprint, in source texels.
_SUPPORT = {"nearest": 0.5, "bilinear": 1.0, "bicubic": 2.0, "lanczos": 3.0}


@dataclass(frozen=True)
class InterpKernel:
    """A named 1D resampling kernel applied separably in x and y."""

    kind: str

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise DataError(f"unknown kernel {self.kind!r}")

    @property
    def support(self) -> float:
        return _SUPPORT[self.kind]

    def weights(self, d: np.ndarray) -> np.ndarray:
        """Evaluate the kernel at signed source-texel offsets ``d``."""
        d = np.asarray(d, dtype=np.float64)
        if self.kind == "nearest":
            # Half-open so a half-integer position picks exactly one tap
            # (the higher index, i.e. round-half-up).
            return np.where((d >= -0.5) & (d < 0.5), 1.0, 0.0)
        if self.kind == "bilinear":
            return np.maximum(0.0, 1.0 - np.abs(d))
        if self.kind == "bicubic":
            return _catmull_rom(np.abs(d))
        t = np.abs(d)
        out = np.sinc(d) * np.sinc(d / 3.0)
        return np.where(t < 3.0, out, 0.0)


def _catmull_rom(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    near = (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0
    far = a * (t**3 - 5.0 * t**2 + 8.0 * t - 4.0)
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


def upsample_interp(lr: TextureAtlas, scale: int, kernel: InterpKernel,
                    hr_mask: np.ndarray) -> TextureAtlas:
    """Interpolate an LR texture up to ``hr_mask``'s resolution.

    Output texel centers pull from source coordinates
    ``x_src = (x_hr + 0.5)/scale - 0.5``. Taps landing on inactive or
    out-of-range LR texels are dropped and the remaining weights
    renormalized, so constants are preserved right up to chart
    boundaries. Output texels whose entire footprint is inactive are
    left black and removed from the output mask.

    Raises:
        InvalidFactorError: scale not in {2, 3, 4}.
        MaskMismatchError: hr_mask is not exactly scale times lr's size.
        EmptyNeighborhoodError: every requested texel has an empty
            footprint.
    """
    if scale not in UPSAMPLE_SCALES:
        raise InvalidFactorError(f"scale must be one of {UPSAMPLE_SCALES}")
    hr_mask = np.asarray(hr_mask, dtype=bool)
    if hr_mask.shape != (lr.height * scale, lr.width * scale):
        raise MaskMismatchError(
            f"hr_mask {hr_mask.shape} != LR size x {scale}"
        )
    hr_h, hr_w = hr_mask.shape

    x_src = (np.arange(hr_w) + 0.5) / scale - 0.5
    y_src = (np.arange(hr_h) + 0.5) / scale - 0.5
    s = kernel.support
    n_taps = int(np.floor(2 * s)) + 1
    base_x = np.ceil(x_src - s).astype(np.int64)
    base_y = np.ceil(y_src - s).astype(np.int64)

    num = np.zeros((hr_h, hr_w, 3))
    den = np.zeros((hr_h, hr_w))
    active = lr.mask
    for ty in range(n_taps):
        ky = base_y + ty
        wy = kernel.weights(y_src - ky)
        in_y = (ky >= 0) & (ky < lr.height)
        kyc = np.clip(ky, 0, lr.height - 1)
        for tx in range(n_taps):
            kx = base_x + tx
            wx = kernel.weights(x_src - kx)
            in_x = (kx >= 0) & (kx < lr.width)
            kxc = np.clip(kx, 0, lr.width - 1)
            ok = (in_y[:, None] & in_x[None, :]
                  & active[kyc[:, None], kxc[None, :]])
            w = np.where(ok, wy[:, None] * wx[None, :], 0.0)
            num += w[:, :, None] * lr.rgb[kyc[:, None], kxc[None, :]]
            den += w

    filled = hr_mask & (den != 0)
    if not filled.any():
        raise EmptyNeighborhoodError(
            "no output texel has an active tap in its footprint"
        )
    rgb = np.zeros_like(num)
    np.divide(num, den[:, :, None], out=rgb, where=filled[:, :, None])
    return TextureAtlas.build(rgb, filled)


# --------------------------------------------------------------------------
# Model-based SR
# --------------------------------------------------------------------------

@dataclass
class ModelSRConfig:
    """Projected-gradient solver knobs.

    ``max_iters = 0`` is allowed and returns the initializer untouched.
    """

    scale: int = 2
    lambda_tv: float = 1e-2
    step: float = 1.0
    max_iters: int = 200

    def __post_init__(self):
        if self.scale not in UPSAMPLE_SCALES:
            raise DataError(f"scale must be one of {UPSAMPLE_SCALES}")
        if self.lambda_tv < 0:
            raise DataError("lambda_tv must be >= 0")
        if self.step <= 0:
            raise DataError("step must be > 0")
        if self.max_iters < 0 or int(self.max_iters) != self.max_iters:
            raise DataError("max_iters must be an integer >= 0")


@dataclass
class ModelSRResult:
    texture: TextureAtlas
    trace: list = field(default_factory=list)
    iterations: int = 0
    stalled: bool = False


def tv_value_grad(rgb: np.ndarray, mask: np.ndarray,
                  eps: float = TV_EPSILON):
    """Smoothed isotropic TV and its gradient over active 4-neighborhoods.

    Forward differences are taken only between pairs of active texels;
    each texel with at least one valid pair contributes
    ``sqrt(|dx|^2 + |dy|^2 + eps^2)`` with the channel norms pooled.
    """
    pair_x = mask[:, :-1] & mask[:, 1:]
    pair_y = mask[:-1, :] & mask[1:, :]
    dx = np.zeros_like(rgb)
    dy = np.zeros_like(rgb)
    dx[:, :-1][pair_x] = (rgb[:, 1:] - rgb[:, :-1])[pair_x]
    dy[:-1, :][pair_y] = (rgb[1:, :] - rgb[:-1, :])[pair_y]

    sq = (dx**2).sum(axis=2) + (dy**2).sum(axis=2)
    has_pair = np.zeros(mask.shape, dtype=bool)
    has_pair[:, :-1] |= pair_x
    has_pair[:-1, :] |= pair_y
    r = np.sqrt(sq + eps * eps)
    value = float(r[has_pair].sum())

    inv_r = np.where(has_pair, 1.0 / r, 0.0)[:, :, None]
    grad = -(dx + dy) * inv_r
    grad[:, 1:] += (dx * inv_r)[:, :-1]
    grad[1:, :] += (dy * inv_r)[:-1, :]
    return value, grad


def _data_value_grad(ops, images, rgb, threads, want_grad=True):
    flat = rgb.reshape(-1, 3)

    def one(pair):
        op, img = pair
        resid = op.matrix @ flat - img.rgb.reshape(-1, 3)
        grad = op.matrix.T @ resid if want_grad else None
        return float((resid**2).sum()), grad

    parts = parallel_map(one, list(zip(ops, images)), threads)
    value = 0.0
    grad = np.zeros_like(flat)
    for v, g in parts:  # ascending view order
        value += v
        if g is not None:
            grad += g
    return value, (2.0 * grad).reshape(rgb.shape)


def model_sr_solve(lr_views: list[ViewImage],
                   lr_ops: list[SparseProjectionOperator],
                   init: TextureAtlas, cfg: ModelSRConfig,
                   threads: int = 1) -> ModelSRResult:
    """Fit an HR texture to LR photographs through projection operators.

    Minimizes the sum of squared per-view reprojection errors plus
    ``lambda_tv`` times smoothed isotropic TV, by gradient descent with
    step-halving until strict decrease, projecting every iterate onto
    [0, 1] and the active-texel support. The trace records
    (data term, TV term, total) starting at the initializer and is
    nonincreasing. Five consecutive iterations without an accepting step
    end the solve with the best iterate (``stalled`` is set).
    """
    if len(lr_views) != len(lr_ops):
        raise ViewMismatchError(
            f"{len(lr_ops)} operators vs {len(lr_views)} images"
        )
    if not lr_ops:
        raise ViewMismatchError("need at least one view")
    for op, img in zip(lr_ops, lr_views):
        if img.rgb.shape[:2] != (op.view.height, op.view.width):
            raise DimensionMismatchError(
                "LR image size does not match its operator's view"
            )
        if op.texel_count != init.width * init.height:
            raise DimensionMismatchError(
                "operator texel count does not match the initializer"
            )

    active = init.mask
    x = init.rgb.copy()

    def objective(rgb):
        data, _ = _data_value_grad(lr_ops, lr_views, rgb, threads,
                                   want_grad=False)
        tv, _ = tv_value_grad(rgb, active)
        return data, tv

    data_cur, tv_cur = objective(x)
    total_cur = data_cur + cfg.lambda_tv * tv_cur
    trace = [(data_cur, tv_cur, total_cur)]

    accepted = 0
    failures = 0
    for _ in range(cfg.max_iters):
        dval, dgrad = _data_value_grad(lr_ops, lr_views, x, threads)
        tval, tgrad = tv_value_grad(x, active)
        grad = dgrad + cfg.lambda_tv * tgrad
        grad[~active] = 0.0

        step = cfg.step
        improved = False
        while step > 1e-12:
            cand = np.clip(x - step * grad, 0.0, 1.0)
            cand[~active] = 0.0
            data_c, tv_c = objective(cand)
            total_c = data_c + cfg.lambda_tv * tv_c
            if total_c < total_cur:
                improved = True
                break
            step *= 0.5
        if not improved:
            failures += 1
            if failures >= 5:
                logger.info("solver stalled after %d iterations", accepted)
                return ModelSRResult(texture=TextureAtlas.build(x, active),
                                     trace=trace, iterations=accepted,
                                     stalled=True)
            continue
        failures = 0
        x = cand
        data_cur, tv_cur, total_cur = data_c, tv_c, total_c
        trace.append((data_cur, tv_cur, total_cur))
        accepted += 1

    return ModelSRResult(texture=TextureAtlas.build(x, active),
                         trace=trace, iterations=accepted, stalled=False)


def write_trace_csv(trace, path) -> None:
    """Write an objective trace as iteration, data, tv, total rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "data", "tv", "total"])
        for k, (data, tv, total) in enumerate(trace):
            writer.writerow([k, repr(data), repr(tv), repr(total)])
