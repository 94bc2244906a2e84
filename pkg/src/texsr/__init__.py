"""Multi-view texture-map toolkit.

Recovers texture maps from calibrated photographs of a meshed surface,
generates matched multi-resolution datasets (images, cameras, texture,
mask, and normal maps), super-resolves texture maps with mask-aware
interpolation or a model-based solver, and scores results with masked
PSNR/SSIM.
"""

from . import errors
from .appearance_sr import (
    InterpKernel,
    ModelSRConfig,
    ModelSRResult,
    model_sr_solve,
    upsample_interp,
)
from .camera import (
    CameraView,
    camera_from_krt,
    decompose_projection,
    project_point,
    project_points,
    read_camera,
    scale_camera,
    write_camera,
)
from .dataset import (
    SceneManifest,
    ScaleEntry,
    downscale_image,
    generate_lr_scene,
    init_scene,
    read_manifest,
    read_view_image,
    validate_manifest,
    write_manifest,
    write_view_image,
)
from .formation import (
    SparseProjectionOperator,
    SplatConfig,
    ViewImage,
    apply_adjoint,
    apply_forward,
    build_operator,
    read_operator_cache,
    render_depth,
    write_operator_cache,
)
from .geometry import (
    NormalMapImage,
    TexelAtlasMap,
    TriangleMesh,
    bake_normal_map,
    decode_normal_map,
    load_mesh,
    rasterize_atlas,
    read_normal_map,
    write_normal_map,
)
from .metrics import (
    MetricReport,
    image_domain_eval,
    masked_psnr,
    masked_ssim,
    write_report_csv,
)
from .retrieval import (
    BackprojectionResult,
    LeastSquaresResult,
    RetrievalConfig,
    TextureAtlas,
    read_texture,
    retrieve_backprojection,
    retrieve_least_squares,
    write_texture,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "__version__",
    # geometry
    "TriangleMesh", "TexelAtlasMap", "NormalMapImage", "load_mesh",
    "rasterize_atlas", "bake_normal_map", "decode_normal_map",
    "read_normal_map", "write_normal_map",
    # camera
    "CameraView", "camera_from_krt", "decompose_projection",
    "scale_camera", "project_point", "project_points", "read_camera",
    "write_camera",
    # formation
    "SplatConfig", "ViewImage", "SparseProjectionOperator", "render_depth",
    "build_operator", "apply_forward", "apply_adjoint",
    "read_operator_cache", "write_operator_cache",
    # retrieval
    "TextureAtlas", "RetrievalConfig", "BackprojectionResult",
    "LeastSquaresResult", "retrieve_backprojection",
    "retrieve_least_squares", "read_texture", "write_texture",
    # appearance SR
    "InterpKernel", "ModelSRConfig", "ModelSRResult", "upsample_interp",
    "model_sr_solve",
    # metrics
    "MetricReport", "masked_psnr", "masked_ssim", "image_domain_eval",
    "write_report_csv",
    # dataset
    "SceneManifest", "ScaleEntry", "downscale_image", "generate_lr_scene",
    "init_scene", "read_manifest", "write_manifest", "validate_manifest",
    "read_view_image", "write_view_image",
]
