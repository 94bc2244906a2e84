"""Exception hierarchy shared by all texsr modules.

Errors are split into two broad families so the CLI can map them to exit
codes: :class:`DataError` for malformed or inconsistent inputs, and
:class:`NumericalError` for pipelines that are structurally valid but
cannot produce a result (no visible texels, singular matrices, ...).
"""


class TexsrError(Exception):
    """Base class for all errors raised by texsr."""


class UsageError(TexsrError):
    """Bad command line: unknown subcommand, flag, or flag value."""


class DataError(TexsrError):
    """Malformed, missing, or mutually inconsistent input data."""


class NumericalError(TexsrError):
    """A numerically meaningless or unsolvable configuration."""


# --- mesh / atlas ---------------------------------------------------------

class MeshParseError(DataError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where = f" [{where}]"
        super().__init__(f"{message}{where}")


class MissingAttributeError(DataError):
    """A face corner lacks a texture-coordinate or normal index."""


class EmptyMeshError(DataError):
    """The mesh file contains no faces."""


class InvalidSizeError(DataError):
    """A raster size is zero or negative."""


class DegenerateAtlasError(NumericalError):
    """Atlas rasterization covered zero texels."""


# --- cameras --------------------------------------------------------------

class SingularMatrixError(NumericalError):
    """The left 3x3 block of a projection matrix is (near) singular."""


class InvalidFactorError(DataError):
    """Unsupported integer scaling factor."""


class BehindCameraError(NumericalError):
    """A 3D point has non-positive camera-space depth."""


# --- operators / retrieval ------------------------------------------------

class EmptyOperatorError(NumericalError):
    """No texel is visible in the view; the camera is misconfigured."""


class DimensionMismatchError(DataError):
    """Array dimensions do not agree with the operator or atlas."""


class ViewMismatchError(DataError):
    """Operator and image lists are not aligned one-to-one."""


class NoObservationsError(NumericalError):
    """Every active texel is unobserved by every view."""


# --- super-resolution / metrics ------------------------------------------

class MaskMismatchError(DataError):
    """HR mask dimensions do not equal LR dimensions times the scale."""


class EmptyNeighborhoodError(NumericalError):
    """Every requested output texel has an all-inactive kernel footprint."""


class EmptyIntersectionError(DataError):
    """The two atlases share no active texels."""


# --- manifests ------------------------------------------------------------

class PartialWriteError(DataError):
    """Staged scene outputs could not be moved into place."""


class ManifestError(DataError):
    """Base class for scene-manifest problems."""


class ManifestParseError(ManifestError):
    """Manifest file is not valid JSON or violates the schema."""


class UnsupportedVersionError(ManifestError):
    """Manifest format version is not supported by this build."""


class MissingFileError(ManifestError):
    """A file referenced by the manifest does not exist."""

    def __init__(self, path):
        self.missing_path = path
        super().__init__(f"manifest references missing file: {path}")
