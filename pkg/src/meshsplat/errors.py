"""Exception hierarchy for meshsplat."""


class MeshSplatError(Exception):
    """Base class for all meshsplat errors."""


# --- PLY / mesh I/O ---

class MeshIOError(MeshSplatError):
    pass


class MalformedHeader(MeshIOError):
    """PLY magic, format line, or element/property declarations are invalid."""


class TruncatedBody(MeshIOError):
    """PLY body contains fewer elements than the header declares."""


class NonTriangulatable(MeshIOError):
    """A face has fewer than 3 vertex indices."""


class InvalidGeometry(MeshIOError):
    """Face indices out of range or otherwise inconsistent geometry."""


class EmptyCloud(MeshSplatError):
    """Zero-point cloud where at least one point is required."""


# --- COLMAP I/O ---

class ColmapIOError(MeshSplatError):
    pass


class TruncatedFile(ColmapIOError):
    """COLMAP file ends before the declared number of records."""


class UnsupportedCameraModel(ColmapIOError):
    """Camera model outside the pinhole family."""


class DanglingCameraRef(ColmapIOError):
    """Image pose references a camera id that does not exist."""


class DuplicateId(ColmapIOError):
    """Two records share an id that must be unique."""


# --- sampler ---

class SamplerError(MeshSplatError):
    pass


class DepthTooLarge(SamplerError):
    """Requested subdivision depth exceeds the supported maximum."""


class AllDegenerate(SamplerError):
    """Every triangle area is below the degeneracy threshold."""


class TableTooShallow(SamplerError):
    """Barycentric table does not cover the requested grade range."""


# --- color init ---

class ColorInitError(MeshSplatError):
    pass


class NoImages(ColorInitError):
    pass


class UndecodableImage(ColorInitError):
    """Image file could not be decoded; message carries the filename."""


class TooFewPixels(ColorInitError):
    """Fewer pixels than requested cluster count."""


# --- registration ---

class RegistrationError(MeshSplatError):
    pass


class TooFewCorrespondences(RegistrationError):
    pass


class DegenerateConfiguration(RegistrationError):
    """Source points are collinear (or coincident); no unique similarity."""


class ReflectionDetected(RegistrationError):
    """Best-fit orthogonal transform is a reflection; not a valid registration."""


# --- splat preview ---

class PreviewError(MeshSplatError):
    pass


class BehindCamera(PreviewError):
    """Point is behind (or too close to) the camera plane."""


# --- metrics ---

class MetricsError(MeshSplatError):
    pass


class DimensionMismatch(MetricsError):
    pass


class BoxOutOfBounds(MetricsError):
    pass


class TooSmall(MetricsError):
    """Cropped region too small for the SSIM window."""


# --- app / config ---

class ConfigError(MeshSplatError):
    """Invalid pipeline configuration (bad paths, inconsistent options)."""
